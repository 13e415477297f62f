"""Task graph construction, dependence-respecting scheduling, and trace emission.

Tasks enqueued on an overlay become nodes; edges come from two sources:
distance-d dependence rules between task kinds, and the FIFO order of each
command queue.  The scheduler runs task bodies on a thread pool, starting a
task only once all graph predecessors completed and it is the oldest
unfinished task of its queue.  Traces report deterministic virtual times
computed from per-task work estimates, not wall-clock times.
"""

from __future__ import annotations

import heapq
import json
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

from .errors import (
    CyclicDependenceError,
    DependenceConflictError,
    InvocationError,
    OverlayError,
    ParseError,
    RuleError,
    TaskExecutionError,
)
from .tensors import AccessSet

VIRTUAL_TIME_DIVISOR = 1_000_000  # duration = max(1, flop estimate // divisor)


@dataclass(frozen=True)
class TaskInstance:
    """One enqueued command: a kind tag, its queue, and bound arguments."""

    id: int
    kind: str
    queue_no: int
    iteration: int
    args: tuple
    access_sets: tuple[AccessSet, ...] = ()


@dataclass(frozen=True)
class IterCondition:
    """Guard over the dependent task's iteration index: i > bound or i == bound."""

    op: str
    bound: int

    def __post_init__(self):
        if self.op not in (">", "=="):
            raise RuleError(f"unsupported condition operator {self.op!r}")

    def holds(self, i: int) -> bool:
        return i > self.bound if self.op == ">" else i == self.bound

    def __str__(self):
        return f"i {self.op} {self.bound}"


@dataclass(frozen=True)
class DependenceRule:
    """dependent_kind at iteration i depends on prerequisite_kind at i - distance."""

    dependent_kind: str
    prerequisite_kind: str
    distance: int
    condition: IterCondition | None = None


def depend(dependent_kind: str, prerequisite_kind: str, distance: int,
           condition: IterCondition | None = None) -> DependenceRule:
    """Declare a dependence rule; distance counts iterations backwards."""
    if distance < 0:
        raise RuleError(f"dependence distance must be >= 0, got {distance}")
    return DependenceRule(dependent_kind, prerequisite_kind, distance, condition)


@dataclass(frozen=True)
class GraphEdge:
    pre: int
    dep: int
    provenance: str  # "rule" | "queue-order"


class TaskGraph:
    """Acyclic task graph with queue-order chains embedded as edges."""

    def __init__(self, tasks: list[TaskInstance], edges: list[GraphEdge]):
        self.tasks = list(tasks)
        self.edges = list(edges)
        self.by_id = {t.id: t for t in self.tasks}
        self.preds: dict[int, set[int]] = {t.id: set() for t in self.tasks}
        self.succs: dict[int, set[int]] = {t.id: set() for t in self.tasks}
        for e in self.edges:
            self.preds[e.dep].add(e.pre)
            self.succs[e.pre].add(e.dep)

    def edge_pairs(self) -> list[tuple[int, int]]:
        return sorted({(e.pre, e.dep) for e in self.edges})

    def reachable_from(self, task_id: int) -> set[int]:
        """All task ids strictly after task_id in the transitive closure."""
        seen: set[int] = set()
        stack = list(self.succs[task_id])
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self.succs[node])
        return seen

    def queues(self) -> dict[int, list[TaskInstance]]:
        by_queue: dict[int, list[TaskInstance]] = {}
        for t in sorted(self.tasks, key=lambda t: t.id):
            by_queue.setdefault(t.queue_no, []).append(t)
        return by_queue


def _find_cycle(preds: dict[int, set[int]], candidates: set[int]) -> list[int]:
    """Extract one witness cycle among nodes known to sit on cycles."""
    start = min(candidates)
    path: list[int] = []
    on_path: set[int] = set()
    node = start
    while node not in on_path:
        path.append(node)
        on_path.add(node)
        node = min(p for p in preds[node] if p in candidates)
    cycle = path[path.index(node):] + [node]
    cycle.reverse()
    return cycle


def build_task_graph(tasks, rules) -> TaskGraph:
    """Materialize edges from dependence rules plus per-queue FIFO chains.

    A rule contributes an edge only where the prerequisite instance exists:
    rules pointing at negative iterations or at skipped tasks are silently
    inert.  Cycles are rejected with a witness.
    """
    tasks = list(tasks)
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise InvocationError("duplicate task ids in graph input")
    by_slot: dict[tuple[str, int], list[TaskInstance]] = {}
    for t in tasks:
        by_slot.setdefault((t.kind, t.iteration), []).append(t)

    edges: list[GraphEdge] = []
    seen_edges: set[tuple[int, int, str]] = set()

    def add(pre: int, dep: int, provenance: str) -> None:
        key = (pre, dep, provenance)
        if key not in seen_edges:
            seen_edges.add(key)
            edges.append(GraphEdge(pre, dep, provenance))

    for t in tasks:
        for rule in rules:
            if rule.dependent_kind != t.kind:
                continue
            if rule.condition is not None and not rule.condition.holds(t.iteration):
                continue
            for pre in by_slot.get((rule.prerequisite_kind, t.iteration - rule.distance), []):
                if pre.id == t.id:
                    raise CyclicDependenceError([t.id, t.id])
                add(pre.id, t.id, "rule")

    by_queue: dict[int, list[TaskInstance]] = {}
    for t in sorted(tasks, key=lambda t: t.id):
        by_queue.setdefault(t.queue_no, []).append(t)
    for fifo in by_queue.values():
        for earlier, later in zip(fifo, fifo[1:]):
            add(earlier.id, later.id, "queue-order")

    graph = TaskGraph(tasks, edges)

    # Kahn's algorithm; whatever cannot be peeled off sits on a cycle
    degree = {tid: len(ps) for tid, ps in graph.preds.items()}
    ready = [tid for tid, d in degree.items() if d == 0]
    removed = 0
    while ready:
        node = ready.pop()
        removed += 1
        for nxt in graph.succs[node]:
            degree[nxt] -= 1
            if degree[nxt] == 0:
                ready.append(nxt)
    if removed != len(tasks):
        stuck = {tid for tid, d in degree.items() if d > 0}
        cyclic_preds = {tid: {p for p in graph.preds[tid] if p in stuck} for tid in stuck}
        raise CyclicDependenceError(_find_cycle(cyclic_preds, stuck))
    return graph


@dataclass(frozen=True)
class Conflict:
    """Two tasks that touch overlapping elements without an ordering path."""

    first: int
    second: int
    buffer_id: int
    overlap: tuple[tuple[int, int], ...]
    modes: tuple[str, str]

    def describe(self) -> str:
        region = " x ".join(f"[{lo},{hi})" for lo, hi in self.overlap)
        return (f"tasks {self.first} and {self.second} touch buffer {self.buffer_id} "
                f"region {region} as {self.modes[0]}/{self.modes[1]} with no ordering")


def check_dependence_sufficiency(graph: TaskGraph) -> list[Conflict]:
    """Report every conflicting task pair the transitive closure leaves unordered.

    An empty report means the declared dependences (plus queue order) are
    sufficient to make the shared-buffer accesses race-free.
    """
    order = sorted(graph.tasks, key=lambda t: t.id)
    reach = {t.id: graph.reachable_from(t.id) for t in order}
    conflicts: list[Conflict] = []
    for i, t1 in enumerate(order):
        for t2 in order[i + 1:]:
            if t2.id in reach[t1.id] or t1.id in reach[t2.id]:
                continue
            seen = set()
            for s1 in t1.access_sets:
                for s2 in t2.access_sets:
                    if not s1.conflicts_with(s2):
                        continue
                    overlap = s1.intersection(s2)
                    key = (s1.buffer_id, overlap, s1.mode, s2.mode)
                    if key in seen:
                        continue
                    seen.add(key)
                    conflicts.append(Conflict(t1.id, t2.id, s1.buffer_id,
                                              overlap, (s1.mode, s2.mode)))
    return conflicts


@dataclass(frozen=True)
class TraceRecord:
    id: int
    kind: str
    iteration: int
    queue: int
    vstart: int
    vend: int
    worker: int


@dataclass
class ExecutionTrace:
    records: list[TraceRecord] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)


def _execute(overlay, graph: TaskGraph, worker_count: int) -> dict[int, int]:
    """Run every task body once, respecting edges and queue order.

    Returns the per-task flop estimates reported by the kernels.  A failing
    task aborts scheduling: unstarted tasks are cancelled and the failure is
    re-raised with the task id attached.
    """
    queues = graph.queues()
    queue_pos = {q: 0 for q in queues}
    done: set[int] = set()
    in_flight: dict = {}
    flops: dict[int, int] = {}

    def ready():
        running = {t.id for t in in_flight.values()}
        out = []
        for q, fifo in queues.items():
            pos = queue_pos[q]
            if pos < len(fifo):
                head = fifo[pos]
                if head.id not in running and graph.preds[head.id] <= done:
                    out.append(head)
        return out

    with ThreadPoolExecutor(max_workers=worker_count) as pool:
        try:
            for t in ready():
                iface = overlay.interface(t.queue_no)
                in_flight[pool.submit(iface.ip.run, t.args, overlay.feature_buffer)] = t
            while in_flight:
                finished, _ = wait(list(in_flight), return_when=FIRST_COMPLETED)
                for fut in finished:
                    task = in_flight.pop(fut)
                    try:
                        flops[task.id] = int(fut.result())
                    except Exception as exc:
                        raise TaskExecutionError(task.id, task.kind) from exc
                    done.add(task.id)
                    queue_pos[task.queue_no] += 1
                for t in ready():
                    iface = overlay.interface(t.queue_no)
                    in_flight[pool.submit(iface.ip.run, t.args, overlay.feature_buffer)] = t
        except Exception:
            for fut in in_flight:
                fut.cancel()
            raise
    if len(done) != len(graph.tasks):
        raise OverlayError("scheduler stalled with tasks remaining (graph inconsistent)")
    return flops


def _virtual_schedule(graph: TaskGraph, flops: dict[int, int],
                      worker_count: int) -> list[TraceRecord]:
    """Deterministic list-scheduling replay producing virtual start/end times.

    Each activation grabs the lowest free worker slot; among simultaneously
    eligible tasks the lowest id starts first.  Eligibility mirrors the real
    scheduler: graph predecessors completed and oldest unfinished in queue.
    """
    queues = graph.queues()
    queue_pos = {q: 0 for q in queues}
    duration = {tid: max(1, flops.get(tid, 0) // VIRTUAL_TIME_DIVISOR)
                for tid in graph.by_id}
    done: set[int] = set()
    started: set[int] = set()
    free = list(range(worker_count))
    heapq.heapify(free)
    running: list[tuple[int, int, int]] = []  # (end, slot, task id)
    records: list[TraceRecord] = []
    clock = 0

    def eligible():
        out = []
        for q, fifo in queues.items():
            pos = queue_pos[q]
            if pos < len(fifo):
                head = fifo[pos]
                if head.id not in started and graph.preds[head.id] <= done:
                    out.append(head)
        return sorted(out, key=lambda t: t.id)

    while len(done) < len(graph.tasks):
        for t in eligible():
            if not free:
                break
            slot = heapq.heappop(free)
            end = clock + duration[t.id]
            records.append(TraceRecord(t.id, t.kind, t.iteration, t.queue_no,
                                       clock, end, slot))
            heapq.heappush(running, (end, slot, t.id))
            started.add(t.id)
        end, slot, tid = heapq.heappop(running)
        clock = end
        batch = [(slot, tid)]
        while running and running[0][0] == clock:
            _, s2, t2 = heapq.heappop(running)
            batch.append((s2, t2))
        for s, t in batch:
            heapq.heappush(free, s)
            done.add(t)
            queue_pos[graph.by_id[t].queue_no] += 1
    records.sort(key=lambda r: (r.vstart, r.id))
    return records


def run(overlay, graph: TaskGraph, worker_count: int = 1,
        unsafe: bool = False) -> ExecutionTrace:
    """Execute the graph on the overlay's kernels and return its trace.

    Unless unsafe is set, refuses to run a graph whose conflict report is
    non-empty, since unordered conflicting tasks would make results depend
    on scheduling accidents.
    """
    if worker_count < 1:
        raise InvocationError(f"worker_count must be >= 1, got {worker_count}")
    if not unsafe:
        conflicts = check_dependence_sufficiency(graph)
        if conflicts:
            raise DependenceConflictError(conflicts)
    flops = _execute(overlay, graph, worker_count)
    records = _virtual_schedule(graph, flops, worker_count)
    return ExecutionTrace(records=records, edges=graph.edge_pairs())


# --- trace files -----------------------------------------------------------
#
# One JSON object per task, in virtual-start order, then one closing object
# holding the edge list.  An empty trace is an empty file.

_RECORD_KEYS = ("id", "kind", "iter", "queue", "vstart", "vend", "worker")


def emit_trace(trace: ExecutionTrace, path) -> None:
    lines = []
    for r in trace.records:
        lines.append(json.dumps({
            "id": r.id, "kind": r.kind, "iter": r.iteration, "queue": r.queue,
            "vstart": r.vstart, "vend": r.vend, "worker": r.worker,
        }))
    if trace.records or trace.edges:
        lines.append(json.dumps({"edges": [list(e) for e in sorted(trace.edges)]}))
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def parse_trace(path) -> ExecutionTrace:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        return ExecutionTrace()
    records: list[TraceRecord] = []
    edges: list[tuple[int, int]] = []
    saw_edges = False
    for lineno, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: not valid JSON") from exc
        if not isinstance(obj, dict):
            raise ParseError(f"{path}:{lineno}: expected a JSON object")
        if "edges" in obj:
            saw_edges = True
            if lineno != len(lines):
                raise ParseError(f"{path}:{lineno}: edges object must be the last line")
            if not isinstance(obj["edges"], list):
                raise ParseError(f"{path}:{lineno}: edges must be a list")
            for pair in obj["edges"]:
                if (not isinstance(pair, list) or len(pair) != 2
                        or not all(isinstance(v, int) for v in pair)):
                    raise ParseError(f"{path}:{lineno}: bad edge entry {pair!r}")
                edges.append((pair[0], pair[1]))
            continue
        if set(obj) != set(_RECORD_KEYS):
            raise ParseError(f"{path}:{lineno}: record keys {sorted(obj)} do not match schema")
        if not isinstance(obj["kind"], str) or not all(
                isinstance(obj[k], int) for k in _RECORD_KEYS if k != "kind"):
            raise ParseError(f"{path}:{lineno}: record field types do not match schema")
        records.append(TraceRecord(obj["id"], obj["kind"], obj["iter"], obj["queue"],
                                   obj["vstart"], obj["vend"], obj["worker"]))
    if records and not saw_edges:
        raise ParseError(f"{path}: missing closing edges line")
    return ExecutionTrace(records=records, edges=edges)


def validate_trace(trace: ExecutionTrace) -> list[str]:
    """Check the trace invariants; returns human-readable violations (empty = valid)."""
    problems: list[str] = []
    by_id = {}
    for r in trace.records:
        if r.id in by_id:
            problems.append(f"task id {r.id} appears more than once")
        by_id[r.id] = r
        if r.vend < r.vstart:
            problems.append(f"task {r.id}: vend {r.vend} before vstart {r.vstart}")
    starts = [r.vstart for r in trace.records]
    if starts != sorted(starts):
        problems.append("records are not in virtual-start order")
    by_queue: dict[int, list[TraceRecord]] = {}
    for r in trace.records:
        by_queue.setdefault(r.queue, []).append(r)
    for q, recs in by_queue.items():
        for a, b in zip(recs, recs[1:]):
            if a.vend > b.vstart:
                problems.append(
                    f"queue {q}: tasks {a.id} and {b.id} overlap in virtual time")
            if a.id > b.id:
                problems.append(f"queue {q}: tasks {a.id} and {b.id} violate FIFO order")
    for pre, dep in trace.edges:
        if pre not in by_id or dep not in by_id:
            problems.append(f"edge ({pre}, {dep}) references an unknown task")
            continue
        if by_id[pre].vend > by_id[dep].vstart:
            problems.append(
                f"edge ({pre}, {dep}): predecessor ends at {by_id[pre].vend}, "
                f"successor starts at {by_id[dep].vstart}")
    return problems
