"""Brute-force helpers for the test suite.

These reimplement checks at element granularity, independently of the
library's interval-based machinery, so the two can be compared.
"""

import itertools

from overlaysim.overlay import IpDescriptor, build_overlay, command


def element_footprint(acc):
    """Expand an access set into (reads, writes) sets of (buffer, coord) pairs."""
    coords = set(itertools.product(*(range(lo, hi) for lo, hi in acc.ranges)))
    tagged = {(acc.buffer_id, c) for c in coords}
    reads = tagged if acc.mode in ("read", "read_write") else set()
    writes = tagged if acc.mode in ("write", "read_write") else set()
    return reads, writes


def task_footprint(task):
    reads, writes = set(), set()
    for acc in task.access_sets:
        r, w = element_footprint(acc)
        reads |= r
        writes |= w
    return reads, writes


def ordered_pairs(graph):
    """Happens-before closure computed by plain BFS over the edge pairs."""
    succs = {t.id: set() for t in graph.tasks}
    for pre, dep in graph.edge_pairs():
        succs[pre].add(dep)
    closure = {}
    for t in graph.tasks:
        seen = set()
        stack = list(succs[t.id])
        while stack:
            node = stack.pop()
            if node not in seen:
                seen.add(node)
                stack.extend(succs[node])
        closure[t.id] = seen
    return closure


def element_level_races(graph):
    """All unordered task pairs that touch a common element with a write."""
    closure = ordered_pairs(graph)
    feet = {t.id: task_footprint(t) for t in graph.tasks}
    races = set()
    tasks = sorted(graph.tasks, key=lambda t: t.id)
    for i, t1 in enumerate(tasks):
        for t2 in tasks[i + 1:]:
            if t2.id in closure[t1.id] or t1.id in closure[t2.id]:
                continue
            r1, w1 = feet[t1.id]
            r2, w2 = feet[t2.id]
            if (w1 & (r2 | w2)) or (w2 & (r1 | w1)):
                races.add((t1.id, t2.id))
    return races


def noop_overlay(n_queues):
    """An overlay of do-nothing kernels, one per queue, for scheduler tests."""
    interfaces = []
    for q in range(n_queues):
        ip = IpDescriptor(
            name=f"Noop{q}",
            signature=(),
            run=lambda args, fb: 1,
            access_sets=lambda args, fb: (),
        )
        interfaces.append(command(ip, q))
    return build_overlay(f"noop{n_queues}", interfaces)
