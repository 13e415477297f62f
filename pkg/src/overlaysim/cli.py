"""Command-line front end: build overlays, run the applications, inspect traces.

Exit codes: 0 success, 1 verification or kernel failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .apps import (
    LuProblem,
    dominant_matrix,
    lu_generate_tasks,
    lu_overlay,
    random_input,
    seeded_weights,
    small_config,
    tiny_config,
    vgg_generate_tasks,
    vgg_overlay,
)
from .errors import OverlayError
from .oracles import compare, oracle_cnn_forward, oracle_lu
from .overlay import load_overlay
from .runtime import (
    build_task_graph,
    check_dependence_sufficiency,
    emit_trace,
    parse_trace,
    run,
    validate_trace,
)
from .tensors import read_tensor_text, write_tensor_text

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

VERIFY_TOLERANCE = {
    ("lu", "f64"): 1e-10,
    ("lu", "f32"): 1e-4,
    ("vgg", "f64"): 1e-6,
    ("vgg", "f32"): 1e-3,
}


@dataclass
class RunConfig:
    app: str
    n: int = 4
    m: int = 8
    scale: str = "tiny"
    batch: int = 1
    seed: int = 0
    workers: int = 1
    precision: str = "f64"
    input: str | None = None
    dump: str | None = None
    trace: str | None = None
    overlay: str | None = None
    verify: bool = False
    check_races: bool = False
    unsafe: bool = False

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overlay-sim",
        description="Simulate command-queue overlays: blocked LU and a VGG-style pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="write an overlay manifest")
    p_build.add_argument("app", choices=("lu", "vgg"))
    p_build.add_argument("--out", help="manifest path (default <app>.overlay.json)")

    p_run = sub.add_parser("run", help="generate tasks, schedule, and execute")
    p_run.add_argument("app", choices=("lu", "vgg"))
    p_run.add_argument("--n", type=int, default=4, help="blocks along the diagonal (lu)")
    p_run.add_argument("--m", type=int, default=8, help="block size in elements (lu)")
    p_run.add_argument("--scale", choices=("tiny", "small"), default="tiny",
                       help="network preset (vgg)")
    p_run.add_argument("--batch", type=int, default=1, help="input feature maps (vgg)")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p_run.add_argument("--input", help="tensor-text file for the input buffer")
    p_run.add_argument("--dump", help="write the result buffer as tensor-text")
    p_run.add_argument("--trace", help="write the execution trace")
    p_run.add_argument("--overlay", help="load this manifest instead of building in-process")
    p_run.add_argument("--verify", action="store_true",
                       help="compare against the reference oracle")
    p_run.add_argument("--check-races", action="store_true",
                       help="print the conflict report and fail if non-empty")
    p_run.add_argument("--unsafe", action="store_true",
                       help="execute even if the conflict report is non-empty")

    p_inspect = sub.add_parser("inspect-trace", help="summarize and validate a trace file")
    p_inspect.add_argument("path")
    return parser


def cmd_build(args) -> int:
    overlay = lu_overlay() if args.app == "lu" else vgg_overlay()
    out = args.out or f"{args.app}.overlay.json"
    overlay.save_manifest(out)
    print(f"wrote {out}: {len(overlay.interfaces)} queues")
    return EXIT_OK


def _prepare_lu(cfg: RunConfig):
    if cfg.input:
        buf = read_tensor_text(cfg.input, dtype=cfg.dtype)
        if len(buf.shape) != 2 or buf.shape[0] != buf.shape[1] or buf.shape[0] % cfg.m:
            raise OverlayError(
                f"--input matrix shaped {buf.shape} does not split into blocks of {cfg.m}"
            )
        n = buf.shape[0] // cfg.m
    else:
        buf, n = dominant_matrix(cfg.n, cfg.m, cfg.seed, dtype=cfg.dtype), cfg.n
    problem = LuProblem(buf, n, cfg.m)
    overlay = load_overlay(cfg.overlay) if cfg.overlay else lu_overlay()
    tasks, rules = lu_generate_tasks(problem, overlay)
    return overlay, tasks, rules, buf, buf.data.copy()


def _prepare_vgg(cfg: RunConfig):
    config = tiny_config(cfg.batch) if cfg.scale == "tiny" else small_config(cfg.batch)
    if cfg.input:
        x = read_tensor_text(cfg.input, dtype=cfg.dtype)
    else:
        x = random_input(config, cfg.seed, dtype=cfg.dtype)
    weights = seeded_weights(config, cfg.seed + 1, dtype=cfg.dtype)
    overlay = load_overlay(cfg.overlay) if cfg.overlay else vgg_overlay()
    tasks, rules, outputs = vgg_generate_tasks(config, x, weights, overlay)
    return overlay, tasks, rules, outputs.y, (config, x, weights)


def cmd_run(args) -> int:
    cfg = RunConfig(
        app=args.app, n=args.n, m=args.m, scale=args.scale, batch=args.batch,
        seed=args.seed, workers=args.workers, precision=args.precision,
        input=args.input, dump=args.dump, trace=args.trace, overlay=args.overlay,
        verify=args.verify, check_races=args.check_races, unsafe=args.unsafe,
    )
    if cfg.workers < 1 or cfg.n < 1 or cfg.m < 1 or cfg.batch < 1:
        print("workers, n, m and batch must all be >= 1", file=sys.stderr)
        return EXIT_USAGE

    if cfg.app == "lu":
        overlay, tasks, rules, result_buf, original = _prepare_lu(cfg)
    else:
        overlay, tasks, rules, result_buf, oracle_args = _prepare_vgg(cfg)

    graph = build_task_graph(tasks, rules)

    if cfg.check_races:
        conflicts = check_dependence_sufficiency(graph)
        if conflicts:
            print(f"conflict report: {len(conflicts)} unordered conflicting pair(s)")
            for c in conflicts:
                print("  " + c.describe())
            return EXIT_FAIL
        print("conflict report: empty")

    trace = run(overlay, graph, cfg.workers, unsafe=cfg.unsafe)
    if cfg.trace:
        emit_trace(trace, cfg.trace)
        print(f"trace: {len(trace.records)} records -> {cfg.trace}")
    if cfg.dump:
        write_tensor_text(result_buf, cfg.dump)
        print(f"dump: {result_buf.shape} -> {cfg.dump}")

    if cfg.verify:
        tol = VERIFY_TOLERANCE[(cfg.app, cfg.precision)]
        if cfg.app == "lu":
            expected = oracle_lu(original)
        else:
            expected = oracle_cnn_forward(*oracle_args)
        report = compare(expected, result_buf.data, tol)
        print(f"verify {cfg.app}: {report}")
        if not report.passed:
            return EXIT_FAIL
    return EXIT_OK


def cmd_inspect(args) -> int:
    trace = parse_trace(args.path)
    problems = validate_trace(trace)
    if not trace.records:
        print("empty trace")
        return EXIT_OK
    span_start = min(r.vstart for r in trace.records)
    span_end = max(r.vend for r in trace.records)
    span = max(1, span_end - span_start)
    print(f"{len(trace.records)} tasks, {len(trace.edges)} edges, "
          f"virtual span [{span_start}, {span_end})")

    busy_by_queue: dict[int, int] = {}
    busy_by_worker: dict[int, int] = {}
    for r in trace.records:
        busy_by_queue[r.queue] = busy_by_queue.get(r.queue, 0) + (r.vend - r.vstart)
        busy_by_worker[r.worker] = busy_by_worker.get(r.worker, 0) + (r.vend - r.vstart)
    for q in sorted(busy_by_queue):
        print(f"  queue {q}: busy {busy_by_queue[q]} ({100.0 * busy_by_queue[q] / span:.1f}% of span)")
    for w in sorted(busy_by_worker):
        print(f"  worker {w}: busy {busy_by_worker[w]} ({100.0 * busy_by_worker[w] / span:.1f}% of span)")

    # longest duration-weighted path over the recorded edges
    duration = {r.id: r.vend - r.vstart for r in trace.records}
    order = sorted(trace.records, key=lambda r: r.vstart)
    longest = {r.id: duration[r.id] for r in trace.records}
    preds: dict[int, list[int]] = {r.id: [] for r in trace.records}
    for pre, dep in trace.edges:
        if pre in duration and dep in duration:
            preds[dep].append(pre)
    for rec in order:
        if preds[rec.id]:
            longest[rec.id] = duration[rec.id] + max(longest[p] for p in preds[rec.id])
    print(f"critical path: {max(longest.values())} virtual time units")

    if problems:
        print(f"validation FAILED ({len(problems)} problem(s)):")
        for p in problems:
            print("  " + p)
        return EXIT_FAIL
    print("validation OK: records form a linear extension of the recorded edges")
    return EXIT_OK


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "build":
            return cmd_build(args)
        if args.command == "run":
            return cmd_run(args)
        return cmd_inspect(args)
    except OverlayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
