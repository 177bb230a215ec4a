"""Command-line front end: permute, tree, merge, refine, verify, bench."""

from __future__ import annotations

import argparse
import math
import sys
import time
from typing import IO, Optional

import numpy as np

from .algorithms import RunTelemetry, clarkson, clarkson_bb, gonzalez, gt_build, gt_merge, gt_refine
from .fvd import FVDConfig, FiniteVoronoi, InsertionReport, RunObserver
from .greedy_tree import GreedyTree, Permutation, deserialize, heap_order_traversal, serialize
from .metric import DistanceCounter, MetricSpace, ParseError, load_points
from .verify import (
    FVDSnapshot,
    SnapshotRecorder,
    BackburnerRecorder,
    degree_ceiling,
    empty_annulus_holds,
    greedy_factor,
    verify_fvd_snapshot,
    verify_strong_packing,
    verify_tree,
)

__all__ = ["main"]

ALGORITHMS = ("gonzalez", "clarkson", "clarkson-bb", "build")
CHECK_LIMIT = 20000


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(parser: _Parser, config: bool = True) -> None:
    parser.add_argument("--input", "-i", required=True, help="point file")
    parser.add_argument("--metric", choices=("l1", "l2", "linf"), default="l2")
    if config:
        parser.add_argument("--start", type=int, default=0)
        parser.add_argument("--lazy", type=float, default=2.0)
        parser.add_argument("--cell-approx", type=float, default=3.0)
        parser.add_argument("--heap-approx", type=float, default=4.0)
        parser.add_argument("--bucket-base", type=float, default=2.0)
        parser.add_argument("--buckets", type=int, default=7)


def _config(args) -> FVDConfig:
    return FVDConfig(
        lazy=args.lazy,
        cell_approx=args.cell_approx,
        heap_approx=args.heap_approx,
        bucket_base=args.bucket_base,
        buckets=args.buckets,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="greedyfvd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("permute", help="write a greedy permutation")
    _add_common(p)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="gonzalez")
    p.add_argument("--out", "-o", help="output file (default stdout)")
    p.add_argument("--trace", help="write one insertion report per line")
    p.add_argument("--check", action="store_true", help="append the measured greedy factor")
    p.add_argument("--force", action="store_true", help="allow --check beyond n=20000")
    p.add_argument("--parallel", action="store_true", help="parallel recursion for build")

    p = sub.add_parser("tree", help="write a greedy tree")
    _add_common(p)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="build")
    p.add_argument("--out", "-o", help="output file (default stdout)")
    p.add_argument("--trace", help="write one insertion report per line")
    p.add_argument("--parallel", action="store_true")

    p = sub.add_parser("merge", help="merge two greedy trees over one space")
    _add_common(p)
    p.add_argument("--a", required=True, help="first tree file (its root seeds the merge)")
    p.add_argument("--b", required=True, help="second tree file")
    p.add_argument("--out", "-o", help="output file (default stdout)")

    p = sub.add_parser("refine", help="refine a greedy tree into a near-exact permutation")
    _add_common(p, config=False)
    p.add_argument("--in", dest="tree_in", required=True, help="tree file")
    p.add_argument("--out", "-o", help="output file (default stdout)")
    p.add_argument("--check", action="store_true")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("verify", help="re-run instrumented and check invariants")
    _add_common(p)
    p.add_argument("--algorithm", choices=("clarkson", "clarkson-bb"), default="clarkson-bb")
    p.add_argument("--trace", help="trace file to cross-check against the rerun")
    p.add_argument("--dim-hint", type=int, default=None, help="dimension for the degree ceiling")

    p = sub.add_parser("bench", help="run a synthetic benchmark, CSV to stdout")
    p.add_argument("--gen", required=True, help="uniform:<dim>:<n> or expline:<n>")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="clarkson-bb")
    p.add_argument("--metric", choices=("l1", "l2", "linf"), default="l2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--lazy", type=float, default=2.0)
    p.add_argument("--cell-approx", type=float, default=3.0)
    p.add_argument("--heap-approx", type=float, default=4.0)
    p.add_argument("--bucket-base", type=float, default=2.0)
    p.add_argument("--buckets", type=int, default=7)
    p.add_argument("--parallel", action="store_true")
    return parser


def format_report(r: InsertionReport) -> str:
    return (
        f"site={r.site} pred={r.pred} eps={r.eps!r} moved={r.moved} "
        f"splits={r.splits} edges_added={len(r.edges_added)} "
        f"edges_removed={len(r.edges_removed)} touches={r.touches}"
    )


class TraceWriter(RunObserver):
    def __init__(self, fh: IO[str]):
        self.fh = fh

    def on_insertion(self, fvd: FiniteVoronoi, report: InsertionReport) -> None:
        self.fh.write(format_report(report) + "\n")


class TraceCollector(RunObserver):
    def __init__(self):
        self.lines: list[str] = []

    def on_insertion(self, fvd: FiniteVoronoi, report: InsertionReport) -> None:
        self.lines.append(format_report(report))


def write_permutation(perm: Permutation, claim: float, fh: IO[str], measured: Optional[float] = None) -> None:
    fh.write(f"greedyperm v1 n={len(perm.order)} start={perm.start} factor_claim={claim!r}\n")
    for rank, p in enumerate(perm.order):
        if rank == 0:
            fh.write(f"0 {p} - -\n")
        else:
            fh.write(f"{rank} {p} {perm.pred[p]} {perm.eps[p]!r}\n")
    if measured is not None:
        fh.write(f"factor_measured={measured!r}\n")


def _load_space(args) -> MetricSpace:
    with open(args.input, "r", encoding="utf-8") as fh:
        return load_points(fh, norm=args.metric)


def _run_algorithm(args, space, observer=None, telemetry=None):
    """Returns (permutation, tree, factor_claim)."""
    name = args.algorithm
    if name == "gonzalez":
        if observer is not None:
            raise UsageError("--trace needs an incremental algorithm")
        perm, tree = gonzalez(space, args.start)
        return perm, tree, 1.0
    cfg = _config(args)
    if name == "clarkson":
        perm, tree = clarkson(space, args.start, cfg, observer=observer, telemetry=telemetry)
        return perm, tree, cfg.cell_approx
    if name == "clarkson-bb":
        tree = clarkson_bb(
            space, cfg, start=args.start, observer=observer, telemetry=telemetry
        )
        return heap_order_traversal(tree), tree, tree.gamma_t
    if name == "build":
        if observer is not None:
            raise UsageError("--trace is not available for the recursive build")
        tree = gt_build(space, cfg, parallel=args.parallel, telemetry=telemetry)
        return heap_order_traversal(tree), tree, tree.gamma_t
    raise UsageError(f"unknown algorithm {name}")


def _open_out(path: Optional[str]):
    if path is None:
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def cmd_permute(args) -> int:
    space = _load_space(args)
    trace_fh = None
    observer = None
    if args.trace:
        trace_fh = open(args.trace, "w", encoding="utf-8")
        observer = TraceWriter(trace_fh)
    try:
        perm, tree, claim = _run_algorithm(args, space, observer=observer)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    measured = None
    if args.check:
        if space.n > CHECK_LIMIT and not args.force:
            raise UsageError(f"--check is quadratic; pass --force beyond n={CHECK_LIMIT}")
        measured = greedy_factor(perm, space)
    fh, close = _open_out(args.out)
    try:
        write_permutation(perm, claim, fh, measured)
    finally:
        if close:
            fh.close()
    return 0


def cmd_tree(args) -> int:
    space = _load_space(args)
    trace_fh = None
    observer = None
    if args.trace:
        trace_fh = open(args.trace, "w", encoding="utf-8")
        observer = TraceWriter(trace_fh)
    try:
        _, tree, _ = _run_algorithm(args, space, observer=observer)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    fh, close = _open_out(args.out)
    try:
        serialize(tree, fh)
    finally:
        if close:
            fh.close()
    return 0


def cmd_merge(args) -> int:
    space = _load_space(args)
    with open(args.a, "r", encoding="utf-8") as fh:
        tree_a = deserialize(fh)
    with open(args.b, "r", encoding="utf-8") as fh:
        tree_b = deserialize(fh)
    cfg = _config(args)
    merged = gt_merge(tree_a, tree_b, space, cfg)
    fh, close = _open_out(args.out)
    try:
        serialize(merged, fh)
    finally:
        if close:
            fh.close()
    return 0


def cmd_refine(args) -> int:
    space = _load_space(args)
    with open(args.tree_in, "r", encoding="utf-8") as fh:
        tree = deserialize(fh, space)
    perm = gt_refine(tree, space)
    claim = 1.0 + 1.0 / space.n
    measured = None
    if args.check:
        if space.n > CHECK_LIMIT and not args.force:
            raise UsageError(f"--check is quadratic; pass --force beyond n={CHECK_LIMIT}")
        measured = greedy_factor(perm, space)
    fh, close = _open_out(args.out)
    try:
        write_permutation(perm, claim, fh, measured)
    finally:
        if close:
            fh.close()
    return 0


def cmd_verify(args) -> int:
    space = _load_space(args)
    cfg = _config(args)
    n = space.n
    recorder = SnapshotRecorder(n)
    backburner = BackburnerRecorder()
    traces = TraceCollector()

    class Combined(RunObserver):
        def on_insertion(self, fvd, report):
            recorder.on_insertion(fvd, report)
            traces.on_insertion(fvd, report)

        def on_backburner_entry(self, fvd, site, key):
            backburner.on_backburner_entry(fvd, site, key)

        def on_backburner_removal(self, fvd, site, neighbors):
            backburner.on_backburner_removal(fvd, site, neighbors)

    observer = Combined()
    if args.algorithm == "clarkson":
        perm, tree = clarkson(space, args.start, cfg, observer=observer)
        claim = cfg.cell_approx
    else:
        tree = clarkson_bb(space, cfg, start=args.start, observer=observer)
        perm = heap_order_traversal(tree)
        claim = tree.gamma_t

    reports = []
    dim = args.dim_hint if args.dim_hint is not None else space.dim
    limit = degree_ceiling(cfg.cell_approx, cfg.heap_approx, dim)
    for snap in recorder.snapshots:
        reports.append(verify_fvd_snapshot(snap, space, cfg, degree_limit=limit))
    reports.append(verify_tree(tree, space))
    pi = cfg.strong_packing_factor
    reports.append(verify_strong_packing(tree, space, pi))
    factor = greedy_factor(perm, space)
    from .verify import SLACK, VerificationReport

    reports.append(
        VerificationReport(
            "greedy_factor_claim",
            factor <= claim * (1.0 + SLACK),
            measured=factor,
            note=f"claim={claim}",
        )
    )
    theta = cfg.annulus_factor
    for site, _, cell_pts in backburner.entries:
        reports.append(empty_annulus_holds(space, site, cell_pts, theta))
    for site, neighbors in backburner.removals:
        reports.append(
            VerificationReport(
                "backburner_isolation",
                neighbors == 0,
                witness=None if neighbors == 0 else {"site": site, "neighbors": neighbors},
            )
        )
    if args.trace:
        with open(args.trace, "r", encoding="utf-8") as fh:
            want = [ln for ln in fh.read().splitlines() if ln.strip()]
        reports.append(
            VerificationReport(
                "trace_match",
                want == traces.lines,
                note=f"{len(traces.lines)} insertions",
            )
        )
    ok = True
    for rep in reports:
        print(rep)
        ok = ok and rep.passed
    return 0 if ok else 3


def gen_points(spec: str, seed: int) -> np.ndarray:
    kind, _, rest = spec.partition(":")
    if kind == "uniform":
        try:
            dim_s, _, n_s = rest.partition(":")
            dim = int(dim_s)
            n = int(n_s)
        except ValueError:
            raise UsageError(f"bad generator spec {spec!r}") from None
        if dim < 1 or n < 1:
            raise UsageError(f"generator needs positive dimension and size: {spec!r}")
        rng = np.random.default_rng(seed)
        return rng.random((n, dim))
    if kind == "expline":
        try:
            n = int(rest)
        except ValueError:
            raise UsageError(f"bad generator spec {spec!r}") from None
        if n < 1:
            raise UsageError(f"generator needs a positive size: {spec!r}")
        return np.array([[2.0**k] for k in range(n)])
    raise UsageError(f"unknown generator {kind!r}")


def cmd_bench(args) -> int:
    coords = gen_points(args.gen, args.seed)
    space = MetricSpace(coords, norm=args.metric)
    counter = DistanceCounter(space)
    telemetry = RunTelemetry()
    start = time.perf_counter()
    if args.algorithm == "gonzalez":
        gonzalez(counter, args.start)
    else:
        _run_algorithm(args, counter, telemetry=telemetry)
    seconds = time.perf_counter() - start
    print("n,algorithm,seconds,distance_evals,touches,max_degree,max_cell_entries")
    print(
        f"{space.n},{args.algorithm},{seconds:.6f},{counter.count},"
        f"{telemetry.touches},{telemetry.max_degree},{telemetry.max_cell_entries}"
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        command = {
            "permute": cmd_permute,
            "tree": cmd_tree,
            "merge": cmd_merge,
            "refine": cmd_refine,
            "verify": cmd_verify,
            "bench": cmd_bench,
        }[args.command]
        return command(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
