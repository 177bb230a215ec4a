"""End-to-end constructions: the quadratic baseline, the incremental
Voronoi variants, tree merging, recursive building, and refinement of a
tree into a near-exact greedy permutation."""

from __future__ import annotations

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .fvd import FVDConfig, FiniteVoronoi, RunObserver
from .greedy_tree import (
    GreedyTree,
    Permutation,
    TreeNode,
    heap_order_traversal,
    triangle_radius_bounds,
)
from .metric import DuplicatePointError, SpaceLike
from .queues import BucketQueue, ExactMaxHeap

__all__ = [
    "RunTelemetry",
    "gonzalez",
    "clarkson",
    "clarkson_bb",
    "gt_merge",
    "gt_build",
    "gt_refine",
]


@dataclass
class RunTelemetry:
    """Counters collected across a run; ``merge`` folds child runs in."""

    distance_evals: int = 0
    touches: int = 0
    heap_ops: int = 0
    bucket_ops: int = 0
    bucket_scan_steps: int = 0
    window_shifts: int = 0
    splits_tidy: int = 0
    splits_move: int = 0
    prunes: int = 0
    max_degree: int = 0
    max_cell_entries: int = 0
    backburner_entries: int = 0
    backburner_removals: int = 0
    seconds: float = 0.0
    touch_hist: Optional[dict] = None

    def merge(self, other: "RunTelemetry") -> None:
        self.distance_evals += other.distance_evals
        self.touches += other.touches
        self.heap_ops += other.heap_ops
        self.bucket_ops += other.bucket_ops
        self.bucket_scan_steps += other.bucket_scan_steps
        self.window_shifts += other.window_shifts
        self.splits_tidy += other.splits_tidy
        self.splits_move += other.splits_move
        self.prunes += other.prunes
        self.max_degree = max(self.max_degree, other.max_degree)
        self.max_cell_entries = max(self.max_cell_entries, other.max_cell_entries)
        self.backburner_entries += other.backburner_entries
        self.backburner_removals += other.backburner_removals
        self.seconds += other.seconds
        if other.touch_hist:
            if self.touch_hist is None:
                self.touch_hist = {}
            for k, v in other.touch_hist.items():
                self.touch_hist[k] = self.touch_hist.get(k, 0) + v


def gonzalez(space: SpaceLike, start: int = 0) -> tuple[Permutation, GreedyTree]:
    """Quadratic farthest-point traversal; the oracle everything else is
    checked against.

    Each point's predecessor is the first inserted site achieving its
    nearest-predecessor distance; next-point ties go to the smallest id.
    Duplicates are tolerated and come out last, in id order, with zero
    insertion distance.
    """
    n = space.n
    tree = GreedyTree(start, alpha=1.0, delta=1.0, gamma_t=1.0)
    order = [start]
    if n == 1:
        return Permutation(order, {}, {}), tree
    dist = space.dist
    dmin = [0.0] * n
    pred = [start] * n
    done = [False] * n
    done[start] = True
    for j in range(n):
        if j != start:
            dmin[j] = dist(start, j)
    for _ in range(n - 1):
        best = -1
        best_d = -1.0
        for j in range(n):
            if not done[j] and dmin[j] > best_d:
                best_d = dmin[j]
                best = j
        done[best] = True
        order.append(best)
        tree.attach(pred[best], best, best_d)
        for j in range(n):
            if not done[j]:
                d = dist(best, j)
                if d < dmin[j]:
                    dmin[j] = d
                    pred[j] = best
    return Permutation(order, dict(tree.pred), dict(tree.eps)), tree


def clarkson(
    space: SpaceLike,
    start: int = 0,
    config: Optional[FVDConfig] = None,
    *,
    telemetry: Optional[RunTelemetry] = None,
    observer: Optional[RunObserver] = None,
) -> tuple[Permutation, GreedyTree]:
    """Incremental-Voronoi greedy permutation with an exact max-heap.

    With the exact config (lazy = cell_approx = 1) the output matches
    ``gonzalez`` under the shared tie-breaking.  Cells are scanned in
    full, so the touch count tracks the spread.
    """
    cfg = config if config is not None else FVDConfig.exact()
    n = space.n
    fvd = FiniteVoronoi.from_points(
        space, start, cfg, scan_all=True, telemetry=telemetry, observer=observer
    )
    tree = GreedyTree(start, alpha=cfg.lazy, delta=cfg.cell_approx, gamma_t=cfg.cell_approx)
    heap = ExactMaxHeap()
    r0 = fvd.current_radius(start)
    if r0 > 0.0:
        heap.insert(start, r0)
    inserted = 1
    while inserted < n:
        popped = heap.remove_max()
        if telemetry is not None:
            telemetry.heap_ops += 1
        if popped is None:
            _flush_duplicates(fvd, tree)
            break
        site, _ = popped
        far = fvd.cells[site].farthest()
        report = fvd.insert_site(far[0], site)
        tree.attach(report.pred, report.site, report.eps)
        inserted += 1
        for q in set(report.touched) | {site, report.site}:
            r = fvd.current_radius(q)
            if r > 0.0:
                heap.update(q, r)
            else:
                heap.delete(q)
    perm = Permutation(list(fvd.order), dict(fvd.pred), dict(fvd.eps))
    return perm, tree


def _flush_duplicates(fvd: FiniteVoronoi, tree: GreedyTree) -> None:
    """Append zero-distance members (duplicates of sites) in id order."""
    leftovers = sorted(
        c for c, site in fvd._owner.items() if c not in fvd.cells
    )
    for c in leftovers:
        report = fvd.insert_site(c)
        tree.attach(report.pred, report.site, report.eps)


def clarkson_bb(
    space: SpaceLike,
    config: Optional[FVDConfig] = None,
    *,
    start: int = 0,
    trees: Optional[tuple[GreedyTree, GreedyTree]] = None,
    backburner_order: str = "fifo",
    telemetry: Optional[RunTelemetry] = None,
    observer: Optional[RunObserver] = None,
) -> GreedyTree:
    """Bucket-queue variant with a backburner; point or node mode.

    Point mode consumes a space; node mode consumes two trees over
    disjoint id ranges (``trees``) and locates whole nodes, splitting on
    move and keeping cells tidy.  The output is a fresh greedy tree whose
    claimed constants are (lazy/heap_approx, cell_approx,
    cell_approx * heap_approx**2).
    """
    cfg = config if config is not None else FVDConfig()
    if cfg.heap_approx < cfg.tidy_factor**2:
        raise ValueError("heap approximation must be at least the squared tidy factor")
    node_mode = trees is not None
    if node_mode and not cfg.lazy < cfg.cell_approx:
        raise ValueError("node mode needs the lazy constant strictly below the cell approximation")

    alpha = cfg.lazy / cfg.heap_approx
    delta = cfg.cell_approx
    gamma_t = cfg.cell_approx * cfg.heap_approx**2

    if node_mode:
        tree_a, tree_b = trees
        pts_a = set(tree_a.points())
        pts_b = set(tree_b.points())
        if pts_a & pts_b:
            raise ValueError("input trees must cover disjoint point ids")
        triangle_radius_bounds(tree_a)
        triangle_radius_bounds(tree_b)
        start = tree_a.root.center
        n = len(pts_a) + len(pts_b)
        fvd = FiniteVoronoi.from_roots(
            space, start, cfg, [tree_a.root, tree_b.root],
            telemetry=telemetry, observer=observer,
        )
    else:
        n = space.n
        fvd = FiniteVoronoi.from_points(
            space, start, cfg, telemetry=telemetry, observer=observer
        )

    out = GreedyTree(start, alpha=alpha, delta=delta, gamma_t=gamma_t)
    queue = BucketQueue(cfg.bucket_base, cfg.buckets, backburner_order)

    def enqueue(site: int) -> None:
        r = fvd.current_radius(site)
        if r > 0.0:
            where = queue.insert(site, r)
            if where == "backburner":
                if telemetry is not None:
                    telemetry.backburner_entries += 1
                if observer is not None:
                    observer.on_backburner_entry(fvd, site, r)

    fvd.tidy_cell(start)
    enqueue(start)
    inserted = 1
    while inserted < n:
        popped = queue.remove_max()
        if popped is None:
            raise DuplicatePointError(
                "no positive separation left; duplicate points are not supported here"
            )
        site, key, from_backburner = popped
        if key != fvd.current_radius(site):
            continue
        if from_backburner:
            if telemetry is not None:
                telemetry.backburner_removals += 1
            if observer is not None:
                observer.on_backburner_removal(fvd, site, fvd.graph.degree(site))
        far = fvd.cells[site].farthest()
        report = fvd.insert_site(far[0], site)
        out.attach(report.pred, report.site, report.eps)
        inserted += 1
        requeue = set(report.touched)
        requeue.add(site)
        requeue.add(report.site)
        for q in sorted(requeue):
            enqueue(q)
    if telemetry is not None:
        telemetry.bucket_ops += queue.ops
        telemetry.bucket_scan_steps += queue.scan_steps
        telemetry.window_shifts += queue.window_shifts
    return out


def gt_merge(
    tree_a: GreedyTree,
    tree_b: GreedyTree,
    space: SpaceLike,
    config: Optional[FVDConfig] = None,
    **kwargs,
) -> GreedyTree:
    """Merge two trees over disjoint id ranges of one space.

    Runs the bucket-queue construction in node mode seeded with the two
    roots; the merged root is tree_a's root.
    """
    return clarkson_bb(space, config, trees=(tree_a, tree_b), **kwargs)


def gt_build(
    space: SpaceLike,
    config: Optional[FVDConfig] = None,
    *,
    parallel: bool = False,
    telemetry: Optional[RunTelemetry] = None,
) -> GreedyTree:
    """Build a greedy tree by splitting ids into halves, recursing, and
    merging.  Sibling recursions are independent; with ``parallel`` they
    run in a thread pool and the result is identical to sequential."""
    cfg = config if config is not None else FVDConfig()
    alpha = cfg.lazy / cfg.heap_approx
    delta = cfg.cell_approx
    gamma_t = cfg.cell_approx * cfg.heap_approx**2

    def base(lo: int, hi: int) -> GreedyTree:
        tree = GreedyTree(lo, alpha=alpha, delta=delta, gamma_t=gamma_t)
        if hi - lo == 2:
            tree.attach(lo, lo + 1, space.dist(lo, lo + 1))
        return tree

    def build(lo: int, hi: int, tele: Optional[RunTelemetry]) -> GreedyTree:
        if hi - lo <= 2:
            return base(lo, hi)
        mid = (lo + hi) // 2
        left = build(lo, mid, tele)
        right = build(mid, hi, tele)
        return gt_merge(left, right, space, cfg, telemetry=tele)

    def build_parallel(lo: int, hi: int, depth: int, pool) -> tuple[GreedyTree, RunTelemetry]:
        tele = RunTelemetry()
        if hi - lo <= 2:
            return base(lo, hi), tele
        mid = (lo + hi) // 2
        if depth < 2 and hi - lo >= 64:
            fut = pool.submit(build_parallel, lo, mid, depth + 1, pool)
            right, tele_r = build_parallel(mid, hi, depth + 1, pool)
            left, tele_l = fut.result()
        else:
            left, tele_l = build_parallel(lo, mid, depth + 1, pool)
            right, tele_r = build_parallel(mid, hi, depth + 1, pool)
        tele.merge(tele_l)
        tele.merge(tele_r)
        merged = gt_merge(left, right, space, cfg, telemetry=tele)
        return merged, tele

    n = space.n
    if parallel:
        with ThreadPoolExecutor(max_workers=4) as pool:
            tree, tele = build_parallel(0, n, 0, pool)
        if telemetry is not None:
            telemetry.merge(tele)
        return tree
    return build(0, n, telemetry)


def gt_refine(
    tree: GreedyTree,
    space: SpaceLike,
    *,
    telemetry: Optional[RunTelemetry] = None,
) -> Permutation:
    """Refine a greedy tree into a (1 + 1/n)-greedy permutation.

    Runs the incremental construction with exact cells over the points
    revealed so far, revealing more of the tree whenever the coarsest
    unsplit node's radius bound exceeds 1/n of the largest cell radius.
    """
    n = space.n
    pts = sorted(tree.points())
    if pts != list(range(n)):
        raise ValueError("tree and space cover different point sets")
    root = tree.root.center
    if n == 1:
        return Permutation([root], {}, {})
    triangle_radius_bounds(tree)

    cfg = FVDConfig(lazy=1.0, cell_approx=1.0, heap_approx=1.0)
    fvd = FiniteVoronoi.for_reveals(space, root, cfg, telemetry=telemetry)
    cell_heap = ExactMaxHeap()
    frontier: list[tuple[float, int, TreeNode]] = []
    if not tree.root.is_leaf:
        frontier.append((-tree.root.rad_ub, tree.root.right.center, tree.root))

    def refresh(sites) -> None:
        for q in sites:
            r = fvd.current_radius(q)
            if r > 0.0:
                cell_heap.update(q, r)
            else:
                cell_heap.delete(q)
        if telemetry is not None:
            telemetry.heap_ops += len(sites)

    inserted = 1
    while inserted < n:
        while frontier:
            top = cell_heap.peek()
            max_radius = top[1] if top is not None else 0.0
            neg_rad, _, node = frontier[0]
            if -neg_rad <= max_radius / n:
                break
            heapq.heappop(frontier)
            revealed = node.right.center
            site, _, _ = fvd.reveal_point(revealed, node.center)
            refresh((site,))
            for child in (node.left, node.right):
                if not child.is_leaf:
                    heapq.heappush(frontier, (-child.rad_ub, child.right.center, child))
        popped = cell_heap.remove_max()
        if popped is None:
            raise DuplicatePointError(
                "no positive separation left; duplicate points are not supported here"
            )
        site, _ = popped
        far = fvd.cells[site].farthest()
        report = fvd.insert_site(far[0], site)
        inserted += 1
        refresh(set(report.touched) | {site, report.site})
    return Permutation(list(fvd.order), dict(fvd.pred), dict(fvd.eps))
