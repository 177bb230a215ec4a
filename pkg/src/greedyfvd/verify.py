"""Brute-force oracles and invariant checkers.

Everything here is independent of the incremental structures: checks work
from point ids, distance evaluations, and plain snapshots, so they can
catch bugs in the optimized code paths.  Inequalities get a relative
slack of 1e-9 on the satisfied side; violations must exceed it to fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .fvd import FVDConfig, FiniteVoronoi, InsertionReport, RunObserver
from .greedy_tree import (
    GreedyTree,
    Permutation,
    TreeNode,
    heap_order_traversal,
    node_points,
)
from .metric import SpaceLike

__all__ = [
    "SLACK",
    "VerificationReport",
    "greedy_factor",
    "covering_factor",
    "verify_tree",
    "verify_strong_packing",
    "FVDSnapshot",
    "verify_fvd_snapshot",
    "packing_check",
    "degree_ceiling",
    "SplitEvent",
    "verify_sparsity_and_splits",
    "empty_annulus_holds",
    "SnapshotRecorder",
    "SplitRecorder",
    "BackburnerRecorder",
]

SLACK = 1e-9


def _leq(a: float, b: float) -> bool:
    return a <= b * (1.0 + SLACK)


@dataclass
class VerificationReport:
    name: str
    passed: bool
    witness: Optional[dict] = None
    measured: Optional[float] = None
    note: str = ""

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = [f"{status} {self.name}"]
        if self.measured is not None:
            parts.append(f"measured={self.measured:.6g}")
        if self.note:
            parts.append(self.note)
        if self.witness:
            parts.append(f"witness={self.witness}")
        return " ".join(parts)


def greedy_factor(perm: Permutation, space: SpaceLike) -> float:
    """Smallest c for which the ordering is c-greedy: the max over steps of
    (farthest remaining distance) / (inserted point's distance).  O(n^2)."""
    order = perm.order
    n = len(order)
    if n < 2:
        return 1.0
    dmin = space.dists_from(order[0]).copy()
    worst = 0.0
    for i in range(1, n):
        p = order[i]
        d_i = float(dmin[p])
        top = float(dmin.max())
        if d_i <= 0.0:
            return math.inf
        ratio = top / d_i
        if ratio > worst:
            worst = ratio
        if i < n - 1:
            np.minimum(dmin, space.dists_from(p), out=dmin)
    return worst


def covering_factor(tree: GreedyTree, space: SpaceLike) -> float:
    """Max over traversal steps of max_p d(p, prefix) / (inserted point's
    recorded insertion distance)."""
    perm = heap_order_traversal(tree)
    order = perm.order
    if len(order) < 2:
        return 1.0
    dmin = space.dists_from(order[0]).copy()
    worst = 0.0
    for i in range(1, len(order)):
        a = order[i]
        eps = tree.eps[a]
        if eps <= 0.0:
            return math.inf
        ratio = float(dmin.max()) / eps
        if ratio > worst:
            worst = ratio
        if i < len(order) - 1:
            np.minimum(dmin, space.dists_from(a), out=dmin)
    return worst


def verify_tree(
    tree: GreedyTree,
    space: SpaceLike,
    alpha: Optional[float] = None,
    delta: Optional[float] = None,
    gamma_t: Optional[float] = None,
) -> VerificationReport:
    """Check the three tree properties against brute force.

    Scaling compares each insertion distance with its predecessor's (the
    root point has none, so its direct children are unconstrained);
    approximation compares recorded insertion distances against true
    prefix distances along the traversal; the traversal itself must be a
    gamma_t-greedy permutation.
    """
    alpha = tree.alpha if alpha is None else alpha
    delta = tree.delta if delta is None else delta
    gamma_t = tree.gamma_t if gamma_t is None else gamma_t
    name = "tree_validity"

    perm = heap_order_traversal(tree)
    order = perm.order
    n = len(order)
    if sorted(order) != list(range(space.n)):
        return VerificationReport(name, False, witness={"reason": "coverage"})

    for a, pa in tree.pred.items():
        eps_pa = tree.eps.get(pa)
        if eps_pa is None:
            continue
        if not _leq(alpha * tree.eps[a], eps_pa):
            return VerificationReport(
                name,
                False,
                witness={
                    "check": "scaling",
                    "point": a,
                    "pred": pa,
                    "eps": tree.eps[a],
                    "eps_pred": eps_pa,
                },
            )

    measured = 0.0
    if n >= 2:
        dmin = space.dists_from(order[0]).copy()
        for i in range(1, n):
            a = order[i]
            d_true = float(dmin[a])
            top = float(dmin.max())
            eps = tree.eps[a]
            if not _leq(eps, delta * d_true):
                return VerificationReport(
                    name,
                    False,
                    witness={"check": "approximation", "point": a, "eps": eps, "d": d_true},
                )
            if d_true > 0.0:
                ratio = top / d_true
                if ratio > measured:
                    measured = ratio
            if i < n - 1:
                np.minimum(dmin, space.dists_from(a), out=dmin)
        if not _leq(measured, gamma_t):
            return VerificationReport(
                name,
                False,
                measured=measured,
                witness={"check": "traversal_greedy", "factor": measured, "bound": gamma_t},
            )
    return VerificationReport(name, True, measured=measured)


def verify_strong_packing(tree: GreedyTree, space: SpaceLike, pi: float) -> VerificationReport:
    """Every point within pi * split_dist of an internal node's center must
    be a leaf of that node's subtree.  Vacuous when pi <= 0."""
    name = "strong_packing"
    if pi <= 0.0:
        return VerificationReport(name, True, note="vacuous")
    pts_of: dict[int, set] = {}
    postorder: list[TreeNode] = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        postorder.append(node)
        if node.left is not None:
            stack.append(node.left)
            stack.append(node.right)
    for node in reversed(postorder):
        if node.left is None:
            pts_of[id(node)] = {node.center}
        else:
            pts_of[id(node)] = pts_of[id(node.left)] | pts_of[id(node.right)]
    for node in postorder:
        if node.left is None:
            continue
        bound = pi * node.split_dist / (1.0 + SLACK)
        dists = space.dists_from(node.center)
        inside = np.flatnonzero(dists < bound)
        pts = pts_of[id(node)]
        for q in inside:
            if int(q) not in pts:
                return VerificationReport(
                    name,
                    False,
                    witness={
                        "center": node.center,
                        "split_dist": node.split_dist,
                        "point": int(q),
                        "distance": float(dists[q]),
                    },
                )
    return VerificationReport(name, True)


@dataclass
class FVDSnapshot:
    """Plain-data copy of a diagram state, checkable by brute force."""

    insertion_index: int
    sites: tuple
    cell_points: dict
    radius_ub: dict
    edges: frozenset
    touched: tuple

    @classmethod
    def capture(cls, fvd: FiniteVoronoi, report: Optional[InsertionReport] = None) -> "FVDSnapshot":
        sites = tuple(sorted(fvd.cells))
        cell_points = {s: tuple(fvd.cell_points(s)) for s in sites}
        radius_ub = {s: fvd.current_radius(s) for s in sites}
        edges = frozenset((a, b) for a, b, _ in fvd.graph.edges())
        touched = report.touched if report is not None else ()
        return cls(len(fvd.order), sites, cell_points, radius_ub, edges, touched)


def verify_fvd_snapshot(
    snap: FVDSnapshot,
    space: SpaceLike,
    config: FVDConfig,
    degree_limit: Optional[float] = None,
) -> VerificationReport:
    """Brute-force the cell invariant, neighbor invariant, pruning bound on
    touched edges, aspect ratio, radius-bound soundness, and (optionally)
    the degree limit for one snapshot."""
    name = f"fvd_snapshot[{snap.insertion_index}]"
    kappa = config.cell_approx
    tau = config.aspect_ratio_bound
    sites = list(snap.sites)
    site_index = {s: k for k, s in enumerate(sites)}
    pts = sorted(set().union(*snap.cell_points.values()))
    pt_index = {p: k for k, p in enumerate(pts)}
    pts_arr = np.array(pts, dtype=np.intp)

    site_of = np.empty(len(pts), dtype=np.intp)
    for s, members in snap.cell_points.items():
        k = site_index[s]
        for x in members:
            site_of[pt_index[x]] = k

    # distances from each site to every participating point
    S = np.empty((len(sites), len(pts)))
    for k, s in enumerate(sites):
        S[k] = space.dists_from(s)[pts_arr]

    # cell invariant: assigned distance within kappa of the best site
    assigned = S[site_of, np.arange(len(pts))]
    best = S.min(axis=0)
    bad = np.flatnonzero(assigned > kappa * best * (1.0 + SLACK))
    if bad.size:
        j = int(bad[0])
        return VerificationReport(
            name,
            False,
            witness={
                "check": "cell_invariant",
                "point": pts[j],
                "site": sites[int(site_of[j])],
                "assigned": float(assigned[j]),
                "best": float(best[j]),
            },
        )

    # radius-bound soundness and aspect ratio
    for s in sites:
        k = site_index[s]
        row = S[k]
        mine = site_of == k
        r_true = float(row[mine].max()) if mine.any() else 0.0
        if not _leq(r_true, snap.radius_ub[s]):
            return VerificationReport(
                name,
                False,
                witness={"check": "radius_ub", "site": s, "true": r_true, "ub": snap.radius_ub[s]},
            )
        if (~mine).any():
            inrad = float(row[~mine].min())
            if inrad > 0.0 and not _leq(r_true, tau * inrad):
                return VerificationReport(
                    name,
                    False,
                    witness={
                        "check": "aspect_ratio",
                        "site": s,
                        "out_radius": r_true,
                        "in_radius": inrad,
                        "bound": tau,
                    },
                )

    # neighbor invariant: witnesses force edges
    if len(sites) > 1:
        P = len(pts)
        D = np.empty((P, P))
        for j, p in enumerate(pts):
            D[j] = space.dists_from(p)[pts_arr]
        eps_pt = assigned  # distance from each point to its own site
        # M[j, k] = min distance from point j to any point of cell k
        M = np.empty((P, len(sites)))
        for s in sites:
            k = site_index[s]
            M[:, k] = D[:, site_of == k].min(axis=1)
        forces = M < eps_pt[:, None] * (1.0 - SLACK)
        for s in sites:
            kb = site_index[s]
            rows = forces[site_of == kb]
            need = np.flatnonzero(rows.any(axis=0))
            for ka in need:
                if ka == kb:
                    continue
                a, b = sites[int(ka)], s
                e = (a, b) if a < b else (b, a)
                if e not in snap.edges:
                    return VerificationReport(
                        name,
                        False,
                        witness={"check": "neighbor_invariant", "edge": e},
                    )

    # pruning bound on edges incident to touched sites
    for a in snap.touched:
        if a not in site_index:
            continue
        ra = snap.radius_ub[a]
        for (x, y) in snap.edges:
            if a not in (x, y):
                continue
            b = y if x == a else x
            rb = snap.radius_ub[b]
            bound = ra + rb + max(ra, rb)
            d_ab = space.dist(a, b)
            if not _leq(d_ab, bound):
                return VerificationReport(
                    name,
                    False,
                    witness={"check": "pruning", "edge": (a, b), "length": d_ab, "bound": bound},
                )

    if degree_limit is not None:
        deg: dict[int, int] = {}
        for a, b in snap.edges:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        if deg:
            worst = max(deg.items(), key=lambda kv: (kv[1], -kv[0]))
            if worst[1] > degree_limit:
                return VerificationReport(
                    name,
                    False,
                    witness={"check": "degree", "site": worst[0], "degree": worst[1]},
                )

    return VerificationReport(name, True)


def packing_check(points: Sequence[int], r: float, R: float, space: SpaceLike) -> VerificationReport:
    """Pairwise separation at least r, and containment in a ball of radius
    R (diameter test, since ball centers need not be input points).
    ``measured`` is the cardinality, for comparison with packing ceilings."""
    if r <= 0:
        raise ValueError("packing radius must be positive")
    ids = sorted(set(points))
    name = "packing_check"
    diameter = 0.0
    min_sep = math.inf
    for i, p in enumerate(ids):
        for q in ids[i + 1 :]:
            d = space.dist(p, q)
            diameter = max(diameter, d)
            min_sep = min(min_sep, d)
    packed = min_sep == math.inf or _leq(r, min_sep)
    covered = _leq(diameter, 2.0 * R)
    witness = None
    if not (packed and covered):
        witness = {"packed": packed, "covered": covered, "min_sep": min_sep, "diameter": diameter}
    return VerificationReport(name, packed and covered, witness=witness, measured=float(len(ids)))


def degree_ceiling(cell_approx: float, heap_approx: float, dim: int) -> float:
    """Neighbor-count ceiling (12 * cell_approx * heap_approx) ** dim."""
    return (12.0 * cell_approx * heap_approx) ** dim


@dataclass
class SplitEvent:
    kind: str  # "tidy" or "move"
    site: int
    parent_center: int
    parent_points: tuple
    cell_points: tuple


def verify_sparsity_and_splits(
    events: Iterable[SplitEvent],
    space: SpaceLike,
    config: FVDConfig,
    *,
    max_cell_entries: Optional[int] = None,
    cell_entry_limit: Optional[int] = None,
) -> VerificationReport:
    """Check recorded node splits against their radius lower bounds, and
    the observed cell sizes against a run constant (when given).

    Tidy splits need parent radius above (c-1)*lazy / (c^2 * tau * (lazy+1))
    of the cell's out-radius; move splits need
    (kappa-lazy) / (2*kappa*gamma*tau*(lazy+1)*(kappa+1)).
    """
    name = "sparsity_and_splits"
    lam = config.lazy
    kap = config.cell_approx
    gam = config.heap_approx
    c = config.tidy_factor
    tau = config.aspect_ratio_bound
    tidy_coeff = (c - 1.0) * lam / (c * c * tau * (lam + 1.0))
    move_coeff = (kap - lam) / (2.0 * kap * gam * tau * (lam + 1.0) * (kap + 1.0))
    for ev in events:
        if ev.kind not in ("tidy", "move"):
            raise ValueError(f"split event without provenance: {ev.kind!r}")
        coeff = tidy_coeff if ev.kind == "tidy" else move_coeff
        if coeff <= 0.0:
            continue
        rad = max((space.dist(ev.parent_center, q) for q in ev.parent_points), default=0.0)
        r_cell = max((space.dist(ev.site, q) for q in ev.cell_points), default=0.0)
        if not rad * (1.0 + SLACK) > coeff * r_cell:
            return VerificationReport(
                name,
                False,
                witness={
                    "kind": ev.kind,
                    "site": ev.site,
                    "parent_center": ev.parent_center,
                    "parent_radius": rad,
                    "cell_radius": r_cell,
                    "coeff": coeff,
                },
            )
    if max_cell_entries is not None and cell_entry_limit is not None:
        if max_cell_entries > cell_entry_limit:
            return VerificationReport(
                name,
                False,
                measured=float(max_cell_entries),
                witness={"check": "cell_size", "limit": cell_entry_limit},
            )
    measured = float(max_cell_entries) if max_cell_entries is not None else None
    return VerificationReport(name, True, measured=measured)


def empty_annulus_holds(
    space: SpaceLike,
    site: int,
    cell_points: Sequence[int],
    theta: float,
    universe: Optional[Sequence[int]] = None,
) -> VerificationReport:
    """No outside point may fall in the annulus (R, theta * R] around a
    backburnered site, where R is the cell's true out-radius."""
    name = "empty_annulus"
    members = set(cell_points)
    members.add(site)
    radius = max((space.dist(site, q) for q in members), default=0.0)
    ids = range(space.n) if universe is None else universe
    lo = radius * (1.0 + SLACK)
    hi = theta * radius / (1.0 + SLACK)
    for q in ids:
        if q in members:
            continue
        d = space.dist(site, q)
        if lo < d <= hi:
            return VerificationReport(
                name,
                False,
                witness={"site": site, "point": q, "distance": d, "radius": radius, "theta": theta},
            )
    return VerificationReport(name, True)


# -- observers used by instrumented runs ---------------------------------


class SnapshotRecorder(RunObserver):
    """Capture a snapshot after every k-th insertion (k = 1 up to n = 500,
    ceil(n/100) beyond, matching the checker budget)."""

    def __init__(self, n: int, every: Optional[int] = None):
        if every is None:
            every = 1 if n <= 500 else math.ceil(n / 100)
        self.every = every
        self.snapshots: list[FVDSnapshot] = []

    def on_insertion(self, fvd: FiniteVoronoi, report: InsertionReport) -> None:
        index = len(fvd.order)
        if index % self.every == 0 or index == fvd.space.n:
            self.snapshots.append(FVDSnapshot.capture(fvd, report))


class SplitRecorder(RunObserver):
    """Record split provenance with enough state to brute-force the radius
    lower bounds later."""

    def __init__(self):
        self.events: list[SplitEvent] = []

    def on_split(self, fvd: FiniteVoronoi, site: int, node: TreeNode, kind: str) -> None:
        parent_pts = tuple(node_points(node))
        cell_pts = tuple(sorted(set(fvd.cell_points(site)) | set(parent_pts)))
        self.events.append(SplitEvent(kind, site, node.center, parent_pts, cell_pts))


class BackburnerRecorder(RunObserver):
    """Record backburner entries (with cell contents) and removals (with
    neighbor counts)."""

    def __init__(self):
        self.entries: list[tuple[int, float, tuple]] = []
        self.removals: list[tuple[int, int]] = []

    def on_backburner_entry(self, fvd: FiniteVoronoi, site: int, key: float) -> None:
        self.entries.append((site, key, tuple(fvd.cell_points(site))))

    def on_backburner_removal(self, fvd: FiniteVoronoi, site: int, neighbors: int) -> None:
        self.removals.append((site, neighbors))
