"""Incremental finite Voronoi diagrams over points or tree nodes.

Cells map sites to member entries (bare points, or greedy-tree nodes that
stand for whole clusters).  Site insertion runs in three steps: point
location along the neighbor graph, a graph update connecting the new site
to everything within two hops of its predecessor, and pruning of edges
that are too long to matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappush, heappop
from typing import Iterable, Optional

from .greedy_tree import TreeNode, node_points
from .metric import SpaceLike

__all__ = [
    "MOVE",
    "STAY",
    "SPLIT",
    "FVDConfig",
    "InsertionReport",
    "NeighborGraph",
    "Cell",
    "FiniteVoronoi",
    "RunObserver",
    "classify_entry",
    "locate_node",
    "neighbors_within_two_hops",
]

MOVE, STAY, SPLIT = "move", "stay", "split"


@dataclass
class FVDConfig:
    """Constants steering the diagram.

    ``lazy`` is the lazy-move constant, ``cell_approx`` the cell
    approximation factor, ``heap_approx`` the heap approximation factor,
    ``bucket_base``/``buckets`` shape the bucket queue, and ``tidy_factor``
    (defaulting to the bucket base) bounds how loose a cell's radius
    estimate may get before stored nodes are split.
    """

    lazy: float = 2.0
    cell_approx: float = 3.0
    heap_approx: float = 4.0
    bucket_base: float = 2.0
    buckets: int = 7
    tidy_factor: Optional[float] = None

    def __post_init__(self):
        if self.tidy_factor is None:
            self.tidy_factor = self.bucket_base
        if self.lazy < 1.0:
            raise ValueError("lazy-move constant must be at least 1")
        if self.cell_approx < self.lazy:
            raise ValueError("cell approximation must be at least the lazy constant")
        if self.heap_approx < 1.0:
            raise ValueError("heap approximation must be at least 1")
        if not self.bucket_base > 1.0:
            raise ValueError("bucket base must exceed 1")
        if self.buckets < 1:
            raise ValueError("bucket window must be at least 1")
        if self.tidy_factor < 1.0:
            raise ValueError("tidy factor must be at least 1")

    @classmethod
    def exact(cls) -> "FVDConfig":
        """Strict cells and strict heap; reproduces the exact greedy order."""
        return cls(lazy=1.0, cell_approx=1.0, heap_approx=1.0)

    @property
    def aspect_ratio_bound(self) -> float:
        k = self.cell_approx
        return k * self.heap_approx * (1.0 + k) / self.lazy

    @property
    def annulus_factor(self) -> float:
        k = self.cell_approx
        return self.bucket_base ** (self.buckets - 1) / (k * (1.0 + k))

    @property
    def strong_packing_factor(self) -> float:
        lam = self.lazy
        if lam <= 1.0:
            return 0.0
        k = self.cell_approx
        return (lam * lam - lam - 1.0) / ((lam * lam - 1.0) * (k + 1.0) * k)


@dataclass
class InsertionReport:
    site: int
    pred: int
    eps: float
    moved: int = 0
    splits_tidy: int = 0
    splits_move: int = 0
    edges_added: tuple = ()
    edges_removed: tuple = ()
    touches: int = 0
    touched: tuple = ()

    @property
    def splits(self) -> int:
        return self.splits_tidy + self.splits_move


class RunObserver:
    """Optional instrumentation callbacks; subclass and override."""

    def on_insertion(self, fvd: "FiniteVoronoi", report: InsertionReport) -> None:
        pass

    def on_backburner_entry(self, fvd: "FiniteVoronoi", site: int, key: float) -> None:
        pass

    def on_backburner_removal(self, fvd: "FiniteVoronoi", site: int, neighbors: int) -> None:
        pass

    def on_split(self, fvd: "FiniteVoronoi", site: int, node: TreeNode, kind: str) -> None:
        pass


class NeighborGraph:
    """Undirected graph on sites; edges carry their length."""

    __slots__ = ("_adj",)

    def __init__(self):
        self._adj: dict[int, dict[int, float]] = {}

    def add_site(self, p: int) -> None:
        self._adj.setdefault(p, {})

    def neighbors(self, p: int) -> dict[int, float]:
        return self._adj[p]

    def degree(self, p: int) -> int:
        return len(self._adj[p])

    def add_edge(self, a: int, b: int, length: float) -> bool:
        if a == b:
            return False
        adj = self._adj
        if b in adj[a]:
            return False
        adj[a][b] = length
        adj[b][a] = length
        return True

    def remove_edge(self, a: int, b: int) -> None:
        del self._adj[a][b]
        del self._adj[b][a]

    def has_edge(self, a: int, b: int) -> bool:
        return b in self._adj[a]

    def edge_length(self, a: int, b: int) -> float:
        return self._adj[a][b]

    def two_hop(self, p: int) -> list[int]:
        """Neighbors and neighbors-of-neighbors of p, excluding p, sorted."""
        adj = self._adj
        out = set(adj[p])
        for q in adj[p]:
            out.update(adj[q])
        out.discard(p)
        return sorted(out)

    def sites(self) -> list[int]:
        return list(self._adj)

    def edges(self):
        for a, nbrs in self._adj.items():
            for b, length in nbrs.items():
                if a < b:
                    yield a, b, length

    def max_degree(self) -> int:
        return max((len(v) for v in self._adj.values()), default=0)


def neighbors_within_two_hops(graph: NeighborGraph, p: int) -> list[int]:
    return graph.two_hop(p)


def classify_entry(d_new: float, d_old: float, rad: float, lazy: float, cell_approx: float) -> str:
    """Decide whether an entry stays, moves whole, or must be split.

    Staying is checked first: an entry that is allowed to stay does, which
    at radius zero reduces to the lazy rule for bare points.
    """
    if cell_approx * (d_new - rad) >= d_old + rad:
        return STAY
    if lazy * (d_new + rad) <= d_old - rad:
        return MOVE
    return SPLIT


def locate_node(fvd: "FiniteVoronoi", node: TreeNode, new_site: int, old_site: int):
    """Single-level location of a node against a new site.

    Returns STAY, MOVE, or (SPLIT, (left, right)); callers locate split
    children recursively.
    """
    space = fvd.space
    a = node.center
    rad = node.rad_ub if node.rad_ub is not None else 0.0
    verdict = classify_entry(
        space.dist(a, new_site), space.dist(a, old_site), rad, fvd._lam, fvd._kap
    )
    if verdict == SPLIT:
        return SPLIT, (node.left, node.right)
    return verdict


class Cell:
    """A site with member entries keyed by center.

    Each record is (key, center_dist, rad, node, seq): key is
    center_dist + rad, an upper bound on the distance from the site to any
    point under the entry.  Heaps are lazy; stale tuples are skipped by
    comparing seq stamps against the live record.
    """

    __slots__ = ("site", "members", "_key_heap", "_cdist_heap")

    def __init__(self, site: int):
        self.site = site
        self.members: dict[int, tuple] = {}
        self._key_heap: list = []
        self._cdist_heap: list = []

    def add(self, center: int, cdist: float, rad: float, node: Optional[TreeNode], seq: int) -> None:
        key = cdist + rad
        self.members[center] = (key, cdist, rad, node, seq)
        heappush(self._key_heap, (-key, center, seq))
        heappush(self._cdist_heap, (-cdist, center, seq))

    def remove(self, center: int) -> None:
        del self.members[center]

    def max_key(self) -> float:
        """Radius upper bound: the largest live entry key (0 when empty)."""
        heap = self._key_heap
        members = self.members
        while heap:
            negkey, c, s = heap[0]
            rec = members.get(c)
            if rec is not None and rec[4] == s:
                return -negkey
            heappop(heap)
        return 0.0

    def top(self) -> Optional[tuple[int, tuple]]:
        heap = self._key_heap
        members = self.members
        while heap:
            _, c, s = heap[0]
            rec = members.get(c)
            if rec is not None and rec[4] == s:
                return c, rec
            heappop(heap)
        return None

    def farthest(self) -> Optional[tuple[int, float]]:
        """Member center farthest from the site; ties to the smallest id."""
        heap = self._cdist_heap
        members = self.members
        while heap:
            negc, c, s = heap[0]
            rec = members.get(c)
            if rec is not None and rec[4] == s:
                return c, -negc
            heappop(heap)
        return None

    def __len__(self) -> int:
        return len(self.members)


class FiniteVoronoi:
    """The incremental diagram: cells, neighbor graph, and insertion.

    Construct via :meth:`from_points` (bare points), :meth:`from_roots`
    (tree nodes), or :meth:`for_reveals` (points added lazily through
    :meth:`reveal_point`).
    """

    def __init__(
        self,
        space: SpaceLike,
        start: int,
        config: Optional[FVDConfig] = None,
        *,
        node_mode: bool = False,
        scan_all: bool = False,
        telemetry=None,
        observer: Optional[RunObserver] = None,
    ):
        if not 0 <= start < space.n:
            raise ValueError(f"start index {start} out of range for n={space.n}")
        self.space = space
        self.config = config if config is not None else FVDConfig()
        self.start = start
        self.node_mode = node_mode
        self.scan_all = scan_all
        self.telemetry = telemetry
        self.observer = observer
        self.cells: dict[int, Cell] = {start: Cell(start)}
        self.graph = NeighborGraph()
        self.graph.add_site(start)
        self._owner: dict[int, int] = {start: start}
        self.pred: dict[int, int] = {}
        self.eps: dict[int, float] = {}
        self.order: list[int] = [start]
        self._seq = 0
        self._lam = float(self.config.lazy)
        self._kap = float(self.config.cell_approx)
        self._tidy = float(self.config.tidy_factor)
        if node_mode:
            self._scan_frac = self._kap / (1.0 + self._kap)
        else:
            self._scan_frac = self._lam / (1.0 + self._lam)

    @classmethod
    def from_points(
        cls,
        space: SpaceLike,
        start: int,
        config: Optional[FVDConfig] = None,
        points: Optional[Iterable[int]] = None,
        **kwargs,
    ) -> "FiniteVoronoi":
        fvd = cls(space, start, config, node_mode=False, **kwargs)
        ids = range(space.n) if points is None else sorted(points)
        cell = fvd.cells[start]
        owner = fvd._owner
        dist = space.dist
        seen_start = False
        for p in ids:
            if p == start:
                seen_start = True
                continue
            fvd._seq += 1
            cell.add(p, dist(start, p), 0.0, None, fvd._seq)
            owner[p] = start
        if points is not None and not seen_start:
            raise ValueError("start point must be among the supplied points")
        return fvd

    @classmethod
    def from_roots(
        cls,
        space: SpaceLike,
        start: int,
        config: Optional[FVDConfig],
        roots: Iterable[TreeNode],
        **kwargs,
    ) -> "FiniteVoronoi":
        fvd = cls(space, start, config, node_mode=True, **kwargs)
        cell = fvd.cells[start]
        owner = fvd._owner
        dist = space.dist
        centers = []
        for node in roots:
            if node.rad_ub is None:
                raise ValueError("tree nodes need radius bounds before location")
            c = node.center
            centers.append(c)
            if node.is_leaf and c == start:
                continue
            fvd._seq += 1
            cell.add(c, dist(start, c), node.rad_ub, node, fvd._seq)
            owner[c] = start
        if start not in centers:
            raise ValueError("start point must be a supplied root center")
        return fvd

    @classmethod
    def for_reveals(
        cls,
        space: SpaceLike,
        start: int,
        config: Optional[FVDConfig] = None,
        **kwargs,
    ) -> "FiniteVoronoi":
        """Start with a single empty cell; points arrive via reveal_point."""
        return cls(space, start, config, node_mode=False, **kwargs)

    # -- queries ---------------------------------------------------------

    def current_radius(self, site: int) -> float:
        return self.cells[site].max_key()

    def owner_site(self, center: int) -> int:
        return self._owner[center]

    def is_site(self, p: int) -> bool:
        return p in self.cells

    def sites(self) -> list[int]:
        return list(self.cells)

    def cell_points(self, site: int) -> list[int]:
        """All points of a cell (node entries expanded), site included."""
        out = [site]
        for c, rec in self.cells[site].members.items():
            node = rec[3]
            if node is None or node.is_leaf:
                out.append(c)
            else:
                out.extend(node_points(node))
        return sorted(out)

    # -- reveal (lazily populated point mode) -----------------------------

    def reveal_point(self, point: int, anchor: int) -> tuple[int, float, int]:
        """Place a new point in the cell of the best site among the anchor
        point's cell and its graph neighbors.

        Returns (site, distance, touches).  The anchor must already be
        present; ties go to the smallest site id.
        """
        if point in self.cells or point in self._owner:
            raise ValueError(f"point {point} is already present")
        q = self._owner.get(anchor)
        if q is None:
            raise ValueError(f"anchor {anchor} is not present")
        dist = self.space.dist
        hist = None if self.telemetry is None else self.telemetry.touch_hist
        candidates = [q]
        candidates.extend(self.graph.neighbors(q))
        candidates.sort()
        best = -1
        best_d = math.inf
        touches = 0
        for s in candidates:
            d = dist(point, s)
            touches += 1
            if hist is not None and d > 0.0:
                bucket = (point, math.frexp(d)[1] - 1)
                hist[bucket] = hist.get(bucket, 0) + 1
            if d < best_d:
                best_d = d
                best = s
        self._seq += 1
        self.cells[best].add(point, best_d, 0.0, None, self._seq)
        self._owner[point] = best
        if self.telemetry is not None:
            self.telemetry.touches += touches
        return best, best_d, touches

    # -- tidying ----------------------------------------------------------

    def tidy_cell(self, site: int) -> int:
        """Split stored nodes until the cell's key bound is within the tidy
        factor of its farthest member center.  Point-mode cells are always
        tidy."""
        if not self.node_mode:
            return 0
        cell = self.cells[site]
        members = cell.members
        splits = 0
        c_factor = self._tidy
        dist = self.space.dist
        observer = self.observer
        while members:
            top = cell.top()
            if top is None:
                break
            center, rec = top
            far = cell.farthest()
            fc = far[1] if far is not None else 0.0
            key = rec[0]
            if key <= c_factor * fc:
                break
            node = rec[3]
            if node is None or node.is_leaf:
                break
            cell.remove(center)
            splits += 1
            if observer is not None:
                observer.on_split(self, site, node, "tidy")
            left, right = node.left, node.right
            cdist = rec[1]
            if not (left.is_leaf and left.center == site):
                self._seq += 1
                cell.add(left.center, cdist, left.rad_ub, left, self._seq)
                self._owner[left.center] = site
            b = right.center
            db = dist(site, b)
            if not (right.is_leaf and b == site):
                self._seq += 1
                cell.add(b, db, right.rad_ub, right, self._seq)
                self._owner[b] = site
        if splits and self.telemetry is not None:
            self.telemetry.splits_tidy += splits
        return splits

    # -- pruning ----------------------------------------------------------

    def prune_edges(self, touched: Iterable[int]) -> list[tuple[int, int]]:
        """Among edges incident to the given sites, drop those longer than
        the sum of both radius bounds plus the larger of them."""
        graph = self.graph
        cells = self.cells
        removed = []
        radius = {}
        for a in sorted(set(touched)):
            ra = radius.get(a)
            if ra is None:
                ra = radius[a] = cells[a].max_key()
            adj = graph.neighbors(a)
            for b in sorted(adj):
                rb = radius.get(b)
                if rb is None:
                    rb = radius[b] = cells[b].max_key()
                bound = ra + rb + (ra if ra > rb else rb)
                if adj[b] > bound:
                    graph.remove_edge(a, b)
                    removed.append((a, b) if a < b else (b, a))
        if removed and self.telemetry is not None:
            self.telemetry.prunes += len(removed)
        return removed

    # -- insertion --------------------------------------------------------

    def insert_site(self, p_new: int, from_site: Optional[int] = None) -> InsertionReport:
        """Make p_new (currently a member entry center) a site.

        Relocates entries of the old site's cell and its neighbors, links
        the new site to everything within two hops of the old site, tidies
        changed cells in node mode, and prunes edges whose endpoints'
        radius bounds changed.
        """
        cells = self.cells
        if p_new in cells:
            raise ValueError(f"point {p_new} is already a site")
        owner = self._owner
        p = owner.get(p_new)
        if p is None or p_new not in cells[p].members:
            raise ValueError(f"point {p_new} is not a member entry of any cell")
        if from_site is not None and from_site != p:
            raise ValueError(f"point {p_new} belongs to cell {p}, not {from_site}")

        cell_p = cells[p]
        eps = cell_p.members[p_new][1]
        self.pred[p_new] = p
        self.eps[p_new] = eps
        self.order.append(p_new)

        new_cell = Cell(p_new)
        cells[p_new] = new_cell
        owner[p_new] = p_new

        graph = self.graph
        node_mode = self.node_mode
        dist = self.space.dist
        lam = self._lam
        kap = self._kap
        tele = self.telemetry
        hist = None if tele is None else tele.touch_hist

        scan_sites = [p]
        scan_sites.extend(sorted(graph.neighbors(p)))
        radius_before = {q: cells[q].max_key() for q in scan_sites}

        if not node_mode:
            cell_p.remove(p_new)

        moved = 0
        touches = 0
        splits_move = 0
        d_to_new = {p: eps}
        observer = self.observer

        for q in scan_sites:
            cell_q = cells[q]
            members = cell_q.members
            if not members:
                continue
            dq = d_to_new.get(q)
            if dq is None:
                dq = dist(q, p_new)
                d_to_new[q] = dq

            if self.scan_all:
                # full scan of bare points (the plain Clarkson path)
                for c, rec in list(members.items()):
                    dn = dist(c, p_new)
                    touches += 1
                    if hist is not None and dn > 0.0:
                        bucket = (c, math.frexp(dn)[1] - 1)
                        hist[bucket] = hist.get(bucket, 0) + 1
                    if lam * dn < rec[1]:
                        del members[c]
                        moved += 1
                        if c != p_new:
                            self._seq += 1
                            new_cell.add(c, dn, 0.0, None, self._seq)
                            owner[c] = p_new
                continue

            # scan members in decreasing key order; entries below the
            # threshold are guaranteed to satisfy the stay rule
            threshold = self._scan_frac * dq
            key_heap = cell_q._key_heap
            stash = []
            stays = []
            while key_heap:
                negkey, c, s = key_heap[0]
                rec = members.get(c)
                if rec is None or rec[4] != s:
                    heappop(key_heap)
                    continue
                if -negkey <= threshold:
                    break
                heappop(key_heap)
                node = rec[3]
                dn = dist(c, p_new)
                touches += 1
                if hist is not None and dn > 0.0:
                    bucket = (c, math.frexp(dn)[1] - 1)
                    hist[bucket] = hist.get(bucket, 0) + 1
                if node is None:
                    if lam * dn < rec[1]:
                        del members[c]
                        moved += 1
                        if c != p_new:
                            self._seq += 1
                            new_cell.add(c, dn, 0.0, None, self._seq)
                            owner[c] = p_new
                    else:
                        stash.append((negkey, c, s))
                    continue
                # node entry: stay / move whole / split recursively
                stack = [(node, rec[1], dn)]
                first = True
                while stack:
                    x, d_old, d_new = stack.pop()
                    a = x.center
                    if d_old is None:
                        d_old = dist(a, q)
                        d_new = dist(a, p_new)
                        touches += 1
                        if hist is not None and d_new > 0.0:
                            bucket = (a, math.frexp(d_new)[1] - 1)
                            hist[bucket] = hist.get(bucket, 0) + 1
                    r = x.rad_ub
                    if kap * (d_new - r) >= d_old + r:
                        if first:
                            stash.append((negkey, c, s))
                        elif not (x.left is None and a == q):
                            stays.append((a, d_old, r, x))
                    elif lam * (d_new + r) <= d_old - r:
                        if first:
                            del members[c]
                        moved += 1
                        if not (x.left is None and a == p_new):
                            self._seq += 1
                            new_cell.add(a, d_new, r, x, self._seq)
                            owner[a] = p_new
                    else:
                        if first:
                            del members[c]
                        splits_move += 1
                        if observer is not None:
                            observer.on_split(self, q, x, "move")
                        stack.append((x.right, None, None))
                        stack.append((x.left, d_old, d_new))
                    first = False
            for t in stash:
                heappush(key_heap, t)
            for a, d_old, r, x in stays:
                self._seq += 1
                cell_q.add(a, d_old, r, x, self._seq)
                owner[a] = q

        # graph update: connect the new site to everything within two hops
        graph.add_site(p_new)
        targets = graph.two_hop(p)
        if p not in targets:
            targets.append(p)
            targets.sort()
        edges_added = []
        for q in targets:
            dq = d_to_new.get(q)
            if dq is None:
                dq = dist(q, p_new)
            if graph.add_edge(p_new, q, dq):
                edges_added.append((p_new, q) if p_new < q else (q, p_new))

        # tidy cells whose contents changed, then find radius changes
        splits_tidy = 0
        if node_mode:
            for q in scan_sites:
                splits_tidy += self.tidy_cell(q)
            splits_tidy += self.tidy_cell(p_new)

        touched = [p_new]
        for q in scan_sites:
            if cells[q].max_key() != radius_before[q]:
                touched.append(q)
        touched.sort()

        edges_removed = self.prune_edges(touched)

        report = InsertionReport(
            site=p_new,
            pred=p,
            eps=eps,
            moved=moved,
            splits_tidy=splits_tidy,
            splits_move=splits_move,
            edges_added=tuple(edges_added),
            edges_removed=tuple(edges_removed),
            touches=touches,
            touched=tuple(touched),
        )

        if tele is not None:
            tele.touches += touches
            tele.splits_move += splits_move
            deg = graph.degree(p_new)
            if deg > tele.max_degree:
                tele.max_degree = deg
            for q in targets:
                dq_deg = graph.degree(q)
                if dq_deg > tele.max_degree:
                    tele.max_degree = dq_deg
            size = len(new_cell)
            for q in scan_sites:
                cq = len(cells[q])
                if cq > size:
                    size = cq
            if size > tele.max_cell_entries:
                tele.max_cell_entries = size
        if observer is not None:
            observer.on_insertion(self, report)
        return report
