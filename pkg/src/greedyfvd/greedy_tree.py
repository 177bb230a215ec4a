"""Hereditary binary ball trees encoding greedy orders.

A tree node's center equals its left child's center; the right child is
centered on a point whose recorded predecessor is that center.  The tree
carries the predecessor map, insertion distances, and the claimed
(scaling, approximation, traversal-greedy) constants.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import IO, Optional

from .metric import ParseError, SpaceLike

__all__ = [
    "TreeNode",
    "GreedyTree",
    "Permutation",
    "RadiusBoundUnavailable",
    "split",
    "radius_ub",
    "triangle_radius_bounds",
    "exact_radius",
    "node_points",
    "heap_order_traversal",
    "serialize",
    "deserialize",
    "trees_equal",
]


class RadiusBoundUnavailable(ValueError):
    """The closed-form radius bound needs a scaling constant above 1."""


class TreeNode:
    __slots__ = ("center", "left", "right", "split_dist", "rad_ub")

    def __init__(self, center: int):
        self.center = center
        self.left: Optional[TreeNode] = None
        self.right: Optional[TreeNode] = None
        self.split_dist = 0.0
        self.rad_ub: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def __repr__(self) -> str:
        kind = "leaf" if self.is_leaf else f"split={self.split_dist}"
        return f"TreeNode(center={self.center}, {kind})"


@dataclass
class Permutation:
    """An ordering of all point ids with predecessor and insertion-distance
    records.  ``pred`` and ``eps`` omit the first point."""

    order: list[int]
    pred: dict[int, int]
    eps: dict[int, float]

    @property
    def start(self) -> int:
        return self.order[0]

    def __len__(self) -> int:
        return len(self.order)


class GreedyTree:
    """Greedy tree built by successive attaches.

    ``alpha``, ``delta``, ``gamma_t`` are the constants claimed for the
    construction that produced the tree; verification checks whatever is
    claimed.
    """

    __slots__ = ("root", "pred", "eps", "alpha", "delta", "gamma_t", "_leaves")

    def __init__(self, root_point: int, alpha: float = 1.0, delta: float = 1.0, gamma_t: float = 1.0):
        self.root = TreeNode(root_point)
        self.pred: dict[int, int] = {}
        self.eps: dict[int, float] = {}
        self.alpha = alpha
        self.delta = delta
        self.gamma_t = gamma_t
        self._leaves: dict[int, TreeNode] = {root_point: self.root}

    @property
    def n(self) -> int:
        return len(self._leaves)

    def leaf(self, p: int) -> TreeNode:
        return self._leaves[p]

    def attach(self, p: int, p_new: int, eps: float) -> None:
        """Grow leaf(p) into an internal node with children p and p_new."""
        node = self._leaves.get(p)
        if node is None:
            raise ValueError(f"point {p} is not in the tree")
        if not node.is_leaf:
            raise ValueError(f"point {p} is not a leaf")
        if p_new in self._leaves:
            raise ValueError(f"point {p_new} is already in the tree")
        left = TreeNode(p)
        right = TreeNode(p_new)
        node.left = left
        node.right = right
        node.split_dist = eps
        node.rad_ub = None
        self._leaves[p] = left
        self._leaves[p_new] = right
        self.pred[p_new] = p
        self.eps[p_new] = eps

    def points(self) -> list[int]:
        return list(self._leaves)

    def nodes(self):
        """All nodes, preorder, iteratively (trees can be deep chains)."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if node.left is not None:
                stack.append(node.right)
                stack.append(node.left)


def split(node: TreeNode) -> tuple[TreeNode, TreeNode]:
    """Replace a node by its two children; errors on leaves."""
    if node.is_leaf:
        raise ValueError("cannot split a leaf")
    return node.left, node.right


def node_points(node: TreeNode) -> list[int]:
    """Leaf centers of the subtree, iteratively."""
    out = []
    stack = [node]
    while stack:
        x = stack.pop()
        if x.left is None:
            out.append(x.center)
        else:
            stack.append(x.right)
            stack.append(x.left)
    return out


def radius_ub(node: TreeNode, tree: GreedyTree) -> float:
    """Closed-form node radius bound from the tree's claimed constants.

    For leaves 0.  Needs alpha > 1; the first term is omitted whenever the
    node's center has no recorded insertion distance (the root point).
    """
    if node.is_leaf:
        return 0.0
    if tree.alpha <= 1.0:
        raise RadiusBoundUnavailable(
            f"scaling constant {tree.alpha} <= 1; use an exact subtree scan"
        )
    denom = tree.alpha - 1.0
    second = tree.alpha * tree.gamma_t * node.split_dist / denom
    eps_a = tree.eps.get(node.center)
    if eps_a is None:
        return second
    return min(eps_a / denom, second)


def triangle_radius_bounds(tree: GreedyTree) -> None:
    """Fill ``rad_ub`` on every node with the triangle-inequality bound:
    max(rad(left), split_dist + rad(right)), computed bottom-up in O(n)
    with no distance evaluations."""
    stack: list[tuple[TreeNode, bool]] = [(tree.root, False)]
    while stack:
        node, expanded = stack.pop()
        if node.left is None:
            node.rad_ub = 0.0
            continue
        if expanded:
            r = node.split_dist + node.right.rad_ub
            lr = node.left.rad_ub
            node.rad_ub = lr if lr > r else r
        else:
            stack.append((node, True))
            stack.append((node.right, False))
            stack.append((node.left, False))


def exact_radius(node: TreeNode, space: SpaceLike) -> float:
    """Brute-force subtree radius; verifier use only."""
    c = node.center
    return max((space.dist(c, q) for q in node_points(node)), default=0.0)


def heap_order_traversal(tree: GreedyTree) -> Permutation:
    """Extract the permutation by repeatedly popping the node with the
    largest split distance and emitting its right child's center.

    Ties go to the smaller emitted point id.
    """
    order = [tree.root.center]
    heap: list[tuple[float, int, TreeNode]] = []
    if not tree.root.is_leaf:
        heap.append((-tree.root.split_dist, tree.root.right.center, tree.root))
        heapq.heapify(heap)
    while heap:
        _, emitted, node = heapq.heappop(heap)
        order.append(emitted)
        for child in (node.left, node.right):
            if not child.is_leaf:
                heapq.heappush(heap, (-child.split_dist, child.right.center, child))
    return Permutation(order, dict(tree.pred), dict(tree.eps))


def serialize(tree: GreedyTree, writer: IO[str]) -> None:
    """Write the tree as a header plus one ``point pred eps`` line per
    non-root point, in heap-traversal emission order."""
    writer.write(
        f"greedytree v1 n={tree.n} alpha={tree.alpha!r} delta={tree.delta!r} "
        f"gamma={tree.gamma_t!r} root={tree.root.center}\n"
    )
    perm = heap_order_traversal(tree)
    for p in perm.order[1:]:
        writer.write(f"{p} {tree.pred[p]} {tree.eps[p]!r}\n")


def deserialize(reader: IO[str], space: Optional[SpaceLike] = None) -> GreedyTree:
    """Rebuild a tree by replaying attaches; validates the header and that
    predecessors appear before their children."""
    lines = reader.read().splitlines()
    if not lines:
        raise ParseError("empty tree file")
    head = lines[0].split()
    if len(head) != 7 or head[0] != "greedytree" or head[1] != "v1":
        raise ParseError(f"bad tree header: {lines[0]!r}")
    fields = {}
    for token in head[2:]:
        key, _, val = token.partition("=")
        if not val:
            raise ParseError(f"bad tree header field: {token!r}")
        fields[key] = val
    try:
        n = int(fields["n"])
        alpha = float(fields["alpha"])
        delta = float(fields["delta"])
        gamma_t = float(fields["gamma"])
        root = int(fields["root"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad tree header: {lines[0]!r}") from exc
    if space is not None and n != space.n:
        raise ParseError(f"tree has n={n} but the space has n={space.n}")
    if space is not None and not 0 <= root < space.n:
        raise ParseError(f"root {root} out of range")
    tree = GreedyTree(root, alpha=alpha, delta=delta, gamma_t=gamma_t)
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n - 1:
        raise ParseError(f"expected {n - 1} attach lines, found {len(body)}")
    for lineno, line in enumerate(body, start=2):
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 'point pred eps'")
        try:
            p = int(parts[0])
            pred = int(parts[1])
            eps = float(parts[2])
        except ValueError:
            raise ParseError(f"line {lineno}: bad attach record {line!r}") from None
        if space is not None and not 0 <= p < space.n:
            raise ParseError(f"line {lineno}: point {p} out of range")
        try:
            tree.attach(pred, p, eps)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    return tree


def trees_equal(a: GreedyTree, b: GreedyTree) -> bool:
    """Structural equality: same centers, split distances, and shape."""
    if a.pred != b.pred or a.eps != b.eps:
        return False
    stack = [(a.root, b.root)]
    while stack:
        x, y = stack.pop()
        if x.center != y.center or x.is_leaf != y.is_leaf:
            return False
        if not x.is_leaf:
            if x.split_dist != y.split_dist:
                return False
            stack.append((x.left, y.left))
            stack.append((x.right, y.right))
    return True
