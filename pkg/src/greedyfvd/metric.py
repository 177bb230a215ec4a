"""Finite metric spaces: coordinate-backed point sets with distance oracles."""

from __future__ import annotations

import math
from typing import IO, Iterable, Union

import numpy as np

__all__ = [
    "NORMS",
    "ParseError",
    "EmptyInputError",
    "DuplicatePointError",
    "MetricSpace",
    "DistanceCounter",
    "load_points",
    "dist_to_set",
    "spread",
]

NORMS = ("l1", "l2", "linf")
_L1, _L2, _LINF = 0, 1, 2


class ParseError(ValueError):
    """A point file could not be parsed."""


class EmptyInputError(ParseError):
    """A point file contained no data rows."""


class DuplicatePointError(ValueError):
    """Duplicate points make the requested quantity undefined."""


class MetricSpace:
    """Immutable indexed point set with an L1, L2, or Linf distance oracle.

    Point ids are dense integers in [0, n).  ``dist`` and ``dists_from``
    accumulate per-coordinate terms in index order, so the scalar and
    vectorized paths produce bit-identical values.
    """

    __slots__ = ("coords", "norm", "n", "dim", "_rows", "_kind")

    def __init__(self, coords, norm: str = "l2"):
        if norm not in NORMS:
            raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
        arr = np.array(coords, dtype=np.float64, order="C", copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError("coords must be a 1-D or 2-D array")
        if arr.shape[0] == 0:
            raise EmptyInputError("a metric space needs at least one point")
        arr.setflags(write=False)
        self.coords = arr
        self.norm = norm
        self.n = arr.shape[0]
        self.dim = arr.shape[1]
        self._rows = [tuple(row) for row in arr.tolist()]
        self._kind = {"l1": _L1, "l2": _L2, "linf": _LINF}[norm]

    def dist(self, i: int, j: int) -> float:
        a = self._rows[i]
        b = self._rows[j]
        kind = self._kind
        if kind == _L2:
            s = 0.0
            for x, y in zip(a, b):
                d = x - y
                s += d * d
            return math.sqrt(s)
        if kind == _L1:
            s = 0.0
            for x, y in zip(a, b):
                s += abs(x - y)
            return s
        s = 0.0
        for x, y in zip(a, b):
            d = abs(x - y)
            if d > s:
                s = d
        return s

    def dists_from(self, i: int) -> np.ndarray:
        """Distances from point i to every point, bit-identical to ``dist``."""
        diff = np.abs(self.coords - self.coords[i])
        kind = self._kind
        if kind == _L2:
            acc = diff[:, 0] * diff[:, 0]
            for k in range(1, self.dim):
                acc = acc + diff[:, k] * diff[:, k]
            return np.sqrt(acc)
        acc = diff[:, 0]
        if kind == _L1:
            for k in range(1, self.dim):
                acc = acc + diff[:, k]
            return acc
        for k in range(1, self.dim):
            acc = np.maximum(acc, diff[:, k])
        return acc

    def __len__(self) -> int:
        return self.n


class DistanceCounter:
    """Wraps a space and counts oracle calls.

    ``dists_from`` counts one call per row entry.  The counter is a plain
    integer: the package's parallel code gives each branch its own counter
    and sums after joining, so the final totals are exact.
    """

    __slots__ = ("space", "count")

    def __init__(self, space: MetricSpace):
        self.space = space
        self.count = 0

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def norm(self) -> str:
        return self.space.norm

    @property
    def coords(self) -> np.ndarray:
        return self.space.coords

    def dist(self, i: int, j: int) -> float:
        self.count += 1
        return self.space.dist(i, j)

    def dists_from(self, i: int) -> np.ndarray:
        self.count += self.space.n
        return self.space.dists_from(i)

    def reset(self) -> None:
        self.count = 0

    def __len__(self) -> int:
        return self.space.n


SpaceLike = Union[MetricSpace, DistanceCounter]


def load_points(source: Union[str, IO[str]], norm: str = "l2") -> MetricSpace:
    """Parse a point file: one point per line, whitespace or comma separated.

    Blank lines and lines starting with ``#`` are skipped.  Ragged rows and
    non-numeric tokens raise :class:`ParseError` naming the line number.
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = source.read().splitlines()
    rows = []
    arity = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = [t for t in line.replace(",", " ").split() if t]
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric token in {line!r}") from None
        if arity is None:
            arity = len(row)
        elif len(row) != arity:
            raise ParseError(
                f"line {lineno}: expected {arity} coordinates, got {len(row)}"
            )
        rows.append(row)
    if not rows:
        raise EmptyInputError("no points in input")
    return MetricSpace(rows, norm=norm)


def dist_to_set(space: SpaceLike, p: int, ids: Iterable[int]) -> tuple[float, int]:
    """Distance from p to a nonempty id set, with the achieving id.

    Ties broken by smallest id.
    """
    members = sorted(set(ids))
    if not members:
        raise ValueError("dist_to_set requires a nonempty set")
    best = math.inf
    argmin = -1
    for s in members:
        d = space.dist(p, s)
        if d < best:
            best = d
            argmin = s
    return best, argmin


def spread(space: SpaceLike) -> float:
    """Largest pairwise distance over smallest positive pairwise distance.

    Duplicate points raise :class:`DuplicatePointError` rather than
    silently producing an infinite ratio.
    """
    n = space.n
    if n < 2:
        raise ValueError("spread needs at least two points")
    dmax = 0.0
    dmin = math.inf
    for i in range(n - 1):
        row = space.dists_from(i)[i + 1 :]
        lo = float(row.min())
        if lo == 0.0:
            raise DuplicatePointError(f"duplicate point detected at index {i}")
        hi = float(row.max())
        if hi > dmax:
            dmax = hi
        if lo < dmin:
            dmin = lo
    return dmax / dmin
