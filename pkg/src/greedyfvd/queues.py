"""Priority structures ordering cell insertions.

Two structures: an exact max-heap with key updates (the strict greedy
order), and a bucket queue whose keys are rounded down to powers of a
base, with a backburner list for entries that fall far below the current
maximum.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from typing import Iterable, Mapping, Optional

__all__ = ["ExactMaxHeap", "BucketQueue", "heap_invariant_holds"]

_SLACK = 1e-9


class ExactMaxHeap:
    """Max-heap over (id, key) with update and delete by id.

    remove_max returns the entry with the globally maximum key; ties go to
    the smallest id.  Updates are lazy: superseded heap tuples are skipped
    on pop.
    """

    __slots__ = ("_heap", "_live", "_ver")

    def __init__(self):
        self._heap: list[tuple[float, int, int]] = []
        self._live: dict[int, tuple[float, int]] = {}
        self._ver = 0

    def insert(self, eid: int, key: float) -> None:
        self._ver += 1
        self._live[eid] = (key, self._ver)
        heapq.heappush(self._heap, (-key, eid, self._ver))

    update = insert

    def delete(self, eid: int) -> None:
        self._live.pop(eid, None)

    def __contains__(self, eid: int) -> bool:
        return eid in self._live

    def __len__(self) -> int:
        return len(self._live)

    def _prune(self) -> None:
        heap = self._heap
        live = self._live
        while heap:
            negkey, eid, ver = heap[0]
            cur = live.get(eid)
            if cur is not None and cur[1] == ver:
                return
            heapq.heappop(heap)

    def peek(self) -> Optional[tuple[int, float]]:
        self._prune()
        if not self._heap:
            return None
        negkey, eid, _ = self._heap[0]
        return eid, -negkey

    def remove_max(self) -> Optional[tuple[int, float]]:
        self._prune()
        if not self._heap:
            return None
        negkey, eid, _ = heapq.heappop(self._heap)
        del self._live[eid]
        return eid, -negkey


class BucketQueue:
    """Max-priority queue with keys bucketed by floor(log_base key).

    Entries whose exponent falls more than ``window`` below the current
    maximum bucket exponent go to the backburner, which is consulted only
    when every bucket is empty.  FIFO within buckets; backburner order is
    configurable (fifo default, lifo optional).

    Keys are assumed monotone-compatible (no key exceeds base times the
    running maximum); larger keys are still accepted and simply raise the
    window.
    """

    __slots__ = (
        "base",
        "window",
        "backburner_order",
        "_buckets",
        "_backburner",
        "_bucketed",
        "_is2",
        "_logbase",
        "ops",
        "scan_steps",
        "window_shifts",
        "_last_max",
    )

    def __init__(self, base: float = 2.0, window: int = 7, backburner_order: str = "fifo"):
        if not base > 1.0:
            raise ValueError("bucket base must exceed 1")
        if window < 1:
            raise ValueError("window length must be at least 1")
        if backburner_order not in ("fifo", "lifo"):
            raise ValueError("backburner order must be 'fifo' or 'lifo'")
        self.base = float(base)
        self.window = int(window)
        self.backburner_order = backburner_order
        self._buckets: dict[int, deque] = {}
        self._backburner: deque = deque()
        self._bucketed = 0
        self._is2 = self.base == 2.0
        self._logbase = math.log(self.base)
        self.ops = 0
        self.scan_steps = 0
        self.window_shifts = 0
        self._last_max: Optional[int] = None

    def exponent(self, key: float) -> int:
        """floor(log_base key), exact at bucket boundaries."""
        if key <= 0:
            raise ValueError("bucket queue keys must be positive")
        if self._is2:
            e = math.frexp(key)[1] - 1
        else:
            e = math.floor(math.log(key) / self._logbase)
        base = self.base
        while base**e > key:
            e -= 1
        while base ** (e + 1) <= key:
            e += 1
        return e

    def _max_exponent(self) -> Optional[int]:
        if not self._buckets:
            return None
        self.scan_steps += len(self._buckets)
        return max(self._buckets)

    @property
    def max_exponent(self) -> Optional[int]:
        return max(self._buckets) if self._buckets else None

    def insert(self, eid: int, key: float) -> str:
        """Queue an entry; returns "bucket" or "backburner"."""
        self.ops += 1
        e = self.exponent(key)
        top = self._max_exponent()
        if top is not None and e <= top - self.window:
            self._backburner.append((eid, key))
            return "backburner"
        bucket = self._buckets.get(e)
        if bucket is None:
            bucket = deque()
            self._buckets[e] = bucket
        bucket.append((eid, key))
        self._bucketed += 1
        if top is None or e > top:
            self.window_shifts += 1
        return "bucket"

    def remove_max(self) -> Optional[tuple[int, float, bool]]:
        """Oldest entry of the highest bucket, else a backburner entry.

        The boolean flag marks backburner origin.  Returns None when empty.
        """
        self.ops += 1
        if self._bucketed:
            e = self._max_exponent()
            bucket = self._buckets[e]
            eid, key = bucket.popleft()
            if not bucket:
                del self._buckets[e]
            self._bucketed -= 1
            return eid, key, False
        if self._backburner:
            if self.backburner_order == "fifo":
                eid, key = self._backburner.popleft()
            else:
                eid, key = self._backburner.pop()
            return eid, key, True
        return None

    def __len__(self) -> int:
        return self._bucketed + len(self._backburner)

    @property
    def backburner_size(self) -> int:
        return len(self._backburner)


def heap_invariant_holds(
    entries: Iterable[tuple[int, float]],
    exact_radius: Mapping[int, float],
    gamma: float,
) -> bool:
    """Check that every queued cell's true out-radius is within gamma of
    the max-key cell's true out-radius.

    ``entries`` is a queue snapshot of (id, key); ``exact_radius`` maps ids
    to brute-forced out-radii (the distance to the farthest member).
    """
    snapshot = list(entries)
    if not snapshot:
        return True
    q, _ = max(snapshot, key=lambda item: (item[1], -item[0]))
    bound = gamma * exact_radius[q] * (1.0 + _SLACK)
    return all(exact_radius[p] <= bound for p, _ in snapshot)
