"""Anchor/focal open list shared by the low-level and high-level searches."""

from __future__ import annotations

import heapq
from itertools import count
from typing import Any, Callable, Generic, TypeVar

T = TypeVar("T")


class _Entry(Generic[T]):
    __slots__ = ("anchor", "admission", "focal", "seq", "item", "alive", "admitted")

    def __init__(self, anchor, admission, focal, seq: int, item: T):
        self.anchor = anchor
        self.admission = admission
        self.focal = focal
        self.seq = seq
        self.item = item
        self.alive = True
        self.admitted = False


class FocalQueue(Generic[T]):
    """Open list with a lower-bound heap (anchor) and a bounded-suboptimal subset (focal).

    Each item carries three keys. ``anchor`` orders the anchor heap. An item is
    admitted to focal when ``admission <= threshold(min anchor)``. Focal pops by
    ``focal`` key, then insertion order. Removal is lazy; stale heap slots are
    skipped when they surface.
    """

    def __init__(self, threshold: Callable[[Any], Any]):
        self._threshold = threshold
        self._anchor: list[tuple[Any, int, _Entry[T]]] = []
        self._pending: list[tuple[Any, int, _Entry[T]]] = []
        self._focal: list[tuple[Any, int, _Entry[T]]] = []
        self._seq = count()
        self._size = 0
        self.last_min_anchor: Any = None
        self.last_from_anchor = False

    def __len__(self) -> int:
        return self._size

    def __bool__(self) -> bool:
        return self._size > 0

    def push(self, item: T, anchor, admission, focal) -> _Entry[T]:
        entry = _Entry(anchor, admission, focal, next(self._seq), item)
        heapq.heappush(self._anchor, (anchor, entry.seq, entry))
        heapq.heappush(self._pending, (admission, entry.seq, entry))
        self._size += 1
        return entry

    def discard(self, entry: _Entry[T]) -> None:
        if entry.alive:
            entry.alive = False
            self._size -= 1

    def min_anchor(self):
        while self._anchor and not self._anchor[0][2].alive:
            heapq.heappop(self._anchor)
        return self._anchor[0][0] if self._anchor else None

    def pop(self) -> T:
        """Best focal item; the anchor minimum when focal is empty."""
        lower = self.min_anchor()
        if lower is None:
            raise IndexError("pop from an empty FocalQueue")
        limit = self._threshold(lower)
        while self._pending and self._pending[0][0] <= limit:
            _, seq, entry = heapq.heappop(self._pending)
            if entry.alive:
                entry.admitted = True
                heapq.heappush(self._focal, (entry.focal, seq, entry))

        chosen = None
        while self._focal:
            _, seq, entry = heapq.heappop(self._focal)
            if not entry.alive:
                continue
            if entry.admission > limit:
                # threshold dropped since admission
                entry.admitted = False
                heapq.heappush(self._pending, (entry.admission, seq, entry))
                continue
            chosen = entry
            break
        self.last_from_anchor = chosen is None
        if chosen is None:
            chosen = self._anchor[0][2]
        self.last_min_anchor = lower
        self.discard(chosen)
        return chosen.item
