"""Van Emde Boas tree over a power-of-two integer universe.

Clusters are allocated lazily in dicts, so a 2**50 universe costs memory
proportional to the number of stored keys rather than to the universe.
The minimum of each node is kept out of its clusters (the classic layout),
which is what gives successor/predecessor a single recursive call per level.
"""
from __future__ import annotations

import math
from typing import Iterator, Optional

DEFAULT_UNIVERSE = 1 << 50


class _Node:
    __slots__ = ("bits", "lo_bits", "lo_mask", "min", "max", "summary", "clusters")

    def __init__(self, bits: int):
        self.bits = bits
        self.lo_bits = bits // 2
        self.lo_mask = (1 << self.lo_bits) - 1
        self.min: Optional[int] = None
        self.max: Optional[int] = None
        self.summary: Optional[_Node] = None
        self.clusters: dict[int, _Node] = {}


def _member(node: _Node, x: int, depth: int, probe: list) -> bool:
    if depth > probe[0]:
        probe[0] = depth
    if x == node.min or x == node.max:
        return True
    if node.bits == 1:
        return False
    c = node.clusters.get(x >> node.lo_bits)
    if c is None:
        return False
    return _member(c, x & node.lo_mask, depth + 1, probe)


def _successor(node: _Node, x: int, depth: int, probe: list) -> Optional[int]:
    if depth > probe[0]:
        probe[0] = depth
    if node.bits == 1:
        if x == 0 and node.max == 1:
            return 1
        return None
    if node.min is not None and x < node.min:
        return node.min
    lo = node.lo_bits
    h = x >> lo
    c = node.clusters.get(h)
    if c is not None and (x & node.lo_mask) < c.max:
        return (h << lo) | _successor(c, x & node.lo_mask, depth + 1, probe)
    if node.summary is None:
        return None
    nh = _successor(node.summary, h, depth + 1, probe)
    if nh is None:
        return None
    return (nh << lo) | node.clusters[nh].min


def _predecessor(node: _Node, x: int, depth: int, probe: list) -> Optional[int]:
    if depth > probe[0]:
        probe[0] = depth
    if node.bits == 1:
        if x == 1 and node.min == 0:
            return 0
        return None
    if node.max is not None and x > node.max:
        return node.max
    lo = node.lo_bits
    h = x >> lo
    c = node.clusters.get(h)
    if c is not None and (x & node.lo_mask) > c.min:
        return (h << lo) | _predecessor(c, x & node.lo_mask, depth + 1, probe)
    ph = None
    if node.summary is not None:
        ph = _predecessor(node.summary, h, depth + 1, probe)
    if ph is None:
        if node.min is not None and x > node.min:
            return node.min
        return None
    return (ph << lo) | node.clusters[ph].max


def _insert(node: _Node, x: int, depth: int, probe: list) -> None:
    # x must not already be present
    if depth > probe[0]:
        probe[0] = depth
    if node.min is None:
        node.min = node.max = x
        return
    if x < node.min:
        x, node.min = node.min, x
    if node.bits > 1:
        lo = node.lo_bits
        h, l = x >> lo, x & node.lo_mask
        c = node.clusters.get(h)
        if c is None:
            c = node.clusters[h] = _Node(lo)
        if c.min is None:
            if node.summary is None:
                node.summary = _Node(node.bits - lo)
            _insert(node.summary, h, depth + 1, probe)
            c.min = c.max = l
        else:
            _insert(c, l, depth + 1, probe)
    if x > node.max:
        node.max = x


def _delete(node: _Node, x: int, depth: int, probe: list) -> None:
    # x must be present
    if depth > probe[0]:
        probe[0] = depth
    if node.min == node.max:
        node.min = node.max = None
        return
    if node.bits == 1:
        node.min = node.max = 1 if x == 0 else 0
        return
    lo = node.lo_bits
    if x == node.min:
        first = node.summary.min
        x = (first << lo) | node.clusters[first].min
        node.min = x
    h = x >> lo
    c = node.clusters[h]
    _delete(c, x & node.lo_mask, depth + 1, probe)
    if c.min is None:
        del node.clusters[h]
        _delete(node.summary, h, depth + 1, probe)
        if node.summary.min is None:
            node.summary = None
        if x == node.max:
            if node.summary is None:
                node.max = node.min
            else:
                top = node.summary.max
                node.max = (top << lo) | node.clusters[top].max
    elif x == node.max:
        node.max = (h << lo) | c.max


class VebTree:
    """Integer set over ``[0, universe_size)`` with O(log log U) operations.

    ``successor``/``predecessor`` are strict and return ``None`` when no such
    key exists. ``last_depth`` records how many tree levels the most recent
    operation touched.
    """

    def __init__(self, universe_size: int = DEFAULT_UNIVERSE):
        if universe_size < 2 or universe_size & (universe_size - 1):
            raise ValueError(f"universe_size must be a power of two >= 2, got {universe_size}")
        self.universe_size = universe_size
        self.bits = universe_size.bit_length() - 1
        self._root = _Node(self.bits)
        self._size = 0
        self._probe = [0]
        self.last_depth = 0

    @property
    def max_depth(self) -> int:
        """Upper bound on levels any single operation may touch."""
        return math.ceil(math.log2(self.bits)) + 1 if self.bits > 1 else 1

    def _check(self, key: int) -> None:
        if not 0 <= key < self.universe_size:
            raise ValueError(f"key {key} outside universe [0, {self.universe_size})")

    def _start(self) -> list:
        self._probe[0] = 0
        return self._probe

    def _finish(self) -> None:
        self.last_depth = self._probe[0]

    def insert(self, key: int) -> None:
        self._check(key)
        probe = self._start()
        if not _member(self._root, key, 1, probe):
            _insert(self._root, key, 1, probe)
            self._size += 1
        self._finish()

    def delete(self, key: int) -> None:
        self._check(key)
        probe = self._start()
        if _member(self._root, key, 1, probe):
            _delete(self._root, key, 1, probe)
            self._size -= 1
        self._finish()

    def member(self, key: int) -> bool:
        self._check(key)
        out = _member(self._root, key, 1, self._start())
        self._finish()
        return out

    def successor(self, key: int) -> Optional[int]:
        self._check(key)
        out = _successor(self._root, key, 1, self._start())
        self._finish()
        return out

    def predecessor(self, key: int) -> Optional[int]:
        self._check(key)
        out = _predecessor(self._root, key, 1, self._start())
        self._finish()
        return out

    @property
    def min(self) -> Optional[int]:
        return self._root.min

    @property
    def max(self) -> Optional[int]:
        return self._root.max

    def __len__(self) -> int:
        return self._size

    def __contains__(self, key: object) -> bool:
        return isinstance(key, int) and 0 <= key < self.universe_size and self.member(key)

    def __iter__(self) -> Iterator[int]:
        k = self.min
        while k is not None:
            yield k
            k = self.successor(k)

    def __repr__(self) -> str:
        return f"VebTree(universe_size={self.universe_size}, n={self._size})"
