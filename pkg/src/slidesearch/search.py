"""Guided search: bounded successor/predecessor walks from shifted anchors.

The query index is shifted by multiples of ``C`` (which moves only the
coarsest pooled sum) and each anchor starts a walk through neighbouring
keys of the tree. Keys are admitted only when their best texture match is
within ``theta_h``, and a shared visited set stops walks that run into keys
already claimed by earlier walks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .encoding import TextureCode, to_words
from .store import MosaicMeta


@dataclass(frozen=True)
class SearchParams:
    C: int = 50 * 10**11
    T: int = 10
    theta_h: int = 128
    k_succ: int = 375
    k_pred: int = 375

    def __post_init__(self):
        for name in ("C", "T", "theta_h", "k_succ", "k_pred"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def visit_bound(self) -> int:
        """Most counted key visits one query mosaic can cost."""
        return (2 * self.T + 1) * max(self.k_succ, self.k_pred)


class SearchHit(NamedTuple):
    dist: int
    meta: MosaicMeta
    key: int


@dataclass
class SearchStats:
    counted_visits: int = 0
    masked_skips: int = 0
    walks: int = 0


def anchors(query_index: int, params: SearchParams, universe_size: int) -> tuple[list[int], list[int]]:
    """Forward anchors ``m, m+C, ..., m+T*C`` and backward ``m-C, ..., m-T*C``.

    Anchors outside the universe are dropped.
    """
    fwd = [query_index + t * params.C for t in range(params.T + 1)]
    bwd = [query_index - t * params.C for t in range(1, params.T + 1)]
    keep = lambda a: 0 <= a < universe_size  # noqa: E731
    return [a for a in fwd if keep(a)], [a for a in bwd if keep(a)]


def _walk(anchor_list, step, budget, qbits, view, theta_h, visited, stats):
    hits = []
    best_match, member = view.best_match, view.member
    qwords = to_words(qbits, view.texture_length)
    for a in anchor_list:
        if stats is not None:
            stats.walks += 1
        cnt = 0
        # the anchor itself is probed first so exact index matches are reachable
        cur = a if member(a) else step(a)
        while cur is not None and cur not in visited:
            match = best_match(cur, qbits, qwords)
            if match is None:
                # every mosaic under this key is masked: free skip
                if stats is not None:
                    stats.masked_skips += 1
                cur = step(cur)
                continue
            dist, meta = match
            if dist < theta_h:
                visited.add(cur)
                hits.append(SearchHit(dist, meta, cur))
            cnt += 1
            if stats is not None:
                stats.counted_visits += 1
            if cnt >= budget:
                break
            cur = step(cur)
    return hits


def _query_bits(texture, view) -> int:
    if isinstance(texture, TextureCode):
        if texture.length != view.texture_length:
            raise ValueError(f"query texture length {texture.length} != database {view.texture_length}")
        return texture.bits
    return int(texture)


def forward_search(anchor_list, query_texture, view, params: SearchParams,
                   visited: Optional[set] = None, stats: Optional[SearchStats] = None):
    """Successor walks from each anchor; returns ``(hits, visited)``."""
    visited = set() if visited is None else visited
    hits = _walk(anchor_list, view.successor, params.k_succ, _query_bits(query_texture, view),
                 view, params.theta_h, visited, stats)
    return hits, visited


def backward_search(anchor_list, query_texture, view, params: SearchParams,
                    visited: set, stats: Optional[SearchStats] = None) -> list[SearchHit]:
    """Predecessor walks; keys claimed by the forward pass end a walk."""
    return _walk(anchor_list, view.predecessor, params.k_pred, _query_bits(query_texture, view),
                 view, params.theta_h, visited, stats)


def guided_search(query_index: int, query_texture, view, params: SearchParams = SearchParams(),
                  stats: Optional[SearchStats] = None) -> list[SearchHit]:
    """All sub-threshold hits for one query mosaic, sorted by Hamming distance."""
    fwd, bwd = anchors(query_index, params, view.universe_size)
    hits, visited = forward_search(fwd, query_texture, view, params, None, stats)
    hits += backward_search(bwd, query_texture, view, params, visited, stats)
    hits.sort(key=lambda h: h.dist)
    return hits
