"""Slide ranking from per-mosaic hit lists.

Each query mosaic's hit list is summarised by the entropy of its
position- and frequency-weighted diagnosis counts. Outlier mosaics are
cleaned away, mosaics disagreeing with a pseudo-label are filtered, and the
surviving mosaics contribute slides in order of increasing uncertainty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .search import SearchHit

TOP_M = 5          # distances averaged per mosaic when cleaning
MIN_UNIQUE_LENGTHS = 3
TOP_C = 5          # mosaics consulted for the pseudo-label
LOW_Q, HIGH_Q = 0.05, 0.95
FIXED_SITE_N = 10
ANATOMIC_SITE_N = 30


@dataclass(frozen=True)
class WeightTable:
    weights: dict
    N: float

    def __getitem__(self, diagnosis: str) -> float:
        return self.weights[diagnosis]


@dataclass(frozen=True)
class MosaicResultSummary:
    mosaic_pos: int
    entropy: float
    dists: tuple
    result_len: int


@dataclass(frozen=True)
class RankedEntry:
    slide_id: str
    diagnosis: str
    dist: int
    mosaic_pos: int
    entropy: float
    meta: object = field(default=None, compare=False, repr=False)


@dataclass
class RankedResult:
    entries: list

    @property
    def slide_ids(self) -> list[str]:
        return [e.slide_id for e in self.entries]

    @property
    def diagnoses(self) -> list[str]:
        return [e.diagnosis for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def normalize_weights(diag_counts: Mapping[str, int], N: float = FIXED_SITE_N) -> WeightTable:
    """Reciprocal diagnosis counts rescaled to sum to ``N``."""
    if not diag_counts:
        raise ValueError("diag_counts is empty")
    if any(c < 1 for c in diag_counts.values()):
        raise ValueError("diagnosis counts must be >= 1")
    total = sum(1.0 / c for c in diag_counts.values())
    return WeightTable({d: (1.0 / c) / total * N for d, c in diag_counts.items()}, N)


def entropy(counts) -> float:
    """Shannon entropy (nats) of counts normalised to probabilities."""
    values = [c for c in counts if c > 0]
    total = sum(values)
    h = 0.0
    for c in values:
        p = c / total
        h -= p * math.log(p)
    return h if h > 0 else 0.0


def weighted_uncertainty(hits: Sequence[SearchHit], weights) -> tuple[float, dict, list]:
    """Entropy of weighted diagnosis counts for one mosaic's hit list.

    The hit at 1-based position ``p`` adds ``weight[diagnosis] / p``; counts
    below 1 are raised to 1 afterwards.
    """
    label_cnt: dict[str, float] = {}
    dists = []
    for pos, hit in enumerate(hits, 1):
        d = hit.meta.diagnosis
        label_cnt[d] = label_cnt.get(d, 0.0) + weights[d] * (1.0 / pos)
        dists.append(hit.dist)
    for lb, cnt in label_cnt.items():
        if cnt < 1:
            label_cnt[lb] = 1.0
    return entropy(label_cnt.values()), label_cnt, dists


def nearest_rank_quantile(values: Sequence[float], q: float):
    """Smallest value whose empirical CDF reaches ``q``."""
    s = sorted(values)
    if not s:
        raise ValueError("quantile of empty sequence")
    return s[max(0, math.ceil(q * len(s)) - 1)]


def _top_mean(dists) -> float:
    top = list(dists[:TOP_M])
    return sum(top) / len(top)


def clean_results(summaries: Sequence[MosaicResultSummary]) -> tuple[list, Optional[float]]:
    """Drop length outliers and weak mosaics; returns ``(survivors, theta_h_prime)``.

    Survivors are sorted by entropy (stable). ``theta_h_prime`` is ``None``
    when nothing survives the length filter.
    """
    lengths = [s.result_len for s in summaries]
    kept = list(summaries)
    if len(set(lengths)) >= MIN_UNIQUE_LENGTHS:
        lo = nearest_rank_quantile(lengths, LOW_Q)
        hi = nearest_rank_quantile(lengths, HIGH_Q)
        kept = [s for s in kept if lo < s.result_len < hi]
    if not kept:
        return [], None
    theta_prime = sum(_top_mean(s.dists) for s in kept) / len(kept)
    kept = [s for s in kept if not _top_mean(s.dists) > theta_prime]
    kept.sort(key=lambda s: s.entropy)
    return kept, theta_prime


def _argmax_label(cnt: Mapping[str, float]) -> str:
    return min(cnt, key=lambda d: (-cnt[d], d))


def filter_by_prediction(survivors: Sequence[MosaicResultSummary],
                         label_tables: Mapping[int, Mapping[str, float]]) -> set:
    """Positions of top mosaics whose own top label disagrees with the pseudo-label."""
    top = list(survivors[:TOP_C])
    if not top:
        return set()
    score: dict[str, float] = {}
    for s in top:
        for d, v in label_tables[s.mosaic_pos].items():
            score[d] = score.get(d, 0.0) + v
    pseudo_labels = sorted(score, key=lambda d: (-score[d], d))
    removed: set = set()
    for plb in pseudo_labels:
        removed = {s.mosaic_pos for s in top if _argmax_label(label_tables[s.mosaic_pos]) != plb}
        if len(removed) != len(top):
            break
    return removed


def summarize(per_mosaic_hits: Sequence[Sequence[SearchHit]], weights):
    summaries, label_tables = [], {}
    for i, hits in enumerate(per_mosaic_hits):
        if not hits:
            continue
        ent, label_cnt, dists = weighted_uncertainty(hits, weights)
        label_tables[i] = label_cnt
        summaries.append(MosaicResultSummary(i, ent, tuple(dists), len(hits)))
    return summaries, label_tables


def rank_results(per_mosaic_hits: Sequence[Sequence[SearchHit]], weights: WeightTable,
                 K: int = 5, nearest_first_ties: bool = False) -> RankedResult:
    """Top-``K`` distinct slides for a multi-mosaic query.

    Slides with equal uncertainty are ordered by decreasing distance unless
    ``nearest_first_ties`` is set.
    """
    summaries, label_tables = summarize(per_mosaic_hits, weights)
    if not summaries:
        return RankedResult([])
    survivors, theta_prime = clean_results(summaries)
    removed = filter_by_prediction(survivors, label_tables)

    out, seen = [], set()
    for s in survivors:
        if s.mosaic_pos in removed:
            continue
        for hit in per_mosaic_hits[s.mosaic_pos]:
            slide = hit.meta.slide_id
            if slide in seen:
                continue
            if s.entropy == 0 or hit.dist <= theta_prime:
                out.append(RankedEntry(slide, hit.meta.diagnosis, hit.dist, s.mosaic_pos, s.entropy, hit.meta))
                seen.add(slide)
    sign = 1 if nearest_first_ties else -1
    out.sort(key=lambda e: (e.entropy, sign * e.dist))
    return RankedResult(out[:K])


def rank_patch(hits: Sequence[SearchHit], K: int = 5) -> list[SearchHit]:
    """Single-mosaic query: hits by distance, no ranking stage."""
    return sorted(hits, key=lambda h: h.dist)[:K]
