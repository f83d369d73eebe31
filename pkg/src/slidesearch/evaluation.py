"""Leave-one-patient-out evaluation, retrieval metrics and diagnosis matrices."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .ranking import FIXED_SITE_N, RankedResult, normalize_weights, rank_results
from .search import SearchParams, SearchStats, guided_search
from .store import Database, parse_row

log = logging.getLogger(__name__)


@dataclass
class QuerySlide:
    slide_id: str
    patient_id: str
    diagnosis: str
    site: str
    mosaics: list  # [(index, TextureCode)]


def queries_from_rows(rows: Iterable, texture_length: int) -> list[QuerySlide]:
    """Group input rows by slide, keeping first-seen slide order."""
    by_slide: dict[str, QuerySlide] = {}
    for item in rows:
        row = item[1] if isinstance(item, tuple) else item
        index, meta = parse_row(row, texture_length)
        q = by_slide.get(meta.slide_id)
        if q is None:
            q = by_slide[meta.slide_id] = QuerySlide(meta.slide_id, meta.patient_id, meta.diagnosis,
                                                     meta.site, [])
        q.mosaics.append((index, meta.texture))
    return list(by_slide.values())


def _entries(results) -> list:
    return list(results.entries if isinstance(results, RankedResult) else results)


def majority_vote(results, k: int) -> Optional[str]:
    """Most frequent diagnosis in the top ``k``.

    Ties go to the smaller summed distance, then the smaller label.
    """
    top = _entries(results)[:k]
    if not top:
        return None
    counts = Counter(e.diagnosis for e in top)
    dist_sum: dict[str, int] = {}
    for e in top:
        dist_sum[e.diagnosis] = dist_sum.get(e.diagnosis, 0) + e.dist
    return min(counts, key=lambda d: (-counts[d], dist_sum[d], d))


def is_correct(results, truth: str, k: int) -> bool:
    """Majority-vote correctness; a list shorter than ``k`` needs more than ceil(k/2) matches."""
    top = _entries(results)[:k]
    if len(top) < k:
        return sum(e.diagnosis == truth for e in top) > math.ceil(k / 2)
    return majority_vote(top, k) == truth


def _check_lengths(truths, rankings):
    if len(truths) == 0:
        raise ValueError("no queries to score")
    if len(truths) != len(rankings):
        raise ValueError("truths and rankings differ in length")


def mmv_at_k(truths: Sequence[str], rankings: Sequence, k: int) -> float:
    _check_lengths(truths, rankings)
    return sum(is_correct(r, t, k) for t, r in zip(truths, rankings)) / len(truths)


def average_precision(results, truth: str, k: int) -> float:
    rel = [e.diagnosis == truth for e in _entries(results)[:k]]
    m = sum(rel)
    if m == 0:
        return 0.0
    hits, total = 0, 0.0
    for j, r in enumerate(rel, 1):
        hits += r
        if r:
            total += hits / j
    return total / m


def map_at_k(truths: Sequence[str], rankings: Sequence, k: int) -> float:
    _check_lengths(truths, rankings)
    return sum(average_precision(r, t, k) for t, r in zip(truths, rankings)) / len(truths)


NO_PREDICTION = "(none)"


@dataclass
class MatrixPair:
    """Rows are ground truth, columns are predictions / result diagnoses.

    ``confusion`` has one extra trailing column for queries with no vote.
    """

    labels: list
    confusion: np.ndarray
    distance_sum: np.ndarray
    distance: np.ndarray

    def to_csv(self, confusion_path, distance_path) -> None:
        with open(confusion_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["truth"] + self.labels + [NO_PREDICTION])
            for lb, row in zip(self.labels, self.confusion):
                w.writerow([lb] + [int(v) for v in row])
        with open(distance_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["truth"] + self.labels)
            for lb, row in zip(self.labels, self.distance):
                w.writerow([lb] + [repr(float(v)) for v in row])


def build_matrices(truths: Sequence[str], rankings: Sequence, k: int, theta_h: int,
                   n_slides: Optional[int] = None, labels: Optional[Sequence[str]] = None) -> MatrixPair:
    """Confusion and mean Hamming-distance matrices for one site.

    Every top-``k`` result adds its distance to its own diagnosis column and
    ``theta_h + 1`` to every other column of the query's truth row; the sums
    are divided by ``n_slides`` (defaults to the number of queries).
    """
    if labels is None:
        found = set(truths)
        for r in rankings:
            found.update(e.diagnosis for e in _entries(r)[:k])
        labels = sorted(found)
    labels = list(labels)
    col = {d: i for i, d in enumerate(labels)}
    n = len(labels)
    confusion = np.zeros((n, n + 1), dtype=np.int64)
    dsum = np.zeros((n, n), dtype=np.float64)
    far = theta_h + 1
    for truth, r in zip(truths, rankings):
        vote = majority_vote(r, k)
        confusion[col[truth], n if vote is None else col[vote]] += 1
        for e in _entries(r)[:k]:
            row = dsum[col[truth]]
            row += far
            row[col[e.diagnosis]] += e.dist - far
    divisor = n_slides if n_slides is not None else len(truths)
    return MatrixPair(labels, confusion, dsum, dsum / divisor if divisor else dsum.copy())


@dataclass
class QueryRow:
    slide_id: str
    diagnosis: str
    site: str
    retrieved: list
    retrieved_diagnoses: list
    distances: list
    vote: Optional[str]
    correct: bool
    latency_s: float
    max_visits: int


@dataclass
class EvalReport:
    k: int
    per_diagnosis: dict
    per_site: dict
    overall: dict
    queries: list
    latencies: list
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "per_diagnosis": self.per_diagnosis,
            "per_site": self.per_site,
            "overall": self.overall,
            "queries": [asdict(q) for q in self.queries],
            "latencies": self.latencies,
            "skipped": self.skipped,
        }

    def write(self, json_path) -> None:
        """JSON report plus ``*_queries.csv`` and ``*_metrics.csv`` next to it."""
        p = Path(json_path)
        p.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        stem = p.with_suffix("")
        with open(f"{stem}_queries.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slide_id", "diagnosis", "site", "vote", "correct", "latency_s", "retrieved", "distances"])
            for q in self.queries:
                w.writerow([q.slide_id, q.diagnosis, q.site, q.vote or "", int(q.correct), q.latency_s,
                            " ".join(q.retrieved), " ".join(map(str, q.distances))])
        with open(f"{stem}_metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site", "diagnosis", "n", f"mMV@{self.k}", f"mAP@{self.k}"])
            for (site, diag), m in sorted((tuple(key.split("/", 1)), v) for key, v in self.per_diagnosis.items()):
                w.writerow([site, diag, m["n"], m["mmv"], m["map"]])


def search_slide(view, mosaics, params: SearchParams, weights, K: int, nearest_first_ties: bool = False):
    """Guided search for every mosaic of a query slide, then rank."""
    per_mosaic, worst = [], 0
    for index, texture in mosaics:
        stats = SearchStats()
        per_mosaic.append(guided_search(index, texture, view, params, stats))
        worst = max(worst, stats.counted_visits)
    return rank_results(per_mosaic, weights, K, nearest_first_ties), worst


def loo_evaluate(db: Database, queries: Sequence[QuerySlide], params: SearchParams = SearchParams(),
                 k: int = 5, N: float = FIXED_SITE_N, strict: bool = True,
                 nearest_first_ties: bool = False) -> EvalReport:
    """Query every slide against the database with its own patient masked out."""
    weights = normalize_weights(db.diag_counts, N)
    rows, skipped = [], []
    for q in queries:
        if q.slide_id not in db.slides:
            if strict:
                raise KeyError(f"query slide {q.slide_id} not in database")
            log.warning("query slide %s not in database, skipped", q.slide_id)
            skipped.append(q.slide_id)
            continue
        view = db.masked_view(q.patient_id)
        t0 = time.perf_counter()
        ranked, worst = search_slide(view, q.mosaics, params, weights, k, nearest_first_ties)
        dt = time.perf_counter() - t0
        rows.append(QueryRow(q.slide_id, q.diagnosis, q.site, ranked.slide_ids, ranked.diagnoses,
                             [e.dist for e in ranked], majority_vote(ranked, k),
                             is_correct(ranked, q.diagnosis, k), dt, worst))
    return summarize_rows(rows, k, skipped)


@dataclass
class _Entry:
    diagnosis: str
    dist: int


def _row_entries(row: QueryRow) -> list:
    return [_Entry(d, dist) for d, dist in zip(row.retrieved_diagnoses, row.distances)]


def summarize_rows(rows: Sequence[QueryRow], k: int, skipped=()) -> EvalReport:
    per_diag: dict[str, dict] = {}
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r.site, r.diagnosis), []).append(r)
    for (site, diag), rs in sorted(groups.items()):
        truths = [r.diagnosis for r in rs]
        ranks = [_row_entries(r) for r in rs]
        per_diag[f"{site}/{diag}"] = {
            "n": len(rs), "mmv": mmv_at_k(truths, ranks, k), "map": map_at_k(truths, ranks, k)}
    per_site: dict[str, dict] = {}
    for key, m in per_diag.items():
        site = key.split("/", 1)[0]
        per_site.setdefault(site, {"mmv": [], "map": []})
        per_site[site]["mmv"].append(m["mmv"])
        per_site[site]["map"].append(m["map"])
    per_site = {s: {"macro_mmv": float(np.mean(v["mmv"])), "macro_map": float(np.mean(v["map"]))}
                for s, v in per_site.items()}
    overall = {
        "n_queries": len(rows),
        "macro_mmv": float(np.mean([m["mmv"] for m in per_diag.values()])) if per_diag else 0.0,
        "macro_map": float(np.mean([m["map"] for m in per_diag.values()])) if per_diag else 0.0,
        "mmv": (sum(r.correct for r in rows) / len(rows)) if rows else 0.0,
        "map": map_at_k([r.diagnosis for r in rows], [_row_entries(r) for r in rows], k) if rows else 0.0,
        "median_latency_s": float(np.median([r.latency_s for r in rows])) if rows else 0.0,
    }
    return EvalReport(k, per_diag, per_site, overall, list(rows), [r.latency_s for r in rows], list(skipped))


def site_matrices(report: EvalReport, theta_h: int) -> dict[str, MatrixPair]:
    """One :class:`MatrixPair` per site from a finished report."""
    out = {}
    by_site: dict[str, list] = {}
    for r in report.queries:
        by_site.setdefault(r.site, []).append(r)
    for site, rs in sorted(by_site.items()):
        out[site] = build_matrices([r.diagnosis for r in rs], [_row_entries(r) for r in rs],
                                   report.k, theta_h)
    return out
