"""Query-latency scaling benchmark over synthetic databases of growing size."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ranking import normalize_weights, rank_patch, rank_results
from .search import SearchParams, SearchStats, guided_search
from .synth import SynthSpec, batch_records, build_synthetic_database, held_out_slides

log = logging.getLogger(__name__)


@dataclass
class BenchConfig:
    sizes: Sequence[int] = (1000, 5000, 10000, 50000, 100000)
    n_queries: int = 100
    seed: int = 0
    n_classes: int = 5
    mosaics_per_slide: int = 20
    mode: str = "slide"  # "slide" ranks all mosaics; "patch" queries one mosaic
    K: int = 5
    params: SearchParams = field(default_factory=SearchParams)


@dataclass
class BenchRow:
    size: int
    n_keys: int
    n_queries: int
    median_s: float
    p5_s: float
    p95_s: float
    mean_s: float
    max_visits: int


@dataclass
class BenchResult:
    rows: list
    samples: dict
    query_ids: list

    @property
    def median_ratio(self) -> float:
        meds = [r.median_s for r in self.rows]
        return max(meds) / min(meds)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "n_keys", "n_queries", "median_s", "p5_s", "p95_s", "mean_s", "max_visits"])
            for r in self.rows:
                w.writerow([r.size, r.n_keys, r.n_queries, r.median_s, r.p5_s, r.p95_s, r.mean_s, r.max_visits])

    def write_samples_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "query", "latency_s"])
            for size, lat in self.samples.items():
                for q, t in zip(self.query_ids, lat):
                    w.writerow([size, q, t])

    def plot(self, path) -> None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        sizes = [r.size for r in self.rows]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.boxplot([self.samples[s] for s in sizes], showfliers=False)
        ax.set_xticks(range(1, len(sizes) + 1), [f"{s:,}" for s in sizes])
        ax.set_xlabel("database size (mosaics)")
        ax.set_ylabel("query latency (s)")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)


def bench_spec(cfg: BenchConfig) -> SynthSpec:
    per_class = math.ceil(max(cfg.sizes) / (cfg.n_classes * cfg.mosaics_per_slide))
    return SynthSpec(n_classes=cfg.n_classes, slides_per_class=per_class,
                     mosaics_per_slide=cfg.mosaics_per_slide, seed=cfg.seed)


def bench_speed(cfg: BenchConfig = BenchConfig()) -> BenchResult:
    """Build one database per size and time the same query set against each.

    Latency covers guided search plus ranking; encoding is done up front.
    """
    if cfg.mode not in ("slide", "patch"):
        raise ValueError(f"unknown bench mode {cfg.mode!r}")
    if not cfg.sizes or min(cfg.sizes) < 1:
        raise ValueError("sizes must be positive")
    spec = bench_spec(cfg)
    queries = held_out_slides(spec, cfg.n_queries)
    encoded = [[(i, m.texture) for i, m in batch_records(q)] for q in queries]
    if cfg.mode == "patch":
        encoded = [mos[:1] for mos in encoded]

    rows, samples = [], {}
    for size in cfg.sizes:
        db = build_synthetic_database(spec, size)
        weights = normalize_weights(db.diag_counts)
        lat, worst = [], 0
        for mosaics in encoded:
            stats = []
            t0 = time.perf_counter()
            per_mosaic = []
            for index, texture in mosaics:
                st = SearchStats()
                per_mosaic.append(guided_search(index, texture, db, cfg.params, st))
                stats.append(st.counted_visits)
            if cfg.mode == "slide":
                rank_results(per_mosaic, weights, cfg.K)
            else:
                rank_patch(per_mosaic[0], cfg.K)
            lat.append(time.perf_counter() - t0)
            worst = max(worst, max(stats))
        a = np.asarray(lat)
        rows.append(BenchRow(size, len(db.table), len(lat), float(np.median(a)),
                             float(np.percentile(a, 5)), float(np.percentile(a, 95)), float(a.mean()), worst))
        samples[size] = lat
        log.info("size %d: %d keys, median %.4fs, max visits %d", size, len(db.table), rows[-1].median_s, worst)
    return BenchResult(rows, samples, [q.slide_id for q in queries])
