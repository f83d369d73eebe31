"""Two-stage K-means mosaic selection over patch records.

Stage one groups patches by appearance features; stage two clusters each
group's coordinates with a cluster count proportional to the group size and
keeps the patch closest to every spatial centroid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning


@dataclass(frozen=True)
class PatchRecord:
    feature: tuple
    x: int
    y: int
    slide_id: str

    @classmethod
    def from_row(cls, row: Mapping) -> "PatchRecord":
        return cls(tuple(float(v) for v in row["feature"]), int(row["x"]), int(row["y"]), str(row["slide_id"]))

    def to_row(self) -> dict:
        return {"slide_id": self.slide_id, "x": self.x, "y": self.y, "feature": list(self.feature)}


def kmeans(points, k: int, seed: Optional[int] = 0) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding, 10 restarts, 300 iterations, tol 1e-4."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ValueError("no points to cluster")
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must lie in [1, {len(X)}]")
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, max_iter=300, tol=1e-4, random_state=seed)
    with warnings.catch_warnings():
        # duplicate points can leave fewer distinct clusters than k
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = km.fit_predict(X)
    return labels, km.cluster_centers_


def _nearest_distinct(coords: np.ndarray, centroids: np.ndarray) -> list[int]:
    # nearest not-yet-taken patch per centroid; ties go to the lowest index
    taken: set[int] = set()
    picks = []
    for c in centroids:
        d = ((coords - c) ** 2).sum(axis=1)
        for j in np.lexsort((np.arange(len(d)), d)):
            if int(j) not in taken:
                taken.add(int(j))
                picks.append(int(j))
                break
    return picks


def select_mosaics(patches: Sequence[PatchRecord], k_feature: int = 9, ratio: float = 0.05,
                   seed: Optional[int] = 0, rounding: str = "floor") -> list[PatchRecord]:
    """Representative subset of one slide's patches, in input order."""
    if not patches:
        raise ValueError("no patches given")
    if len({p.slide_id for p in patches}) > 1:
        raise ValueError("patches span more than one slide")
    feats = np.asarray([p.feature for p in patches], dtype=np.float64)
    coords = np.asarray([(p.x, p.y) for p in patches], dtype=np.float64)
    groups, _ = kmeans(feats, min(k_feature, len(patches)), seed)

    round_fn = math.floor if rounding == "floor" else math.ceil
    selected: list[int] = []
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        n_spatial = round_fn(ratio * len(members))
        if n_spatial < 1:
            selected.extend(members.tolist())
            continue
        _, centroids = kmeans(coords[members], n_spatial, seed)
        selected.extend(int(members[j]) for j in _nearest_distinct(coords[members], centroids))
    return [patches[i] for i in sorted(selected)]
