import numpy as np
import pytest

from slidesearch.mosaic import PatchRecord, _nearest_distinct, kmeans, select_mosaics


def patches_from(features, coords, slide="s"):
    return [PatchRecord(tuple(map(float, f)), int(x), int(y), slide) for f, (x, y) in zip(features, coords)]


def test_kmeans_single_point():
    labels, centers = kmeans([[1.0, 2.0]], 1)
    assert labels.tolist() == [0] and centers.tolist() == [[1.0, 2.0]]


def test_kmeans_recovers_blobs():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 0.1, (30, 2))
    b = rng.normal(100, 0.1, (30, 2))
    labels, _ = kmeans(np.vstack([a, b]), 2)
    assert len(set(labels[:30])) == 1 and len(set(labels[30:])) == 1 and labels[0] != labels[30]


def test_kmeans_deterministic_and_rejects():
    pts = np.random.default_rng(1).random((50, 3))
    a, ca = kmeans(pts, 4, seed=3)
    b, cb = kmeans(pts, 4, seed=3)
    assert np.array_equal(a, b) and np.array_equal(ca, cb)
    with pytest.raises(ValueError):
        kmeans(pts, 51)
    with pytest.raises(ValueError):
        kmeans(pts, 0)


def _one_group(n, seed=0):
    rng = np.random.default_rng(seed)
    return patches_from(np.ones((n, 3)), rng.integers(0, 1000, (n, 2)))


def test_group_of_40_gives_two():
    out = select_mosaics(_one_group(40), k_feature=1)
    assert len(out) == 2


def test_group_of_10_keeps_all():
    ps = _one_group(10)
    assert select_mosaics(ps, k_feature=1) == ps


def test_nine_patches_nine_groups():
    ps = patches_from(np.arange(9)[:, None] * 100.0, [(i, i) for i in range(9)])
    assert select_mosaics(ps, k_feature=9) == ps


def test_subset_determinism_and_order():
    rng = np.random.default_rng(2)
    feats = np.vstack([rng.normal(c * 50, 1, (60, 3)) for c in range(3)])
    ps = patches_from(feats, rng.integers(0, 5000, (180, 2)))
    a = select_mosaics(ps, k_feature=3, seed=4)
    b = select_mosaics(ps, k_feature=3, seed=4)
    assert a == b
    assert 0 < len(a) < len(ps)
    pos = [ps.index(p) for p in a]
    assert pos == sorted(pos)
    # three groups of 60 at 5% each give 3 mosaics per group
    assert len(a) == 9


def test_ceil_rounding():
    assert len(select_mosaics(_one_group(30), k_feature=1, rounding="ceil")) == 2
    assert len(select_mosaics(_one_group(30), k_feature=1)) == 1  # floor(1.5)


def test_nearest_distinct_is_injective():
    coords = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    centroids = np.array([[0.1, 0.0], [0.0, 0.1], [0.2, 0.2]])
    picks = _nearest_distinct(coords, centroids)
    assert len(set(picks)) == 3 and picks[0] == 0


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        select_mosaics([])
    with pytest.raises(ValueError):
        select_mosaics([PatchRecord((1.0,), 0, 0, "a"), PatchRecord((1.0,), 0, 0, "b")])


def test_row_round_trip():
    p = PatchRecord((1.0, 2.5), 3, 4, "s")
    assert PatchRecord.from_row(p.to_row()) == p
