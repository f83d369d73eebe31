"""Acceptance criteria, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py``; the terminal summary lists one
PASS/FAIL line per criterion. The latency and retrieval workloads take a
few minutes on one core.
"""
import json
import random
import time

import numpy as np
import pytest

from oracles import SortedSetOracle, fraction_index, reference_rank
from slidesearch import store
from slidesearch.bench import BenchConfig, bench_speed
from slidesearch.encoding import MAX_INDEX, TextureCode, hamming, index_from_latent, indices_from_latents
from slidesearch.evaluation import (
    QuerySlide, average_precision, build_matrices, is_correct, loo_evaluate, map_at_k, mmv_at_k, search_slide,
)
from slidesearch.ranking import FIXED_SITE_N, RankedEntry, RankedResult, normalize_weights
from slidesearch.search import SearchParams
from slidesearch.synth import SynthSpec, batch_records, build_synthetic_database, generate_slides, held_out_slides
from slidesearch.veb import VebTree

from test_ranking import random_instance, run_impl

U = 1 << 50


def detail(record_property, text):
    record_property("detail", text)


@pytest.mark.criterion("vEB oracle equivalence (>=1e5 ops, 0 mismatches, <30 s)")
def test_veb_oracle(record_property):
    rng = random.Random(2024)
    pool = [rng.randrange(U) for _ in range(20_000)] + [0, U - 1]
    t, ref = VebTree(U), SortedSetOracle()
    ops = ("insert", "insert", "delete", "member", "successor", "predecessor")
    n_ops, mismatches = 120_000, 0
    t0 = time.perf_counter()
    for _ in range(n_ops):
        op = rng.choice(ops)
        key = rng.choice(pool) if rng.random() < 0.8 else rng.randrange(U)
        if getattr(t, op)(key) != getattr(ref, op)(key):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    mismatches += list(t) != ref.keys
    detail(record_property, f"{n_ops} ops, {mismatches} mismatches, {elapsed:.1f}s, {len(ref.keys)} keys")
    assert mismatches == 0
    assert elapsed < 30


@pytest.mark.criterion("index bound (1e4 grids < 2^50; all-127 = 812832512130048)")
def test_index_bound(record_property):
    rng = np.random.default_rng(8)
    grids = rng.integers(0, 128, (10_000, 64, 64), dtype=np.uint8)
    idx = indices_from_latents(grids)
    violations = int(np.sum(idx >= U))
    # each pooling level keeps the total divided by 4, so truncated sums are S//4, S//16, S//64
    totals = grids.reshape(len(grids), -1).sum(axis=1, dtype=np.int64)
    expect = totals // 4 + (totals // 16) * 10**6 + (totals // 64) * 10**11
    oracle_mismatch = int(np.sum(expect != idx))
    for g, v in zip(grids[:100], idx[:100]):
        oracle_mismatch += fraction_index(g.tolist())[0] != int(v)
    full = index_from_latent(np.full((64, 64), 127))
    detail(record_property, f"{violations} violations, {oracle_mismatch} oracle mismatches, all-127 -> {full}")
    assert violations == 0 and oracle_mismatch == 0
    assert full == 812832512130048 == MAX_INDEX


@pytest.fixture(scope="module")
def latency_suite():
    cfg = BenchConfig(sizes=(1000, 5000, 10000, 50000, 100000), n_queries=100, seed=0)
    return cfg, bench_speed(cfg)


@pytest.mark.slow
@pytest.mark.criterion("constant query time (median ratio 100k/1k <= 2.0)")
def test_constant_query_time(latency_suite, record_property):
    _, res = latency_suite
    ratio = res.median_ratio
    meds = ", ".join(f"{r.size}:{r.median_s * 1e3:.1f}ms" for r in res.rows)
    detail(record_property, f"ratio {ratio:.2f}; medians {meds}")
    assert all(r.n_queries == 100 for r in res.rows)
    assert ratio <= 2.0, f"median latency ratio {ratio:.2f} ({meds})"


@pytest.mark.slow
@pytest.mark.criterion("bounded work (counted visits <= 7875 per query mosaic)")
def test_bounded_work(latency_suite, record_property):
    cfg, res = latency_suite
    worst = max(r.max_visits for r in res.rows)
    bound = cfg.params.visit_bound
    detail(record_property, f"max {worst} of bound {bound}")
    assert bound == 21 * 375 == 7875
    assert worst <= bound


@pytest.mark.criterion("ranking oracle (1000 random instances identical)")
def test_ranking_oracle(record_property):
    rng = random.Random(77)
    diffs = 0
    for _ in range(1000):
        R, counts, N, K = random_instance(rng)
        assert len(R) <= 6 and all(len(r) <= 20 for r in R) and len(counts) <= 4
        diffs += run_impl(R, counts, N, K) != reference_rank(R, counts, N, K)
    detail(record_property, f"{diffs} differing instances")
    assert diffs == 0


def _R(*pairs):
    return RankedResult([RankedEntry(f"s{i}", d, dist, 0, 0.0) for i, (d, dist) in enumerate(pairs)])


@pytest.mark.criterion("metric fixtures (mAP@3 = 0.8333, short-list rule, matrices)")
def test_metric_fixtures(record_property):
    ap = average_precision(_R(("A", 0), ("B", 0), ("A", 0)), "A", 3)
    assert abs(ap - 0.8333333333333334) <= 1e-9
    assert abs(map_at_k(["A"], [_R(("A", 0), ("B", 0), ("A", 0))], 3) - 5 / 6) <= 1e-9
    assert not is_correct(_R(("A", 1), ("A", 1), ("A", 1)), "A", 5)
    assert mmv_at_k(["A"], [_R(("A", 1), ("A", 1), ("A", 1))], 5) == 0.0
    m = build_matrices(["A"], [_R(("A", 10))], 5, 128, n_slides=1, labels=["A", "B"])
    assert m.distance_sum.tolist() == [[10, 129], [0, 0]]
    m = build_matrices(["A", "A", "B", "B"],
                       [_R(("A", 10), ("A", 20), ("B", 30)), _R(("B", 5), ("B", 7)), _R(),
                        _R(("A", 40), ("B", 50), ("B", 60))], 3, 128, n_slides=4)
    assert m.confusion.tolist() == [[1, 1, 0], [0, 1, 1]]
    assert m.distance.tolist() == [[104.25, 75.0], [74.5, 59.75]]
    detail(record_property, f"AP={ap:.10f}")


@pytest.mark.slow
@pytest.mark.criterion("synthetic retrieval quality (LOPO mMV@5 and mAP@5 >= 0.95)")
def test_synthetic_retrieval(record_property):
    spec = SynthSpec(n_classes=5, slides_per_class=100, mosaics_per_slide=20)
    db = build_synthetic_database(spec)
    queries = []
    for b in generate_slides(spec):
        queries.append(QuerySlide(b.slide_id, b.patient_id, b.diagnosis, b.site,
                                  [(i, m.texture) for i, m in batch_records(b)]))
    rep = loo_evaluate(db, queries, SearchParams(), k=5)
    o = rep.overall
    detail(record_property, f"{o['n_queries']} queries, mMV@5={o['mmv']:.4f}, mAP@5={o['map']:.4f}")
    assert o["n_queries"] == 500
    assert o["mmv"] >= 0.95 and o["map"] >= 0.95


def _replay(db, queries, params, weights):
    out = []
    for q in queries:
        ranked, _ = search_slide(db.masked_view(None), q, params, weights, 5)
        out.append([[e.slide_id, e.diagnosis, e.dist, e.mosaic_pos, repr(e.entropy)] for e in ranked])
    return json.dumps(out).encode()


@pytest.mark.slow
@pytest.mark.criterion("persistence (save -> load -> 100 replayed queries byte-identical)")
def test_persistence_replay(tmp_path, record_property):
    spec = SynthSpec(n_classes=5, slides_per_class=20, mosaics_per_slide=20)
    db = build_synthetic_database(spec)
    queries = [[(i, m.texture) for i, m in batch_records(b)] for b in held_out_slides(spec, 100)]
    params = SearchParams()
    before = _replay(db, queries, params, normalize_weights(db.diag_counts, FIXED_SITE_N))
    store.save(db, tmp_path / "db")
    back = store.load(tmp_path / "db")
    after = _replay(back, queries, params, normalize_weights(back.diag_counts, FIXED_SITE_N))
    detail(record_property, f"100 queries, {len(before)} bytes of ranked output")
    assert before == after
    assert back.digest() == db.digest()


@pytest.mark.criterion("Hamming metric (1e4 triples: symmetry, identity, triangle)")
def test_hamming_metric(record_property):
    rng = random.Random(5)
    L = 1023
    bad = 0
    for i in range(10_000):
        a, b = TextureCode(rng.getrandbits(L), L), TextureCode(rng.getrandbits(L), L)
        # every third triple uses a near neighbour so small distances are exercised
        c = TextureCode(a.bits ^ (1 << rng.randrange(L)), L) if i % 3 == 0 else TextureCode(rng.getrandbits(L), L)
        bad += hamming(a, b) != hamming(b, a)
        bad += hamming(a, a) != 0 or (hamming(a, b) == 0) != (a == b)
        bad += hamming(a, c) > hamming(a, b) + hamming(b, c)
    detail(record_property, f"{bad} violations")
    assert bad == 0
