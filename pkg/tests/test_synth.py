import json

import numpy as np
import pytest

from slidesearch.synth import (
    SynthSpec, archetypes, batch_records, build_synthetic_database, generate, generate_slides, held_out_slides,
    write_jsonl,
)


def test_zero_noise_gives_identical_codes():
    spec = SynthSpec(n_classes=2, slides_per_class=4, mosaics_per_slide=3, latent_noise=0, texture_flip=0)
    by_class = {}
    for b in generate_slides(spec):
        for idx, m in batch_records(b):
            by_class.setdefault(b.diagnosis, set()).add((idx, m.texture.bits))
    assert all(len(v) == 1 for v in by_class.values())
    assert len(by_class) == 2


def test_same_seed_same_stream(tmp_path):
    spec = SynthSpec(n_classes=2, slides_per_class=3, mosaics_per_slide=2)
    write_jsonl(generate(spec), tmp_path / "a.jsonl")
    write_jsonl(generate(spec), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    other = SynthSpec(n_classes=2, slides_per_class=3, mosaics_per_slide=2, seed=1)
    write_jsonl(generate(other), tmp_path / "c.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()


def test_row_count_and_format():
    spec = SynthSpec(n_classes=3, slides_per_class=2, mosaics_per_slide=4)
    rows = list(generate(spec))
    assert len(rows) == spec.n_rows == 24
    r = json.loads(json.dumps(rows[0]))
    assert np.array(r["latent"]).shape == (64, 64)
    assert len({(x["slide_id"], x["patient_id"]) for x in rows}) == 6


def test_patients_grouping():
    spec = SynthSpec(n_classes=1, slides_per_class=6, mosaics_per_slide=1, patients_per_class=2)
    pats = [b.patient_id for b in generate_slides(spec)]
    assert len(set(pats)) == 2


def test_distance_separation():
    spec = SynthSpec()
    L = spec.texture_length
    rng = np.random.default_rng(9)
    arch = archetypes(spec)
    within, between = [], []
    flips = lambda: rng.random(L) < spec.texture_flip  # noqa: E731
    for _ in range(10_000):
        c, d = rng.choice(spec.n_classes, 2, replace=False)
        t = arch[c][1]
        within.append(int(np.sum((t ^ flips()) != (t ^ flips()))))
        between.append(int(np.sum((t ^ flips()) != (arch[d][1] ^ flips()))))
    w, b = np.array(within), np.array(between)
    p = 2 * spec.texture_flip * (1 - spec.texture_flip)
    assert w.mean() == pytest.approx(p * L, rel=0.02)  # ~97
    assert w.mean() + 3 * w.std() < 128 < b.mean() - 3 * b.std()
    assert b.mean() == pytest.approx(L / 2, rel=0.05)


def test_generated_pairs_match_construction():
    # sampled from actual generated slides rather than the model
    spec = SynthSpec(n_classes=5, slides_per_class=4, mosaics_per_slide=20)
    recs = [(b.diagnosis, m.texture.bits) for b in generate_slides(spec) for _, m in batch_records(b)]
    rng = np.random.default_rng(0)
    w, b = [], []
    for _ in range(4000):
        i, j = rng.choice(len(recs), 2, replace=False)
        d = (recs[i][1] ^ recs[j][1]).bit_count()
        (w if recs[i][0] == recs[j][0] else b).append(d)
    assert max(np.mean(w) + 3 * np.std(w), 0) < 128 < np.mean(b) - 3 * np.std(b)


def test_held_out_disjoint():
    spec = SynthSpec(n_classes=2, slides_per_class=3, mosaics_per_slide=2)
    db_ids = {b.slide_id for b in generate_slides(spec)}
    q = held_out_slides(spec, 4)
    assert not db_ids & {b.slide_id for b in q}
    assert [b.diagnosis for b in q] == ["class_00", "class_01", "class_00", "class_01"]


def test_truncated_database():
    spec = SynthSpec(n_classes=2, slides_per_class=3, mosaics_per_slide=4)
    db = build_synthetic_database(spec, 10)
    assert db.n_records == 10
    with pytest.raises(ValueError):
        build_synthetic_database(spec, 1000)


@pytest.mark.parametrize("kw", [dict(n_classes=0), dict(latent_noise=1.5), dict(texture_flip=-0.1),
                                dict(patients_per_class=0), dict(feature_dim=1)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        SynthSpec(**kw)


def test_index_stays_in_universe():
    spec = SynthSpec(n_classes=5, slides_per_class=2, mosaics_per_slide=20)
    keys = [k for b in generate_slides(spec) for k, _ in batch_records(b)]
    assert max(keys) < 1 << 50 and min(keys) >= 0
