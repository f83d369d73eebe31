"""Deterministic class-structured stand-in for encoder outputs.

Every class gets one archetype latent grid and one archetype texture code.
Each generated mosaic resamples a fraction of the archetype's latent cells
uniformly and flips each texture bit independently.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .encoding import CODEBOOK_SIZE, DEFAULT_FEATURE_DIM, GRID_SIDE, TextureCode, indices_from_latents
from .store import Database, MosaicMeta

_DB_STREAM = 0
_QUERY_STREAM = 1


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 5
    slides_per_class: int = 100
    mosaics_per_slide: int = 20
    patients_per_class: Optional[int] = None  # None: one patient per slide
    latent_noise: float = 0.05
    texture_flip: float = 0.05
    feature_dim: int = DEFAULT_FEATURE_DIM
    site: str = "synthetic"
    seed: int = 0

    def __post_init__(self):
        for name in ("n_classes", "slides_per_class", "mosaics_per_slide"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.patients_per_class is not None and self.patients_per_class < 1:
            raise ValueError("patients_per_class must be >= 1")
        for name in ("latent_noise", "texture_flip"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")

    @property
    def texture_length(self) -> int:
        return self.feature_dim - 1

    @property
    def n_rows(self) -> int:
        return self.n_classes * self.slides_per_class * self.mosaics_per_slide


@dataclass
class SlideBatch:
    slide_id: str
    patient_id: str
    diagnosis: str
    site: str
    latents: np.ndarray   # (n, 64, 64) uint8
    textures: np.ndarray  # (n, L) bool
    coords: np.ndarray    # (n, 2) int


def class_name(c: int) -> str:
    return f"class_{c:02d}"


def archetypes(spec: SynthSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    rng = np.random.default_rng([spec.seed, 0xA5])
    out = []
    for _ in range(spec.n_classes):
        latent = rng.integers(0, CODEBOOK_SIZE, (GRID_SIDE, GRID_SIDE), dtype=np.uint8)
        texture = rng.random(spec.texture_length) < 0.5
        out.append((latent, texture))
    return out


def _perturb(rng, spec: SynthSpec, latent, texture, n: int):
    mask = rng.random((n, GRID_SIDE, GRID_SIDE)) < spec.latent_noise
    fresh = rng.integers(0, CODEBOOK_SIZE, (n, GRID_SIDE, GRID_SIDE), dtype=np.uint8)
    latents = np.where(mask, fresh, latent[None])
    flips = rng.random((n, spec.texture_length)) < spec.texture_flip
    textures = texture[None] ^ flips
    coords = rng.integers(0, 100, (n, 2)) * 1024
    return latents, textures, coords


def _slide(spec, arch, c, s, stream):
    rng = np.random.default_rng([spec.seed, stream, c, s])
    latents, textures, coords = _perturb(rng, spec, *arch[c], spec.mosaics_per_slide)
    name = class_name(c)
    tag = "S" if stream == _DB_STREAM else "Q"
    slide_id = f"{name}-{tag}{s:05d}"
    if stream == _DB_STREAM and spec.patients_per_class is not None:
        patient = f"{name}-P{s % spec.patients_per_class:05d}"
    else:
        patient = f"{slide_id}-P"
    return SlideBatch(slide_id, patient, name, spec.site, latents, textures, coords)


def generate_slides(spec: SynthSpec, limit_slides: Optional[int] = None) -> Iterator[SlideBatch]:
    """Database slides, slide-major within each round of classes."""
    arch = archetypes(spec)
    emitted = 0
    for s in range(spec.slides_per_class):
        for c in range(spec.n_classes):
            if limit_slides is not None and emitted >= limit_slides:
                return
            yield _slide(spec, arch, c, s, _DB_STREAM)
            emitted += 1


def held_out_slides(spec: SynthSpec, n: int) -> list[SlideBatch]:
    """``n`` query slides from a stream disjoint from the database slides."""
    arch = archetypes(spec)
    return [_slide(spec, arch, i % spec.n_classes, i // spec.n_classes, _QUERY_STREAM) for i in range(n)]


def _texture_codes(textures: np.ndarray) -> list[TextureCode]:
    return [TextureCode.from_array(t) for t in textures]


def batch_records(batch: SlideBatch) -> list[tuple[int, MosaicMeta]]:
    idx = indices_from_latents(batch.latents)
    return [
        (int(i), MosaicMeta(tex, batch.slide_id, batch.patient_id, batch.diagnosis, batch.site,
                            int(x), int(y), "synthetic"))
        for i, tex, (x, y) in zip(idx, _texture_codes(batch.textures), batch.coords)
    ]


def batch_rows(batch: SlideBatch) -> Iterator[dict]:
    """Input-format rows (JSON-serialisable) for one slide."""
    for latent, tex, (x, y) in zip(batch.latents, _texture_codes(batch.textures), batch.coords):
        yield {
            "slide_id": batch.slide_id,
            "patient_id": batch.patient_id,
            "diagnosis": batch.diagnosis,
            "site": batch.site,
            "x": int(x),
            "y": int(y),
            "slide_format": "synthetic",
            "latent": latent.tolist(),
            "texture_bits": tex.to_hex(),
        }


def generate(spec: SynthSpec) -> Iterator[dict]:
    """All database rows in the JSON-lines input format."""
    for batch in generate_slides(spec):
        yield from batch_rows(batch)


def write_jsonl(rows, path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def build_synthetic_database(spec: SynthSpec, n_mosaics: Optional[int] = None) -> Database:
    """Database straight from generator arrays, skipping JSON.

    ``n_mosaics`` truncates the stream (whole slides first, then a partial one).
    """
    db = Database(spec.texture_length, params={"synth": spec.__dict__.copy(), "n_mosaics": n_mosaics})
    count = 0
    for batch in generate_slides(spec):
        for index, meta in batch_records(batch):
            if n_mosaics is not None and count >= n_mosaics:
                return db.freeze()
            db.insert_record(index, meta)
            count += 1
    if n_mosaics is not None and count < n_mosaics:
        raise ValueError(f"spec yields only {count} mosaics, {n_mosaics} requested")
    return db.freeze()
