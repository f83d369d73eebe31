"""Mosaic index codec and binary texture codes.

A 64x64 grid of codebook indices is average-pooled three times; the three
pooled sums are packed into disjoint decimal digit ranges of one integer.
Texture features become bit strings by consecutive-difference thresholding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRID_SIDE = 64
CODEBOOK_SIZE = 128
LEVEL2_SCALE = 10**6
LEVEL3_SCALE = 10**11
MAX_SUMS = (130048, 32512, 8128)
MAX_INDEX = MAX_SUMS[0] + MAX_SUMS[1] * LEVEL2_SCALE + MAX_SUMS[2] * LEVEL3_SCALE
DEFAULT_FEATURE_DIM = 1024


def avg_pool_halve(grid: np.ndarray) -> np.ndarray:
    """2x2 mean pooling with stride 2 over the last two axes.

    Leading axes are treated as a batch. Values are not rounded; for integer
    inputs the float64 means are exact (dyadic rationals).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim < 2:
        raise ValueError("expected at least a 2-d grid")
    h, w = grid.shape[-2:]
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise ValueError(f"pooling needs even dimensions >= 2, got {h}x{w}")
    blocks = grid.reshape(*grid.shape[:-2], h // 2, 2, w // 2, 2)
    return blocks.mean(axis=(-3, -1))


def validate_latent(grid) -> np.ndarray:
    arr = np.asarray(grid)
    if arr.shape[-2:] != (GRID_SIDE, GRID_SIDE):
        raise ValueError(f"latent grid must be {GRID_SIDE}x{GRID_SIDE}, got {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= CODEBOOK_SIZE):
        raise ValueError(f"latent values must lie in [0, {CODEBOOK_SIZE - 1}]")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValueError("latent values must be integers")
        arr = arr.astype(np.int64)
    return arr


def pooled_sums(grid) -> tuple[int, int, int]:
    """Truncated sums of the 32x32, 16x16 and 8x8 pooled grids."""
    z = validate_latent(grid)
    sums = []
    for _ in range(3):
        z = avg_pool_halve(z)
        sums.append(int(z.sum()))
    return sums[0], sums[1], sums[2]


def combine_sums(s1: int, s2: int, s3: int) -> int:
    return s1 + s2 * LEVEL2_SCALE + s3 * LEVEL3_SCALE


def split_index(index: int) -> tuple[int, int, int]:
    """Inverse of :func:`combine_sums` for in-range sums."""
    s3, rest = divmod(index, LEVEL3_SCALE)
    s2, s1 = divmod(rest, LEVEL2_SCALE)
    return s1, s2, s3


def index_from_latent(grid) -> int:
    return combine_sums(*pooled_sums(grid))


def indices_from_latents(grids) -> np.ndarray:
    """Vectorised :func:`index_from_latent` over an ``(n, 64, 64)`` batch."""
    z = validate_latent(grids)
    if z.ndim != 3:
        raise ValueError("expected a batch of shape (n, 64, 64)")
    levels = []
    for _ in range(3):
        z = avg_pool_halve(z)
        # non-negative, so floor == truncation toward zero
        levels.append(np.floor(z.sum(axis=(-2, -1))).astype(np.int64))
    return levels[0] + levels[1] * LEVEL2_SCALE + levels[2] * LEVEL3_SCALE


@dataclass(frozen=True)
class TextureCode:
    """Fixed-length bit string; bit 0 is the most significant bit of ``bits``."""

    bits: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("texture code length must be positive")
        if self.bits < 0 or self.bits >> self.length:
            raise ValueError(f"bits do not fit in {self.length} positions")

    @classmethod
    def from_array(cls, bits) -> "TextureCode":
        arr = np.asarray(bits, dtype=np.uint8).ravel()
        if arr.size == 0:
            raise ValueError("empty bit array")
        packed = np.packbits(arr).tobytes()
        pad = (-arr.size) % 8
        return cls(int.from_bytes(packed, "big") >> pad, int(arr.size))

    @classmethod
    def from_hex(cls, text: str, length: int) -> "TextureCode":
        try:
            value = int(text, 16)
        except ValueError:
            raise ValueError(f"texture_bits is not a hex string: {text[:20]!r}") from None
        return cls(value, length)

    @classmethod
    def from_string(cls, text: str) -> "TextureCode":
        return cls(int(text, 2), len(text))

    def to_hex(self) -> str:
        return format(self.bits, f"0{(self.length + 3) // 4}x")

    def to_array(self) -> np.ndarray:
        return np.array([int(c) for c in str(self)], dtype=np.uint8)

    def __str__(self) -> str:
        return format(self.bits, f"0{self.length}b")

    def __len__(self) -> int:
        return self.length


def binarize(features) -> TextureCode:
    """Bit j is set iff ``features[j + 1] > features[j]``."""
    f = np.asarray(features, dtype=np.float64).ravel()
    if f.size < 2:
        raise ValueError("need at least 2 features to binarize")
    return TextureCode.from_array(np.diff(f) > 0)


def to_words(bits: int, length: int) -> np.ndarray:
    """Pack a code into big-endian-ordered uint64 words for vectorised XOR."""
    n_words = (length + 63) // 64
    return np.frombuffer(bits.to_bytes(n_words * 8, "big"), dtype=">u8").astype(np.uint64)


def hamming(a: TextureCode, b: TextureCode) -> int:
    if a.length != b.length:
        raise ValueError(f"code length mismatch: {a.length} vs {b.length}")
    return (a.bits ^ b.bits).bit_count()
