"""Mosaic database: vEB key set plus a metadata table keyed by mosaic index.

Several mosaics may share one index; the table keeps every one of them in
insertion order, while the tree stores each key once.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from .encoding import DEFAULT_FEATURE_DIM, TextureCode, index_from_latent, to_words
from .veb import DEFAULT_UNIVERSE, VebTree

log = logging.getLogger(__name__)

FORMAT_MAGIC = "slidesearch-db"
FORMAT_VERSION = 1
HEADER_FILE = "header.json"
KEYS_FILE = "keys.bin"
TABLE_FILE = "table.jsonl"

# lists at least this long are matched with packed numpy words
PACK_THRESHOLD = 8


class DataFormatError(ValueError):
    """Malformed input rows or an unreadable database directory."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class MosaicMeta:
    texture: TextureCode
    slide_id: str
    patient_id: str
    diagnosis: str
    site: str = ""
    x: int = 0
    y: int = 0
    slide_format: str = ""

    def __post_init__(self):
        for name in ("slide_id", "patient_id", "diagnosis"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")


class Database:
    """Frozen-after-build mosaic index.

    Also serves as the unmasked view for search: it exposes ``lookup``,
    ``member``, ``successor`` and ``predecessor``.
    """

    def __init__(self, texture_length: int = DEFAULT_FEATURE_DIM - 1,
                 universe_size: int = DEFAULT_UNIVERSE, params: Optional[dict] = None):
        self.tree = VebTree(universe_size)
        self.table: dict[int, list[MosaicMeta]] = {}
        self.diag_counts: dict[str, int] = {}
        self.slides: dict[str, MosaicMeta] = {}
        self.header = {
            "texture_length": texture_length,
            "universe_size": universe_size,
            "params": dict(params or {}),
        }
        self.frozen = False
        self._packed: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._patient_codes: dict[str, int] = {}

    @property
    def texture_length(self) -> int:
        return self.header["texture_length"]

    @property
    def universe_size(self) -> int:
        return self.header["universe_size"]

    @property
    def n_records(self) -> int:
        return sum(len(v) for v in self.table.values())

    def insert_record(self, index: int, meta: MosaicMeta) -> None:
        if self.frozen:
            raise RuntimeError("database is frozen")
        if meta.texture.length != self.texture_length:
            raise ValueError(
                f"texture length {meta.texture.length} != database texture length {self.texture_length}")
        self.tree.insert(index)
        self.table.setdefault(index, []).append(meta)
        if meta.slide_id not in self.slides:
            # first mosaic of a slide: slide-level diagnosis count
            self.slides[meta.slide_id] = meta
            self.diag_counts[meta.diagnosis] = self.diag_counts.get(meta.diagnosis, 0) + 1

    def freeze(self) -> "Database":
        """Stop accepting records and pack long metadata lists."""
        self.frozen = True
        self._packed.clear()
        self._patient_codes.clear()
        for key, entries in self.table.items():
            if len(entries) < PACK_THRESHOLD:
                continue
            words = np.stack([to_words(m.texture.bits, self.texture_length) for m in entries])
            codes = np.array([self._patient_codes.setdefault(m.patient_id, len(self._patient_codes))
                              for m in entries], dtype=np.int64)
            self._packed[key] = (words, codes)
        return self

    # --- view protocol -------------------------------------------------
    patient_id: Optional[str] = None

    def lookup(self, key: int) -> list[MosaicMeta]:
        return self.table.get(key, [])

    def member(self, key: int) -> bool:
        return self.tree.member(key)

    def successor(self, key: int) -> Optional[int]:
        return self.tree.successor(key)

    def predecessor(self, key: int) -> Optional[int]:
        return self.tree.predecessor(key)

    def best_match(self, key: int, qbits: int, qwords: np.ndarray):
        return _best_match(self, key, None, qbits, qwords)

    def masked_view(self, patient_id: Optional[str]) -> "DatabaseView":
        return DatabaseView(self, patient_id)

    def digest(self) -> str:
        """Content hash over keys, metadata and counts."""
        h = hashlib.sha256()
        for key in sorted(self.table):
            h.update(str(key).encode())
            for m in self.table[key]:
                h.update(repr(_meta_to_list(m)).encode())
        h.update(repr(sorted(self.diag_counts.items())).encode())
        h.update(repr(list(self.tree)).encode())
        return h.hexdigest()


class DatabaseView:
    """Read-only view hiding every mosaic of one patient.

    A key whose entries are all hidden still exists in the tree but
    ``lookup`` returns an empty list for it.
    """

    def __init__(self, db: Database, patient_id: Optional[str]):
        self.db = db
        self.patient_id = patient_id
        self.texture_length = db.texture_length
        self.universe_size = db.universe_size
        self.diag_counts = db.diag_counts
        tree = db.tree
        self.member = tree.member
        self.successor = tree.successor
        self.predecessor = tree.predecessor

    def lookup(self, key: int) -> list[MosaicMeta]:
        entries = self.db.table.get(key, [])
        pid = self.patient_id
        if pid is None:
            return entries
        return [m for m in entries if m.patient_id != pid]

    def best_match(self, key: int, qbits: int, qwords: np.ndarray):
        return _best_match(self.db, key, self.patient_id, qbits, qwords)


def _best_match(db: Database, key: int, patient_id: Optional[str], qbits: int, qwords: np.ndarray):
    """``(dist, meta)`` of the closest visible entry under ``key``, or ``None``.

    Ties go to the earliest entry in the list.
    """
    entries = db.table.get(key)
    if not entries:
        return None
    packed = db._packed.get(key)
    if packed is None:
        best_d, best_m = None, None
        for m in entries:
            if m.patient_id == patient_id:
                continue
            d = (qbits ^ m.texture.bits).bit_count()
            if best_d is None or d < best_d:
                best_d, best_m = d, m
        return None if best_m is None else (best_d, best_m)
    words, codes = packed
    dists = np.bitwise_count(words ^ qwords).sum(axis=1)
    if patient_id is not None:
        code = db._patient_codes.get(patient_id)
        if code is not None:
            hidden = codes == code
            if hidden.all():
                return None
            dists = np.where(hidden, np.iinfo(np.int64).max, dists)
    j = int(dists.argmin())
    return int(dists[j]), entries[j]


# --- ingestion ---------------------------------------------------------

def parse_row(row: Mapping, texture_length: int) -> tuple[int, MosaicMeta]:
    """Turn one input row into ``(mosaic_index, meta)``.

    ``latent`` may be a nested list or an array; a precomputed integer
    ``index`` is accepted in its place.
    """
    if not isinstance(row, Mapping):
        raise ValueError("row is not a JSON object")
    missing = [k for k in ("slide_id", "patient_id", "diagnosis", "texture_bits") if k not in row]
    if "latent" not in row and "index" not in row:
        missing.append("latent")
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    if "latent" in row:
        index = index_from_latent(np.asarray(row["latent"]))
    else:
        index = int(row["index"])
    texture = TextureCode.from_hex(str(row["texture_bits"]), texture_length)
    meta = MosaicMeta(
        texture=texture,
        slide_id=str(row["slide_id"]),
        patient_id=str(row["patient_id"]),
        diagnosis=str(row["diagnosis"]),
        site=str(row.get("site", "")),
        x=int(row.get("x", 0)),
        y=int(row.get("y", 0)),
        slide_format=str(row.get("slide_format", "")),
    )
    return index, meta


def read_jsonl(path, strict: bool = True) -> Iterator[tuple[int, object]]:
    """Yield ``(line_number, parsed_object)``; blank lines are skipped.

    Unparsable lines raise :class:`DataFormatError`, or are logged and
    skipped when ``strict`` is false.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                if strict:
                    raise DataFormatError(f"invalid JSON ({exc.msg})", lineno) from None
                log.warning("skipping line %d: invalid JSON (%s)", lineno, exc.msg)
                continue
            yield lineno, obj


def build_database(rows: Iterable, texture_length: int = DEFAULT_FEATURE_DIM - 1,
                   universe_size: int = DEFAULT_UNIVERSE, strict: bool = True,
                   params: Optional[dict] = None) -> Database:
    """Build and freeze a database from input rows.

    ``rows`` yields dicts or ``(line_number, dict)`` pairs (as produced by
    :func:`read_jsonl`). In strict mode the first bad row raises
    :class:`DataFormatError`; otherwise it is logged and skipped.
    """
    db = Database(texture_length, universe_size, params)
    skipped = 0
    for n, item in enumerate(rows, 1):
        lineno, row = item if isinstance(item, tuple) else (n, item)
        try:
            index, meta = parse_row(row, texture_length)
            db.insert_record(index, meta)
        except (ValueError, TypeError, KeyError) as exc:
            if strict:
                raise DataFormatError(str(exc), lineno) from None
            skipped += 1
            log.warning("skipping line %d: %s", lineno, exc)
    if skipped:
        log.warning("skipped %d malformed rows", skipped)
    return db.freeze()


# --- persistence -------------------------------------------------------

def _meta_to_list(m: MosaicMeta) -> list:
    return [m.slide_id, m.patient_id, m.diagnosis, m.site, m.x, m.y, m.slide_format, m.texture.to_hex()]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save(db: Database, path) -> None:
    """Write ``db`` to directory ``path`` (created if needed)."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted(db.table)
    (out / KEYS_FILE).write_bytes(np.asarray(keys, dtype="<u8").tobytes())
    with open(out / TABLE_FILE, "w", encoding="utf-8") as fh:
        for key in keys:
            fh.write(json.dumps({"key": key, "entries": [_meta_to_list(m) for m in db.table[key]]}))
            fh.write("\n")
    header = {
        "magic": FORMAT_MAGIC,
        "format_version": FORMAT_VERSION,
        "key_encoding": "uint64 little-endian, ascending",
        "texture_length": db.texture_length,
        "universe_size": db.universe_size,
        "params": db.header["params"],
        "n_keys": len(keys),
        "n_records": db.n_records,
        "diag_counts": list(db.diag_counts.items()),
        "slide_order": list(db.slides),
        "checksums": {KEYS_FILE: _sha256(out / KEYS_FILE), TABLE_FILE: _sha256(out / TABLE_FILE)},
    }
    (out / HEADER_FILE).write_text(json.dumps(header, indent=2), encoding="utf-8")


def load(path) -> Database:
    """Read a database directory written by :func:`save`; rebuilds the tree."""
    src = Path(path)
    try:
        header = json.loads((src / HEADER_FILE).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataFormatError(f"{src}: no {HEADER_FILE}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{src / HEADER_FILE}: unreadable header ({exc.msg})") from None
    if not isinstance(header, dict) or header.get("magic") != FORMAT_MAGIC:
        raise DataFormatError(f"{src}: bad header magic")
    if header.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"{src}: unsupported format version {header.get('format_version')}")
    for name, digest in header["checksums"].items():
        f = src / name
        if not f.exists():
            raise DataFormatError(f"{src}: missing {name}")
        if _sha256(f) != digest:
            raise DataFormatError(f"{src}: {name} is truncated or corrupted (checksum mismatch)")

    raw = (src / KEYS_FILE).read_bytes()
    if len(raw) != 8 * header["n_keys"]:
        raise DataFormatError(f"{src}: key file has wrong length")
    keys = np.frombuffer(raw, dtype="<u8").tolist()

    length = header["texture_length"]
    db = Database(length, header["universe_size"], header["params"])
    table_keys = []
    with open(src / TABLE_FILE, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            key = rec["key"]
            table_keys.append(key)
            entries = []
            for slide, patient, diag, site, x, y, fmt, tex in rec["entries"]:
                entries.append(MosaicMeta(TextureCode.from_hex(tex, length), slide, patient, diag,
                                          site, x, y, fmt))
            db.table[key] = entries
            db.tree.insert(key)
    if table_keys != keys:
        raise DataFormatError(f"{src}: key file and metadata table disagree")

    by_slide = {}
    for entries in db.table.values():
        for m in entries:
            by_slide.setdefault(m.slide_id, m)
    db.slides = {s: by_slide[s] for s in header["slide_order"]}
    db.diag_counts = {d: c for d, c in header["diag_counts"]}
    return db.freeze()
