"""Scrambles: randomly permuted columnar tables with a block layout.

A scramble stores every column in permuted row order, cut into blocks of
``block_size`` rows (the last block may be short).  The catalog keeps range
bounds for numeric columns and dictionaries for categorical ones; each
categorical column also gets block-level presence bitmaps.

The permutation comes from numpy's PCG64 generator seeded with the scramble
seed, so the same seed gives the same file on any platform.
"""

from __future__ import annotations

import csv
import json
import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .bounders import RangeBounds

MAGIC = b"FFS1"
FORMAT_VERSION = 1
DEFAULT_BLOCK_SIZE = 40000
NUMERIC, CATEGORICAL = "numeric", "categorical"
_TYPE_TAG = {NUMERIC: 0, CATEGORICAL: 1}
_TAG_TYPE = {v: k for k, v in _TYPE_TAG.items()}


class IngestionError(ValueError):
    pass


class ScrambleFormatError(ValueError):
    pass


def normalize_schema(schema) -> dict:
    """Accept ``{name: type}`` or ``{"columns": [{"name", "type"}, ...]}``."""
    if isinstance(schema, Mapping) and "columns" in schema and isinstance(schema["columns"], list):
        items = [(c["name"], c["type"]) for c in schema["columns"]]
    elif isinstance(schema, Mapping):
        items = list(schema.items())
    else:
        items = list(schema)
    out = {}
    for name, typ in items:
        t = {"numeric": NUMERIC, "f64": NUMERIC, "float": NUMERIC, "categorical": CATEGORICAL, "cat": CATEGORICAL}.get(
            str(typ).lower()
        )
        if t is None:
            raise IngestionError(f"column {name!r}: unknown type {typ!r}")
        out[str(name)] = t
    if not out:
        raise IngestionError("schema declares no columns")
    return out


def load_schema(path) -> dict:
    with open(path) as fh:
        return normalize_schema(json.load(fh))


@dataclass(frozen=True)
class ColumnInfo:
    name: str
    type: str
    min: Optional[float] = None
    max: Optional[float] = None
    dict_size: Optional[int] = None

    def as_json(self) -> dict:
        if self.type == NUMERIC:
            return {"name": self.name, "type": self.type, "min": self.min, "max": self.max}
        return {"name": self.name, "type": self.type, "dict_size": self.dict_size}


@dataclass(frozen=True)
class Catalog:
    n_rows: int
    block_size: int
    columns: tuple
    seed: int

    def column(self, name: str) -> ColumnInfo:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def range_of(self, name: str) -> RangeBounds:
        c = self.column(name)
        if c.type != NUMERIC:
            raise IngestionError(f"column {name!r} is not numeric")
        return RangeBounds(c.min, c.max)

    def ranges(self) -> dict:
        return {c.name: RangeBounds(c.min, c.max) for c in self.columns if c.type == NUMERIC}

    def to_json(self) -> str:
        doc = {
            "n_rows": self.n_rows,
            "block_size": self.block_size,
            "columns": [c.as_json() for c in self.columns],
            "seed": self.seed,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Catalog":
        doc = json.loads(text)
        cols = tuple(
            ColumnInfo(c["name"], c["type"], c.get("min"), c.get("max"), c.get("dict_size")) for c in doc["columns"]
        )
        return cls(doc["n_rows"], doc["block_size"], cols, doc["seed"])


@dataclass(eq=False)
class Scramble:
    n_rows: int
    block_size: int
    schema: dict
    data: dict
    dictionaries: dict
    bitmaps: dict
    catalog: Catalog
    seed: int
    _fetched: int = field(default=0, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n_blocks(self) -> int:
        return math.ceil(self.n_rows / self.block_size)

    @property
    def blocks_fetched(self) -> int:
        return self._fetched

    def reset_metrics(self) -> None:
        with self._lock:
            self._fetched = 0

    def block_range(self, j: int) -> tuple:
        if not (0 <= j < self.n_blocks):
            raise IndexError(f"block {j} out of range [0, {self.n_blocks})")
        lo = j * self.block_size
        return lo, min(lo + self.block_size, self.n_rows)

    def scan_block(self, j: int) -> dict:
        """Columns of block ``j`` (categoricals as dictionary codes)."""
        lo, hi = self.block_range(j)
        with self._lock:
            self._fetched += 1
        return {name: col[lo:hi] for name, col in self.data.items()}

    def code_of(self, column: str, value) -> Optional[int]:
        d = self.dictionaries[column]
        i = int(np.searchsorted(d, str(value)))
        return i if i < len(d) and d[i] == str(value) else None

    def blocks_with_any(self, column: str, codes) -> np.ndarray:
        """Boolean mask over blocks holding at least one row with any code."""
        if column not in self.bitmaps:
            raise KeyError(f"no bitmaps for column {column!r}")
        bm = self.bitmaps[column]
        codes = list(codes)
        for c in codes:
            if not (0 <= c < bm.shape[0]):
                raise KeyError(f"unknown code {c} for column {column!r}")
        if not codes:
            return np.zeros(bm.shape[1], dtype=bool)
        return bm[codes].any(axis=0)

    def column_values(self, name: str) -> np.ndarray:
        """Full column in scramble order (categoricals decoded)."""
        if self.schema[name] == CATEGORICAL:
            return np.asarray(self.dictionaries[name], dtype=object)[self.data[name]]
        return self.data[name]


def permutation(n: int, seed: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64(seed)).permutation(n)


def _numeric(name, values) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        raise IngestionError(f"column {name!r} mixes numeric and non-numeric values") from None
    if not np.all(np.isfinite(arr)):
        raise IngestionError(f"column {name!r} contains non-finite values")
    return arr


def build_scramble(
    columns: Mapping,
    schema,
    seed: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    widen_factor: float = 0.0,
) -> Scramble:
    schema = normalize_schema(schema)
    if block_size < 1:
        raise IngestionError("block size must be positive")
    if widen_factor < 0:
        raise IngestionError("widen factor must be non-negative")
    missing = [c for c in schema if c not in columns]
    if missing:
        raise IngestionError(f"missing columns {missing}")
    lengths = {len(columns[c]) for c in schema}
    if len(lengths) != 1:
        raise IngestionError("columns have different lengths")
    n = lengths.pop()
    if n == 0:
        raise IngestionError("cannot build a scramble from zero rows")
    seed = int(seed)
    perm = permutation(n, seed)
    n_blocks = math.ceil(n / block_size)
    block_of_row = np.arange(n) // block_size

    data, dictionaries, bitmaps, infos = {}, {}, {}, []
    for name, typ in schema.items():
        if typ == NUMERIC:
            arr = _numeric(name, columns[name])[perm]
            lo, hi = float(arr.min()), float(arr.max())
            span = (hi - lo) if hi > lo else 1.0
            lo, hi = lo - widen_factor * span, hi + widen_factor * span
            data[name] = np.ascontiguousarray(arr)
            infos.append(ColumnInfo(name, NUMERIC, lo, hi))
        else:
            raw = np.asarray([str(v) for v in columns[name]], dtype=object)
            uniq, inv = np.unique(raw.astype(str), return_inverse=True)
            codes = inv.astype(np.uint32)[perm]
            bm = np.zeros((uniq.size, n_blocks), dtype=bool)
            bm[codes, block_of_row] = True
            data[name] = codes
            dictionaries[name] = [str(u) for u in uniq]
            bitmaps[name] = bm
            infos.append(ColumnInfo(name, CATEGORICAL, dict_size=int(uniq.size)))
    catalog = Catalog(n, block_size, tuple(infos), seed)
    return Scramble(n, block_size, schema, data, dictionaries, bitmaps, catalog, seed)


# -- csv ingestion -----------------------------------------------------------


def ingest_csv(path, schema) -> tuple:
    """Read typed columns from a CSV; returns ``(columns, dropped_rows)``."""
    schema = normalize_schema(schema)
    cols = {name: [] for name in schema}
    dropped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return {name: [] for name in schema}, 0
        header = [h.strip() for h in header]
        missing = [c for c in schema if c not in header]
        if missing:
            raise IngestionError(f"CSV lacks columns {missing}")
        idx = {name: header.index(name) for name in schema}
        for row in reader:
            if not row:
                continue
            parsed = {}
            ok = True
            for name, typ in schema.items():
                i = idx[name]
                field_ = row[i].strip() if i < len(row) else ""
                if typ == NUMERIC:
                    try:
                        v = float(field_)
                    except ValueError:
                        ok = False
                        break
                    if not math.isfinite(v):
                        ok = False
                        break
                    parsed[name] = v
                else:
                    if field_ == "":
                        ok = False
                        break
                    parsed[name] = field_
            if not ok:
                dropped += 1
                continue
            for name, v in parsed.items():
                cols[name].append(v)
    return cols, dropped


# -- binary file format ------------------------------------------------------


def to_bytes(s: Scramble) -> bytes:
    out = bytearray()
    names = list(s.schema)
    out += MAGIC
    out += struct.pack("<HQIH", FORMAT_VERSION, s.n_rows, s.block_size, len(names))
    for name in names:
        enc = name.encode("utf-8")
        out += struct.pack("<H", len(enc)) + enc + struct.pack("<B", _TYPE_TAG[s.schema[name]])
    for name in names:
        if s.schema[name] == NUMERIC:
            out += s.data[name].astype("<f8").tobytes()
        else:
            out += s.data[name].astype("<u4").tobytes()
    for name in names:
        if s.schema[name] == CATEGORICAL:
            words = s.dictionaries[name]
            out += struct.pack("<I", len(words))
            for w in words:
                enc = w.encode("utf-8")
                out += struct.pack("<I", len(enc)) + enc
    for name in names:
        if s.schema[name] == CATEGORICAL:
            out += np.packbits(s.bitmaps[name], axis=1, bitorder="little").tobytes()
    cat = s.catalog.to_json().encode("utf-8")
    out += struct.pack("<I", len(cat)) + cat
    return bytes(out)


def save(s: Scramble, path) -> None:
    Path(path).write_bytes(to_bytes(s))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ScrambleFormatError("truncated scramble file")
        b = self.buf[self.pos : self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(buf: bytes) -> Scramble:
    rd = _Reader(buf)
    if rd.take(4) != MAGIC:
        raise ScrambleFormatError("not a scramble file (bad magic)")
    version, n, block_size, ncols = rd.unpack("<HQIH")
    if version != FORMAT_VERSION:
        raise ScrambleFormatError(f"unsupported format version {version}")
    schema = {}
    for _ in range(ncols):
        (ln,) = rd.unpack("<H")
        name = rd.take(ln).decode("utf-8")
        (tag,) = rd.unpack("<B")
        if tag not in _TAG_TYPE:
            raise ScrambleFormatError(f"bad type tag {tag}")
        schema[name] = _TAG_TYPE[tag]
    data = {}
    for name, typ in schema.items():
        dt = "<f8" if typ == NUMERIC else "<u4"
        arr = np.frombuffer(rd.take(8 * n if typ == NUMERIC else 4 * n), dtype=dt)
        data[name] = arr.astype(np.float64 if typ == NUMERIC else np.uint32)
    dictionaries = {}
    for name, typ in schema.items():
        if typ == CATEGORICAL:
            (count,) = rd.unpack("<I")
            words = []
            for _ in range(count):
                (ln,) = rd.unpack("<I")
                words.append(rd.take(ln).decode("utf-8"))
            dictionaries[name] = words
    n_blocks = math.ceil(n / block_size)
    row_bytes = math.ceil(n_blocks / 8)
    bitmaps = {}
    for name, typ in schema.items():
        if typ == CATEGORICAL:
            k = len(dictionaries[name])
            packed = np.frombuffer(rd.take(k * row_bytes), dtype=np.uint8).reshape(k, row_bytes)
            bitmaps[name] = np.unpackbits(packed, axis=1, count=n_blocks, bitorder="little").astype(bool)
    (ln,) = rd.unpack("<I")
    catalog = Catalog.from_json(rd.take(ln).decode("utf-8"))
    return Scramble(n, block_size, schema, data, dictionaries, bitmaps, catalog, catalog.seed)


def load(path) -> Scramble:
    return from_bytes(Path(path).read_bytes())
