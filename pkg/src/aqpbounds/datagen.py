"""Seeded synthetic tables for tests, benchmarks and the ``gen`` subcommand.

A generator spec is a JSON-able dict::

    {"rows": 100000, "seed": 7, "columns": [
        {"name": "g", "type": "categorical", "values": ["a", "b"], "weights": [0.9, 0.1]},
        {"name": "x", "type": "numeric", "dist": "normal", "mean": 0, "std": 1,
         "by": "g", "shift": {"b": 5}},
        {"name": "y", "type": "numeric", "dist": "mixture", "low": 0, "high": 1,
         "outlier_frac": 0.001, "outlier_value": 1000}
    ]}

Numeric distributions: ``uniform`` (low, high), ``normal`` (mean, std) and
``mixture`` (uniform body plus a fraction of rows set to ``outlier_value``).
Categorical columns take ``values`` with optional ``weights``, or
``categories`` with an optional Zipf ``skew``.  Columns are generated in the
order given so ``by`` may refer to an earlier categorical column.
"""

from __future__ import annotations

import csv
from typing import Mapping

import numpy as np


class GenSpecError(ValueError):
    pass


def _categorical(col: Mapping, n: int, rng: np.random.Generator) -> np.ndarray:
    if "values" in col:
        values = [str(v) for v in col["values"]]
    elif "categories" in col:
        k = int(col["categories"])
        if k < 1:
            raise GenSpecError("categories must be >= 1")
        values = [f"{col.get('prefix', 'g')}{i:02d}" for i in range(k)]
    else:
        raise GenSpecError(f"categorical column {col.get('name')!r} needs values or categories")
    if "weights" in col:
        w = np.asarray(col["weights"], dtype=float)
    else:
        skew = float(col.get("skew", 0.0))
        w = 1.0 / np.arange(1, len(values) + 1) ** skew
    if w.shape != (len(values),) or np.any(w < 0) or w.sum() <= 0:
        raise GenSpecError(f"bad weights for column {col.get('name')!r}")
    idx = rng.choice(len(values), size=n, p=w / w.sum())
    return np.asarray(values, dtype=object)[idx]


def _numeric(col: Mapping, n: int, rng: np.random.Generator, table: Mapping) -> np.ndarray:
    dist = col.get("dist", "uniform")
    if dist == "uniform":
        x = rng.uniform(float(col.get("low", 0.0)), float(col.get("high", 1.0)), n)
    elif dist == "normal":
        x = rng.normal(float(col.get("mean", 0.0)), float(col.get("std", 1.0)), n)
    elif dist == "mixture":
        x = rng.uniform(float(col.get("low", 0.0)), float(col.get("high", 1.0)), n)
        hit = rng.random(n) < float(col.get("outlier_frac", 0.001))
        x[hit] = float(col.get("outlier_value", 1000.0))
    else:
        raise GenSpecError(f"unknown distribution {dist!r}")
    if "by" in col:
        by = col["by"]
        if by not in table:
            raise GenSpecError(f"column {col.get('name')!r}: 'by' refers to unknown column {by!r}")
        keys = table[by]
        for key, delta in col.get("shift", {}).items():
            x[keys == str(key)] += float(delta)
    if "clip" in col:
        lo, hi = col["clip"]
        x = np.clip(x, lo, hi)
    return x


def generate(spec: Mapping) -> dict:
    """Columns (name -> array) for a generator spec."""
    try:
        n = int(spec["rows"])
        cols = spec["columns"]
    except (KeyError, TypeError, ValueError):
        raise GenSpecError("spec needs 'rows' and 'columns'") from None
    if n < 0:
        raise GenSpecError("rows must be non-negative")
    rng = np.random.Generator(np.random.PCG64(int(spec.get("seed", 0))))
    table = {}
    for col in cols:
        name = col.get("name")
        if not name:
            raise GenSpecError("every column needs a name")
        typ = col.get("type", "numeric")
        if typ == "categorical":
            table[name] = _categorical(col, n, rng)
        elif typ == "numeric":
            table[name] = _numeric(col, n, rng, table)
        else:
            raise GenSpecError(f"unknown column type {typ!r}")
    return table


def schema_of(spec: Mapping) -> dict:
    return {c["name"]: c.get("type", "numeric") for c in spec["columns"]}


def write_csv(columns: Mapping, path) -> None:
    names = list(columns)
    n = len(columns[names[0]]) if names else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        data = [columns[k] for k in names]
        for i in range(n):
            w.writerow([repr(float(c[i])) if isinstance(c[i], (float, np.floating)) else c[i] for c in data])


# -- a flights-like table ----------------------------------------------------

FLIGHTS_SCHEMA = {
    "Origin": "categorical",
    "Airline": "categorical",
    "DepDelay": "numeric",
    "DepTime": "numeric",
    "DayOfWeek": "categorical",
}

ORIGINS = ["ATL", "ORD", "DFW", "DEN", "LAX", "SFO", "PHX", "IAH", "LAS", "MSP",
           "DTW", "SEA", "BOS", "EWR", "SLC", "HNL", "ANC", "BUR", "OGG", "KOA"]
_ORIGIN_W = [14, 12, 10, 9, 8, 7, 6, 6, 5, 5, 4, 4, 3, 3, 2, 0.8, 0.6, 0.5, 0.3, 0.2]
_ORIGIN_SHIFT = [4, 8, 2, 0, 3, 6, 1, 5, 7, 10, 12, 14, -2, 16, 18, -8, -12, -4, -15, -6]

AIRLINES = ["AA", "DL", "UA", "WN", "B6", "AS", "NK", "F9", "HA", "NW"]
_AIRLINE_W = [18, 18, 15, 20, 8, 6, 5, 4, 3, 3]
_AIRLINE_SHIFT = [3, -1, 4, 1, 9, -4, 12, 7, -6, 5]
_LATE_SLOPE = [2.0, 0.5, 1.5, 1.0, 3.0, 0.2, 4.0, 2.5, 0.0, 3.5]

_DAY_SHIFT = [0.0, -3.0, 3.0, 6.0, 9.0, -6.0, 12.0]  # DayOfWeek 1..7


def flights_table(n: int = 1_000_000, seed: int = 0) -> dict:
    """Skewed categorical mix with well-separated group means.

    Per-group means sit several units apart so that HAVING, top-K and
    ordering answers are unambiguous.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    ow = np.asarray(_ORIGIN_W, float)
    aw = np.asarray(_AIRLINE_W, float)
    o = rng.choice(len(ORIGINS), n, p=ow / ow.sum())
    a = rng.choice(len(AIRLINES), n, p=aw / aw.sum())
    d = rng.integers(0, 7, n)
    dep_time = rng.uniform(0.0, 2400.0, n)
    late = dep_time / 2400.0
    noise = rng.normal(0.0, 8.0, n) + rng.exponential(6.0, n) - 6.0
    delay = (
        np.asarray(_ORIGIN_SHIFT, float)[o]
        + np.asarray(_AIRLINE_SHIFT, float)[a]
        + np.asarray(_LATE_SLOPE, float)[a] * late * 4.0
        + np.asarray(_DAY_SHIFT, float)[d]
        + noise
    )
    delay = np.clip(delay, -60.0, 240.0)
    return {
        "Origin": np.asarray(ORIGINS, dtype=object)[o],
        "Airline": np.asarray(AIRLINES, dtype=object)[a],
        "DepDelay": delay,
        "DepTime": dep_time,
        "DayOfWeek": (d + 1).astype(str).astype(object),
    }
