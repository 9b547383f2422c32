import csv

import numpy as np
import pytest

from aqpbounds.datagen import (
    AIRLINES,
    FLIGHTS_SCHEMA,
    ORIGINS,
    GenSpecError,
    flights_table,
    generate,
    schema_of,
    write_csv,
)

SPEC = {
    "rows": 20_000,
    "seed": 7,
    "columns": [
        {"name": "g", "type": "categorical", "values": ["a", "b"], "weights": [0.9, 0.1]},
        {"name": "x", "type": "numeric", "dist": "normal", "mean": 0, "std": 1, "by": "g", "shift": {"b": 5}},
        {"name": "y", "type": "numeric", "dist": "mixture", "low": 0, "high": 1, "outlier_frac": 0.01,
         "outlier_value": 1000},
        {"name": "z", "type": "numeric", "dist": "uniform", "low": -1, "high": 1, "clip": [0, 1]},
        {"name": "h", "type": "categorical", "categories": 20, "skew": 1.2},
    ],
}


def test_seeded_and_shaped():
    a, b = generate(SPEC), generate(SPEC)
    for k in a:
        assert np.array_equal(a[k], b[k])
        assert len(a[k]) == 20_000
    c = generate({**SPEC, "seed": 8})
    assert not np.array_equal(a["x"], c["x"])


def test_distributions():
    t = generate(SPEC)
    share_b = np.mean(t["g"] == "b")
    assert abs(share_b - 0.1) < 0.01
    assert abs(t["x"][t["g"] == "b"].mean() - 5) < 0.1
    assert abs(np.mean(t["y"] == 1000) - 0.01) < 0.003
    assert t["z"].min() >= 0 and t["z"].max() <= 1
    counts = np.unique(t["h"], return_counts=True)[1]
    assert counts.size == 20 and counts.max() > 5 * counts.min()


def test_schema_of():
    assert schema_of(SPEC) == {"g": "categorical", "x": "numeric", "y": "numeric", "z": "numeric", "h": "categorical"}


@pytest.mark.parametrize(
    "spec",
    [
        {"columns": []},
        {"rows": -1, "columns": []},
        {"rows": 5, "columns": [{"type": "numeric"}]},
        {"rows": 5, "columns": [{"name": "x", "dist": "cauchy"}]},
        {"rows": 5, "columns": [{"name": "x", "type": "text"}]},
        {"rows": 5, "columns": [{"name": "g", "type": "categorical"}]},
        {"rows": 5, "columns": [{"name": "g", "type": "categorical", "values": ["a"], "weights": [1, 2]}]},
        {"rows": 5, "columns": [{"name": "x", "by": "nope"}]},
    ],
)
def test_bad_specs(spec):
    with pytest.raises(GenSpecError):
        generate(spec)


def test_write_csv(tmp_path):
    t = generate({**SPEC, "rows": 10})
    p = tmp_path / "o.csv"
    write_csv(t, p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == list(t)
    assert len(rows) == 11
    assert float(rows[1][1]) == t["x"][0]


def test_flights_table():
    t = flights_table(50_000, seed=0)
    assert set(t) == set(FLIGHTS_SCHEMA)
    assert set(np.unique(t["Origin"])) <= set(ORIGINS)
    assert set(np.unique(t["Airline"])) <= set(AIRLINES)
    assert set(np.unique(t["DayOfWeek"])) == {str(d) for d in range(1, 8)}
    assert t["DepDelay"].min() >= -60 and t["DepDelay"].max() <= 240
    u = flights_table(50_000, seed=0)
    assert np.array_equal(t["DepDelay"], u["DepDelay"])
