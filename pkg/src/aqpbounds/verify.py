"""Verification suites behind ``aqpbounds verify``.

Each suite returns a list of :class:`CoverageReport`; a report passes when its
miss rate is at most its delta (or, for the deterministic suites, when there
are no violations at all).
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .bounders import RangeBounds
from .rangetrim import bounder_from_name, rt_init, rt_lbound, rt_rbound, rt_update_batch
from .stopping import StoppingCondition, run_until_stopped
from .views import ArrayBlockSource, MeanView

MODES = ("exhaustive", "montecarlo", "phos", "monotonicity", "strategy-compare")
EXHAUSTIVE_BOUNDERS = ("hoeffding", "bernstein", "dkw", "hoeffding+rt", "bernstein+rt")


@dataclass
class CoverageReport:
    suite: str
    label: str
    trials: int
    misses: int
    delta: float
    worst_rate: Optional[float] = None
    details: dict = field(default_factory=dict)

    @property
    def miss_rate(self) -> float:
        return self.misses / self.trials if self.trials else 0.0

    @property
    def passed(self) -> bool:
        rate = self.miss_rate if self.worst_rate is None else self.worst_rate
        return rate <= self.delta

    def record(self) -> dict:
        out = asdict(self)
        out["miss_rate"] = self.miss_rate
        out["verdict"] = "pass" if self.passed else "fail"
        return out


# -- exhaustive enumeration --------------------------------------------------

# small tables: plain, skewed, one large outlier, duplicated extremes, constant, two-point
EXHAUSTIVE_TABLES = {
    "uniform": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
    "skewed": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 2.0, 10.0],
    "outlier": [1.0, 1.1, 1.2, 0.9, 1.0, 1.05, 0.95, 100.0],
    "dup_extremes": [0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 2.0, 3.0, 5.0],
    "constant": [3.0] * 7,
    "two_point": [0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
}


def exhaustive_coverage(bounder_name: str, values, delta: float, m: int, rng: Optional[RangeBounds] = None) -> tuple:
    """(misses, trials) over every size-``m`` subset of ``values``."""
    x = np.asarray(values, dtype=float)
    n = x.size
    rng = rng or RangeBounds(float(x.min()), float(x.max()))
    mu = float(x.mean())
    b = bounder_from_name(bounder_name)
    misses = trials = 0
    for idx in itertools.combinations(range(n), m):
        st = b.update_batch(b.init_state(), x[list(idx)])
        ci = b.interval(st, rng, n, delta)
        trials += 1
        # small slack for float round-off in the mean itself
        tol = 1e-12 * max(1.0, abs(mu))
        if not (ci.lower - tol <= mu <= ci.upper + tol):
            misses += 1
    return misses, trials


def run_exhaustive(bounders=EXHAUSTIVE_BOUNDERS, deltas=(0.1, 0.3), tables=None, n=None, m=None) -> list:
    tables = tables or EXHAUSTIVE_TABLES
    reports = []
    for name in bounders:
        for delta in deltas:
            tot_m = tot_t = 0
            worst = 0.0
            per = {}
            for tname, vals in tables.items():
                vals = vals if n is None else vals[:n]
                ms = [m] if m is not None else range(2, len(vals))
                for mm in ms:
                    miss, trials = exhaustive_coverage(name, vals, delta, mm)
                    tot_m += miss
                    tot_t += trials
                    worst = max(worst, miss / trials)
                    if miss:
                        per[f"{tname}/m={mm}"] = miss / trials
            reports.append(CoverageReport("exhaustive", f"{name} delta={delta}", tot_t, tot_m, delta, worst, per))
    return reports


# -- Monte-Carlo optional stopping -------------------------------------------


def optional_stopping_trials(
    trials: int = 1000,
    delta: float = 0.1,
    n: int = 100_000,
    block_size: int = 1000,
    eps: float = 0.05,
    bounder: str = "bernstein",
    seed: int = 0,
) -> CoverageReport:
    """Run the stopping controller on fresh shuffles of one fixed view."""
    gen = np.random.Generator(np.random.PCG64(seed))
    data = gen.beta(2.0, 5.0, n)
    mu = float(data.mean())
    rng = RangeBounds(0.0, 1.0)
    cond = StoppingCondition("abs", value=eps)
    misses = 0
    rows = []
    for _ in range(trials):
        perm = gen.permutation(n)
        view = MeanView("v", bounder_from_name(bounder), rng, delta, n)
        out = run_until_stopped([view], ArrayBlockSource(data[perm], block_size), None, cond)
        ci = out.views["v"].interval
        # the reported interval is the intersection over rounds, so it
        # excludes the mean exactly when some round did
        if not (ci.lower <= mu <= ci.upper):
            misses += 1
        rows.append(out.views["v"].rows_sampled)
    details = {"mean_rows_sampled": float(np.mean(rows)), "true_mean": mu}
    return CoverageReport("montecarlo", f"{bounder} abs:{eps}", trials, misses, delta, None, details)


# -- phantom outlier sensitivity ---------------------------------------------


def phos_check(states: int = 1000, seed: int = 0, inner: str = "bernstein") -> CoverageReport:
    """RangeTrim bounds must not move when the far endpoint moves."""
    gen = np.random.Generator(np.random.PCG64(seed))
    violations = 0
    for _ in range(states):
        m = int(gen.integers(2, 200))
        vals = gen.uniform(1.0, 100.0, m)
        st = rt_update_batch(rt_init(inner == "dkw"), vals)
        lo, hi = float(vals.min()), float(vals.max())
        n = m + int(gen.integers(0, 10_000))
        delta = float(gen.uniform(1e-9, 0.5))
        lowers = {rt_lbound(st, RangeBounds(0.0, b), n, delta, inner) for b in (hi, 10 * hi, 1e6)}
        uppers = {rt_rbound(st, RangeBounds(a, 200.0), n, delta, inner) for a in (lo, lo / 10, -1e6)}
        violations += (len(lowers) != 1) + (len(uppers) != 1)
    return CoverageReport("phos", f"{inner}+rt", 2 * states, violations, 0.0)


# -- dataset-size monotonicity -----------------------------------------------


def monotonicity_check(states: int = 1000, seed: int = 0) -> list:
    """Growing N may only widen hoeffding / bernstein intervals."""
    gen = np.random.Generator(np.random.PCG64(seed))
    out = []
    for name in ("hoeffding", "bernstein", "hoeffding+rt", "bernstein+rt"):
        b = bounder_from_name(name)
        bad = 0
        for _ in range(states):
            m = int(gen.integers(1, 300))
            vals = gen.uniform(0.0, 1.0, m)
            st = b.update_batch(b.init_state(), vals)
            n1 = m + int(gen.integers(0, 1000))
            n2 = n1 + int(gen.integers(1, 10**6))
            d = float(gen.uniform(1e-9, 0.5))
            r = RangeBounds(0.0, 1.0)
            if b.lbound(st, r, n2, d) > b.lbound(st, r, n1, d) or b.rbound(st, r, n2, d) < b.rbound(st, r, n1, d):
                bad += 1
        out.append(CoverageReport("monotonicity", name, states, bad, 0.0))
    return out


# -- strategy comparison -----------------------------------------------------


def sparse_groups_table(n: int = 1_000_000, sparse_rows: int = 1026, seed: int = 0) -> dict:
    """Two sparse groups (about 5% block occupancy each) among dense ones."""
    gen = np.random.Generator(np.random.PCG64(seed))
    dense = [f"d{i}" for i in range(8)]
    labels = np.empty(n, dtype=object)
    labels[:sparse_rows] = "s1"
    labels[sparse_rows : 2 * sparse_rows] = "s2"
    labels[2 * sparse_rows :] = np.asarray(dense, dtype=object)[gen.integers(0, len(dense), n - 2 * sparse_rows)]
    x = gen.uniform(80.0, 100.0, n)
    x[:sparse_rows] = np.clip(gen.normal(5.0, 0.3, sparse_rows), 0.0, 100.0)
    x[sparse_rows : 2 * sparse_rows] = np.clip(gen.normal(6.0, 0.3, sparse_rows), 0.0, 100.0)
    x[0], x[-1] = 0.0, 100.0  # pin the catalog range to [0, 100]
    return {"g": labels, "x": x}


def strategy_compare(
    seed: int = 0,
    n: int = 1_000_000,
    block_size: int = 50,
    delta: float = 1e-6,
    bounder: str = "bernstein+rt",
    stop: str = "topk:1:min",
) -> CoverageReport:
    from .query import run_query
    from .scramble import build_scramble

    table = sparse_groups_table(n=n, seed=seed)
    s = build_scramble(table, {"g": "categorical", "x": "numeric"}, seed=seed, block_size=block_size)
    q = "SELECT g, AVG(x) FROM t GROUP BY g"
    res = {
        strat: run_query(q, s, seed=seed, delta=delta, bounder=bounder, strategy=strat, stop=stop)
        for strat in ("scan", "activesync", "activepeek")
    }
    scan, sync, peek = (res[k] for k in ("scan", "activesync", "activepeek"))
    occupancy = {
        g: float(s.blocks_with_any("g", [s.code_of("g", g)]).mean()) for g in ("s1", "s2")
    }
    same = sync.topk_groups() == peek.topk_groups() and all(
        (a.lower, a.upper) == (b.lower, b.upper) for a, b in zip(sync.results, peek.results)
    )
    subset = set(peek.blocks_read) <= set(sync.blocks_read)
    ratio = sync.metrics.blocks_fetched / scan.metrics.blocks_fetched
    violations = int(not (ratio <= 0.5)) + int(not subset) + int(not same)
    details = {
        "blocks_scan": scan.metrics.blocks_fetched,
        "blocks_activesync": sync.metrics.blocks_fetched,
        "blocks_activepeek": peek.metrics.blocks_fetched,
        "ratio_sync_over_scan": ratio,
        "peek_subset_of_sync": subset,
        "peek_results_equal": same,
        "sparse_block_occupancy": occupancy,
        "topk": sorted(sync.topk_groups()),
    }
    return CoverageReport("strategy-compare", stop, 3, violations, 0.0, None, details)


def run_mode(mode: str, *, seed: int = 0, trials: Optional[int] = None, delta: Optional[float] = None,
             n: Optional[int] = None, m: Optional[int] = None, bounders=None) -> list:
    if mode == "exhaustive":
        deltas = (delta,) if delta is not None else (0.1, 0.3)
        if n is not None:
            # a single enumerated table 0..n-1 when N is given explicitly
            tables = {f"range{n}": [float(i) for i in range(n)]}
            return run_exhaustive(bounders or EXHAUSTIVE_BOUNDERS, deltas, tables, m=m)
        return run_exhaustive(bounders or EXHAUSTIVE_BOUNDERS, deltas, m=m)
    if mode == "montecarlo":
        return [optional_stopping_trials(trials=trials or 1000, delta=delta or 0.1, seed=seed)]
    if mode == "phos":
        return [phos_check(trials or 1000, seed, inner) for inner in ("hoeffding", "bernstein", "dkw")]
    if mode == "monotonicity":
        return monotonicity_check(trials or 1000, seed)
    if mode == "strategy-compare":
        return [strategy_compare(seed=seed)]
    raise ValueError(f"unknown verify mode {mode!r}; choose from {MODES}")
