"""Acceptance criteria at their stated tolerances.

Run with ``pytest tests/test_acceptance.py -s`` or directly with
``python tests/test_acceptance.py``; each criterion prints one line
``criterion N: PASS|FAIL ...``.
"""

import math
import os
import sys
import time

import numpy as np
import pytest
from scipy import stats

from fdtau import concordance, nulldist, pace, pipeline, simgen
from fdtau.domain import DenseSample, Grid, SparseSample, Subject
from fdtau.pace import SmootherConfig
from fdtau.simgen import ScenarioConfig

try:
    from conftest import ACCEPTANCE_LINES, sparse_sample
except ImportError:  # executed as a script from another directory
    sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
    from conftest import ACCEPTANCE_LINES, sparse_sample

DRAWS = nulldist.DEFAULT_DRAWS
REPS = 300
SEED = 1
WORKERS = os.cpu_count() or 1


def study(**kw):
    cfg = ScenarioConfig(replicates=kw.pop("replicates", REPS), seed=SEED, **kw)
    return simgen.power_study(cfg, draws=DRAWS, workers=WORKERS)


def rate_line(res, lo, hi):
    ok = lo <= res.rejection_rate <= hi and res.failed == 0
    return ok, (f"rate {100 * res.rejection_rate:.1f}% (se {100 * res.se:.1f}) "
                f"band [{100 * lo:.1f}, {100 * hi:.1f}] over {res.replicates} reps, "
                f"{res.failed} failed, {res.runtime:.0f}s")


def criterion_1():
    res = study(design="sim1", case=1, n=300, delta=0.0)
    ok, line = rate_line(res, 0.015, 0.085)
    return ok and res.runtime < 120, line + " (limit 120s)"


def criterion_2():
    return rate_line(study(design="sim1", case=1, n=800, delta=0.10), 0.805, 0.965)


def criterion_3():
    return rate_line(study(design="sim1", case=2, n=500, delta=0.08), 0.90, 1.0)


def criterion_4():
    return rate_line(study(design="sim1", case=3, n=800, delta=0.15), 0.38, 0.62)


def criterion_5():
    null = study(design="sim2", case=1, n=300, delta=0.0)
    alt = study(design="sim2", case=1, n=300, delta=0.15)
    ok0, line0 = rate_line(null, 0.015, 0.085)
    ok1, line1 = rate_line(alt, 0.706, 0.906)
    total = null.runtime + alt.runtime
    return ok0 and ok1 and total < 1800, f"size {line0}; power {line1}"


def criterion_6():
    return rate_line(study(design="sim3", case=2, n=500, delta=0.15), 0.685, 0.925)


def _random_instance(rng, heavy):
    n = int(rng.integers(2, 51))
    m = int(rng.integers(2, 21))
    levels = int(rng.integers(2, 4)) if heavy else 10**6
    x = rng.integers(0, levels, (n, m)).astype(float)
    y = rng.integers(0, levels, n).astype(float)
    return DenseSample(Grid.uniform(m), x, y)


def criterion_7():
    rng = np.random.default_rng(SEED)
    mismatches = 0
    for k in range(200):
        s = _random_instance(rng, heavy=k < 60)
        if not np.array_equal(concordance.u_curve_fast(s), concordance.u_curve(s)):
            mismatches += 1
    return mismatches == 0, f"{mismatches} mismatches in 200 instances (60 tie-heavy)"


def criterion_8():
    one = nulldist.MixtureSampler([1.0], draws=10**6, seed=SEED)
    two = nulldist.MixtureSampler([1.0, 1.0], draws=10**6, seed=SEED)
    c1 = nulldist.critical_value(0.05, one)
    c2 = nulldist.critical_value(0.05, two)
    ok = abs(c1 - 3.841) <= 0.05 and abs(c2 - 5.991) <= 0.06
    return ok, f"chi2_1 {c1:.4f} (3.841 +- 0.05), chi2_2 {c2:.4f} (5.991 +- 0.06)"


def criterion_9():
    rng = np.random.default_rng(SEED)
    worst_mean = worst_trace = 0.0
    for k in range(100):
        n, m = int(rng.integers(2, 60)), int(rng.integers(2, 30))
        levels = 3 if k % 2 else 10**6
        s = DenseSample(Grid.uniform(m),
                        rng.integers(0, levels, (n, m)).astype(float),
                        rng.integers(0, levels, n).astype(float))
        u = concordance.u_curve_fast(s)
        proj = concordance.projections(s)
        for t in range(m):
            lhs = math.fsum(proj.projections[:, t]) / n
            worst_mean = max(worst_mean, abs(lhs - ((n - 1) * u[t] - 0.5) / n))
        trace = float(np.sum(proj.projections ** 2 @ s.grid.weights) / n)
        ev = concordance.spectrum(proj).eigenvalues
        worst_trace = max(worst_trace, abs(math.fsum(ev) - trace))
    ok = worst_mean <= 1e-12 and worst_trace <= 1e-10
    return ok, f"max mean-identity error {worst_mean:.2e} (1e-12), trace error {worst_trace:.2e} (1e-10)"


def criterion_10():
    grid = Grid.uniform(51)
    f = np.sin(2 * np.pi * grid.points)
    vals, phi = pace.eigendecompose(2 * np.outer(f, f), grid, K_max=2)
    phi_err = min(np.abs(phi[0] - np.sqrt(2) * f).max(), np.abs(phi[0] + np.sqrt(2) * f).max())
    gam_err = abs(vals[0] - 1.0)
    s = sparse_sample(300, lambda i, t: 0 * t, 0.2, np.random.default_rng(SEED))
    _, sigma2 = pace.estimate_covariance(s, pace.estimate_mean(s))
    ok = phi_err <= 1e-3 and gam_err <= 1e-3 and 0.02 <= sigma2 <= 0.08
    return ok, (f"eigenvalue error {gam_err:.1e}, eigenfunction error {phi_err:.1e} (1e-3); "
                f"noise variance {sigma2:.4f} vs 0.04 (factor 2)")


def criterion_11():
    rng = np.random.default_rng(SEED)
    cfg = SmootherConfig()
    g = cfg.grid.points
    basis = simgen.basis_matrix(1, 5, g)
    eps = rng.exponential(0.5, (200, 5))
    x = eps @ basis
    y = 0.1 * eps @ (np.arange(1, 6) / 2) + rng.normal(size=200)
    dense = DenseSample(cfg.grid, x, y)
    sparse = SparseSample(tuple(Subject(g.copy(), row) for row in x), y)
    t_dense = pipeline.dense_test(dense, draws=nulldist.MIN_DRAWS, seed=SEED).statistic
    diffs = {}
    for K in (10, "cv"):
        rep = pipeline.sparse_test(sparse, cfg, draws=nulldist.MIN_DRAWS, seed=SEED, K=K)
        diffs[K] = abs(rep.statistic - t_dense)
    ok = max(diffs.values()) <= 0.01
    return ok, "|T_K - T_dense| " + ", ".join(f"K={k}: {v:.1e}" for k, v in diffs.items()) + " (0.01)"


def criterion_12():
    res = study(design="sim1", case=1, n=300, delta=0.0, replicates=500)
    ks = stats.kstest(res.per_replicate, "uniform").statistic
    crit = stats.kstwo.ppf(0.99, len(res.per_replicate))
    return ks < crit and res.failed == 0, f"KS {ks:.4f} < 1% critical value {crit:.4f} over {len(res.per_replicate)} reps"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 13)}


def evaluate(number):
    start = time.perf_counter()
    ok, detail = CRITERIA[number]()
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail} [{time.perf_counter() - start:.0f}s]"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return ok, line


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    ok, line = evaluate(number)
    assert ok, line


if __name__ == "__main__":
    results = [evaluate(k)[0] for k in sorted(CRITERIA)]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
