import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdtau import concordance, pipeline
from fdtau.domain import DenseSample, Grid, SparseSample, Subject
from fdtau.pace import SmootherConfig

from conftest import sparse_sample

DRAWS = 5000


def random_dense(seed, n=60, m=21, signal=1.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, m)).cumsum(axis=1) / np.sqrt(m)
    y = signal * x.mean(axis=1) + rng.normal(size=n)
    return DenseSample(Grid.uniform(m), x, y)


def test_perfect_concordance():
    rng = np.random.default_rng(0)
    y = rng.normal(size=50)
    x = y[:, None] + np.linspace(0, 1, 11)[None, :]
    rep = pipeline.dense_test(DenseSample(Grid.uniform(11), x, y), draws=DRAWS, seed=1)
    assert rep.statistic == pytest.approx(0.25, abs=1e-15)
    assert rep.p_value == 1.0 / (DRAWS + 1)


def test_null_scaling_weights():
    rep = pipeline.dense_test(random_dense(1), draws=DRAWS, seed=2)
    np.testing.assert_allclose(pipeline.null_weights(rep.eigenvalues_used, 60),
                               4.0 / 60 * rep.eigenvalues_used.retained)
    d = rep.diagnostics
    assert d["n"] == 60 and d["m"] == 21 and d["d"] == rep.eigenvalues_used.d
    assert d["null_scale"] == 4.0 / 60 and not d["degenerate"]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_response_transform_gives_identical_report(seed):
    s = random_dense(seed)
    t = DenseSample(s.grid, s.curves, np.arctan(s.responses) * 7 + 2)
    a = pipeline.dense_test(s, draws=DRAWS, seed=seed)
    b = pipeline.dense_test(t, draws=DRAWS, seed=seed)
    assert a.statistic == b.statistic and a.p_value == b.p_value
    assert np.array_equal(a.eigenvalues_used.eigenvalues, b.eigenvalues_used.eigenvalues)


def test_dense_determinism_and_workers():
    s = random_dense(4)
    a = pipeline.dense_test(s, draws=70_000, seed=9, alpha=0.05)
    b = pipeline.dense_test(s, draws=70_000, seed=9, alpha=0.05, workers=3)
    assert (a.statistic, a.p_value, a.alpha_critical) == (b.statistic, b.p_value, b.alpha_critical)
    assert a.diagnostics == b.diagnostics


def test_strong_signal_rejects():
    rep = pipeline.dense_test(random_dense(5, n=200, signal=5.0), draws=DRAWS, seed=1, alpha=0.05)
    assert rep.p_value < 0.01 and rep.statistic > rep.alpha_critical


def test_degenerate_constant_response():
    s = DenseSample(Grid.uniform(5), np.random.default_rng(0).normal(size=(10, 5)), np.ones(10))
    rep = pipeline.dense_test(s, draws=DRAWS, seed=0, alpha=0.05)
    assert rep.p_value == 1.0 and rep.p_value_mc_se == 0.0
    assert rep.diagnostics["degenerate"] and rep.alpha_critical == 0.0
    assert rep.diagnostics["tie_warning"]


def test_seed_drawn_when_omitted():
    rep = pipeline.dense_test(random_dense(6), draws=DRAWS)
    assert 0 <= rep.diagnostics["seed"] < 2**64


def test_sparse_reduces_to_dense_on_grid():
    rng = np.random.default_rng(11)
    cfg = SmootherConfig()
    g = cfg.grid.points
    basis = np.stack([np.ones_like(g), np.sqrt(2) * np.sin(2 * np.pi * g),
                      np.sqrt(2) * np.cos(2 * np.pi * g)])
    x = rng.exponential(0.5, size=(200, 3)) @ basis
    y = x.mean(axis=1) + rng.normal(size=200)
    sparse = SparseSample(tuple(Subject(g.copy(), row) for row in x), y)
    dense = DenseSample(cfg.grid, x, y)
    t_dense = pipeline.dense_test(dense, draws=DRAWS, seed=0).statistic
    rep = pipeline.sparse_test(sparse, cfg, draws=DRAWS, seed=0, K=10)
    assert rep.diagnostics["sigma2"] <= 0.05
    assert abs(rep.statistic - t_dense) <= 0.01


def test_sparse_report_fields_and_determinism():
    rng = np.random.default_rng(12)
    xi = rng.normal(size=150)
    s = sparse_sample(150, lambda i, t: xi[i] * (1 + t), 0.3, rng, responses=xi + rng.normal(size=150))
    a = pipeline.sparse_test(s, draws=DRAWS, seed=3, alpha=0.05)
    b = pipeline.sparse_test(s, draws=DRAWS, seed=3, alpha=0.05)
    d = a.diagnostics
    assert d["K_mode"] == "cv" and 1 <= d["K"] <= 10
    assert d["output_grid_size"] == 51 and d["m"] == 51 and d["n"] == 150
    assert d["sigma2"] >= 0 and d["statistic_label"] == "T_hat_K"
    assert (a.statistic, a.p_value, d["K"]) == (b.statistic, b.p_value, b.diagnostics["K"])
    assert a.p_value < 0.01
    fixed = pipeline.sparse_test(s, draws=DRAWS, seed=3, K=2)
    assert fixed.diagnostics["K"] == 2 and fixed.diagnostics["K_mode"] == "fixed"
