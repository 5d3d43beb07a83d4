import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdtau import simgen
from fdtau.domain import DenseSample, Grid, SparseSample, ValidationError
from fdtau.simgen import ScenarioConfig


def rng(seed=0):
    return np.random.default_rng(seed)


def test_fourier_basis_orthonormal():
    t = np.linspace(0, 1, 20001)
    w = Grid(t).weights
    b = simgen.basis_matrix(1, 10, t)
    np.testing.assert_allclose((b * w) @ b.T, np.eye(10), atol=1e-6)
    assert np.all(simgen.fourier_basis(1, t) == 1.0)


def test_basis_values():
    assert simgen.monomial_basis(3, 0.5) == 0.25
    assert simgen.monomial_basis(1, 0.3) == 1.0
    assert simgen.fourier_basis(2, 0.25) == pytest.approx(np.sqrt(2))
    assert simgen.fourier_basis(3, 0.5) == pytest.approx(-np.sqrt(2))
    with pytest.raises(ValueError):
        simgen.fourier_basis(0, 0.5)


@pytest.mark.parametrize("kwargs", [
    dict(n=9), dict(replicates=0), dict(delta=-0.1), dict(case=4), dict(design="sim4"),
    dict(design="sim2", p=10), dict(alpha=1.0), dict(seed=-1),
])
def test_config_rejects(kwargs):
    with pytest.raises(ValidationError):
        ScenarioConfig(**kwargs)


def test_design_aliases():
    assert ScenarioConfig(design="SimIII").design == "sim3"


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(simgen.DESIGNS), st.integers(1, 3), st.integers(10, 5000),
       st.floats(0, 2, allow_nan=False), st.integers(1, 1000),
       st.floats(0.001, 0.5), st.integers(0, 2**64 - 1))
def test_scenario_line_round_trip(design, case, n, delta, reps, alpha, seed):
    cfg = ScenarioConfig(design=design, case=case, n=n, delta=delta, replicates=reps,
                         alpha=alpha, seed=seed)
    assert ScenarioConfig.from_line(cfg.to_line()) == cfg


def test_read_scenarios():
    cfgs = simgen.read_scenarios("# cells\ndesign=SimII case=1 n=300 reps=10\n\n"
                                 "design=sim1 delta=0.1  # trailing\n")
    assert [c.design for c in cfgs] == ["sim2", "sim1"] and cfgs[0].replicates == 10
    for bad in ("", "design=sim1 bogus=1", "design=sim1 n", "n=abc"):
        with pytest.raises(ValidationError):
            simgen.read_scenarios(bad)


def test_sim1_shape_and_determinism():
    cfg = ScenarioConfig(design="sim1", n=50, delta=0.1)
    a = simgen.gen_sim1(cfg, rng(3))
    b = simgen.gen_sim1(cfg, rng(3))
    assert isinstance(a, DenseSample) and a.curves.shape == (50, 20)
    np.testing.assert_allclose(a.grid.points, np.linspace(0, 1, 20))
    assert np.array_equal(a.curves, b.curves) and np.array_equal(a.responses, b.responses)
    with pytest.raises(ValidationError):
        simgen.gen_sim2(cfg, rng())


def test_sim1_response_model():
    cfg = ScenarioConfig(design="sim1", n=20000, delta=1.0)
    s = simgen.gen_sim1(cfg, rng(4))
    # exact coefficient identity versus quadrature of X beta on the 20-point grid
    beta = simgen.basis_matrix(1, 5, s.grid.points).T @ (np.arange(1, 6) / 2)
    signal = s.curves @ (s.grid.weights * beta)
    resid = s.responses - signal
    assert abs(resid.mean()) < 0.1 and abs(resid.std() - 1) < 0.05


def test_sim2_structure():
    cfg = ScenarioConfig(design="sim2", n=300)
    s = simgen.gen_sim2(cfg, rng(5))
    grid = np.linspace(0, 1, 56)
    assert isinstance(s, SparseSample) and s.n == 300
    assert np.all(s.counts == 5)
    pooled = s.pooled()[1]
    assert np.all(np.isin(pooled, grid))
    assert np.unique(pooled).size >= 50


def test_sparse_noise_and_coefficients():
    s = simgen.gen_sim2(ScenarioConfig(design="sim2", n=4000), rng(6))
    v = s.pooled()[2]
    # Var X(t) = 5 at every t for five orthonormal Fourier terms, plus noise variance 0.2
    assert abs(v.var() - 5.2) < 0.25
    s3 = simgen.gen_sim2(ScenarioConfig(design="sim2", case=3, n=4000), rng(6))
    assert s3.pooled()[2].std() < 0.6


def test_exp_coefficient_mean():
    eps = simgen._coefficients(ScenarioConfig(design="sim3", n=40000), rng(7))
    assert abs(eps.mean() - 0.5) < 0.01
    s = simgen.gen_sim3(ScenarioConfig(design="sim3", n=50, seed=1), rng(1))
    t = simgen.gen_sim3(ScenarioConfig(design="sim3", n=50, seed=1), rng(1))
    assert all(np.array_equal(a.values, b.values) for a, b in zip(s.subjects, t.subjects))


def test_case3_response_decreases_in_x(monkeypatch):
    monkeypatch.setattr(simgen, "CASE3_NOISE_SD", 0.0)
    cfg = ScenarioConfig(design="sim1", case=3, n=400, delta=1.0)
    s = simgen.gen_sim1(cfg, rng(8))
    checked = 0
    for i in range(s.n):
        for j in range(s.n):
            if i != j and np.all(s.curves[i] >= s.curves[j]) and np.any(s.curves[i] > s.curves[j]):
                assert s.responses[i] < s.responses[j]
                checked += 1
    assert checked > 100


def test_replicate_is_zero_or_one():
    res = simgen.power_study(ScenarioConfig(design="sim1", n=50, replicates=1), draws=2000)
    assert res.rejection_rate in (0.0, 1.0) and res.replicates == 1 and res.failed == 0


def test_power_study_determinism_across_workers():
    cfg = ScenarioConfig(design="sim1", n=60, delta=0.2, replicates=6, seed=42)
    a = simgen.power_study(cfg, draws=2000)
    b = simgen.power_study(cfg, draws=2000, workers=2)
    assert a.per_replicate == b.per_replicate
    assert a.se == pytest.approx(np.sqrt(a.rejection_rate * (1 - a.rejection_rate) / 6))


def test_replicate_seeds_distinct():
    seeds = {simgen.replicate_seeds(1, i)[1] for i in range(100)}
    assert len(seeds) == 100
    assert simgen.replicate_seeds(1, 5)[1:] == simgen.replicate_seeds(1, 5)[1:]


def test_failed_replicates_are_counted(monkeypatch):
    def boom(cfg, index, *args):
        if index == 1:
            raise ValidationError("broken")
        return 0.01

    monkeypatch.setattr(simgen, "run_replicate", boom)
    res = simgen.power_study(ScenarioConfig(design="sim1", n=50, replicates=3))
    assert res.failed == 1 and res.replicates == 2 and res.rejection_rate == 1.0
    assert "replicate 1" in res.errors[0]
