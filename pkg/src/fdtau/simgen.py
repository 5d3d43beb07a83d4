"""Simulation designs and seeded power studies.

Three designs share one response model. ``X(t) = sum_k eps_k rho_k(t)``
with ``rho`` a Fourier basis (cases 1-2) or monomial basis (case 3), and

* case 1: ``Y = delta * int X beta + N(0, 1)``
* case 2: ``Y = delta * int X beta + Exp(rate 2)``
* case 3: ``Y = delta * int 0.001^X(t) dt + N(0, sd 0.1)``

where ``beta = sum_k (k / 2) rho_k``. ``sim1`` observes ``X`` on 20
equally spaced points with ``Exp(2)`` coefficients; ``sim2`` samples 5
distinct points per curve out of a 56-point grid, adds measurement noise of
variance 0.2 and uses ``N(0, 1)`` coefficients (sd 0.1 in case 3); ``sim3``
is ``sim2`` with ``Exp(2)`` coefficients. Exponential parameters are rates.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .domain import DenseSample, Grid, SparseSample, Subject, ValidationError
from .pace import SmootherConfig

DESIGNS = ("sim1", "sim2", "sim3")
DESIGN_ALIASES = {"simi": "sim1", "simii": "sim2", "simiii": "sim3"}
SIM1_POINTS = 20
SPARSE_GRID_POINTS = 56
SPARSE_OBS = 5
SPARSE_NOISE_SD = float(np.sqrt(0.2))
CASE3_NOISE_SD = 0.1
CASE3_BASE = 0.001
EXP_RATE = 2.0
_FINE = np.linspace(0.0, 1.0, 1001)


@dataclass(frozen=True)
class ScenarioConfig:
    design: str = "sim1"
    case: int = 1
    n: int = 300
    p: int = 5
    delta: float = 0.0
    replicates: int = 300
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        design = str(self.design).lower()
        object.__setattr__(self, "design", DESIGN_ALIASES.get(design, design))
        if self.design not in DESIGNS:
            raise ValidationError(f"design must be one of {DESIGNS}")
        if self.case not in (1, 2, 3):
            raise ValidationError("case must be 1, 2 or 3")
        if self.n < 10:
            raise ValidationError("n must be at least 10")
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        if self.delta < 0:
            raise ValidationError("delta must be nonnegative")
        if self.p < 1 or (self.design != "sim1" and self.p != 5):
            raise ValidationError("p must be 5 for the sparse designs")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def to_line(self) -> str:
        return " ".join(f"{k}={v}" for k, v in asdict(self).items())

    @classmethod
    def from_line(cls, line: str) -> "ScenarioConfig":
        kw = {}
        types = {"design": str, "case": int, "n": int, "p": int, "delta": float,
                 "replicates": int, "alpha": float, "seed": int}
        aliases = {"reps": "replicates"}
        for tok in line.split():
            if "=" not in tok:
                raise ValidationError(f"expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            k = aliases.get(k.strip().lower(), k.strip().lower())
            if k not in types:
                raise ValidationError(f"unknown scenario key {k!r}")
            try:
                kw[k] = types[k](v.strip().lower() if k == "design" else v)
            except ValueError as exc:
                raise ValidationError(f"bad value for {k}: {v!r}") from exc
        return cls(**kw)


def read_scenarios(text: str) -> List[ScenarioConfig]:
    """One scenario per non-blank line; ``#`` starts a comment."""
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(ScenarioConfig.from_line(line))
    if not out:
        raise ValidationError("scenario file lists no scenarios")
    return out


def fourier_basis(k: int, t):
    """Orthonormal Fourier basis on [0, 1]: 1, sqrt2 sin(2 pi j t), sqrt2 cos(2 pi j t)."""
    t = np.asarray(t, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return np.ones_like(t)
    j = k // 2
    trig = np.sin if k % 2 == 0 else np.cos
    return np.sqrt(2.0) * trig(2.0 * np.pi * j * t)


def monomial_basis(k: int, t):
    t = np.asarray(t, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    return t ** (k - 1)


def basis_matrix(case: int, p: int, t) -> np.ndarray:
    """``p x len(t)`` matrix of basis functions for the given case."""
    fn = monomial_basis if case == 3 else fourier_basis
    return np.stack([fn(k, t) for k in range(1, p + 1)])


def _coefficients(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    shape = (cfg.n, cfg.p)
    if cfg.design == "sim1" or cfg.design == "sim3":
        return rng.exponential(1.0 / EXP_RATE, shape)
    sd = CASE3_NOISE_SD if cfg.case == 3 else 1.0
    return rng.normal(0.0, sd, shape)


def _responses(cfg: ScenarioConfig, eps: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n, p = eps.shape
    if cfg.case == 3:
        x_fine = eps @ basis_matrix(3, p, _FINE)
        w = np.full(_FINE.size, _FINE[1] - _FINE[0])
        w[[0, -1]] /= 2
        signal = (CASE3_BASE ** x_fine) @ w
        return cfg.delta * signal + rng.normal(0.0, CASE3_NOISE_SD, n)
    # int X beta = sum_k eps_k beta_k for an orthonormal basis
    beta = np.arange(1, p + 1) / 2.0
    signal = eps @ beta
    noise = rng.normal(0.0, 1.0, n) if cfg.case == 1 else rng.exponential(1.0 / EXP_RATE, n)
    return cfg.delta * signal + noise


def gen_sim1(cfg: ScenarioConfig, rng: np.random.Generator) -> DenseSample:
    if cfg.design != "sim1":
        raise ValidationError("gen_sim1 requires design sim1")
    grid = Grid.uniform(SIM1_POINTS)
    eps = _coefficients(cfg, rng)
    curves = eps @ basis_matrix(cfg.case, cfg.p, grid.points)
    y = _responses(cfg, eps, rng)
    return DenseSample(grid, curves, y)


def _gen_sparse(cfg: ScenarioConfig, rng: np.random.Generator) -> SparseSample:
    grid = np.linspace(0.0, 1.0, SPARSE_GRID_POINTS)
    eps = _coefficients(cfg, rng)
    latent = eps @ basis_matrix(cfg.case, cfg.p, grid)
    y = _responses(cfg, eps, rng)
    keys = rng.random((cfg.n, SPARSE_GRID_POINTS))
    picks = np.sort(np.argpartition(keys, SPARSE_OBS, axis=1)[:, :SPARSE_OBS], axis=1)
    noise = rng.normal(0.0, SPARSE_NOISE_SD, (cfg.n, SPARSE_OBS))
    values = np.take_along_axis(latent, picks, axis=1) + noise
    subjects = tuple(Subject(grid[picks[i]], values[i]) for i in range(cfg.n))
    return SparseSample(subjects, y)


def gen_sim2(cfg: ScenarioConfig, rng: np.random.Generator) -> SparseSample:
    if cfg.design != "sim2":
        raise ValidationError("gen_sim2 requires design sim2")
    return _gen_sparse(cfg, rng)


def gen_sim3(cfg: ScenarioConfig, rng: np.random.Generator) -> SparseSample:
    if cfg.design != "sim3":
        raise ValidationError("gen_sim3 requires design sim3")
    return _gen_sparse(cfg, rng)


def generate(cfg: ScenarioConfig, rng: np.random.Generator):
    return {"sim1": gen_sim1, "sim2": gen_sim2, "sim3": gen_sim3}[cfg.design](cfg, rng)


@dataclass
class PowerResult:
    rejection_rate: float
    se: float
    per_replicate: List[float]
    failed: int = 0
    runtime: float = 0.0
    errors: List[str] = field(default_factory=list)

    @property
    def replicates(self) -> int:
        return len(self.per_replicate)


def replicate_seeds(seed: int, index: int):
    """``(data, mc, cv)`` seeds of one replicate, derived from ``(seed, index)``."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    data, mc, cv = ss.spawn(3)
    return data, int(mc.generate_state(1, np.uint64)[0]), int(cv.generate_state(1, np.uint64)[0])


def run_replicate(cfg: ScenarioConfig, index: int, draws: int = 100_000,
                  fve: float = 0.95, smoother: Optional[SmootherConfig] = None) -> float:
    """p-value of replicate ``index``; depends only on ``(cfg, index)``."""
    from .pipeline import dense_test, sparse_test

    data_ss, mc_seed, cv_seed = replicate_seeds(cfg.seed, index)
    sample = generate(cfg, np.random.default_rng(data_ss))
    if cfg.design == "sim1":
        report = dense_test(sample, fve=fve, draws=draws, seed=mc_seed)
    else:
        report = sparse_test(sample, smoother or SmootherConfig(), fve=fve, draws=draws,
                             seed=mc_seed, cv_seed=cv_seed)
    return report.p_value


def _replicate_job(args):
    cfg, index, draws, fve, smoother = args
    try:
        return run_replicate(cfg, index, draws, fve, smoother), None
    except (ValidationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return None, f"replicate {index}: {exc}"


def power_study(cfg: ScenarioConfig, draws: int = 100_000, fve: float = 0.95,
                smoother: Optional[SmootherConfig] = None, workers: int = 1,
                progress=None) -> PowerResult:
    """Rejection rate of the association test over seeded replicates.

    Replicates that raise are excluded and counted in ``failed``.
    """
    start = time.perf_counter()
    jobs = [(cfg, i, draws, fve, smoother) for i in range(cfg.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_job, jobs, chunksize=4))
    else:
        results = []
        for job in jobs:
            results.append(_replicate_job(job))
            if progress is not None:
                progress(len(results), len(jobs))
    pvals = [p for p, _ in results if p is not None]
    errors = [e for _, e in results if e is not None]
    if pvals:
        rate = float(np.mean(np.asarray(pvals) < cfg.alpha))
        se = float(np.sqrt(rate * (1 - rate) / len(pvals)))
    else:
        rate, se = float("nan"), float("nan")
    return PowerResult(rate, se, pvals, len(errors), time.perf_counter() - start, errors)
