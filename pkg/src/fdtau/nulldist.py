"""Monte Carlo approximation of weighted chi-square mixtures.

The null law of the concordance statistic is a weighted sum of independent
``chi2_1`` variables, ``sum_k w_k Z_k^2``. Draws are produced in fixed-size
shards; shard ``s`` is generated from ``SeedSequence(seed, spawn_key=(s,))``
so the concatenated stream depends only on the seed, never on how many
workers produced it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import ValidationError

SHARD_SIZE = 1 << 16
DEFAULT_DRAWS = 100_000
MIN_DRAWS = 1000


@dataclass(frozen=True, eq=False)
class MixtureSampler:
    eigenvalues: np.ndarray
    draws: int = DEFAULT_DRAWS
    seed: int = 0

    def __post_init__(self):
        ev = np.array(self.eigenvalues, dtype=float, ndmin=1)
        if ev.size == 0:
            raise ValidationError("empty eigenvalue list")
        if np.any(ev < 0) or not np.all(np.isfinite(ev)):
            raise ValidationError("eigenvalues must be finite and nonnegative")
        if int(self.draws) < MIN_DRAWS:
            raise ValidationError(f"draws must be at least {MIN_DRAWS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "draws", int(self.draws))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def degenerate(self) -> bool:
        return not np.any(self.eigenvalues > 0)


def _shard(weights: np.ndarray, seed: int, index: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    z = rng.standard_normal((size, weights.size))
    z *= z
    out = np.zeros(size)
    for k, w in enumerate(weights):
        out += w * z[:, k]
    return out


def sample_mixture(s: MixtureSampler, workers: int = 1) -> np.ndarray:
    """Draw ``s.draws`` i.i.d. values of ``sum_k lambda_k Z_k^2``."""
    sizes = [SHARD_SIZE] * (s.draws // SHARD_SIZE)
    if s.draws % SHARD_SIZE:
        sizes.append(s.draws % SHARD_SIZE)
    jobs = [(s.eigenvalues, s.seed, i, size) for i, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _shard(*a), jobs))
    else:
        parts = [_shard(*a) for a in jobs]
    return np.concatenate(parts)


def p_value_from_draws(statistic: float, draws: np.ndarray) -> tuple:
    """Add-one Monte Carlo p-value and its binomial standard error."""
    if statistic < 0:
        raise ValidationError("statistic must be nonnegative")
    exceed = int(np.count_nonzero(draws >= statistic))
    b = draws.size
    p = (1 + exceed) / (b + 1)
    return p, float(np.sqrt(p * (1 - p) / b))


def p_value(statistic: float, s: MixtureSampler, draws: Optional[np.ndarray] = None) -> tuple:
    """Return ``(p, mc_se)`` for ``statistic`` under the sampled mixture."""
    if draws is None:
        draws = sample_mixture(s)
    return p_value_from_draws(statistic, draws)


def critical_value(alpha: float, s: MixtureSampler, draws: Optional[np.ndarray] = None) -> float:
    """Empirical ``1 - alpha`` quantile of the mixture."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    if draws is None:
        draws = sample_mixture(s)
    return float(np.quantile(draws, 1.0 - alpha))


def mixture_moments(eigenvalues: Sequence[float]) -> tuple:
    """Exact mean and variance of ``sum_k lambda_k Z_k^2``."""
    ev = np.asarray(eigenvalues, dtype=float)
    return float(ev.sum()), float(2.0 * np.sum(ev * ev))
