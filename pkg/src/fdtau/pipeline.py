"""End-to-end association tests for dense and sparse functional predictors.

Under independence, ``n * T`` converges to ``4 * sum_k lambda_k N_k^2`` where
``lambda_k`` are the eigenvalues of the covariance operator of the Hajek
projection (the usual ``4 zeta_1`` variance of a degree-2 U-statistic). The
reported statistic is ``T`` itself, so the null mixture is sampled with
weights ``(4 / n) * lambda_k`` for the ``d`` retained eigenvalues.
"""

from __future__ import annotations

import secrets
from typing import Optional, Union

import numpy as np

from . import concordance, nulldist, pace
from .domain import DenseSample, SparseSample, Spectrum, TestReport, ValidationError


def null_weights(spect: Spectrum, n: int) -> np.ndarray:
    """Mixture weights for the unscaled statistic ``T``."""
    return (4.0 / n) * spect.retained


def new_seed() -> int:
    return secrets.randbits(63)


def dense_test(sample: DenseSample, fve: float = 0.95, draws: int = nulldist.DEFAULT_DRAWS,
               seed: Optional[int] = None, alpha: Optional[float] = None,
               workers: int = 1) -> TestReport:
    """Concordance test of association for curves on a shared grid."""
    if seed is None:
        seed = new_seed()
    counts = concordance.fast_pair_counts(sample.responses, sample.curves)
    u = concordance._centered(counts.concordant, counts.n_pairs)
    stat = concordance.statistic_T(u, sample.grid)
    proj = concordance.projections(sample)
    spect = concordance.spectrum(proj, fve)
    tie_frac = counts.tie_fraction
    all_tied = bool(np.all(counts.tied == counts.n_pairs))
    degenerate = spect.degenerate or all_tied
    diagnostics = {
        "n": sample.n,
        "m": sample.m,
        "d": spect.d,
        "fve": spect.fve,
        "seed": int(seed),
        "draws": int(draws),
        "null_scale": 4.0 / sample.n,
        "tied_pairs_max": int(counts.tied.max()),
        "tie_fraction_max": float(tie_frac.max()),
        "tie_warning": bool(tie_frac.max() > concordance.TIE_WARNING_FRACTION),
        "degenerate": degenerate,
    }
    if degenerate:
        return TestReport(stat, spect, 1.0, 0.0, None if alpha is None else 0.0, diagnostics)

    sampler = nulldist.MixtureSampler(null_weights(spect, sample.n), draws, seed)
    mix = nulldist.sample_mixture(sampler, workers=workers)
    p, se = nulldist.p_value_from_draws(stat, mix)
    crit = None if alpha is None else nulldist.critical_value(alpha, sampler, mix)
    return TestReport(stat, spect, p, se, crit, diagnostics)


def sparse_test(sample: SparseSample, cfg: pace.SmootherConfig = pace.SmootherConfig(),
                fve: float = 0.95, draws: int = nulldist.DEFAULT_DRAWS,
                seed: Optional[int] = None, alpha: Optional[float] = None,
                K: Union[int, str] = "cv", cv_seed: Optional[int] = None,
                workers: int = 1) -> TestReport:
    """Concordance test on curves reconstructed by sparse FPCA.

    The statistic is computed from the reconstructions ``mu + sum_{k<=K}
    xi_k phi_k`` on the output grid, then tested exactly as in the dense case.
    """
    if seed is None:
        seed = new_seed()
    if cv_seed is None:
        cv_seed = seed
    model = pace.fit(sample, cfg, K=K, seed=cv_seed)
    predictor = pace.ScorePredictor(model, sample)
    curves = pace.reconstruct(model, predictor.all_scores())
    dense = DenseSample(model.grid, curves, sample.responses)
    report = dense_test(dense, fve=fve, draws=draws, seed=seed, alpha=alpha, workers=workers)
    diag = dict(report.diagnostics)
    diag.update(
        K=model.K,
        K_mode="cv" if K == "cv" else "fixed",
        sigma2=model.sigma2,
        output_grid_size=len(model.grid),
        bandwidths=list(model.bandwidths),
        ridged_subjects=predictor.ridged,
        statistic_label="T_hat_K",
    )
    return TestReport(report.statistic, report.eigenvalues_used, report.p_value,
                      report.p_value_mc_se, report.alpha_critical, diag)
