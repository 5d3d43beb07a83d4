"""Sparse functional PCA through conditional expectation.

Pipeline: pooled local linear mean, 2-D local linear smoothing of raw
within-subject cross products (diagonal excluded), noise variance from the
diagonal gap, quadrature eigen-decomposition, and best linear predictors
of the component scores given each subject's noisy observations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .domain import (
    FpcaModel,
    Grid,
    NumericalError,
    SparseSample,
    Subject,
    ValidationError,
)
from .smooth import (
    BandwidthError,
    bandwidth_candidates,
    cv_bandwidth_1d,
    cv_bandwidth_2d,
    local_linear_1d,
    local_linear_2d,
    make_bins,
    rotated_diagonal,
)

RIDGE_CONDITION = 1e12
RIDGE_SCALE = 1e-8
MIN_POOLED = 10


@dataclass(frozen=True)
class SmootherConfig:
    """Smoothing choices; ``"auto"`` bandwidths are picked by 5-fold CV."""

    mean_bandwidth: Union[float, str] = "auto"
    cov_bandwidth: Union[float, str] = "auto"
    output_grid_size: int = 51
    kernel: str = "epanechnikov"
    diag_exclusion: bool = True
    cv_folds: int = 5
    n_bandwidths: int = 10
    max_bins: int = 200

    def __post_init__(self):
        for name in ("mean_bandwidth", "cov_bandwidth"):
            bw = getattr(self, name)
            if bw != "auto" and not (isinstance(bw, (int, float)) and bw > 0):
                raise ValidationError(f"{name} must be positive or 'auto'")
        if self.output_grid_size < 10:
            raise ValidationError("output_grid_size must be at least 10")
        if self.kernel != "epanechnikov":
            raise ValidationError("only the Epanechnikov kernel is supported")

    @property
    def grid(self) -> Grid:
        return Grid.uniform(self.output_grid_size)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _span(t: np.ndarray) -> float:
    span = float(t.max() - t.min())
    return span if span > 0 else 1.0


def _pick_bandwidth(setting, cv, candidates):
    if setting != "auto":
        return float(setting), None
    return cv(), candidates


def _smooth_on_grid_1d(bins, counts, sums, grid, h, chosen_from):
    """Evaluate on the output grid, widening an auto bandwidth if needed."""
    try:
        return local_linear_1d(bins.centers, counts, sums, grid, h), h
    except BandwidthError:
        if chosen_from is None:
            raise
        for cand in chosen_from[chosen_from > h]:
            try:
                return local_linear_1d(bins.centers, counts, sums, grid, cand), float(cand)
            except BandwidthError:
                continue
        raise


def _mean_and_bandwidth(sample: SparseSample, cfg: SmootherConfig, seed=0):
    subj, t, v = sample.pooled()
    if t.size < MIN_POOLED:
        raise ValidationError(f"at least {MIN_POOLED} pooled observations required")
    bins = make_bins(t, cfg.max_bins)
    counts = np.bincount(bins.index, minlength=bins.size).astype(float)
    sums = np.bincount(bins.index, weights=v, minlength=bins.size)
    cands = bandwidth_candidates(_span(t), cfg.n_bandwidths)
    h, chosen_from = _pick_bandwidth(
        cfg.mean_bandwidth,
        lambda: cv_bandwidth_1d(bins, v, subj, cands, cfg.cv_folds, _rng(seed)),
        cands,
    )
    mean, h = _smooth_on_grid_1d(bins, counts, sums, cfg.grid.points, h, chosen_from)
    return mean, h


def estimate_mean(sample: SparseSample, cfg: SmootherConfig = SmootherConfig(), seed=0) -> np.ndarray:
    """Pooled local linear estimate of the mean curve on the output grid."""
    return _mean_and_bandwidth(sample, cfg, seed)[0]


def _raw_pairs(sample: SparseSample, resid_by_subject, include_diagonal: bool):
    """Ordered within-subject pairs ``(j, l)`` as pooled observation indices."""
    subj, ja_all, jb_all, prod = [], [], [], []
    start = 0
    for i, (s, r) in enumerate(zip(sample.subjects, resid_by_subject)):
        k = len(s)
        ja, jb = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        keep = np.ones((k, k), bool) if include_diagonal else ja != jb
        ja, jb = ja[keep], jb[keep]
        if ja.size:
            subj.append(np.full(ja.size, i))
            ja_all.append(start + ja)
            jb_all.append(start + jb)
            prod.append(r[ja] * r[jb])
        start += k
    if not subj:
        raise ValidationError("covariance unidentifiable: no within-subject pairs")
    return (np.concatenate(subj), np.concatenate(ja_all), np.concatenate(jb_all),
            np.concatenate(prod))


def _covariance(sample: SparseSample, mean, cfg: SmootherConfig, seed=0):
    grid = cfg.grid
    g = grid.points
    mean = np.asarray(mean, dtype=float)
    if mean.shape != g.shape:
        raise ValidationError("mean must be given on the output grid")
    if not np.any(sample.counts >= 2):
        raise ValidationError("covariance unidentifiable: no within-subject pairs")
    resid = [s.values - np.interp(s.times, g, mean) for s in sample.subjects]
    subj, ja, jb, prod = _raw_pairs(sample, resid, include_diagonal=not cfg.diag_exclusion)

    _, t_all, _ = sample.pooled()
    bins = make_bins(t_all, cfg.max_bins)
    ia, ib = bins.index[ja], bins.index[jb]
    q = bins.size
    cells = np.bincount(ia * q + ib, minlength=q * q).reshape(q, q).astype(float)
    sums = np.bincount(ia * q + ib, weights=prod, minlength=q * q).reshape(q, q)

    cands = bandwidth_candidates(_span(t_all), cfg.n_bandwidths)
    h, chosen_from = _pick_bandwidth(
        cfg.cov_bandwidth,
        lambda: cv_bandwidth_2d(bins, ia, ib, prod, subj, cands, cfg.cv_folds, _rng(seed)),
        cands,
    )
    surface = None
    tried = [h] if chosen_from is None else [h] + [float(c) for c in chosen_from if c > h]
    for cand in tried:
        try:
            surface = local_linear_2d(bins.centers, cells, sums, g, g, cand)
            h = cand
            break
        except BandwidthError:
            if cand == tried[-1]:
                raise
    surface = (surface + surface.T) / 2

    # noise variance from the gap between the smoothed raw variances and the surface
    r_all = np.concatenate(resid)
    dcounts = np.bincount(bins.index, minlength=q).astype(float)
    dsums = np.bincount(bins.index, weights=r_all * r_all, minlength=q)
    diag, _ = _smooth_on_grid_1d(bins, dcounts, dsums, g, h, chosen_from)
    surface_diag = np.diag(surface)
    if cfg.diag_exclusion:
        rot = rotated_diagonal(bins.centers, cells, sums, g, h)
        surface_diag = np.where(np.isnan(rot), surface_diag, rot)
    gap = diag - surface_diag
    central = (g >= 0.25) & (g <= 0.75)
    gc = g[central]
    if gc.size >= 2:
        w = np.zeros(gc.size)
        w[:-1] += np.diff(gc) / 2
        w[1:] += np.diff(gc) / 2
        sigma2 = float(np.dot(w, gap[central]) / w.sum())
    else:
        sigma2 = float(gap[central].mean()) if gc.size else float(gap.mean())
    return surface, max(sigma2, 0.0), h


def estimate_covariance(sample: SparseSample, mean, cfg: SmootherConfig = SmootherConfig(), seed=0):
    """Smoothed covariance surface on the output grid and noise variance."""
    surface, sigma2, _ = _covariance(sample, mean, cfg, seed)
    return surface, sigma2


def eigendecompose(surface, grid: Grid, K_max: Optional[int] = None):
    """Eigenpairs of the integral operator with kernel ``surface``.

    Discretized with trapezoid weights ``Q`` and symmetrized as
    ``Q^1/2 S Q^1/2``. Eigenfunctions have unit quadrature norm and a sign
    making ``int phi >= 0`` (or, when that integral vanishes, the first
    clearly nonzero coordinate positive).
    """
    s = np.asarray(surface, dtype=float)
    g = len(grid)
    if s.shape != (g, g):
        raise ValidationError("surface shape does not match grid")
    K_max = g if K_max is None else int(K_max)
    if not 1 <= K_max <= g:
        raise ValidationError("K_max exceeds grid size")
    q = grid.weights
    sq = np.sqrt(q)
    if np.any(sq == 0):
        raise ValidationError("degenerate quadrature weights")
    mat = sq[:, None] * ((s + s.T) / 2) * sq[None, :]
    vals, vecs = np.linalg.eigh(mat)
    vals, vecs = vals[::-1][:K_max], vecs[:, ::-1][:, :K_max]
    phi = (vecs / sq[:, None]).T
    for k in range(K_max):
        integral = float(np.dot(q, phi[k]))
        if abs(integral) >= 1e-8:
            flip = integral < 0
        else:
            big = np.flatnonzero(np.abs(phi[k]) > 1e-8 * np.abs(phi[k]).max())
            flip = phi[k, big[0]] < 0
        if flip:
            phi[k] = -phi[k]
    return np.clip(vals, 0.0, None), phi


class ScorePredictor:
    """Conditional-expectation score predictor for a fitted model.

    For subject ``i`` with residual vector ``r_i = G_i - mu_i`` the scores are
    ``Gamma Phi_i^T Sigma_i^-1 r_i`` with
    ``Sigma_i = Phi_i Gamma Phi_i^T + sigma2 I``. The ``K x N_i`` maps
    ``Gamma Phi_i^T Sigma_i^-1`` are computed once per subject, batched over
    subjects sharing the same ``N_i``.
    """

    def __init__(self, model: FpcaModel, sample: SparseSample, K: Optional[int] = None):
        self.model = model
        self.K = model.K if K is None else int(K)
        if not 1 <= self.K <= model.eigenvalues.size:
            raise ValidationError("K out of range for the fitted model")
        g = model.grid.points
        gam = model.eigenvalues[: self.K]
        phis = model.eigenfunctions[: self.K]
        self._maps = [None] * sample.n
        self._resid = [None] * sample.n
        self.ridged = 0
        counts = sample.counts
        for size in np.unique(counts):
            members = np.flatnonzero(counts == size)
            times = np.stack([sample.subjects[i].times for i in members])
            vals = np.stack([sample.subjects[i].values for i in members])
            mu = np.interp(times, g, model.mean)
            phi_i = np.stack([np.interp(times, g, p) for p in phis], axis=-1)
            sigma = np.einsum("bjk,k,blk->bjl", phi_i, gam, phi_i)
            sigma += model.sigma2 * np.eye(size)
            sigma = self._regularize(sigma)
            try:
                inv = np.linalg.inv(sigma)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("subject covariance is singular even after ridge") from exc
            if not np.all(np.isfinite(inv)):
                raise NumericalError("subject covariance is singular even after ridge")
            maps = gam[None, :, None] * np.einsum("bjk,bjl->bkl", phi_i, inv)
            for b, i in enumerate(members):
                self._maps[i] = maps[b]
                self._resid[i] = vals[b] - mu[b]

    def _regularize(self, sigma: np.ndarray) -> np.ndarray:
        size = sigma.shape[-1]
        cond = np.linalg.cond(sigma)
        ill = ~(cond <= RIDGE_CONDITION)
        if np.any(ill):
            self.ridged += int(np.count_nonzero(ill))
            tr = np.trace(sigma, axis1=1, axis2=2)
            ridge = RIDGE_SCALE * np.where(tr > 0, tr, 1.0) / size
            sigma = sigma.copy()
            idx = np.arange(size)
            sigma[np.flatnonzero(ill)[:, None], idx, idx] += ridge[ill][:, None]
        return sigma

    def scores(self, i: int) -> np.ndarray:
        return self._maps[i] @ self._resid[i]

    def all_scores(self) -> np.ndarray:
        return np.stack([self.scores(i) for i in range(len(self._maps))])


def conditional_scores(predictor: ScorePredictor, i: int) -> np.ndarray:
    """Predicted scores of subject ``i`` for components ``1..K``."""
    return predictor.scores(i)


def reconstruct(model: FpcaModel, scores) -> np.ndarray:
    """Curves ``mu + sum_k xi_ik phi_k`` on the model's output grid."""
    xi = np.atleast_2d(np.asarray(scores, dtype=float))
    K = xi.shape[1]
    if K < 1 or K > model.eigenfunctions.shape[0]:
        raise ValidationError("score dimension does not match the model")
    return model.mean[None, :] + xi @ model.eigenfunctions[:K]


def _fit_components(sample: SparseSample, cfg: SmootherConfig, K_max: int, seed=0):
    mean, h_mean = _mean_and_bandwidth(sample, cfg, seed)
    surface, sigma2, h_cov = _covariance(sample, mean, cfg, seed)
    vals, phi = eigendecompose(surface, cfg.grid)
    total = float(vals.sum())
    return FpcaModel(cfg.grid, mean, vals[:K_max], phi[:K_max], sigma2, 1,
                     total, (h_mean, h_cov))


def default_candidates(cfg: SmootherConfig) -> list:
    return list(range(1, min(10, cfg.output_grid_size - 1) + 1))


def _check_candidates(K_candidates, cfg) -> list:
    cands = sorted({int(k) for k in K_candidates})
    if not cands:
        raise ValidationError("K_candidates is empty")
    if cands[0] < 1 or cands[-1] > cfg.output_grid_size:
        raise ValidationError("K candidates must lie in 1..output_grid_size")
    return cands


def _cv_errors(sample, cfg, cands, seed, fixed=None):
    rng = _rng(seed)
    counts = sample.counts
    eligible = np.flatnonzero(counts >= 2)
    if eligible.size == 0:
        raise ValidationError("cross-validation needs a subject with at least 2 observations")
    held = {int(i): int(rng.integers(counts[i])) for i in eligible}
    kept, held_t, held_v, held_rows = [], [], [], []
    for i, s in enumerate(sample.subjects):
        if i in held:
            mask = np.ones(len(s), bool)
            mask[held[i]] = False
            kept.append(Subject(s.times[mask], s.values[mask]))
            held_t.append(s.times[held[i]])
            held_v.append(s.values[held[i]])
            held_rows.append(i)
        else:
            kept.append(s)
    train = SparseSample(tuple(kept), sample.responses)
    if fixed is not None:
        cfg = replace(cfg, mean_bandwidth=fixed[0], cov_bandwidth=fixed[1])
    model = _fit_components(train, cfg, max(cands), seed)
    g = model.grid.points
    held_t = np.asarray(held_t)
    held_v = np.asarray(held_v)
    mu = np.interp(held_t, g, model.mean)
    phi_at = np.stack([np.interp(held_t, g, p) for p in model.eigenfunctions])
    errors = []
    for K in cands:
        pred = ScorePredictor(model.with_K(K), train, K)
        xi = np.stack([pred.scores(i) for i in held_rows])
        fitted = mu + np.einsum("ik,ki->i", xi, phi_at[:K])
        errors.append((held_v - fitted) ** 2)
    return np.asarray(errors)


def _one_se_choice(cands, sq_errors) -> int:
    """Smallest candidate within one standard error of the best CV error."""
    mse = sq_errors.mean(axis=1)
    best = int(np.argmin(mse))
    se = sq_errors[best].std(ddof=1) / np.sqrt(sq_errors.shape[1]) if sq_errors.shape[1] > 1 else 0.0
    return cands[int(np.flatnonzero(mse <= mse[best] + se)[0])]


def select_K(sample: SparseSample, cfg: SmootherConfig = SmootherConfig(),
             K_candidates: Optional[Sequence[int]] = None, seed=0, _bandwidths=None) -> int:
    """Number of components by leave-one-observation-out cross-validation.

    One randomly chosen observation per subject with ``N_i >= 2`` is held
    out, the model is refitted on the rest, and each candidate ``K``
    predicts the held-out values. CV errors that differ from the smallest
    by less than its standard error count as ties, and ties go to the
    smaller ``K``.
    """
    cands = _check_candidates(default_candidates(cfg) if K_candidates is None else K_candidates, cfg)
    if len(cands) == 1:
        return cands[0]
    return _one_se_choice(cands, _cv_errors(sample, cfg, cands, seed, _bandwidths))


def fit(sample: SparseSample, cfg: SmootherConfig = SmootherConfig(),
        K: Union[int, str] = "cv", K_candidates: Optional[Sequence[int]] = None,
        seed=0) -> FpcaModel:
    """Fit mean, covariance, noise variance and eigenpairs; choose ``K``."""
    if K == "cv":
        cands = _check_candidates(default_candidates(cfg) if K_candidates is None else K_candidates, cfg)
        K_max = max(cands)
    else:
        K = int(K)
        if not 1 <= K <= cfg.output_grid_size:
            raise ValidationError("K must lie in 1..output_grid_size")
        K_max = K
    model = _fit_components(sample, cfg, K_max, seed)
    if K == "cv":
        K = select_K(sample, cfg, cands, seed, _bandwidths=model.bandwidths)
    return model.with_K(K)
