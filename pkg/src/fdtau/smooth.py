"""Local linear smoothers with an Epanechnikov kernel.

Observations are aggregated into bins (exact unique times when there are
few of them, otherwise equal-width bins located at their mean time). A
weighted local linear fit on bin sums is identical to the fit on the raw
points when each bin holds a single location, and the 2-D product-kernel
moments become separable matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import ValidationError


class BandwidthError(ValidationError):
    """The kernel window at some evaluation point holds too few data."""


def epanechnikov(u: np.ndarray) -> np.ndarray:
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


@dataclass(frozen=True)
class Bins:
    """Bin locations and the bin index of every pooled observation."""

    centers: np.ndarray
    index: np.ndarray

    @property
    def size(self) -> int:
        return self.centers.size


def make_bins(t: np.ndarray, max_bins: int = 200) -> Bins:
    t = np.asarray(t, dtype=float)
    uniq, inv = np.unique(t, return_inverse=True)
    if uniq.size <= max_bins:
        return Bins(uniq, inv)
    lo, hi = uniq[0], uniq[-1]
    idx = np.minimum(((t - lo) / (hi - lo) * max_bins).astype(int), max_bins - 1)
    used, idx = np.unique(idx, return_inverse=True)
    counts = np.bincount(idx)
    centers = np.bincount(idx, weights=t) / counts
    return Bins(centers, idx)


def bandwidth_candidates(span: float, count: int = 10) -> np.ndarray:
    """Geometric grid from ``span / 20`` to ``span / 2``."""
    return np.geomspace(span / 20.0, span / 2.0, count)


def local_linear_1d(u, counts, sums, x, h: float, strict: bool = True) -> np.ndarray:
    """Local linear fit at points ``x`` from binned data.

    ``counts[a]`` and ``sums[a]`` are the number of observations and the sum
    of responses in the bin at ``u[a]``. Points whose window holds fewer
    than two occupied bins raise :class:`BandwidthError` (``strict``) or
    yield ``nan``.
    """
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    d = (u[None, :] - x[:, None]) / h
    k = epanechnikov(d) * counts[None, :]
    s0 = k.sum(axis=1)
    s1 = (k * d).sum(axis=1)
    s2 = (k * d * d).sum(axis=1)
    r0 = epanechnikov(d) @ sums
    r1 = (epanechnikov(d) * d) @ sums
    det = s0 * s2 - s1 * s1
    support = np.count_nonzero(k > 0, axis=1)
    bad = (support < 2) | ~(det > 1e-12 * np.maximum(s0 * s0, 1e-300))
    if strict and np.any(bad):
        where = float(x[np.flatnonzero(bad)[0]])
        raise BandwidthError(
            f"bandwidth {h:.4g} too small: fewer than 2 pooled points near t={where:.4g}"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        fit = (s2 * r0 - s1 * r1) / det
    fit[bad] = np.nan
    return fit


def local_linear_2d(u, counts, sums, rows, cols, h: float, strict: bool = True) -> np.ndarray:
    """Local linear surface on the product grid ``rows x cols``.

    ``counts`` and ``sums`` are ``q x q`` cell aggregates at ``u x u``.
    Uses the product kernel ``K((s - s0)/h) K((t - t0)/h)``.
    """
    u = np.asarray(u, dtype=float)
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    dr = (u[None, :] - rows[:, None]) / h
    dc = (u[None, :] - cols[:, None]) / h
    kr = epanechnikov(dr)
    kc = epanechnikov(dc)
    a = [kr, kr * dr, kr * dr * dr]
    b = [kc, kc * dc, kc * dc * dc]

    def mom(p, q, cells):
        return a[p] @ cells @ b[q].T

    s00, s10, s01 = mom(0, 0, counts), mom(1, 0, counts), mom(0, 1, counts)
    s20, s11, s02 = mom(2, 0, counts), mom(1, 1, counts), mom(0, 2, counts)
    r0, r1, r2 = mom(0, 0, sums), mom(1, 0, sums), mom(0, 1, sums)

    # cofactors of the symmetric 3x3 normal matrix; only the intercept is needed
    c00 = s20 * s02 - s11 * s11
    c01 = s10 * s02 - s11 * s01
    c02 = s10 * s11 - s20 * s01
    det = s00 * c00 - s10 * c01 + s01 * c02
    bad = ~(det > 1e-10 * np.maximum(s00, 1e-300) ** 3)
    if strict and np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise BandwidthError(
            f"bandwidth {h:.4g} too small: covariance window near "
            f"({rows[i]:.4g}, {cols[j]:.4g}) is degenerate"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        fit = (c00 * r0 - c01 * r1 + c02 * r2) / det
    fit[bad] = np.nan
    return fit


def _fold_of_subject(n_subjects: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    folds = max(2, min(folds, n_subjects))
    return rng.permutation(np.arange(n_subjects) % folds)


def _one_se_bandwidth(candidates, errs: np.ndarray, what: str) -> float:
    """Largest bandwidth whose CV error is within one SE of the best.

    ``errs[c, f]`` is the held-out error of candidate ``c`` on fold ``f``;
    the SE comes from the fold-paired differences to the best candidate.
    Raw covariance products are so noisy that the CV curve is often flat,
    and the smoothest admissible choice is then the stable one.
    """
    total = errs.sum(axis=1)
    ok = np.isfinite(total)
    if not np.any(ok):
        raise BandwidthError(f"no candidate bandwidth supports the {what} smoother")
    best = int(np.argmin(np.where(ok, total, np.inf)))
    nf = errs.shape[1]
    within = np.zeros(len(total), bool)
    for c in np.flatnonzero(ok):
        diff = errs[c] - errs[best]
        se = np.sqrt(nf) * diff.std(ddof=1) if nf > 1 else 0.0
        within[c] = diff.sum() <= se
    return float(np.asarray(candidates)[np.flatnonzero(within)[-1]])


def cv_bandwidth_1d(bins: Bins, values, subject, candidates, folds: int, rng) -> float:
    """Subject-fold cross-validated bandwidth for the 1-D smoother."""
    values = np.asarray(values, dtype=float)
    subject = np.asarray(subject)
    fold = _fold_of_subject(int(subject.max()) + 1, folds, rng)[subject]
    nf = int(fold.max()) + 1
    q = bins.size
    key = fold * q + bins.index
    fc = np.bincount(key, minlength=nf * q).reshape(nf, q).astype(float)
    fs = np.bincount(key, weights=values, minlength=nf * q).reshape(nf, q)
    fss = np.bincount(key, weights=values * values, minlength=nf * q).reshape(nf, q)
    tc, ts = fc.sum(axis=0), fs.sum(axis=0)
    errs = np.full((len(candidates), nf), np.inf)
    for c, h in enumerate(candidates):
        for f in range(nf):
            pred = local_linear_1d(bins.centers, tc - fc[f], ts - fs[f], bins.centers, h, strict=False)
            need = fc[f] > 0
            if np.any(np.isnan(pred[need])):
                break
            p = pred[need]
            errs[c, f] = np.sum(fss[f, need] - 2 * p * fs[f, need] + fc[f, need] * p * p)
    return _one_se_bandwidth(candidates, errs, "mean")


def cv_bandwidth_2d(bins: Bins, ia, ib, values, subject, candidates, folds: int, rng) -> float:
    """Subject-fold cross-validated bandwidth for the covariance surface."""
    values = np.asarray(values, dtype=float)
    subject = np.asarray(subject)
    fold = _fold_of_subject(int(subject.max()) + 1, folds, rng)[subject]
    nf = int(fold.max()) + 1
    q = bins.size
    key = (fold * q + ia) * q + ib
    size = nf * q * q
    fc = np.bincount(key, minlength=size).reshape(nf, q, q).astype(float)
    fs = np.bincount(key, weights=values, minlength=size).reshape(nf, q, q)
    fss = np.bincount(key, weights=values * values, minlength=size).reshape(nf, q, q)
    tc, ts = fc.sum(axis=0), fs.sum(axis=0)
    errs = np.full((len(candidates), nf), np.inf)
    for c, h in enumerate(candidates):
        for f in range(nf):
            pred = local_linear_2d(bins.centers, tc - fc[f], ts - fs[f],
                                   bins.centers, bins.centers, h, strict=False)
            need = fc[f] > 0
            p = pred[need]
            if np.any(np.isnan(p)):
                break
            errs[c, f] = np.sum(fss[f][need] - 2 * p * fs[f][need] + fc[f][need] * p * p)
    return _one_se_bandwidth(candidates, errs, "covariance")


def rotated_diagonal(u, counts, sums, x, h: float, h_along: Optional[float] = None) -> np.ndarray:
    """Surface values on the diagonal ``(x, x)`` from off-diagonal cells.

    Fits ``b0 + b1 (m - x) + b2 v^2`` with ``m = (s + t) / 2`` and
    ``v = s - t``, kernel-weighted in both directions. The quadratic term
    absorbs curvature across the diagonal, which a plain local linear
    surface turns into bias exactly where the noise variance is read off.
    ``h_along`` (default ``h``) is the bandwidth along the diagonal.
    Points with a degenerate window are returned as ``nan``.
    """
    if h_along is None:
        h_along = h
    u = np.asarray(u, dtype=float)
    a, b = np.nonzero(counts)
    c = counts[a, b]
    ysum = sums[a, b]
    mid = (u[a] + u[b]) / 2
    v2 = ((u[a] - u[b]) / h) ** 2
    x = np.asarray(x, dtype=float)
    dm = (mid[None, :] - x[:, None]) / h_along
    w = epanechnikov(dm) * epanechnikov(np.sqrt(v2))[None, :]
    cols = [np.ones_like(dm), dm, np.broadcast_to(v2, dm.shape)]
    mat = np.empty((x.size, 3, 3))
    rhs = np.empty((x.size, 3))
    for i in range(3):
        rhs[:, i] = (w * cols[i]) @ ysum
        for j in range(i, 3):
            mat[:, i, j] = mat[:, j, i] = (w * cols[i] * cols[j]) @ c
    det = np.linalg.det(mat)
    s0 = mat[:, 0, 0]
    bad = ~(det > 1e-10 * np.maximum(s0, 1e-300) ** 3)
    mat[bad] = np.eye(3)
    out = np.linalg.solve(mat, rhs[..., None])[:, 0, 0]
    out[bad] = np.nan
    return out
