"""Core data types and validation.

All sample types are immutable: arrays are copied on construction and
marked read-only. Times are always stored on the unit interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when input data violates a sample invariant."""


class NumericalError(ArithmeticError):
    """Raised when a computation breaks down numerically."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoidal quadrature weights for an ordered set of nodes."""
    t = np.asarray(points, dtype=float)
    w = np.zeros_like(t)
    if t.size < 2:
        return w
    dt = np.diff(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def rescale(values, lo: float, hi: float) -> np.ndarray:
    """Affine map of ``[lo, hi]`` onto ``[0, 1]``."""
    v = np.asarray(values, dtype=float)
    if lo == 0.0 and hi == 1.0:
        return v.copy()
    return (v - lo) / (hi - lo)


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size < 2:
            raise ValidationError("grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("grid contains non-finite values")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("grid not strictly increasing")
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise ValidationError("grid points must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_weights", _frozen(trapezoid_weights(pts)))

    @classmethod
    def uniform(cls, size: int) -> "Grid":
        return cls(np.linspace(0.0, 1.0, size))

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True, eq=False)
class DenseSample:
    """``n`` curves on a shared grid together with their scalar responses."""

    grid: Grid
    curves: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        curves = _frozen(self.curves)
        responses = _frozen(self.responses)
        if curves.ndim != 2 or curves.shape[1] != len(self.grid):
            raise ValidationError("curve matrix must be n x m with m = grid size")
        if curves.shape[0] < 2:
            raise ValidationError("n >= 2 required")
        if responses.shape != (curves.shape[0],):
            raise ValidationError("response length mismatch")
        if not np.all(np.isfinite(curves)) or not np.all(np.isfinite(responses)):
            raise ValidationError("non-finite entries")
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "responses", responses)

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    @property
    def m(self) -> int:
        return self.curves.shape[1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DenseSample)
            and self.grid == other.grid
            and np.array_equal(self.curves, other.curves)
            and np.array_equal(self.responses, other.responses)
        )


@dataclass(frozen=True, eq=False)
class Subject:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "values", _frozen(self.values))

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Subject)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class SparseSample:
    """Irregular per-subject observations ``(T_ij, G_ij)`` plus responses."""

    subjects: tuple
    responses: np.ndarray
    ids: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "responses", _frozen(self.responses))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(s) for s in self.subjects], dtype=int)

    def pooled(self):
        """Return ``(subject_index, times, values)`` for all observations."""
        idx = np.repeat(np.arange(self.n), self.counts)
        t = np.concatenate([s.times for s in self.subjects])
        v = np.concatenate([s.values for s in self.subjects])
        return idx, t, v

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SparseSample)
            and len(self.subjects) == len(other.subjects)
            and all(a == b for a, b in zip(self.subjects, other.subjects))
            and np.array_equal(self.responses, other.responses)
        )


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    grid: Grid
    projections: np.ndarray

    def __post_init__(self):
        w = _frozen(self.projections)
        if w.ndim != 2 or w.shape[1] != len(self.grid):
            raise ValidationError("projection matrix must be n x m")
        if np.any(np.abs(w) > 0.5):
            raise ValidationError("projection values must lie in [-0.5, 0.5]")
        object.__setattr__(self, "projections", w)

    @property
    def n(self) -> int:
        return self.projections.shape[0]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ordered eigenvalues with the variance-explained truncation ``d``."""

    eigenvalues: np.ndarray
    d: int
    fve: float
    degenerate: bool = False

    def __post_init__(self):
        ev = _frozen(self.eigenvalues)
        if ev.ndim != 1 or ev.size == 0:
            raise ValidationError("spectrum needs at least one eigenvalue")
        if np.any(ev < 0) or np.any(np.diff(ev) > 0):
            raise ValidationError("eigenvalues must be nonnegative and descending")
        if not 1 <= self.d <= ev.size:
            raise ValidationError("truncation d out of range")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def retained(self) -> np.ndarray:
        return self.eigenvalues[: self.d]


@dataclass(frozen=True, eq=False)
class FpcaModel:
    """Fitted sparse FPCA model on an output grid.

    ``eigenfunctions`` holds one row per retained component (up to the
    largest candidate considered); ``K`` is the number actually used.
    ``total_variance`` is the sum of all nonnegative eigenvalues of the
    smoothed covariance surface, so ``eigenvalues[:k].sum() / total_variance``
    is the fraction of variance explained by ``k`` components.
    """

    grid: Grid
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    sigma2: float
    K: int
    total_variance: float = float("nan")
    bandwidths: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "eigenfunctions", _frozen(np.atleast_2d(self.eigenfunctions)))
        if self.sigma2 < 0:
            raise ValidationError("sigma2 must be nonnegative")
        if not 1 <= self.K <= self.eigenvalues.size:
            raise ValidationError("K out of range")

    def fve(self, k: Optional[int] = None) -> float:
        k = self.K if k is None else k
        return float(self.eigenvalues[:k].sum() / self.total_variance)

    def with_K(self, K: int) -> "FpcaModel":
        return FpcaModel(
            self.grid, self.mean, self.eigenvalues, self.eigenfunctions,
            self.sigma2, K, self.total_variance, self.bandwidths,
        )


@dataclass(frozen=True)
class TestReport:
    statistic: float
    eigenvalues_used: Spectrum
    p_value: float
    p_value_mc_se: float
    alpha_critical: Optional[float] = None
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValidationError("p-value outside [0, 1]")
        if self.statistic < 0:
            raise ValidationError("statistic must be nonnegative")


def validate_dense(curves, responses, grid: Optional[Sequence[float]] = None) -> DenseSample:
    """Validate raw rows and responses into a :class:`DenseSample`.

    ``grid`` defaults to equally spaced points. Any strictly increasing grid
    is mapped affinely onto ``[0, 1]``.
    """
    try:
        rows = np.array(curves, dtype=float)
    except ValueError as exc:
        raise ValidationError("non-rectangular input") from exc
    if rows.ndim != 2:
        raise ValidationError("non-rectangular input")
    y = np.asarray(responses, dtype=float).ravel()
    if rows.shape[0] < 2:
        raise ValidationError("n >= 2 required")
    if y.size != rows.shape[0]:
        raise ValidationError("response length mismatch")
    if grid is None:
        pts = np.linspace(0.0, 1.0, rows.shape[1])
    else:
        pts = np.asarray(grid, dtype=float).ravel()
        if pts.size != rows.shape[1]:
            raise ValidationError("grid length does not match curve length")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("non-finite grid values")
        if pts.size < 2 or np.any(np.diff(pts) <= 0):
            raise ValidationError("grid not strictly increasing")
        pts = rescale(pts, pts[0], pts[-1])
    return DenseSample(Grid(pts), rows, y)


def validate_sparse(records, responses=None, domain: Optional[Sequence[float]] = None,
                    ids: Optional[Sequence] = None) -> SparseSample:
    """Validate per-subject ``(times, values)`` records into a :class:`SparseSample`.

    Times are sorted per subject and rescaled from ``domain`` (default: the
    pooled range of observed times) onto ``[0, 1]``. Passing an existing
    :class:`SparseSample` re-validates it on its own unit domain.
    """
    if isinstance(records, SparseSample):
        sample = records
        records = sample.subjects
        responses = sample.responses if responses is None else responses
        domain = (0.0, 1.0) if domain is None else domain
        ids = sample.ids if ids is None else ids
    if responses is None:
        raise ValidationError("responses are required")
    records = list(records)
    y = np.asarray(responses, dtype=float).ravel()
    if y.size != len(records):
        raise ValidationError("response length mismatch")
    if len(records) < 2:
        raise ValidationError("n >= 2 required")
    if not np.all(np.isfinite(y)):
        raise ValidationError("non-finite responses")

    parsed = []
    for i, rec in enumerate(records):
        if isinstance(rec, Subject):
            t, v = rec.times, rec.values
        elif isinstance(rec, Mapping):
            t, v = rec["times"], rec["values"]
        else:
            t, v = rec
        t = np.asarray(t, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        if t.size != v.size:
            raise ValidationError(f"subject {i}: times and values differ in length")
        if t.size == 0:
            raise ValidationError(f"subject {i} has no observations")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValidationError(f"subject {i}: non-finite entries")
        order = np.argsort(t, kind="stable")
        t, v = t[order], v[order]
        if np.any(np.diff(t) == 0):
            raise ValidationError(f"subject {i}: duplicate observation time")
        parsed.append((t, v))

    if domain is None:
        lo = min(t[0] for t, _ in parsed)
        hi = max(t[-1] for t, _ in parsed)
    else:
        lo, hi = map(float, domain)
    if not hi > lo:
        raise ValidationError("observation domain has zero length")

    subjects = []
    for i, (t, v) in enumerate(parsed):
        s = rescale(t, lo, hi)
        if s[0] < 0.0 or s[-1] > 1.0:
            raise ValidationError(f"subject {i}: times outside domain")
        subjects.append(Subject(s, v))
    if all(len(s) < 2 for s in subjects):
        raise ValidationError("covariance unidentifiable: every subject has a single observation")
    return SparseSample(tuple(subjects), y, None if ids is None else tuple(ids))
