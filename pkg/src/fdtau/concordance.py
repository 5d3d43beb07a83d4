"""Pointwise Kendall concordance curves, Hajek projections and their spectrum.

Concordance of a pair ``(i, j)`` at grid point ``t`` means
``sign(Y_i - Y_j) * sign(X_i(t) - X_j(t)) > 0``. Signs are compared rather
than the raw product so that tiny differences cannot underflow to a tie.
Pairs tied in either coordinate contribute zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DenseSample, Grid, ProjectionSet, Spectrum, ValidationError

# fraction of tied pairs at any grid point above which a warning is raised
TIE_WARNING_FRACTION = 0.05


@dataclass(frozen=True)
class PairCounts:
    """Exact integer pair counts per grid point."""

    concordant: np.ndarray
    tied: np.ndarray
    n_pairs: int

    @property
    def tie_fraction(self) -> np.ndarray:
        return self.tied / self.n_pairs


def _centered(concordant: np.ndarray, n_pairs: int) -> np.ndarray:
    # shared final arithmetic for the naive and fast paths; the integer
    # numerator makes the result exactly antisymmetric under c -> N - c
    num = 2 * np.asarray(concordant, dtype=np.int64) - n_pairs
    return num.astype(np.float64) / float(2 * n_pairs)


def naive_pair_counts(y: np.ndarray, x: np.ndarray) -> PairCounts:
    """Concordant and tied pair counts by direct enumeration of ``i < j``."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n, m = x.shape
    conc = np.zeros(m, dtype=np.int64)
    tied = np.zeros(m, dtype=np.int64)
    for i in range(n - 1):
        sy = np.sign(y[i] - y[i + 1:])[:, None]
        sx = np.sign(x[i] - x[i + 1:])
        s = sy * sx
        conc += np.count_nonzero(s > 0, axis=0)
        tied += np.count_nonzero(s == 0, axis=0)
    return PairCounts(conc, tied, n * (n - 1) // 2)


def _dense_ranks(a: np.ndarray) -> np.ndarray:
    """Dense 0-based ranks along axis 0 (ties share a rank)."""
    order = np.argsort(a, axis=0, kind="stable")
    s = np.take_along_axis(a, order, axis=0)
    steps = np.zeros(s.shape, dtype=np.int64)
    steps[1:] = s[1:] > s[:-1]
    ranks_sorted = np.cumsum(steps, axis=0)
    ranks = np.empty_like(ranks_sorted)
    np.put_along_axis(ranks, order, ranks_sorted, axis=0)
    return ranks


def _tied_pairs_sorted(s: np.ndarray) -> np.ndarray:
    """Number of tied pairs in each column of an axis-0 sorted array."""
    n, m = s.shape
    out = np.zeros(m, dtype=np.int64)
    if n < 2:
        return out
    brk = np.ones((n + 1, m), dtype=bool)
    brk[1:n] = s[1:] != s[:-1]
    for c in range(m):
        runs = np.diff(np.flatnonzero(brk[:, c]))
        out[c] = int(np.sum(runs * (runs - 1) // 2))
    return out


def count_inversions(seq: np.ndarray) -> np.ndarray:
    """Strict inversions ``#{i < j : a_i > a_j}`` in every row of ``seq``.

    Bottom-up merge sort vectorized across rows: at each level the right
    half of every block is located in its sorted left half with a single
    global ``searchsorted`` (blocks are separated by key offsets).
    Values must be nonnegative integers.
    """
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim == 1:
        seq = seq[None, :]
    rows, n = seq.shape
    if n < 2:
        return np.zeros(rows, dtype=np.int64)
    size = 1 << (n - 1).bit_length()
    pad_value = int(seq.max()) + 1
    arr = np.full((rows, size), pad_value, dtype=np.int64)
    arr[:, :n] = seq
    stride = pad_value + 1
    inv = np.zeros(rows, dtype=np.int64)
    w = 1
    while w < size:
        blocks = arr.reshape(rows, size // (2 * w), 2, w)
        left = blocks[:, :, 0, :]
        right = blocks[:, :, 1, :]
        groups = rows * (size // (2 * w))
        offs = (np.arange(groups, dtype=np.int64) * stride).reshape(rows, -1, 1)
        lkeys = (left + offs).ravel()
        rkeys = (right + offs).ravel()
        pos = np.searchsorted(lkeys, rkeys, side="right").reshape(rows, -1, w)
        start = (np.arange(groups, dtype=np.int64) * w).reshape(rows, -1, 1)
        not_greater = pos - start
        inv += (w - not_greater).reshape(rows, -1).sum(axis=1)
        arr = np.sort(blocks.reshape(rows, size // (2 * w), 2 * w), axis=-1).reshape(rows, size)
        w *= 2
    return inv


def fast_pair_counts(y: np.ndarray, x: np.ndarray) -> PairCounts:
    """Concordant and tied pair counts in ``O(m n log^2 n)`` vectorized time.

    Per grid point, subjects are ordered by ``(Y, X(t))`` and discordant
    pairs are the strict inversions of the resulting ``X(t)`` rank sequence.
    Concordant = all - tiedY - tiedX + tiedBoth - discordant.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n, m = x.shape
    n_pairs = n * (n - 1) // 2
    ry = _dense_ranks(y[:, None])[:, 0]
    rx = _dense_ranks(x)
    key = ry[:, None] * n + rx
    order = np.argsort(key, axis=0, kind="stable")
    seq = np.take_along_axis(rx, order, axis=0)
    disc = count_inversions(seq.T)

    tied_y = _tied_pairs_sorted(np.sort(ry)[:, None])[0]
    tied_x = _tied_pairs_sorted(np.sort(rx, axis=0))
    tied_both = _tied_pairs_sorted(np.take_along_axis(key, order, axis=0))
    conc = n_pairs - tied_y - tied_x + tied_both - disc
    tied = tied_y + tied_x - tied_both
    return PairCounts(conc.astype(np.int64), tied.astype(np.int64), n_pairs)


def u_curve(sample: DenseSample) -> np.ndarray:
    """Centered concordance curve ``U_n(t)`` by direct pair enumeration."""
    pc = naive_pair_counts(sample.responses, sample.curves)
    return _centered(pc.concordant, pc.n_pairs)


def u_curve_fast(sample: DenseSample) -> np.ndarray:
    """Same values as :func:`u_curve`, bitwise, via inversion counting."""
    pc = fast_pair_counts(sample.responses, sample.curves)
    return _centered(pc.concordant, pc.n_pairs)


def statistic_T(u, grid: Grid) -> float:
    """Squared L2 norm of the concordance curve, trapezoidal rule."""
    u = np.asarray(u, dtype=float)
    if u.shape != (len(grid),):
        raise ValidationError("length mismatch between curve and grid")
    return float(np.dot(grid.weights, u * u))


def smaller_before(seq: np.ndarray) -> np.ndarray:
    """Per position ``k``, the count ``#{i < k : a_i < a_k}`` in each row.

    Same merge scheme as :func:`count_inversions`, carrying original
    positions through each merge so counts land on the right element.
    """
    seq = np.asarray(seq, dtype=np.int64)
    rows, n = seq.shape
    out = np.zeros((rows, n), dtype=np.int64)
    if n < 2:
        return out
    size = 1 << (n - 1).bit_length()
    pad_value = int(seq.max()) + 1
    vals = np.full((rows, size), pad_value, dtype=np.int64)
    vals[:, :n] = seq
    pos = np.broadcast_to(np.arange(size, dtype=np.int64), (rows, size)).copy()
    acc = np.zeros((rows, size), dtype=np.int64)
    row_idx = np.arange(rows)[:, None]
    stride = pad_value + 1
    w = 1
    while w < size:
        nb = size // (2 * w)
        v = vals.reshape(rows, nb, 2, w)
        p = pos.reshape(rows, nb, 2, w)
        groups = rows * nb
        offs = (np.arange(groups, dtype=np.int64) * stride).reshape(rows, nb, 1)
        lkeys = (v[:, :, 0, :] + offs).ravel()
        rkeys = (v[:, :, 1, :] + offs).ravel()
        below = np.searchsorted(lkeys, rkeys, side="left").reshape(rows, nb, w)
        below -= (np.arange(groups, dtype=np.int64) * w).reshape(rows, nb, 1)
        acc[row_idx, p[:, :, 1, :].reshape(rows, -1)] += below.reshape(rows, -1)
        v2 = v.reshape(rows, nb, 2 * w)
        order = np.argsort(v2, axis=-1, kind="stable")
        vals = np.take_along_axis(v2, order, axis=-1).reshape(rows, size)
        pos = np.take_along_axis(p.reshape(rows, nb, 2 * w), order, axis=-1).reshape(rows, size)
        w *= 2
    return acc[:, :n]


def naive_projection_counts(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Concordant-partner counts per subject and grid point, all pairs."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n, m = x.shape
    counts = np.empty((n, m), dtype=np.int64)
    sy = np.sign(y[:, None] - y[None, :])
    for c in range(m):
        sx = np.sign(x[:, None, c] - x[None, :, c])
        counts[:, c] = np.count_nonzero(sy * sx > 0, axis=1)
    return counts


def fast_projection_counts(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Same counts as :func:`naive_projection_counts` in ``O(m n log^2 n)``.

    With subjects ordered by ``Y`` ascending and ``X(t)`` descending within
    ``Y`` ties, the partners below subject ``i`` in both coordinates are the
    earlier positions with strictly smaller ``X(t)``; partners above in both
    are the later positions with strictly larger ``X(t)``.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n, m = x.shape
    ry = _dense_ranks(y[:, None])[:, 0]
    rx = _dense_ranks(x)
    key = ry[:, None] * n + (n - 1 - rx)
    order = np.argsort(key, axis=0, kind="stable")
    seq = np.take_along_axis(rx, order, axis=0).T
    low = smaller_before(seq)
    high = smaller_before((n - 1 - seq)[:, ::-1])[:, ::-1]
    counts = np.empty((n, m), dtype=np.int64)
    np.put_along_axis(counts, order, (low + high).T, axis=0)
    return counts


def projections(sample: DenseSample) -> ProjectionSet:
    """Empirical Hajek projections ``W_i(t)``, one row per subject.

    ``W_i(t) = n^-1 #{j : (i, j) concordant at t} - 0.5``; the ``j = i``
    term is a tie and adds nothing.
    """
    counts = fast_projection_counts(sample.responses, sample.curves)
    w = (2 * counts.astype(np.int64) - sample.n).astype(np.float64) / float(2 * sample.n)
    return ProjectionSet(sample.grid, w)


def truncation(eigenvalues: np.ndarray, fve_target: float) -> tuple:
    """Smallest ``d`` whose leading eigenvalues reach ``fve_target`` of the total."""
    ev = np.asarray(eigenvalues, dtype=float)
    total = ev.sum()
    cum = np.cumsum(ev)
    # relative slack absorbs rounding in the running sum
    hit = np.flatnonzero(cum >= fve_target * total - 1e-12 * total)
    d = int(hit[0]) + 1 if hit.size else ev.size
    return d, float(cum[d - 1] / total)


def spectrum(proj: ProjectionSet, fve_target: float = 0.95, method: str = "auto") -> Spectrum:
    """Eigenvalues of ``C_w(x) = n^-1 sum_i <W_i, x> W_i``.

    ``method='gram'`` diagonalizes the ``n x n`` Gram matrix
    ``n^-1 <W_i, W_j>``; ``'grid'`` diagonalizes the weighted ``m x m``
    matrix ``n^-1 Q^1/2 W^T W Q^1/2``. Both share the same nonzero
    eigenvalues; ``'auto'`` picks the smaller problem. The result has
    ``min(n, m)`` entries.
    """
    if not 0.0 < fve_target <= 1.0:
        raise ValidationError("fve_target must lie in (0, 1]")
    w = proj.projections
    n, m = w.shape
    q = proj.grid.weights
    if method == "auto":
        method = "gram" if n <= m else "grid"
    if method == "gram":
        mat = (w * q) @ w.T / n
    elif method == "grid":
        sq = np.sqrt(q)
        ws = w * sq
        mat = ws.T @ ws / n
    else:
        raise ValueError(f"unknown method {method!r}")
    mat = (mat + mat.T) / 2
    ev = np.linalg.eigvalsh(mat)[::-1][: min(n, m)]
    ev = np.clip(ev, 0.0, None)
    if not ev.sum() > 0.0:
        return Spectrum(np.zeros(1), 1, 1.0, degenerate=True)
    d, fve = truncation(ev, fve_target)
    return Spectrum(ev, d, fve)
