"""U-statistics, jackknife variance estimates, and Studentization.

Two computation paths are provided.  The generic path enumerates every
index combination (exponential in the kernel order, guarded by a work
budget) and serves as the reference implementation.  Fast paths exist
for the Mann-Whitney kernel (rank counting, O((n1+n2) log(n1+n2))) and,
via the ``mean_diff`` kernel, the two-sample t-statistic; both are
required to reproduce the generic path to a few ulp.

The jackknife conventions follow the source displays exactly: the
one-sample estimator uses the (n-1)/(n-s)^2 prefactor with deviations
measured from U_n itself, the two-sample estimators use 1/(n_l - 1)
with deviations from the group mean of the leave-one-out averages.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DegenerateSampleError, WorkBudgetError
from .kernels import KernelSpec, OneSampleKernelSpec

__all__ = [
    "TwoSampleData",
    "StudentizedResult",
    "u_two_sample",
    "jackknife_two_sample",
    "mann_whitney_fast",
    "u_one_sample",
    "studentize_one_sample",
    "mw_count_batch",
    "mw_studentize_batch",
]

DEFAULT_BUDGET = 10**8

# Chunk size (in kernel evaluations) for vectorized enumeration, keeps
# peak memory for the intermediate value array around a few dozen MB.
_CHUNK = 4_000_000


# ===================== containers =====================

@dataclass(frozen=True)
class TwoSampleData:
    """Two independent samples; x has n1 observations, y has n2."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n1(self) -> int:
        return self.x.shape[0]

    @property
    def n2(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class StudentizedResult:
    """A Studentized U-statistic and its variance components.

    ``sigma_nbar_hat2`` is s1^2*sigma1_hat2/n1 + s2^2*sigma2_hat2/n2 (for
    the one-sample case, s^2*sigma_hat2/n with sigma2_hat2 fixed at 0),
    and ``statistic`` is (u - theta0)/sqrt(sigma_nbar_hat2).
    """

    u: float
    theta0: float
    sigma1_hat2: float
    sigma2_hat2: float
    sigma_nbar_hat2: float
    statistic: float


# ===================== enumeration helpers =====================

def _comb_indices(n: int, s: int) -> np.ndarray:
    """All C(n, s) combinations as an (C, s) int array.

    Small tables are cached because simulation loops enumerate the same
    (n, s) shape thousands of times; results are read-only.
    """
    if math.comb(n, s) <= 1 << 20:
        return _comb_indices_cached(n, s)
    return _comb_indices_raw(n, s)


@functools.lru_cache(maxsize=64)
def _comb_indices_cached(n: int, s: int) -> np.ndarray:
    arr = _comb_indices_raw(n, s)
    arr.setflags(write=False)
    return arr


def _comb_indices_raw(n: int, s: int) -> np.ndarray:
    if s == 0:
        return np.zeros((1, 0), dtype=np.intp)
    combos = list(itertools.combinations(range(n), s))
    return np.asarray(combos, dtype=np.intp)


def _pair_budget(n1: int, s1: int, n2: int, s2: int, budget: int) -> int:
    work = math.comb(n1, s1) * math.comb(n2, s2)
    if work > budget:
        raise WorkBudgetError(
            f"enumeration needs {work} kernel evaluations, budget is {budget}")
    return work


def _block_sum(kernel: KernelSpec, x: np.ndarray, y: np.ndarray,
               xcomb: np.ndarray, ycomb: np.ndarray) -> float:
    """Sum of kernel values over the cross product xcomb x ycomb."""
    s1 = xcomb.shape[1]
    s2 = ycomb.shape[1]
    ny = ycomb.shape[0]
    if kernel.vectorized:
        total = 0.0
        step = max(1, _CHUNK // max(ny, 1))
        for lo in range(0, xcomb.shape[0], step):
            xc = xcomb[lo:lo + step]
            args = [x[xc[:, a]][:, None] for a in range(s1)]
            args += [y[ycomb[:, b]][None, :] for b in range(s2)]
            total += float(np.sum(kernel.evaluate(*args), dtype=np.float64))
        return total
    vals = []
    for xi in xcomb:
        xargs = [x[a] for a in xi]
        for yj in ycomb:
            vals.append(float(kernel.evaluate(*xargs, *(y[b] for b in yj))))
    return math.fsum(vals)


# ===================== two-sample operations =====================

def u_two_sample(kernel: KernelSpec, data: TwoSampleData,
                 budget: int = DEFAULT_BUDGET) -> float:
    """Exact average of the kernel over all index combinations."""
    s1, s2 = kernel.order
    n1, n2 = data.n1, data.n2
    if n1 < s1 or n2 < s2:
        raise ValueError(
            f"need n1 >= {s1} and n2 >= {s2}, got ({n1}, {n2})")
    work = _pair_budget(n1, s1, n2, s2, budget)
    xcomb = _comb_indices(n1, s1)
    ycomb = _comb_indices(n2, s2)
    return _block_sum(kernel, data.x, data.y, xcomb, ycomb) / work


def jackknife_two_sample(kernel: KernelSpec, data: TwoSampleData,
                         budget: int = DEFAULT_BUDGET) -> StudentizedResult:
    """Studentized two-sample U-statistic via full enumeration.

    Computes the leave-one-out averages q_i (kernel averaged over all
    combinations whose x-block contains observation i) and p_j, then

        sigma1_hat2 = (n1-1)^{-1} sum (q_i - q_bar)^2
        sigma2_hat2 = (n2-1)^{-1} sum (p_j - p_bar)^2
        statistic    = (U - theta0) / sigma_nbar_hat

    This is the reference path; it is exponential in the kernel order
    and refuses work beyond ``budget`` evaluations.
    """
    s1, s2 = kernel.order
    n1, n2 = data.n1, data.n2
    if n1 < s1 + 1 or n2 < s2 + 1:
        raise ValueError(
            f"jackknife needs n1 >= {s1 + 1} and n2 >= {s2 + 1}, got ({n1}, {n2})")
    if kernel.theta_null is None:
        raise ValueError(f"kernel {kernel.name!r} carries no theta_null")
    # q_i work: n1 * C(n1-1, s1-1) * C(n2, s2); p_j symmetric.
    q_work = n1 * math.comb(n1 - 1, s1 - 1) * math.comb(n2, s2)
    p_work = n2 * math.comb(n1, s1) * math.comb(n2 - 1, s2 - 1)
    if q_work + p_work > budget:
        raise WorkBudgetError(
            f"jackknife needs {q_work + p_work} evaluations, budget is {budget}")

    x, y = data.x, data.y
    u = u_two_sample(kernel, data, budget=budget)

    ycomb_full = _comb_indices(n2, s2)
    q = np.empty(n1)
    denom_q = math.comb(n1 - 1, s1 - 1) * math.comb(n2, s2)
    for i in range(n1):
        others = np.delete(np.arange(n1), i)
        rest = _comb_indices(n1 - 1, s1 - 1)
        xcomb = np.concatenate(
            [np.full((rest.shape[0], 1), i, dtype=np.intp), others[rest]], axis=1)
        q[i] = _block_sum(kernel, x, y, xcomb, ycomb_full) / denom_q

    xcomb_full = _comb_indices(n1, s1)
    p = np.empty(n2)
    denom_p = math.comb(n1, s1) * math.comb(n2 - 1, s2 - 1)
    for j in range(n2):
        others = np.delete(np.arange(n2), j)
        rest = _comb_indices(n2 - 1, s2 - 1)
        ycomb = np.concatenate(
            [np.full((rest.shape[0], 1), j, dtype=np.intp), others[rest]], axis=1)
        p[j] = _block_sum(kernel, x, y, xcomb_full, ycomb) / denom_p

    sigma1 = float(np.var(q, ddof=1))
    sigma2 = float(np.var(p, ddof=1))
    snb2 = s1 * s1 * sigma1 / n1 + s2 * s2 * sigma2 / n2
    if snb2 <= 0.0:
        raise DegenerateSampleError(
            "all leave-one-out averages are constant; no Studentized statistic")
    theta0 = float(kernel.theta_null)
    stat = (u - theta0) / math.sqrt(snb2)
    return StudentizedResult(u=u, theta0=theta0, sigma1_hat2=sigma1,
                             sigma2_hat2=sigma2, sigma_nbar_hat2=snb2,
                             statistic=stat)


# ===================== fast Mann-Whitney =====================

def _mw_from_counts(q_less: np.ndarray, p_le: np.ndarray,
                    n1: int, n2: int) -> StudentizedResult:
    """Assemble the Studentized Mann-Whitney result from rank counts.

    ``q_less[i] = #{j : Y_j < X_i}`` and ``p_le[j] = #{i : X_i <= Y_j}``.
    The variance components and the centered numerator are formed from
    the exact half-integer sums (n2/2 - q_less[i]) and (p_le[j] - n1/2),
    which makes them bit-identical to the generic enumeration path on
    the mann_whitney kernel (whose values are exact multiples of 1/2).
    """
    ntot = n1 * n2
    p_sum = int(p_le.sum())
    u = p_sum / ntot
    qv = (0.5 * n2 - q_less) / n2
    pv = (p_le - 0.5 * n1) / n1
    sigma1 = float(np.var(qv, ddof=1))
    sigma2 = float(np.var(pv, ddof=1))
    snb2 = sigma1 / n1 + sigma2 / n2
    if snb2 <= 0.0:
        raise DegenerateSampleError(
            "Mann-Whitney jackknife variance is zero (samples fully separated "
            "or tied); no Studentized statistic")
    num = (p_sum - 0.5 * ntot) / ntot  # U - 1/2 with a single rounding
    stat = num / math.sqrt(snb2)
    return StudentizedResult(u=u, theta0=0.5, sigma1_hat2=sigma1,
                             sigma2_hat2=sigma2, sigma_nbar_hat2=snb2,
                             statistic=stat)


def mann_whitney_fast(data: TwoSampleData) -> StudentizedResult:
    """Studentized Mann-Whitney statistic in O((n1+n2) log(n1+n2)).

    U is the proportion of pairs with X_i <= Y_j, centered at 1/2; the
    jackknife components come from the strict counts #{Y_j < X_i}/n2 and
    the non-strict counts #{X_i <= Y_j}/n1, exactly as displayed (the
    two tie conventions only differ on tied data).
    """
    n1, n2 = data.n1, data.n2
    if n1 < 2 or n2 < 2:
        raise ValueError("need at least two observations per group")
    sx = np.sort(data.x)
    sy = np.sort(data.y)
    q_less = np.searchsorted(sy, data.x, side="left")
    p_le = np.searchsorted(sx, data.y, side="right")
    return _mw_from_counts(q_less, p_le, n1, n2)


# ----- batched variant (bootstrap and simulation hot path) -----

def mw_count_batch(xb: np.ndarray, yb: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rank counts for many datasets at once.

    ``xb`` is (R, n1) and ``yb`` is (R, n2); returns integer arrays
    ``q_less`` (R, n1) with #{Y < X_i} per row and ``p_le`` (R, n2) with
    #{X <= Y_j} per row.  Cross-group ties are assumed absent (the
    stable sort makes the output deterministic regardless); within-group
    ties, e.g. from bootstrap resampling, do not affect cross counts.
    """
    R, n1 = xb.shape
    n2 = yb.shape[1]
    z = np.concatenate([xb, yb], axis=1)
    order = np.argsort(z, axis=1, kind="stable")
    is_y = order >= n1
    csum = np.cumsum(is_y, axis=1)
    pos = np.empty_like(order)
    np.put_along_axis(pos, order,
                      np.broadcast_to(np.arange(n1 + n2), z.shape), axis=1)
    csum_at = np.take_along_axis(csum, pos, axis=1)
    q_less = csum_at[:, :n1]
    p_le = pos[:, n1:] - csum_at[:, n1:] + 1
    return q_less, p_le


def mw_studentize_batch(xb: np.ndarray, yb: np.ndarray):
    """Vectorized Studentized Mann-Whitney over R row-datasets.

    Returns ``(u, statistic, degenerate)`` arrays of shape (R,) where
    ``degenerate`` marks rows with zero jackknife variance (their
    statistic entry is NaN and must not be used).
    """
    R, n1 = xb.shape
    n2 = yb.shape[1]
    q_less, p_le = mw_count_batch(xb, yb)
    p_sum = p_le.sum(axis=1)
    u = p_sum / (n1 * n2)
    qv = (0.5 * n2 - q_less) / n2
    pv = (p_le - 0.5 * n1) / n1
    sigma1 = np.var(qv, axis=1, ddof=1)
    sigma2 = np.var(pv, axis=1, ddof=1)
    snb2 = sigma1 / n1 + sigma2 / n2
    degenerate = snb2 <= 0.0
    num = (p_sum - 0.5 * n1 * n2) / (n1 * n2)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(degenerate, np.nan, num / np.sqrt(snb2))
    return u, stat, degenerate


# ===================== one-sample operations =====================

def _one_budget(n: int, s: int, budget: int, jack: bool) -> None:
    work = math.comb(n, s)
    if jack:
        work += n * math.comb(n - 1, s - 1)
    if work > budget:
        raise WorkBudgetError(
            f"enumeration needs {work} kernel evaluations, budget is {budget}")


def _one_sample_sum(kernel: OneSampleKernelSpec, x: np.ndarray,
                    comb: np.ndarray) -> float:
    s = comb.shape[1]
    if kernel.vectorized:
        args = [x[comb[:, a]] for a in range(s)]
        return float(np.sum(kernel.evaluate(*args), dtype=np.float64))
    return math.fsum(float(kernel.evaluate(*(x[a] for a in row)))
                     for row in comb)


def u_one_sample(kernel: OneSampleKernelSpec, x: np.ndarray,
                 budget: int = DEFAULT_BUDGET) -> float:
    """Exact combinatorial average of a one-sample kernel."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    s = kernel.order
    if n < s:
        raise ValueError(f"need n >= {s}, got {n}")
    _one_budget(n, s, budget, jack=False)
    comb = _comb_indices(n, s)
    return _one_sample_sum(kernel, x, comb) / math.comb(n, s)


def studentize_one_sample(kernel: OneSampleKernelSpec, x: np.ndarray,
                          budget: int = DEFAULT_BUDGET) -> StudentizedResult:
    """Studentized one-sample U-statistic.

    Uses the jackknife estimator with the (n-1)/(n-s)^2 prefactor and
    deviations of the leave-one-out averages q_i from U_n itself:

        sigma_hat2 = (n-1)/(n-s)^2 * sum_i (q_i - U_n)^2
        statistic  = sqrt(n) * (U_n - theta0) / (s * sigma_hat)

    q_i averages the kernel over the C(n-1, s-1) combinations that
    include observation i.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    s = kernel.order
    if n <= 2 * s:
        raise ValueError(f"studentizing needs n > {2 * s}, got {n}")
    _one_budget(n, s, budget, jack=True)

    u = u_one_sample(kernel, x, budget=budget)

    denom = math.comb(n - 1, s - 1)
    if s == 2 and kernel.vectorized and x.ndim == 1:
        # Full pairwise matrix; drop the diagonal i == j terms.
        h_all = np.asarray(kernel.evaluate(x[:, None], x[None, :]), dtype=float)
        q = (h_all.sum(axis=1) - np.diag(h_all)) / denom
    else:
        q = np.empty(n)
        for i in range(n):
            others = np.delete(np.arange(n), i)
            rest = _comb_indices(n - 1, s - 1)
            comb = np.concatenate(
                [np.full((rest.shape[0], 1), i, dtype=np.intp), others[rest]],
                axis=1)
            q[i] = _one_sample_sum(kernel, x, comb) / denom

    sigma_hat2 = (n - 1) / (n - s) ** 2 * float(np.sum((q - u) ** 2))
    snb2 = s * s * sigma_hat2 / n
    if snb2 <= 0.0:
        raise DegenerateSampleError(
            "all leave-one-out averages equal U_n; no Studentized statistic")
    # The theta requirement comes after the degeneracy check: a constant
    # sample is reported as degenerate even for kernels whose null value
    # is population dependent.
    if kernel.theta_null is None:
        raise ValueError(f"kernel {kernel.name!r} carries no theta_null")
    theta0 = float(kernel.theta_null)
    stat = (u - theta0) / math.sqrt(snb2)
    return StudentizedResult(u=u, theta0=theta0, sigma1_hat2=sigma_hat2,
                             sigma2_hat2=0.0, sigma_nbar_hat2=snb2,
                             statistic=stat)
