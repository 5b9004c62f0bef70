"""Normal, conventional bootstrap, and regularized bootstrap calibration.

All three routes turn a vector of per-feature Studentized statistics
into p-values:

* normal: the standard normal tail, two-sided 2(1 - Phi(|T|)) or
  one-sided 1 - Phi(U).
* bootstrap: resample within each group, center by the observed group
  means (t case) or the observed U (Mann-Whitney case), pool the m*B
  replicate statistics across features into one empirical null.
* regularized bootstrap: truncate each observation at a per-feature
  threshold lambda before resampling, which tames heavy tails in the
  null pool; the observed statistics stay untruncated.

The Mann-Whitney one-sided pool keeps the signed replicate statistics,
but p-values count |pooled| >= observed, matching the displayed
empirical distribution function of absolute values. Consequence, noted
on purpose: under the null these one-sided p-values are conservative by
roughly a factor of two; they are used only where that is acceptable.

Bootstrap draws derive from per-feature keys, so the pooled null is
bit-identical however the surrounding experiment schedules work.  The
key path deliberately omits the calibration method: with truncation
inactive, the regularized pipeline replays the conventional one's
resampling indices exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erfc
from scipy.stats import kstest

from .errors import (DegenerateSampleError, ExcessiveDegeneracyError,
                     NoValidConstantError)
from .rng import derive_key, uniforms
from .tstat import welch_batch
from .ustat import TwoSampleData, mw_count_batch

__all__ = [
    "PValueSet",
    "BootstrapNull",
    "TruncationPlan",
    "normal_pvalues",
    "bootstrap_null_t",
    "bootstrap_null_mw",
    "bootstrap_pvalues",
    "make_truncation_plan",
    "regularized_null_t",
    "regularized_bootstrap_pvalues",
    "choose_truncation_constant",
    "observed_t_stats",
    "ks_to_uniform",
]

_SQRT2 = math.sqrt(2.0)

# Fraction of discarded bootstrap replicates above which the null pool
# is considered unusable.
_DEGENERACY_CAP = 0.01


# ===================== containers =====================

@dataclass(frozen=True)
class PValueSet:
    """Per-feature p-values plus how they were produced."""

    values: np.ndarray
    method: str   # "normal" | "bootstrap" | "reg_bootstrap"
    sided: str    # "two_sided" | "one_sided"
    B: int        # 0 for normal calibration
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size and (np.nanmin(v) < 0.0 or np.nanmax(v) > 1.0):
            raise ValueError("p-values must lie in [0, 1]")
        if not np.isfinite(v).all():
            raise ValueError("p-values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class BootstrapNull:
    """A pooled empirical null distribution.

    ``pooled_abs_stats`` is sorted ascending and holds |T| replicates for
    the two-sided t pools and signed replicates for the one-sided
    Mann-Whitney pool.  ``discarded`` counts replicates dropped for zero
    variance; the pool size is m*B minus that count.
    """

    pooled_abs_stats: np.ndarray
    m: int
    B: int
    discarded: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pooled_abs_stats",
                           np.asarray(self.pooled_abs_stats, dtype=float))

    @property
    def size(self) -> int:
        return self.pooled_abs_stats.shape[0]


@dataclass(frozen=True)
class TruncationPlan:
    """Per-feature truncation thresholds lambda_{l,k}.

    lambda1[k] = constant * scale1[k] * (n1/log m)^{1/6}, analogously for
    group 2; the per-feature scale is the group's sample standard
    deviation, which makes truncation scale-equivariant.
    """

    lambda1: np.ndarray
    lambda2: np.ndarray
    constant: float
    scale1: np.ndarray
    scale2: np.ndarray


# ===================== normal calibration =====================

def normal_pvalues(stats: np.ndarray, sided: str) -> PValueSet:
    """Normal-tail p-values: 2(1-Phi(|T|)) two-sided, 1-Phi(U) one-sided."""
    stats = np.asarray(stats, dtype=float)
    bad = ~np.isfinite(stats)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise ValueError(f"non-finite statistic at feature {idx}")
    if sided == "two_sided":
        p = erfc(np.abs(stats) / _SQRT2)
    elif sided == "one_sided":
        p = 0.5 * erfc(stats / _SQRT2)
    else:
        raise ValueError(f"unknown sidedness {sided!r}")
    return PValueSet(values=p, method="normal", sided=sided, B=0)


# ===================== bootstrap resampling core =====================

def _resample_indices(key: int, B: int, n1: int, n2: int) -> Tuple[np.ndarray, np.ndarray]:
    """Resampling index arrays (B, n1) and (B, n2) for one feature.

    Counter layout is b*(n1+n2)+i, so draw b, observation slot i always
    consumes the same uniform whatever the batch shape.
    """
    u = uniforms(key, B * (n1 + n2)).reshape(B, n1 + n2)
    ix = np.minimum((u[:, :n1] * n1).astype(np.int64), n1 - 1)
    iy = np.minimum((u[:, n1:] * n2).astype(np.int64), n2 - 1)
    return ix, iy


def _feature_key(seed: int, k: int) -> int:
    # Shared by the conventional and regularized pipelines on purpose.
    return derive_key(seed, "boot", k)


def _check_discard_cap(discarded: int, total: int) -> None:
    if discarded > _DEGENERACY_CAP * total:
        raise ExcessiveDegeneracyError(
            f"{discarded} of {total} bootstrap replicates degenerate "
            f"(more than {_DEGENERACY_CAP:.0%})")


def bootstrap_null_t(data: Sequence[TwoSampleData], B: int,
                     seed: int) -> BootstrapNull:
    """Pooled two-sided bootstrap null for the two-sample t.

    For every feature and replicate, groups are resampled with
    replacement and centered by the observed group means, so the
    replicate statistics are draws from an exact null whatever the true
    means.  All |T| values pool into one sorted vector; replicates with
    zero variance in both resampled groups are discarded and counted,
    and more than 1% discards raises excessive-degeneracy.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    m = len(data)
    if m == 0:
        raise ValueError("need at least one feature")
    pieces: List[np.ndarray] = []
    discarded = 0
    for k, d in enumerate(data):
        n1, n2 = d.n1, d.n2
        ix, iy = _resample_indices(_feature_key(seed, k), B, n1, n2)
        xc = d.x[ix] - np.mean(d.x)
        yc = d.y[iy] - np.mean(d.y)
        t, degen = welch_batch(xc, yc)
        discarded += int(degen.sum())
        pieces.append(np.abs(t[~degen]))
    _check_discard_cap(discarded, m * B)
    pool = np.sort(np.concatenate(pieces))
    return BootstrapNull(pooled_abs_stats=pool, m=m, B=B, discarded=discarded)


def bootstrap_null_mw(data: Sequence[TwoSampleData], B: int,
                      seed: int) -> BootstrapNull:
    """Pooled bootstrap null for the Studentized Mann-Whitney statistic.

    Replicate statistics are centered at each feature's observed U (the
    bootstrap-world null value) and Studentized by the replicate's own
    jackknife scale.  The pool keeps the signed values, sorted; the
    one-sided p-value lookup takes absolute values against it.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    m = len(data)
    if m == 0:
        raise ValueError("need at least one feature")
    pieces: List[np.ndarray] = []
    discarded = 0
    for k, d in enumerate(data):
        n1, n2 = d.n1, d.n2
        ntot = n1 * n2
        u_obs = int(np.searchsorted(np.sort(d.x), d.y, side="right").sum()) / ntot
        ix, iy = _resample_indices(_feature_key(seed, k), B, n1, n2)
        q_less, p_le = mw_count_batch(d.x[ix], d.y[iy])
        qv = (0.5 * n2 - q_less) / n2
        pv = (p_le - 0.5 * n1) / n1
        snb2 = np.var(qv, axis=1, ddof=1) / n1 + np.var(pv, axis=1, ddof=1) / n2
        degen = snb2 <= 0.0
        u_rep = p_le.sum(axis=1) / ntot
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = (u_rep - u_obs) / np.sqrt(snb2)
        discarded += int(degen.sum())
        pieces.append(stat[~degen])
    _check_discard_cap(discarded, m * B)
    pool = np.sort(np.concatenate(pieces))
    return BootstrapNull(pooled_abs_stats=pool, m=m, B=B, discarded=discarded)


def bootstrap_pvalues(null: BootstrapNull, stats: np.ndarray,
                      sided: str, method: str = "bootstrap") -> PValueSet:
    """Empirical p-values from a pooled bootstrap null.

    Two-sided: fraction of pooled values >= |T_k|.  One-sided: fraction
    with |pooled| >= U_k (everything, when U_k <= 0; this is the
    1 - G(U_k) form with G built from absolute values).
    """
    pool = null.pooled_abs_stats
    N = pool.shape[0]
    if N == 0:
        raise ValueError("bootstrap null pool is empty")
    stats = np.asarray(stats, dtype=float)
    if sided == "two_sided":
        count = N - np.searchsorted(pool, np.abs(stats), side="left")
    elif sided == "one_sided":
        upper = N - np.searchsorted(pool, stats, side="left")
        lower = np.searchsorted(pool, -stats, side="right")
        count = np.where(stats > 0, upper + lower, N)
    else:
        raise ValueError(f"unknown sidedness {sided!r}")
    p = count / N
    return PValueSet(values=p, method=method, sided=sided, B=null.B,
                     meta={"discarded": null.discarded})


# ===================== regularized bootstrap =====================

def make_truncation_plan(data: Sequence[TwoSampleData], m: int,
                         constant: float) -> TruncationPlan:
    """Per-feature thresholds lambda_{l,k} = c * sigma_hat_{l,k} * (n_l/log m)^{1/6}.

    ``m`` is the experiment-wide feature count driving the log m rate (it
    may exceed len(data) when a plan is built on a subset, as in
    cross-validation).
    """
    if m < 2:
        raise ValueError("need m >= 2 so that log m > 0")
    if constant <= 0:
        raise ValueError("constant must be positive")
    logm = math.log(m)
    scale1 = np.array([math.sqrt(np.var(d.x, ddof=1)) for d in data])
    scale2 = np.array([math.sqrt(np.var(d.y, ddof=1)) for d in data])
    n1 = np.array([d.n1 for d in data], dtype=float)
    n2 = np.array([d.n2 for d in data], dtype=float)
    lam1 = constant * scale1 * (n1 / logm) ** (1.0 / 6.0)
    lam2 = constant * scale2 * (n2 / logm) ** (1.0 / 6.0)
    return TruncationPlan(lambda1=lam1, lambda2=lam2,
                          constant=float(constant),
                          scale1=scale1, scale2=scale2)


def _truncate(values: np.ndarray, lam: float) -> np.ndarray:
    # The display zeroes censored observations rather than dropping them.
    return np.where(np.abs(values) <= lam, values, 0.0)


def regularized_null_t(data: Sequence[TwoSampleData], plan: TruncationPlan,
                       B: int, seed: int) -> BootstrapNull:
    """Pooled null from truncated resampling.

    Observations beyond their feature's lambda are zeroed, replicates
    resample the truncated samples (with the same per-feature draws as
    the conventional pipeline) and center by the truncated means.
    Features where truncation zeroes more than half the observations are
    recorded by index on the returned pool (attribute ``meta`` is not
    part of the type; the list rides along via the p-value wrapper).
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    m = len(data)
    if m == 0:
        raise ValueError("need at least one feature")
    pieces: List[np.ndarray] = []
    discarded = 0
    over_truncated: List[int] = []
    for k, d in enumerate(data):
        n1, n2 = d.n1, d.n2
        xt = _truncate(d.x, plan.lambda1[k])
        yt = _truncate(d.y, plan.lambda2[k])
        zeroed = int(np.sum(np.abs(d.x) > plan.lambda1[k])
                     + np.sum(np.abs(d.y) > plan.lambda2[k]))
        if zeroed > 0.5 * (n1 + n2):
            over_truncated.append(k)
        ix, iy = _resample_indices(_feature_key(seed, k), B, n1, n2)
        xc = xt[ix] - np.mean(xt)
        yc = yt[iy] - np.mean(yt)
        t, degen = welch_batch(xc, yc)
        discarded += int(degen.sum())
        pieces.append(np.abs(t[~degen]))
    _check_discard_cap(discarded, m * B)
    pool = np.sort(np.concatenate(pieces))
    null = BootstrapNull(pooled_abs_stats=pool, m=m, B=B, discarded=discarded)
    object.__setattr__(null, "_over_truncated", over_truncated)
    return null


def observed_t_stats(data: Sequence[TwoSampleData]) -> np.ndarray:
    """Two-sample t statistic of every feature, NaN-free or error."""
    stats = np.empty(len(data))
    for k, d in enumerate(data):
        t, degen = welch_batch(d.x[None, :], d.y[None, :])
        if degen[0]:
            raise DegenerateSampleError(f"feature {k} is constant in both groups")
        stats[k] = t[0]
    return stats


def regularized_bootstrap_pvalues(data: Sequence[TwoSampleData],
                                  plan: TruncationPlan, B: int, seed: int,
                                  sided: str = "two_sided") -> PValueSet:
    """Regularized bootstrap p-values for the two-sample t.

    The null pool is built from truncated data; the statistics evaluated
    against it are the original, untruncated ones.  Metadata records the
    discard count and any features where truncation zeroed more than
    half the observations.
    """
    null = regularized_null_t(data, plan, B, seed)
    stats = observed_t_stats(data)
    pset = bootstrap_pvalues(null, stats, sided, method="reg_bootstrap")
    pset.meta["over_truncated"] = list(getattr(null, "_over_truncated", []))
    pset.meta["truncation_constant"] = plan.constant
    return pset


# ===================== truncation-constant cross-validation =====================

def ks_to_uniform(pvalues: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance of a sample to U(0, 1)."""
    return float(kstest(np.asarray(pvalues, dtype=float), "uniform").statistic)


def choose_truncation_constant(data: Sequence[TwoSampleData],
                               candidates: Sequence[float], B_cv: int,
                               seed: int) -> float:
    """Pick a truncation constant by half-split cross-validation.

    Features are split at random into two halves.  Each candidate builds
    a regularized null from half A; the other half supplies null-enforced
    statistics (one conventional, mean-centered bootstrap draw per
    feature, so their p-values should be uniform whatever the true
    effects).  The candidate whose held-out p-values are closest to
    U(0, 1) in Kolmogorov-Smirnov distance wins; ties go to the smaller
    constant.  The cross-validation rule itself is a documented artifact
    choice; the source only posits the lambda growth rate.
    """
    cand = sorted(set(float(c) for c in candidates))
    if not cand:
        raise ValueError("candidates must be nonempty")
    if len(cand) == 1:
        return cand[0]
    m = len(data)
    u = uniforms(derive_key(seed, "cv", "split"), m)
    perm = np.argsort(u, kind="stable")
    half_a = perm[: m // 2]
    half_b = perm[m // 2:]
    data_a = [data[i] for i in half_a]

    # Held-out null statistics do not depend on the candidate: one
    # conventional centered bootstrap replicate per held-out feature.
    held: List[float] = []
    for j in half_b:
        d = data[j]
        ix, iy = _resample_indices(derive_key(seed, "cv", "held", int(j)),
                                   1, d.n1, d.n2)
        t, degen = welch_batch(d.x[ix] - np.mean(d.x), d.y[iy] - np.mean(d.y))
        if not degen[0]:
            held.append(float(t[0]))
    held_stats = np.asarray(held)

    best_c: Optional[float] = None
    best_ks = math.inf
    for c in cand:
        if not data_a or held_stats.size == 0:
            break
        try:
            plan = make_truncation_plan(data_a, m=max(m, 2), constant=c)
            null = regularized_null_t(data_a, plan, B_cv, seed)
            pset = bootstrap_pvalues(null, held_stats, "two_sided")
        except (ExcessiveDegeneracyError, DegenerateSampleError):
            continue
        ks = ks_to_uniform(pset.values)
        if ks < best_ks:
            best_ks = ks
            best_c = c
    if best_c is None:
        raise NoValidConstantError(
            "no candidate constant produced a usable regularized null")
    return best_c
