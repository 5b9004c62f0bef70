"""Benjamini-Hochberg step-up procedure, FDP accounting, and the
skewness diagnostic that predicts when normal calibration breaks down.

Feature indices are 0-based throughout.  Only per-replicate quantities
live here; averaging FDP into FDR across Monte Carlo replicates is the
simulation harness's job, since FDR is a population-level expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import FrozenSet, List, Sequence, Set, Tuple, Union

import numpy as np

from .calibration import PValueSet
from .tstat import MomentSummary

__all__ = [
    "BHOutcome",
    "FdrReport",
    "SkewnessDiagnostic",
    "bh_procedure",
    "fdr_accounting",
    "skewness_diagnostic",
]


# ===================== containers =====================

@dataclass(frozen=True)
class BHOutcome:
    """Result of one step-up pass: k_hat rejections at value threshold p_(k_hat)."""

    k_hat: int
    rejected: FrozenSet[int]
    threshold: float
    m: int


@dataclass(frozen=True)
class FdrReport:
    """False discovery proportion and correct rejection proportion.

    fdp = V / max(1, R) and correct_rejection_proportion = (R - V) / max(1, m1),
    where V counts rejections inside the null set and R all rejections.
    """

    fdp: float
    correct_rejection_proportion: float
    V: int
    R: int
    m0: int
    m1: int


@dataclass(frozen=True)
class SkewnessDiagnostic:
    """Plug-in average of the skewness-to-scale ratio over the null set.

    c0_hat = (1/m0) * sum over null k of
             sqrt(min(n1, n2)) * |gamma1k/n1^2 + gamma2k/n2^2|
             / (sigma1k^2/n1 + sigma2k^2/n2)^{3/2}

    Zero for symmetric populations; of order one when skewness is strong
    enough to distort normal-calibrated p-values at B-H thresholds.
    """

    c0_hat: float


# ===================== operations =====================

def bh_procedure(p: Union[PValueSet, np.ndarray], alpha: float) -> BHOutcome:
    """Benjamini-Hochberg step-up at level alpha.

    Sorts p ascending (stable, so ties keep feature order), takes the
    largest k with p_(k) <= alpha*k/m (non-strict), and rejects every
    feature with p <= p_(k_hat).  Tied p-values at the boundary are all
    inside the first k_hat sorted positions, so rejection by value
    threshold and rejection by sorted position agree.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    values = p.values if isinstance(p, PValueSet) else np.asarray(p, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("p must be a nonempty vector")
    if np.nanmin(values) < 0 or np.nanmax(values) > 1 or not np.isfinite(values).all():
        raise ValueError("p-values must lie in [0, 1]")
    m = values.shape[0]
    order = np.argsort(values, kind="stable")
    ps = values[order]
    ok = ps <= alpha * np.arange(1, m + 1) / m
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return BHOutcome(k_hat=0, rejected=frozenset(), threshold=0.0, m=m)
    k_hat = int(hits[-1]) + 1
    threshold = float(ps[k_hat - 1])
    rejected = frozenset(int(i) for i in np.flatnonzero(values <= threshold))
    if len(rejected) != k_hat:  # cannot happen; guards the tie argument
        raise AssertionError("tie handling violated |rejected| == k_hat")
    return BHOutcome(k_hat=k_hat, rejected=rejected, threshold=threshold, m=m)


def fdr_accounting(outcome: BHOutcome, null_set: Set[int]) -> FdrReport:
    """Score a rejection set against known ground truth."""
    null = frozenset(int(i) for i in null_set)
    if null and (min(null) < 0 or max(null) >= outcome.m):
        raise ValueError("null_set indices out of range")
    R = len(outcome.rejected)
    V = len(outcome.rejected & null)
    m0 = len(null)
    m1 = outcome.m - m0
    fdp = V / max(1, R)
    crp = (R - V) / max(1, m1)
    return FdrReport(fdp=fdp, correct_rejection_proportion=crp,
                     V=V, R=R, m0=m0, m1=m1)


def skewness_diagnostic(moments: Sequence[Tuple[MomentSummary, MomentSummary]],
                        null_set: Set[int]) -> SkewnessDiagnostic:
    """Average skewness-to-scale ratio over the null features.

    ``moments`` pairs one MomentSummary per group for each feature; the
    summaries may hold population values or plug-in estimates.  When
    n1 = n2 = n the per-feature term reduces to
    |gamma1 + gamma2| / (sigma1^2 + sigma2^2)^{3/2}.
    """
    null = sorted(int(i) for i in null_set)
    if not null:
        raise ValueError("null_set must be nonempty")
    terms: List[float] = []
    for k in null:
        m1k, m2k = moments[k]
        n1, n2 = m1k.n, m2k.n
        if m1k.var <= 0 or m2k.var <= 0:
            raise ValueError(f"feature {k}: variances must be positive")
        scale = (m1k.var / n1 + m2k.var / n2) ** 1.5
        combo = abs(m1k.gamma3 / n1**2 + m2k.gamma3 / n2**2)
        terms.append(math.sqrt(min(n1, n2)) * combo / scale)
    return SkewnessDiagnostic(c0_hat=float(np.mean(terms)))
