"""Kernel functions for one- and two-sample U-statistics.

A kernel is described by a :class:`KernelSpec` (two-sample) or
:class:`OneSampleKernelSpec` (one-sample): the symmetric function itself
plus whatever analytic side information is known about it (null value,
conditional projections, regularity constants, null variances).

Built-in two-sample kernels
---------------------------
``mann_whitney``   order (1,1), ``I{x <= y} - 1/2``
``lehmann``        order (2,2), ``I{|x1-x2| <= |y1-y2|} - 1/2``
``kochar``         order (2,2), hazard-ordering indicator difference
``mean_diff``      order (1,1), ``x - y`` (cross-check path for the
                   two-sample t-statistic)

Built-in one-sample kernels: ``t_stat``, ``sample_variance``, ``gini``,
``wilcoxon_one``, ``kendall_tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .errors import UnsupportedKernelError

__all__ = [
    "KernelSpec",
    "OneSampleKernelSpec",
    "ConditionReport",
    "builtin_two_sample",
    "builtin_one_sample",
    "project_h1_mc",
    "check_kernel_condition",
    "condition_grid",
    "null_variance_quadrature",
    "resolve_kappa",
]


# ===================== kernel containers =====================

@dataclass(frozen=True)
class KernelSpec:
    """A two-sample kernel of order ``(s1, s2)``.

    ``evaluate`` takes ``s1 + s2`` positional arguments (the x-block
    followed by the y-block) and must be symmetric within each block.
    When ``vectorized`` is true the callable accepts numpy arrays and
    broadcasts elementwise; the enumeration paths exploit this.

    ``kappa`` holds the regularity constant when it is a plain number;
    for kernels whose constant depends on the population, ``kappa_form``
    records the rule instead (see :func:`resolve_kappa`).
    """

    name: str
    order: Tuple[int, int]
    evaluate: Callable
    theta_null: Optional[float] = None
    h1: Optional[Callable] = None
    h2: Optional[Callable] = None
    c0: Optional[float] = None
    kappa: Optional[float] = None
    kappa_form: Optional[str] = None
    sigma1_sq_null: Optional[float] = None
    sigma2_sq_null: Optional[float] = None
    vectorized: bool = False


@dataclass(frozen=True)
class OneSampleKernelSpec:
    """A one-sample kernel of order ``s`` (symmetric in all arguments)."""

    name: str
    order: int
    evaluate: Callable
    theta_null: Optional[float] = None
    h1: Optional[Callable] = None
    c0: Optional[float] = None
    kappa: Optional[float] = None
    kappa_form: Optional[str] = None
    vectorized: bool = False


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of a grid check of the kernel regularity condition."""

    passed: bool
    points_checked: int
    violations: int
    first_violation: Optional[tuple] = None  # (x_block, y_block, lhs, rhs)


# ===================== built-in two-sample kernels =====================

def _uniform_cdf(x):
    return np.clip(x, 0.0, 1.0)


def _h_mann_whitney(x, y):
    return np.less_equal(x, y) - 0.5


def _h_lehmann(x1, x2, y1, y2):
    return np.less_equal(np.abs(x1 - x2), np.abs(y1 - y2)) - 0.5


def _h_kochar(x1, x2, y1, y2):
    # Event strings name order-statistic patterns of the four values:
    # "yyxx" = both y below both x, "xyyx" = both y inside the x range,
    # and the mirrored patterns with x and y swapped.
    xlo = np.minimum(x1, x2)
    xhi = np.maximum(x1, x2)
    ylo = np.minimum(y1, y2)
    yhi = np.maximum(y1, y2)
    yyxx = np.less_equal(yhi, xlo)
    xyyx = np.less_equal(xlo, ylo) & np.less_equal(yhi, xhi)
    xxyy = np.less_equal(xhi, ylo)
    yxxy = np.less_equal(ylo, xlo) & np.less_equal(xhi, yhi)
    return (yyxx | xyyx) * 1.0 - (xxyy | yxxy) * 1.0


def _h_mean_diff(x, y):
    return x - y


def builtin_two_sample(name: str, cdf: Optional[Callable] = None,
                       mean: Optional[float] = None) -> KernelSpec:
    """Return a fully populated built-in two-sample kernel.

    Parameters
    ----------
    name : one of ``mann_whitney``, ``lehmann``, ``kochar``, ``mean_diff``.
    cdf : optional common CDF under the null ``F = G``, used to express
        the analytic projections h1/h2.  Defaults to the U(0,1) CDF,
        which is the canonical representative for the rank kernels.
    mean : common population mean for ``mean_diff`` (defaults to 1/2,
        the U(0,1) mean, to stay consistent with the default ``cdf``).

    The returned spec carries the null value of θ, analytic projections
    under ``F = G``, the null variances σ₁² = σ₂², and regularity
    constants (c₀, κ).  The rank kernels are bounded with |h − θ| ≤ 1
    under the null, so (c₀, κ) = (1, σ⁻²) works for all of them; the
    constant for ``mean_diff`` is exact from (a+b)² ≤ 2a² + 2b².
    """
    G = cdf if cdf is not None else _uniform_cdf
    if name == "mann_whitney":
        return KernelSpec(
            name=name, order=(1, 1), evaluate=_h_mann_whitney,
            theta_null=0.0,
            h1=lambda x: 0.5 - G(x),
            h2=lambda y: G(y) - 0.5,
            c0=1.0, kappa=None, kappa_form="inv_sigma_sq",
            sigma1_sq_null=1.0 / 12.0, sigma2_sq_null=1.0 / 12.0,
            vectorized=True,
        )
    if name == "lehmann":
        return KernelSpec(
            name=name, order=(2, 2), evaluate=_h_lehmann,
            theta_null=0.0,
            h1=lambda x: G(x) * (1.0 - G(x)) - 1.0 / 6.0,
            h2=lambda y: G(y) * (G(y) - 1.0) + 1.0 / 6.0,
            c0=1.0, kappa=None, kappa_form="inv_sigma_sq",
            sigma1_sq_null=1.0 / 180.0, sigma2_sq_null=1.0 / 180.0,
            vectorized=True,
        )
    if name == "kochar":
        return KernelSpec(
            name=name, order=(2, 2), evaluate=_h_kochar,
            theta_null=0.0,
            h1=lambda x: -4.0 * G(x) ** 3 / 3.0 + 4.0 * G(x) ** 2 - 2.0 * G(x),
            h2=lambda y: 4.0 * G(y) ** 3 / 3.0 - 4.0 * G(y) ** 2 + 2.0 * G(y),
            c0=1.0, kappa=None, kappa_form="inv_sigma_sq",
            sigma1_sq_null=8.0 / 105.0, sigma2_sq_null=8.0 / 105.0,
            vectorized=True,
        )
    if name == "mean_diff":
        mu = 0.5 if mean is None else float(mean)
        return KernelSpec(
            name=name, order=(1, 1), evaluate=_h_mean_diff,
            theta_null=0.0,
            h1=lambda x: x - mu,
            h2=lambda y: mu - y,
            c0=2.0, kappa=0.0,
            sigma1_sq_null=None, sigma2_sq_null=None,
            vectorized=True,
        )
    raise ValueError(f"unknown two-sample kernel {name!r}")


# ===================== built-in one-sample kernels =====================

def _h_t_stat(x1, x2):
    return 0.5 * (x1 + x2)


def _h_sample_variance(x1, x2):
    return 0.5 * (x1 - x2) ** 2


def _h_gini(x1, x2):
    return np.abs(x1 - x2)


def _h_wilcoxon_one(x1, x2):
    return np.less_equal(x1 + x2, 0.0) * 1.0


def _h_kendall_tau(p1, p2):
    # p1, p2 are bivariate observations (sequences of length 2).
    return 2.0 * (((p2[1] - p1[1]) * (p2[0] - p1[0])) > 0.0)


def builtin_one_sample(name: str) -> OneSampleKernelSpec:
    """Return a built-in one-sample kernel with its (c₀, κ) constants.

    The table of constants: ``t_stat`` (2, 0); ``sample_variance``
    (10, (θ/σ)²); ``gini`` (8, (θ/σ)²); ``wilcoxon_one`` (1, σ⁻²);
    ``kendall_tau`` (1, σ⁻²).  Population-dependent κ values are stored
    as a ``kappa_form`` rule rather than a number.
    """
    if name == "t_stat":
        return OneSampleKernelSpec(
            name=name, order=2, evaluate=_h_t_stat, theta_null=0.0,
            c0=2.0, kappa=0.0, vectorized=True,
        )
    if name == "sample_variance":
        return OneSampleKernelSpec(
            name=name, order=2, evaluate=_h_sample_variance, theta_null=None,
            c0=10.0, kappa=None, kappa_form="theta_over_sigma_sq",
            vectorized=True,
        )
    if name == "gini":
        return OneSampleKernelSpec(
            name=name, order=2, evaluate=_h_gini, theta_null=None,
            c0=8.0, kappa=None, kappa_form="theta_over_sigma_sq",
            vectorized=True,
        )
    if name == "wilcoxon_one":
        return OneSampleKernelSpec(
            name=name, order=2, evaluate=_h_wilcoxon_one, theta_null=0.5,
            c0=1.0, kappa=None, kappa_form="inv_sigma_sq",
            vectorized=True,
        )
    if name == "kendall_tau":
        # Bivariate observations; evaluate takes two length-2 points.
        return OneSampleKernelSpec(
            name=name, order=2, evaluate=_h_kendall_tau, theta_null=1.0,
            c0=1.0, kappa=None, kappa_form="inv_sigma_sq",
            vectorized=False,
        )
    raise ValueError(f"unknown one-sample kernel {name!r}")


def resolve_kappa(spec, sigma2: float, theta: Optional[float] = None) -> float:
    """Turn a kernel's κ entry into a number.

    Plain numeric κ is returned as-is.  ``inv_sigma_sq`` resolves to
    1/σ²; ``theta_over_sigma_sq`` resolves to (θ/σ)² and needs θ (taken
    from ``spec.theta_null`` unless given explicitly).
    """
    if spec.kappa is not None:
        return float(spec.kappa)
    if spec.kappa_form == "inv_sigma_sq":
        return 1.0 / sigma2
    if spec.kappa_form == "theta_over_sigma_sq":
        th = theta if theta is not None else spec.theta_null
        if th is None:
            raise UnsupportedKernelError(
                f"{spec.name}: kappa rule needs theta, none available")
        return th * th / sigma2
    raise UnsupportedKernelError(f"{spec.name}: no kappa available")


# ===================== Monte Carlo projection =====================

def project_h1_mc(spec: KernelSpec, x: float, sampler_F, sampler_G,
                  reps: int, seed: int) -> float:
    """Monte Carlo estimate of the first-sample projection h₁(x).

    Averages ``evaluate(x, X₂.., Y₁..)`` over ``reps`` independent draws
    of the remaining ``s1 - 1`` arguments from F and ``s2`` from G.
    Samplers are called as ``sampler(rng, size)``.  Deterministic given
    ``seed``; single-threaded.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    s1, s2 = spec.order
    rng = np.random.default_rng(seed)
    cols = [np.full(reps, float(x))]
    for _ in range(s1 - 1):
        cols.append(np.asarray(sampler_F(rng, reps), dtype=float))
    for _ in range(s2):
        cols.append(np.asarray(sampler_G(rng, reps), dtype=float))
    if spec.vectorized:
        vals = np.asarray(spec.evaluate(*cols), dtype=float)
    else:
        vals = np.array([spec.evaluate(*(c[i] for c in cols))
                         for i in range(reps)], dtype=float)
    return float(vals.mean())


# ===================== regularity condition check =====================

def condition_grid(spec: KernelSpec, low: float, high: float,
                   n: int = 10_000, seed: int = 0) -> list:
    """Quasi-random argument blocks covering ``[low, high]`` per axis.

    Returns a list of ``(x_block, y_block)`` tuples suitable for
    :func:`check_kernel_condition`.  Halton points give deterministic,
    well-spread coverage of the joint argument range.
    """
    s1, s2 = spec.order
    sampler = qmc.Halton(d=s1 + s2, scramble=True, seed=seed)
    pts = low + (high - low) * sampler.random(n)
    return [(tuple(row[:s1]), tuple(row[s1:])) for row in pts]


def check_kernel_condition(spec: KernelSpec, grid: Sequence, sigma2: float) -> ConditionReport:
    """Check ``{h(x;y) − θ}² ≤ c₀[κσ² + Σ(h₁(xᵢ)−θ)² + Σ(h₂(yⱼ)−θ)²]``
    on every grid point.

    The check is numerical, not a proof: it reports the first violating
    block if any.  Requires the kernel spec to carry θ, h₁, h₂, c₀ and a
    resolvable κ.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    missing = [f for f in ("theta_null", "h1", "h2", "c0")
               if getattr(spec, f) is None]
    if missing:
        raise UnsupportedKernelError(
            f"{spec.name}: cannot check condition, missing {missing}")
    kap = resolve_kappa(spec, sigma2)
    theta = spec.theta_null
    c0 = spec.c0
    s1, s2 = spec.order

    violations = 0
    first = None
    for xb, yb in grid:
        h = float(spec.evaluate(*xb, *yb))
        lhs = (h - theta) ** 2
        rhs = kap * sigma2
        rhs += sum((float(spec.h1(xi)) - theta) ** 2 for xi in xb)
        rhs += sum((float(spec.h2(yj)) - theta) ** 2 for yj in yb)
        rhs *= c0
        if lhs > rhs:
            violations += 1
            if first is None:
                first = (tuple(xb), tuple(yb), lhs, rhs)
    return ConditionReport(passed=(violations == 0),
                           points_checked=len(grid),
                           violations=violations,
                           first_violation=first)


# ===================== quadrature cross-check =====================

def null_variance_quadrature(name: str) -> float:
    """Recompute a rank kernel's null variance by integrating h₁² under
    U(0,1) with deterministic adaptive quadrature.

    Independent of the stored constants: integrates the analytic
    projection directly, so it serves as an oracle for
    ``sigma1_sq_null``.
    """
    spec = builtin_two_sample(name)
    if spec.h1 is None or spec.sigma1_sq_null is None:
        raise UnsupportedKernelError(f"{name}: no analytic projection to integrate")
    val, _ = integrate.quad(lambda u: spec.h1(u) ** 2, 0.0, 1.0,
                            epsabs=1e-13, epsrel=1e-13)
    return val
