"""Simulation designs, Monte Carlo experiment runners, and tail-ratio
studies.

Two families of designs are built in.  The mean-shift family (sim1_exp,
sim1_t) tests equality of means with the two-sample t statistic under
two-sided alternatives; its errors are centered analytically so the
first m1 features carry a pure location signal.  The stochastic-order
family (sim2_case1, sim2_case2) tests P(X <= Y) = 1/2 with the
Studentized Mann-Whitney statistic under one-sided alternatives; its
errors are used as drawn, with distribution pairs chosen so the null
holds exactly when the shift is zero.

Signals sit in the first m1 = floor(1.6*sqrt(m)) features with common
magnitude c * sqrt((sigma1^2/n1 + sigma2^2/n2) * log m); c = 0 makes
every null true.

Every observation is generated by a counter-based generator keyed on
(master_seed, "data", rep, attempt, feature, group), with a fixed
number of uniform lanes per observation, so any single value can be
recomputed in isolation and results are bit-identical however the work
is scheduled across processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import calibration as cal
from .errors import DegenerateSampleError, ExcessiveDegeneracyError
from .multiple_testing import bh_procedure, fdr_accounting
from .rng import derive_key, uniforms_block
from .tstat import MomentSummary, corrected_tail, normal_upper_tail, welch_batch
from .ustat import TwoSampleData, mw_studentize_batch

__all__ = [
    "DistSpec",
    "ExperimentConfig",
    "CurvePoint",
    "TailRatioCurve",
    "dist_for_name",
    "design_distributions",
    "generate_sim1",
    "generate_sim2",
    "run_fdr_experiment",
    "run_fdr_experiment_full",
    "run_tail_ratio_experiment",
    "population_moment_pairs",
]

SIM1_DESIGNS = ("sim1_exp", "sim1_t")
SIM2_DESIGNS = ("sim2_case1", "sim2_case2")
_REDRAW_CAP = 10
_TAIL_CHUNK = 5000


# ===================== error distributions =====================

@dataclass(frozen=True)
class DistSpec:
    """One error distribution with analytic moments and a lane-based sampler.

    Each observation consumes a fixed number of uniform lanes from the
    counter stream: 1 for exponential and uniform, 2 for normal (one
    Box-Muller pair, cosine branch), 2(k+1) for t(k) (numerator normal
    plus k chi-square normals), a+b for Beta(a, b) (two integer-shape
    gamma variates from log-products).
    """

    kind: str            # "exp" | "uniform" | "normal" | "t" | "beta"
    scale: float = 1.0   # exp only
    df: int = 0          # t only
    a: int = 0           # beta only
    b: int = 0

    def __post_init__(self):
        if self.kind == "exp":
            if self.scale <= 0:
                raise ValueError("exponential scale must be positive")
        elif self.kind == "t":
            if self.df <= 2:
                raise ValueError("t needs df >= 3 for a finite variance")
        elif self.kind == "beta":
            if self.a < 1 or self.b < 1:
                raise ValueError("beta needs integer shapes >= 1")
        elif self.kind not in ("uniform", "normal"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    # ----- lane layout -----

    @property
    def lanes(self) -> int:
        if self.kind in ("exp", "uniform"):
            return 1
        if self.kind == "normal":
            return 2
        if self.kind == "t":
            return 2 * (self.df + 1)
        return self.a + self.b

    # ----- analytic moments -----

    @property
    def mean(self) -> float:
        if self.kind == "exp":
            return self.scale
        if self.kind == "uniform":
            return 0.5
        if self.kind == "beta":
            return self.a / (self.a + self.b)
        return 0.0

    @property
    def var(self) -> float:
        if self.kind == "exp":
            return self.scale ** 2
        if self.kind == "uniform":
            return 1.0 / 12.0
        if self.kind == "normal":
            return 1.0
        if self.kind == "t":
            return self.df / (self.df - 2)
        s = self.a + self.b
        return self.a * self.b / (s * s * (s + 1))

    @property
    def gamma3(self) -> float:
        """Third central moment; raises when it does not exist."""
        if self.kind == "exp":
            return 2.0 * self.scale ** 3
        if self.kind in ("uniform", "normal"):
            return 0.0
        if self.kind == "t":
            if self.df <= 3:
                raise ValueError("t(3) has no third moment")
            return 0.0
        skew = (2.0 * (self.b - self.a) * math.sqrt(self.a + self.b + 1)
                / ((self.a + self.b + 2) * math.sqrt(self.a * self.b)))
        return skew * self.var ** 1.5

    # ----- sampling -----

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map a (..., lanes) block of (0,1] uniforms to draws of shape (...)."""
        if self.kind == "exp":
            return -self.scale * np.log(u[..., 0])
        if self.kind == "uniform":
            return u[..., 0]
        if self.kind == "normal":
            return np.sqrt(-2.0 * np.log(u[..., 0])) * np.cos(2.0 * np.pi * u[..., 1])
        if self.kind == "t":
            pairs = u.reshape(u.shape[:-1] + (self.df + 1, 2))
            z = np.sqrt(-2.0 * np.log(pairs[..., 0])) * np.cos(2.0 * np.pi * pairs[..., 1])
            return z[..., 0] / np.sqrt(np.sum(z[..., 1:] ** 2, axis=-1) / self.df)
        g1 = -np.sum(np.log(u[..., :self.a]), axis=-1)
        g2 = -np.sum(np.log(u[..., self.a:]), axis=-1)
        return g1 / (g1 + g2)

    def sample_block(self, keys: np.ndarray, n: int) -> np.ndarray:
        """(len(keys), n) draws; observation i uses lanes [i*lanes, (i+1)*lanes)."""
        u = uniforms_block(keys, n * self.lanes)
        return self.transform(u.reshape(len(keys), n, self.lanes))


def dist_for_name(name: str) -> DistSpec:
    """Registry of distribution spellings used by configs and the CLI."""
    table = {
        "exp1": DistSpec("exp", scale=1.0),
        "exp2": DistSpec("exp", scale=2.0),
        "uniform": DistSpec("uniform"),
        "normal": DistSpec("normal"),
        "t3": DistSpec("t", df=3),
        "t4": DistSpec("t", df=4),
        "beta10": DistSpec("beta", a=10, b=10),
    }
    if name not in table:
        raise ValueError(f"unknown distribution {name!r}; "
                         f"choose from {sorted(table)}")
    return table[name]


def design_distributions(design: str, variant: str) -> Tuple[DistSpec, DistSpec]:
    """Error distribution pair for a (design, variant) combination."""
    table = {
        ("sim1_exp", "homogeneous"): ("exp2", "exp2"),
        ("sim1_exp", "heteroscedastic"): ("exp2", "exp1"),
        ("sim1_t", "homogeneous"): ("t4", "t4"),
        ("sim1_t", "heteroscedastic"): ("t4", "t3"),
        ("sim2_case1", "identical"): ("normal", "normal"),
        ("sim2_case1", "non_identical"): ("normal", "t3"),
        ("sim2_case2", "identical"): ("uniform", "uniform"),
        ("sim2_case2", "non_identical"): ("uniform", "beta10"),
    }
    key = (design, variant)
    if key not in table:
        raise ValueError(f"no variant {variant!r} for design {design!r}")
    d1, d2 = table[key]
    return dist_for_name(d1), dist_for_name(d2)


# ===================== configuration =====================

@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one FDR simulation run.

    ``methods`` picks calibrations from {normal, bootstrap,
    reg_bootstrap}; the regularized bootstrap applies to the mean-shift
    designs only.  ``reg_constant`` fixes the truncation constant; None
    selects it once by cross-validation on the first replicate's data.
    """

    design: str
    variant: str
    n1: int
    n2: int
    m: int
    c: float
    alphas: Tuple[float, ...]
    B: int
    n_reps: int
    master_seed: int
    methods: Tuple[str, ...] = ("normal",)
    reg_constant: Optional[float] = None
    reg_candidates: Tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 8.0)
    b_cv: int = 100

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "reg_candidates",
                           tuple(float(c) for c in self.reg_candidates))
        if self.design not in SIM1_DESIGNS + SIM2_DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        design_distributions(self.design, self.variant)  # validates the pair
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError("need n1, n2 >= 4")
        if self.m < 4:
            raise ValueError("need m >= 4")
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        if not self.alphas or not all(0.0 < a < 1.0 for a in self.alphas):
            raise ValueError("alphas must be a nonempty subset of (0, 1)")
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        allowed = ({"normal", "bootstrap", "reg_bootstrap"}
                   if self.design in SIM1_DESIGNS else {"normal", "bootstrap"})
        bad = [meth for meth in self.methods if meth not in allowed]
        if bad or not self.methods:
            raise ValueError(
                f"methods for {self.design} must be a nonempty subset of "
                f"{sorted(allowed)}, got {list(self.methods)}")
        if self.reg_constant is not None and self.reg_constant <= 0:
            raise ValueError("reg_constant must be positive")

    @property
    def m1(self) -> int:
        """Number of signal features; zero when c = 0."""
        return 0 if self.c == 0 else math.floor(1.6 * math.sqrt(self.m))

    @property
    def sided(self) -> str:
        return "two_sided" if self.design in SIM1_DESIGNS else "one_sided"

    @property
    def null_set(self) -> frozenset:
        return frozenset(range(self.m1, self.m))

    def signal_magnitude(self) -> float:
        d1, d2 = design_distributions(self.design, self.variant)
        return self.c * math.sqrt(
            (d1.var / self.n1 + d2.var / self.n2) * math.log(self.m))


# ===================== data generation =====================

def _feature_keys(config: ExperimentConfig, rep: int, attempt: int,
                  group: int) -> np.ndarray:
    keys = [derive_key(config.master_seed, "data", rep, attempt, k, group)
            for k in range(config.m)]
    return np.array(keys, dtype=np.uint64)


def _generate_matrices(config: ExperimentConfig, rep: int,
                       attempt: int) -> Tuple[np.ndarray, np.ndarray]:
    """(m, n1) and (m, n2) observation matrices for one replicate."""
    d1, d2 = design_distributions(config.design, config.variant)
    e1 = d1.sample_block(_feature_keys(config, rep, attempt, 1), config.n1)
    e2 = d2.sample_block(_feature_keys(config, rep, attempt, 2), config.n2)
    if config.design in SIM1_DESIGNS:
        # Mean-shift family: errors centered analytically.
        e1 -= d1.mean
        e2 -= d2.mean
    mu2 = np.zeros((config.m, 1))
    if config.m1 > 0:
        mu2[: config.m1, 0] = config.signal_magnitude()
    return e1, e2 + mu2


def _as_feature_list(x: np.ndarray, y: np.ndarray) -> List[TwoSampleData]:
    return [TwoSampleData(x=x[k], y=y[k]) for k in range(x.shape[0])]


def generate_sim1(config: ExperimentConfig, rep: int) -> List[TwoSampleData]:
    """Mean-shift replicate: centered errors, signal in the first m1 means."""
    if config.design not in SIM1_DESIGNS:
        raise ValueError(f"config design {config.design!r} is not a sim1 design")
    if rep < 0:
        raise ValueError("rep must be nonnegative")
    return _as_feature_list(*_generate_matrices(config, rep, attempt=0))


def generate_sim2(config: ExperimentConfig, rep: int) -> List[TwoSampleData]:
    """Stochastic-order replicate: raw errors, one-sided location signal."""
    if config.design not in SIM2_DESIGNS:
        raise ValueError(f"config design {config.design!r} is not a sim2 design")
    if rep < 0:
        raise ValueError("rep must be nonnegative")
    return _as_feature_list(*_generate_matrices(config, rep, attempt=0))


def population_moment_pairs(config: ExperimentConfig) -> List[Tuple[MomentSummary, MomentSummary]]:
    """Population MomentSummary pairs for every feature (for diagnostics).

    Raises ValueError when a design's error law lacks a third moment
    (t(3) heteroscedastic variants).
    """
    d1, d2 = design_distributions(config.design, config.variant)
    m1s = MomentSummary(n=config.n1, mean=0.0, var=d1.var, gamma3=d1.gamma3)
    m2s = MomentSummary(n=config.n2, mean=0.0, var=d2.var, gamma3=d2.gamma3)
    return [(m1s, m2s)] * config.m


# ===================== FDR experiment =====================

@dataclass(frozen=True)
class CurvePoint:
    """Across-replicate summary for one (method, alpha) cell."""

    alpha: float
    empirical_fdr: float
    correct_rejection_proportion: float
    method: str
    mc_se: float
    crp_se: float = 0.0
    m1: int = 0
    no_alternatives: bool = False


def _rep_pvalue_sets(config: ExperimentConfig, rep: int,
                     attempt: int) -> Dict[str, cal.PValueSet]:
    """Statistics and p-values for one replicate attempt; may raise
    DegenerateSampleError or ExcessiveDegeneracyError."""
    x, y = _generate_matrices(config, rep, attempt)
    boot_seed = derive_key(config.master_seed, "rep", rep, attempt)
    out: Dict[str, cal.PValueSet] = {}
    if config.design in SIM1_DESIGNS:
        stats, degen = welch_batch(x, y)
        if degen.any():
            raise ExcessiveDegeneracyError("degenerate observed feature")
        data = None
        if any(meth != "normal" for meth in config.methods):
            data = _as_feature_list(x, y)
        for meth in config.methods:
            if meth == "normal":
                out[meth] = cal.normal_pvalues(stats, "two_sided")
            elif meth == "bootstrap":
                null = cal.bootstrap_null_t(data, config.B, boot_seed)
                out[meth] = cal.bootstrap_pvalues(null, stats, "two_sided")
            else:
                if config.reg_constant is None:
                    raise ValueError("reg_constant unresolved; run through "
                                     "run_fdr_experiment or set it explicitly")
                plan = cal.make_truncation_plan(data, config.m,
                                                config.reg_constant)
                out[meth] = cal.regularized_bootstrap_pvalues(
                    data, plan, config.B, boot_seed, "two_sided")
    else:
        u, stats, degen = mw_studentize_batch(x, y)
        if degen.any() or not np.isfinite(stats).all():
            raise ExcessiveDegeneracyError("degenerate observed feature")
        for meth in config.methods:
            if meth == "normal":
                out[meth] = cal.normal_pvalues(stats, "one_sided")
            else:
                data = _as_feature_list(x, y)
                null = cal.bootstrap_null_mw(data, config.B, boot_seed)
                out[meth] = cal.bootstrap_pvalues(null, stats, "one_sided")
    return out


def _run_one_rep(payload) -> Tuple[int, int, Dict[Tuple[str, float], Tuple[float, float]]]:
    """Worker: one replicate with redraw-on-degeneracy. Returns
    (rep, attempts_used, {(method, alpha): (fdp, crp)})."""
    config, rep = payload
    last_err: Optional[Exception] = None
    for attempt in range(_REDRAW_CAP):
        try:
            psets = _rep_pvalue_sets(config, rep, attempt)
        except (ExcessiveDegeneracyError, DegenerateSampleError) as err:
            last_err = err
            continue
        null_set = config.null_set
        cells: Dict[Tuple[str, float], Tuple[float, float]] = {}
        for meth in config.methods:
            for alpha in config.alphas:
                outcome = bh_procedure(psets[meth], alpha)
                report = fdr_accounting(outcome, null_set)
                cells[(meth, alpha)] = (report.fdp,
                                        report.correct_rejection_proportion)
        return rep, attempt + 1, cells
    raise ExcessiveDegeneracyError(
        f"replicate {rep}: {_REDRAW_CAP} redraws exhausted ({last_err})")


def _resolve_reg_constant(config: ExperimentConfig) -> ExperimentConfig:
    if "reg_bootstrap" not in config.methods or config.reg_constant is not None:
        return config
    data0 = _as_feature_list(*_generate_matrices(config, rep=0, attempt=0))
    cv_seed = derive_key(config.master_seed, "cv0")
    const = cal.choose_truncation_constant(data0, config.reg_candidates,
                                           config.b_cv, cv_seed)
    return replace(config, reg_constant=const)


def run_fdr_experiment_full(config: ExperimentConfig, workers: int = 1):
    """Run the whole experiment; returns (curve points, run info dict).

    Replicates are independent tasks; with workers > 1 they execute in a
    process pool, but results are reduced in replicate order so output
    is bit-identical to a serial run.
    """
    config = _resolve_reg_constant(config)
    payloads = [(config, rep) for rep in range(config.n_reps)]
    if workers <= 1:
        raw = [_run_one_rep(p) for p in payloads]
    else:
        chunk = max(1, config.n_reps // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_run_one_rep, payloads, chunksize=chunk))
    raw.sort(key=lambda r: r[0])
    attempts = [r[1] for r in raw]

    points: List[CurvePoint] = []
    R = config.n_reps
    for meth in config.methods:
        for alpha in config.alphas:
            fdps = np.array([r[2][(meth, alpha)][0] for r in raw])
            crps = np.array([r[2][(meth, alpha)][1] for r in raw])
            fdr_se = float(np.std(fdps, ddof=1) / math.sqrt(R)) if R > 1 else 0.0
            crp_se = float(np.std(crps, ddof=1) / math.sqrt(R)) if R > 1 else 0.0
            points.append(CurvePoint(
                alpha=alpha, empirical_fdr=float(np.mean(fdps)),
                correct_rejection_proportion=float(np.mean(crps)),
                method=meth, mc_se=fdr_se, crp_se=crp_se, m1=config.m1,
                no_alternatives=(config.m1 == 0)))
    info = {
        "redraws": int(sum(a - 1 for a in attempts)),
        "attempts": attempts,
        "reg_constant": config.reg_constant,
        "m1": config.m1,
        "signal_magnitude": (config.signal_magnitude() if config.m1 else 0.0),
    }
    return points, info


def run_fdr_experiment(config: ExperimentConfig,
                       workers: int = 1) -> List[CurvePoint]:
    """Curve points for every (method, alpha) cell; see run_fdr_experiment_full."""
    points, _ = run_fdr_experiment_full(config, workers=workers)
    return points


# ===================== tail-ratio experiment =====================

@dataclass(frozen=True)
class TailRatioCurve:
    """Monte Carlo tail probabilities relative to the normal tail.

    ``corrected_ratios`` additionally divides by the skewness-correction
    factor (two-sample t only; None for Mann-Whitney).  Points with
    fewer than 20 exceedances are flagged unreliable.
    """

    xs: np.ndarray
    ratios: np.ndarray
    corrected_ratios: Optional[np.ndarray]
    mc_ci_halfwidth: np.ndarray
    n_exceed: np.ndarray
    unreliable: np.ndarray
    n_reps: int


def _tail_chunk_counts(args) -> Tuple[np.ndarray, int]:
    """Exceedance counts (len(xs),) plus degenerate-row count for one chunk."""
    statistic, d1, d2, n1, n2, lo, hi, xs, seed = args
    keys1 = np.array([derive_key(seed, "tail", r, 1) for r in range(lo, hi)],
                     dtype=np.uint64)
    keys2 = np.array([derive_key(seed, "tail", r, 2) for r in range(lo, hi)],
                     dtype=np.uint64)
    x = d1.sample_block(keys1, n1)
    y = d2.sample_block(keys2, n2)
    if statistic == "two_sample_t":
        x -= d1.mean
        y -= d2.mean
        stats, degen = welch_batch(x, y)
    else:
        _, stats, degen = mw_studentize_batch(x, y)
    stats = stats[~degen]
    return np.array([int(np.sum(stats >= xv)) for xv in xs]), int(degen.sum())


def run_tail_ratio_experiment(statistic: str, dist_config, n1: int, n2: int,
                              n_reps: int, xs: Sequence[float], seed: int,
                              workers: int = 1) -> TailRatioCurve:
    """Estimate P(statistic >= x) / (1 - Phi(x)) on a grid of x.

    ``dist_config`` is a pair of DistSpec (or registry names).  For the
    two-sample t the errors are centered analytically so the null holds
    for any pair; the corrected ratios divide by the population-moment
    skewness factor.  For the Mann-Whitney statistic the draws are used
    raw, and the caller picks a pair with P(X <= Y) = 1/2.

    Exceedances are integer counts accumulated chunk by chunk, so the
    result is identical for any worker count.
    """
    if statistic not in ("mann_whitney", "two_sample_t"):
        raise ValueError(f"unknown statistic {statistic!r}")
    if n_reps < 1000:
        raise ValueError("need at least 1000 replicates")
    xs = np.asarray([float(v) for v in xs])
    if xs.size == 0 or (xs < 0).any():
        raise ValueError("xs must be nonnegative")
    d1, d2 = dist_config
    if isinstance(d1, str):
        d1 = dist_for_name(d1)
    if isinstance(d2, str):
        d2 = dist_for_name(d2)

    bounds = [(lo, min(lo + _TAIL_CHUNK, n_reps))
              for lo in range(0, n_reps, _TAIL_CHUNK)]
    tasks = [(statistic, d1, d2, n1, n2, lo, hi, xs, seed) for lo, hi in bounds]
    if workers <= 1:
        parts = [_tail_chunk_counts(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_tail_chunk_counts, tasks))
    counts = np.sum([p[0] for p in parts], axis=0)
    dropped = int(sum(p[1] for p in parts))
    n_valid = n_reps - dropped

    phat = counts / n_valid
    base = normal_upper_tail(xs)
    ratios = phat / base
    z = 1.959963984540054  # standard normal 97.5% point
    denom = 1.0 + z * z / n_valid
    halfwidth = (z * np.sqrt(phat * (1 - phat) / n_valid
                             + z * z / (4.0 * n_valid * n_valid)) / denom)
    ci = halfwidth / base

    corrected = None
    if statistic == "two_sample_t":
        ms1 = MomentSummary(n=n1, mean=0.0, var=d1.var, gamma3=d1.gamma3)
        ms2 = MomentSummary(n=n2, mean=0.0, var=d2.var, gamma3=d2.gamma3)
        factors = np.array([
            corrected_tail(float(v), ms1, ms2, use_population=True).correction
            for v in xs])
        corrected = ratios / factors

    return TailRatioCurve(xs=xs, ratios=ratios, corrected_ratios=corrected,
                          mc_ci_halfwidth=ci, n_exceed=counts,
                          unreliable=counts < 20, n_reps=n_valid)
