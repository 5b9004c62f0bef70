"""Tests for one- and two-sample U-statistics and their jackknives."""

import itertools
import math

import numpy as np
import pytest
from scipy import stats as sps

from ustatlab.errors import DegenerateSampleError, WorkBudgetError
from ustatlab.kernels import builtin_one_sample, builtin_two_sample
from ustatlab.rng import derive_key, uniforms
from ustatlab.ustat import (
    TwoSampleData,
    jackknife_two_sample,
    mann_whitney_fast,
    mw_count_batch,
    mw_studentize_batch,
    studentize_one_sample,
    u_one_sample,
    u_two_sample,
)

MW = builtin_two_sample("mann_whitney")
MEAN_DIFF = builtin_two_sample("mean_diff")


def _brute_u(kernel, x, y):
    """Independent enumeration oracle for the two-sample U-statistic."""
    s1, s2 = kernel.order
    vals = [float(kernel.evaluate(*(list(cx) + list(cy))))
            for cx in itertools.combinations(x, s1)
            for cy in itertools.combinations(y, s2)]
    return math.fsum(vals) / len(vals)


def _brute_jackknife_mw(x, y):
    """Hand implementation of the leave-one-out displays for (1,1)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n1, n2 = len(x), len(y)
    q = np.array([np.mean(y < xi) for xi in x])
    p = np.array([np.mean(x <= yj) for yj in y])
    s1h = np.sum((q - q.mean()) ** 2) / (n1 - 1)
    s2h = np.sum((p - p.mean()) ** 2) / (n2 - 1)
    snb2 = s1h / n1 + s2h / n2
    u = np.mean(x[:, None] <= y[None, :])
    return u, s1h, s2h, snb2, (u - 0.5) / math.sqrt(snb2)


# ===================== generic U =====================

def test_u_two_sample_mann_whitney_example():
    data = TwoSampleData(np.array([1.0, 3.0]), np.array([2.0, 4.0]))
    # Indicator average 3/4, so the centered kernel averages to 1/4.
    assert u_two_sample(MW, data) == 0.25


def test_u_two_sample_mean_diff_identical():
    data = TwoSampleData(np.array([2.0, 5.0, 7.0]), np.array([7.0, 2.0, 5.0]))
    assert u_two_sample(MEAN_DIFF, data) == 0.0


def test_u_two_sample_lehmann_single_combination():
    data = TwoSampleData(np.array([0.0, 1.0]), np.array([0.0, 3.0]))
    assert u_two_sample(builtin_two_sample("lehmann"), data) == 0.5


@pytest.mark.parametrize("name", ["mann_whitney", "lehmann", "kochar", "mean_diff"])
def test_u_two_sample_matches_bruteforce(name):
    kernel = builtin_two_sample(name)
    key = derive_key(4100, "brute", name)
    for trial in range(8):
        u = uniforms(key, 13, offset=trial * 13)
        x, y = u[:7] * 3.0, u[7:] * 3.0
        got = u_two_sample(kernel, TwoSampleData(x, y))
        assert got == pytest.approx(_brute_u(kernel, x, y), abs=1e-12)


def test_budget_refuses_large_enumerations():
    x = np.arange(30, dtype=float)
    y = np.arange(30, dtype=float) + 0.5
    kochar = builtin_two_sample("kochar")
    with pytest.raises(WorkBudgetError):
        u_two_sample(kochar, TwoSampleData(x, y), budget=1000)
    with pytest.raises(WorkBudgetError):
        jackknife_two_sample(kochar, TwoSampleData(x, y), budget=1000)


def test_order_larger_than_sample():
    data = TwoSampleData(np.array([1.0]), np.array([2.0, 3.0]))
    with pytest.raises(ValueError):
        u_two_sample(builtin_two_sample("lehmann"), data)


def test_two_sample_data_validation():
    with pytest.raises(ValueError):
        TwoSampleData(np.array([1.0, np.nan]), np.array([2.0]))
    with pytest.raises(ValueError):
        TwoSampleData(np.array([1.0]), np.array([np.inf]))


# ===================== two-sample jackknife =====================

def test_jackknife_mann_whitney_example():
    data = TwoSampleData(np.array([1.0, 3.0]), np.array([2.0, 4.0]))
    res = jackknife_two_sample(MW, data)
    assert res.sigma1_hat2 == 0.125
    assert res.sigma2_hat2 == 0.125
    assert res.sigma_nbar_hat2 == 0.125
    assert res.statistic == pytest.approx(0.25 / math.sqrt(0.125), abs=1e-15)


def test_jackknife_degenerate_raises():
    # All x below all y: every q_i and p_j is constant.
    data = TwoSampleData(np.array([0.0, 1.0, 2.0]), np.array([5.0, 6.0, 7.0]))
    with pytest.raises(DegenerateSampleError):
        jackknife_two_sample(MW, data)


def test_jackknife_matches_hand_loops():
    key = derive_key(4200, "jack")
    for trial in range(25):
        u = uniforms(key, 9, offset=trial * 9)
        x, y = u[:5], u[5:]
        res = jackknife_two_sample(MW, TwoSampleData(x, y))
        u_ref, s1h, s2h, snb2, stat = _brute_jackknife_mw(x, y)
        assert res.sigma1_hat2 == pytest.approx(s1h, rel=1e-12)
        assert res.sigma2_hat2 == pytest.approx(s2h, rel=1e-12)
        assert res.statistic == pytest.approx(stat, rel=1e-12)


def test_centering_identity():
    for name, kernel in [("mw", MW), ("md", MEAN_DIFF)]:
        for trial in range(10):
            u = uniforms(derive_key(4300, name, trial), 14)
            data = TwoSampleData(u[:8] * 2.0, u[8:] - 0.2)
            res = jackknife_two_sample(kernel, data)
            recon = res.statistic * math.sqrt(res.sigma_nbar_hat2) + res.theta0
            assert abs(recon - res.u) <= 4 * np.spacing(max(abs(res.u), 1.0))


# ===================== Mann-Whitney fast path =====================

def test_mw_fast_example():
    data = TwoSampleData(np.array([1.0, 3.0]), np.array([2.0, 4.0]))
    res = mann_whitney_fast(data)
    assert res.u == 0.75
    assert res.theta0 == 0.5
    assert res.sigma_nbar_hat2 == 0.125
    ref = jackknife_two_sample(MW, data)
    assert res.statistic == ref.statistic


def test_mw_fast_equals_generic_corpus():
    # Oracle equivalence on random small datasets, ties included.
    worst = 0.0
    checked = 0
    for trial in range(200):
        key = derive_key(4400, "equiv", trial)
        u = uniforms(key, 24)
        n1 = 3 + int(u[0] * 10)
        n2 = 3 + int(u[1] * 10)
        vals = np.floor(u[2:2 + n1 + n2] * 8.0) / 4.0  # coarse grid forces ties
        data = TwoSampleData(vals[:n1], vals[n1:])
        try:
            fast = mann_whitney_fast(data)
        except DegenerateSampleError:
            with pytest.raises(DegenerateSampleError):
                jackknife_two_sample(MW, data)
            continue
        gen = jackknife_two_sample(MW, data)
        tol = 4 * np.spacing(max(abs(gen.statistic), 1.0))
        assert abs(fast.statistic - gen.statistic) <= tol
        assert fast.sigma1_hat2 == gen.sigma1_hat2
        assert fast.sigma2_hat2 == gen.sigma2_hat2
        # u conventions differ by the 1/2 centering.
        assert abs((fast.u - 0.5) - gen.u) <= 2 * np.spacing(1.0)
        worst = max(worst, abs(fast.statistic - gen.statistic) / np.spacing(max(abs(gen.statistic), 1.0)))
        checked += 1
    assert checked > 150
    assert worst <= 4.0


def test_mw_fast_separated_degenerate():
    data = TwoSampleData(np.array([0.0, 0.5, 1.0]), np.array([2.0, 3.0, 4.0]))
    with pytest.raises(DegenerateSampleError):
        mann_whitney_fast(data)


def test_mw_monotone_transform_invariance():
    key = derive_key(4500, "mono")
    u = uniforms(key, 20)
    x, y = u[:12] * 4.0 - 2.0, u[12:] * 4.0 - 2.0
    base = mann_whitney_fast(TwoSampleData(x, y))
    warped = mann_whitney_fast(TwoSampleData(np.exp(x), np.exp(y)))
    assert warped.u == base.u
    assert warped.sigma1_hat2 == base.sigma1_hat2
    assert warped.sigma2_hat2 == base.sigma2_hat2
    assert warped.statistic == base.statistic


def test_mw_variance_constant_mc():
    # Under F = G the scaled statistic sqrt(n1 n2/(n1+n2)) (U - 1/2) has
    # limiting variance 1/12; check the Monte Carlo variance to 2%.
    n1 = n2 = 500
    reps = 100_000
    key = derive_key(4600, "mwvar")
    total = np.zeros(reps)
    chunk = 2000
    for lo in range(0, reps, chunk):
        hi = min(lo + chunk, reps)
        rows = hi - lo
        flat = uniforms(derive_key(4600, "mwvar", lo), rows * (n1 + n2))
        block = flat.reshape(rows, n1 + n2)
        _, p_le = mw_count_batch(block[:, :n1], block[:, n1:])
        total[lo:hi] = p_le.sum(axis=1) / (n1 * n2)
    scaled = math.sqrt(n1 * n2 / (n1 + n2)) * (total - 0.5)
    var = float(np.var(scaled))
    assert abs(var - 1.0 / 12.0) < 0.02 / 12.0


def test_mw_count_batch_bruteforce():
    key = derive_key(4700, "counts")
    for trial in range(30):
        u = uniforms(key, 16, offset=16 * trial)
        vals = np.floor(u * 6.0)  # heavy ties
        xb = vals[:8].reshape(1, 8)
        yb = vals[8:].reshape(1, 8)
        q_less, p_le = mw_count_batch(xb, yb)
        q_ref = [(vals[8:] < xi).sum() for xi in vals[:8]]
        p_ref = [(vals[:8] <= yj).sum() for yj in vals[8:]]
        np.testing.assert_array_equal(q_less[0], q_ref)
        np.testing.assert_array_equal(p_le[0], p_ref)


def test_mw_studentize_batch_matches_single():
    key = derive_key(4800, "batch")
    rows = []
    for trial in range(6):
        u = uniforms(key, 15, offset=15 * trial)
        rows.append(u)
    block = np.asarray(rows)
    xb, yb = block[:, :7], block[:, 7:]
    u_hat, stat, degen = mw_studentize_batch(xb, yb)
    assert not degen.any()
    for i in range(len(rows)):
        ref = mann_whitney_fast(TwoSampleData(xb[i], yb[i]))
        assert u_hat[i] == ref.u
        assert stat[i] == ref.statistic


def test_mw_studentize_batch_flags_degenerate_rows():
    x_ok = np.array([0.3, 0.9, 0.1, 0.7])
    y_ok = np.array([0.5, 0.2, 0.8, 0.4])
    x_bad = np.array([0.0, 0.1, 0.2, 0.3])
    y_bad = np.array([1.0, 1.1, 1.2, 1.3])
    xb = np.vstack([x_ok, x_bad])
    yb = np.vstack([y_ok, y_bad])
    u_hat, stat, degen = mw_studentize_batch(xb, yb)
    assert list(degen) == [False, True]
    assert np.isnan(stat[1])
    ref = mann_whitney_fast(TwoSampleData(x_ok, y_ok))
    assert stat[0] == ref.statistic


def test_mean_diff_unbiased_mc():
    # E(U) = mu1 - mu2 for the mean-difference kernel.
    mu1, mu2 = 1.5, 0.75
    reps = 10_000
    key = derive_key(4900, "unbiased")
    flat = uniforms(key, reps * 10).reshape(reps, 10)
    x = mu1 + (flat[:, :5] - 0.5)
    y = mu2 + (flat[:, 5:] - 0.5)
    diffs = x.mean(axis=1) - y.mean(axis=1)
    se = float(np.std(diffs)) / math.sqrt(reps)
    assert abs(float(diffs.mean()) - (mu1 - mu2)) < 3 * se


# ===================== one-sample =====================

def test_u_one_sample_examples():
    gini = builtin_one_sample("gini")
    assert u_one_sample(gini, np.array([0.0, 1.0, 3.0])) == 2.0
    sv = builtin_one_sample("sample_variance")
    assert u_one_sample(sv, np.array([0.0, 2.0])) == 2.0


def test_u_one_sample_t_stat_is_mean():
    key = derive_key(5000, "mean")
    x = uniforms(key, 11) * 5.0
    t = builtin_one_sample("t_stat")
    assert u_one_sample(t, x) == pytest.approx(float(np.mean(x)), rel=1e-14)


def test_u_one_sample_too_small():
    with pytest.raises(ValueError):
        u_one_sample(builtin_one_sample("gini"), np.array([1.0]))


def test_one_sample_t_equals_classical():
    kernel = builtin_one_sample("t_stat")
    key = derive_key(5100, "classical")
    for trial in range(60):
        n = 5 + int(uniforms(key, 1, offset=trial)[0] * 30)
        x = uniforms(derive_key(5100, "x", trial), n) * 2.0 - 0.7
        res = studentize_one_sample(kernel, x)
        classical = math.sqrt(n) * float(np.mean(x)) / float(np.std(x, ddof=1))
        tol = 4 * np.spacing(max(abs(classical), 1.0))
        assert abs(res.statistic - classical) <= tol


def test_one_sample_needs_n_over_2s():
    kernel = builtin_one_sample("t_stat")
    with pytest.raises(ValueError):
        studentize_one_sample(kernel, np.array([1.0, 2.0, 3.0, 4.0]))
    studentize_one_sample(kernel, np.array([1.0, 2.0, 3.0, 4.0, 5.5]))


def test_one_sample_constant_degenerate():
    sv = builtin_one_sample("sample_variance")
    with pytest.raises(DegenerateSampleError):
        studentize_one_sample(sv, np.full(9, 3.25))


def test_wilcoxon_one_matches_bruteforce():
    w = builtin_one_sample("wilcoxon_one")
    key = derive_key(5200, "wil")
    x = uniforms(key, 9) * 2.0 - 1.0
    pairs = [float(xi + xj <= 0.0)
             for xi, xj in itertools.combinations(x, 2)]
    assert u_one_sample(w, x) == pytest.approx(np.mean(pairs), abs=1e-15)


def test_wilcoxon_one_clt():
    """Studentized statistic is close to standard normal for symmetric data."""
    w = builtin_one_sample("wilcoxon_one")
    n, reps = 200, 10_000
    stats = np.empty(reps)
    for r in range(reps):
        u = uniforms(derive_key(5300, "clt", r), n)
        x = 2.0 * u - 1.0
        stats[r] = studentize_one_sample(w, x).statistic
    ks = sps.kstest(stats, "norm").statistic
    assert ks < 0.02


def test_kendall_tau_matches_scipy():
    key = derive_key(5400, "kendall")
    u = uniforms(key, 24)
    pts = np.column_stack([u[:12], u[12:]])
    k = builtin_one_sample("kendall_tau")
    got = u_one_sample(k, pts)
    tau = sps.kendalltau(pts[:, 0], pts[:, 1]).statistic
    # The kernel 2*I{concordant} averages to tau + 1 without ties.
    assert got == pytest.approx(tau + 1.0, abs=1e-12)


def test_one_sample_budget():
    gini = builtin_one_sample("gini")
    with pytest.raises(WorkBudgetError):
        u_one_sample(gini, np.arange(100, dtype=float), budget=100)
