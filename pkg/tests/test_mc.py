import io
import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st
from scipy import stats

from iunorm.coeffs import CoeffModel
from iunorm.mc import (
    CSV_COLUMNS,
    estimate_expected_norm,
    estimate_expected_norms,
    marcinkiewicz_bound,
    marcinkiewicz_gap,
    read_sweep_csv,
    run_sweep,
    scaling_fit,
    sign_search,
    tail_probability,
    trial_values,
    upper_ratio,
    wilson_interval,
    write_sweep_csv,
)
from iunorm.norms import ConcaveProfile, NormKind, relative_prime
from iunorm.stepfn import StepFunction
from iunorm.systems import (
    indicator_system,
    make_system,
    rademacher_system,
    sampled_rademacher_system,
    trig_system,
)

RADEMACHER = CoeffModel("rademacher")
L1 = NormKind.lp(1)

# 1e6-trial reference from a separate numpy Generator (seed 20261015):
# E max over the 12 midpoints of |xi_-1 e^{-ix} + xi_0 + xi_1 e^{ix}|, Gaussian xi
TRIG1_SUP_GAUSS = 2.1609716089726922
TRIG1_SUP_GAUSS_SE = 0.00096


def exact_abs_sum(n: int) -> float:
    k = np.arange(n + 1)
    return float(np.sum(stats.binom.pmf(k, n, 0.5) * np.abs(n - 2 * k)))


def test_khinchin_binomial_oracle():
    est = estimate_expected_norm(sampled_rademacher_system(100, 4096, 7), RADEMACHER, None, L1,
                                 10_000, 1)
    exact = exact_abs_sum(100)
    assert exact == pytest.approx(7.958923, abs=1e-6)
    assert est.ci95[0] <= exact <= est.ci95[1]


def test_exact_and_sampled_rademacher_agree():
    exact_sys = rademacher_system(10)
    est = estimate_expected_norm(exact_sys, RADEMACHER, None, L1, 4000, 2)
    assert abs(est.mean - exact_abs_sum(10)) <= 4 * est.stderr


def test_parseval_is_exact_per_trial():
    vals = trial_values(rademacher_system(10), RADEMACHER, [NormKind.lp(2)], 50, 3)[:, 0]
    assert np.all(vals == math.sqrt(10))
    est = estimate_expected_norm(rademacher_system(10), RADEMACHER, None, NormKind.lp(2), 50, 3)
    assert est.stderr == 0.0


def test_zero_weights_give_zero():
    est = estimate_expected_norm(rademacher_system(4), RADEMACHER, np.zeros(4), L1, 10, 0)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_trig_pinned_value():
    est = estimate_expected_norm(trig_system(1, symmetric=True), CoeffModel("gaussian"), None,
                                 NormKind.lp(math.inf), 20_000, 4)
    tol = 1.96 * math.hypot(est.stderr, TRIG1_SUP_GAUSS_SE)
    assert abs(est.mean - TRIG1_SUP_GAUSS) <= tol


@pytest.mark.parametrize("system", [trig_system(32), sampled_rademacher_system(64, 2048, 1)],
                         ids=["trig", "rademacher"])
def test_khinchin_bracket(system):
    est = estimate_expected_norm(system, RADEMACHER, None, L1, 2000, 5)
    root = math.sqrt(system.n)
    assert est.ci95[1] >= root / math.sqrt(2) and est.ci95[0] <= root


def test_ci_is_mean_plus_minus():
    est = estimate_expected_norm(trig_system(4), RADEMACHER, None, L1, 100, 9)
    assert est.ci95 == (est.mean - 1.96 * est.stderr, est.mean + 1.96 * est.stderr)
    vals = trial_values(trig_system(4), RADEMACHER, [L1], 100, 9)[:, 0]
    assert est.mean == pytest.approx(vals.mean(), rel=1e-13)
    assert est.stderr == pytest.approx(vals.std(ddof=1) / 10, rel=1e-10)
    with pytest.raises(ValueError):
        estimate_expected_norm(trig_system(4), RADEMACHER, None, L1, 1, 9)


def test_thread_count_does_not_change_results():
    s = sampled_rademacher_system(256, 8192, 2)
    kinds = [NormKind.integral_uniform(m) for m in (2, 16)]
    one = trial_values(s, CoeffModel("gaussian"), kinds, 700, 11, threads=1)
    four = trial_values(s, CoeffModel("gaussian"), kinds, 700, 11, threads=4)
    assert np.array_equal(one, four)


def test_monotone_in_m():
    s = sampled_rademacher_system(128, 4096, 0)
    ests = estimate_expected_norms(s, RADEMACHER, [NormKind.integral_uniform(m) for m in
                                                   (1, 2, 4, 8, 16, 32)], 300, 6)
    means = [e.mean for e in ests]
    # common random numbers make the per-trial values monotone, hence the means too
    assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))


def test_tail_probability_extremes_and_monotonicity():
    s = sampled_rademacher_system(256, 4096, 3)
    assert tail_probability(s, RADEMACHER, None, 16, 0.0, 200, 1).probability == 0.0
    big = 16 * 256 * 1.0 / math.sqrt(256 * (1 + math.log(16)))
    assert tail_probability(s, RADEMACHER, None, 16, big, 200, 1).probability == 1.0
    probs = [tail_probability(s, RADEMACHER, None, m, 0.05, 1000, 1) for m in (4, 16, 64)]
    for a, b in zip(probs, probs[1:]):
        assert b.probability <= a.ci_high
    with pytest.raises(ValueError):
        tail_probability(s, RADEMACHER, None, 4, -1.0, 10, 1)


@given(st.integers(0, 500), st.integers(1, 500))
def test_wilson_interval_contains_estimate(hits, extra):
    trials = hits + extra
    lo, hi = wilson_interval(hits, trials)
    assert 0 <= lo <= hits / trials <= hi <= 1


def test_wilson_against_statsmodels():
    proportion_confint = pytest.importorskip("statsmodels.stats.proportion").proportion_confint

    for hits, trials in ((0, 50), (3, 40), (500, 1000), (99, 100)):
        lo, hi = proportion_confint(hits, trials, alpha=0.05, method="wilson")
        ours = wilson_interval(hits, trials, stats.norm.ppf(0.975))
        assert ours == pytest.approx((lo, hi), abs=1e-12)


def test_scaling_fit_examples():
    xs = np.array([1.0, 2.0, 5.0, 10.0, 100.0])
    fit = scaling_fit(np.column_stack([xs, np.sqrt(xs)]))
    assert fit.exponent == pytest.approx(0.5, abs=1e-12) and fit.r_squared == pytest.approx(1)
    fit = scaling_fit(np.column_stack([xs, np.full(5, 3.0)]))
    assert fit.exponent == pytest.approx(0, abs=1e-12)
    for bad in ([(1, 1), (2, 2)], [(1, 1), (2, 0), (3, 3)], [(-1, 1), (2, 2), (3, 3)]):
        with pytest.raises(ValueError):
            scaling_fit(bad)


@given(st.lists(st.tuples(st.floats(0.1, 1e3), st.floats(0.1, 1e3)), min_size=3, max_size=20,
                unique_by=lambda t: t[0]))
def test_scaling_fit_is_least_squares(points):
    pts = np.array(points)
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) < 1e-6:
        return
    fit = scaling_fit(pts)
    slope, intercept = np.polyfit(lx, ly, 1)
    assert fit.exponent == pytest.approx(slope, abs=1e-8)
    assert fit.intercept == pytest.approx(intercept, abs=1e-8)
    resid = ly - fit.intercept - fit.exponent * lx
    # normal equations
    assert abs(np.sum(resid)) <= 1e-9 * len(lx) and abs(np.sum(resid * lx)) <= 1e-8 * len(lx)


def test_upper_ratio():
    s = sampled_rademacher_system(64, 2048, 0)
    r1 = upper_ratio(s, RADEMACHER, 1, 500, 1)
    assert r1.ratio_ci[0] <= 1.0
    assert r1.scale == pytest.approx(8.0)
    with pytest.raises(ValueError):
        upper_ratio(s, CoeffModel("two-point", 2.0), 4, 10, 1)


def test_marcinkiewicz_bound_by_scan():
    for gamma in (0.5, 1.0):
        phi = ConcaveProfile.power(gamma)
        for n in (2, 10, 100):
            scan = [(math.sqrt(n) * math.sqrt(math.log(m)) / (m * (1 / m) ** gamma), m)
                    for m in range(2, n + 1)]
            best = max(scan)
            bound, arg = marcinkiewicz_bound(n, phi)
            assert bound == pytest.approx(best[0], rel=1e-12) and arg == best[1]
    with pytest.raises(ValueError):
        marcinkiewicz_bound(1, ConcaveProfile.power(0.5))


def test_marcinkiewicz_fitted_constant_stable():
    consts = []
    for n in (64, 256, 1024):
        s = sampled_rademacher_system(n, 4096, 3)
        consts.append(marcinkiewicz_gap(s, RADEMACHER, ConcaveProfile.power(0.5), 200, 1)
                      .fitted_constant)
    centre = np.mean(consts)
    assert all(abs(c / centre - 1) <= 0.25 for c in consts)


def test_sign_search_n1_is_direct():
    f = StepFunction([0, 0.25, 1], [4.0, 0.0])
    from iunorm.systems import system_from_functions

    s = system_from_functions([f])
    rep = sign_search(s, 1)
    assert rep.c0 == pytest.approx(relative_prime(f, 2) / 1.0)


@pytest.mark.slow
def test_sign_search_rademacher_exhaustive():
    rep = sign_search(rademacher_system(16), 4)
    assert rep.exhaustive and rep.c0 > 0
    assert rep.c0 == pytest.approx(min(rep.per_k.values()))


def test_sign_search_indicator_matches_direct_norm():
    s = indicator_system(16)
    rep = sign_search(s, 4)
    direct = min(relative_prime(StepFunction(s.breakpoints, s.combine(np.ones((1, 16)))[0]), 2**k)
                 / math.sqrt(16 * k) for k in range(1, 5))
    assert rep.c0 == pytest.approx(direct, abs=1e-12)


def test_sign_search_rejects_bad_kmax():
    for k in (0, 5):
        with pytest.raises(ValueError):
            sign_search(rademacher_system(16), k)


def test_sweep_rows_and_csv_round_trip():
    def factory(n):
        if n == 3:
            raise RuntimeError("boom")
        return sampled_rademacher_system(n, 1024, 0)

    pts = run_sweep(factory, RADEMACHER, NormKind.integral_uniform, [2, 3, 8], [2, 4], 20, 1,
                    system_label="rademacher")
    flags = [(p.n, p.m, p.flag) for p in pts]
    assert flags == [(2, 2, "ok"), (2, 4, "m>n"), (3, 2, "error:RuntimeError"),
                     (3, 4, "error:RuntimeError"), (8, 2, "ok"), (8, 4, "ok")]
    buf = io.StringIO()
    write_sweep_csv(pts, buf, ["hello"])
    text = buf.getvalue()
    assert text.startswith("# hello\n" + ",".join(CSV_COLUMNS))
    rows = read_sweep_csv(io.StringIO(text))
    assert [float(r["mean"]) for r in rows if r["flag"] == "ok"] == [
        p.estimate.mean for p in pts if p.flag == "ok"]
    with pytest.raises(ValueError):
        read_sweep_csv(io.StringIO("a,b\n1,2\n"))
