"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
written straight to the terminal so they survive output capture.
"""
import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from conftest import f1, random_step
from iunorm.coeffs import CoeffModel
from iunorm.mc import estimate_expected_norm, estimate_expected_norms, scaling_fit, trial_values
from iunorm.norms import (
    ConcaveProfile,
    NormKind,
    chain_check_batch,
    integral_uniform,
    lp_norm,
    marcinkiewicz,
    relative_prime,
    relative_star,
)
from iunorm.stepfn import indicator, rearrangement
from iunorm.systems import rademacher_system, sampled_rademacher_system, trig_system
from iunorm.verify import (
    GaussianCompareConfig,
    clt_error,
    gaussian_comparison,
    random_geom,
    random_lemma1,
    random_tver,
    random_tver2,
    summarize_reports,
)

RADEMACHER = CoeffModel("rademacher")
CHAIN_MS = [2**k for k in range(11)]
GRID_NS = [2**k for k in range(6, 11)]
GRID_CELLS = 16384


@pytest.fixture
def verdict(capsys, request):
    def report(ok: bool, detail: str) -> None:
        name = request.node.name.removeprefix("test_")
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail

    return report


def test_c01_norm_chain(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20261015)
    funcs = [random_step(rng, 64) for _ in range(10_000)]
    by_cells = {}
    for f in funcs:
        by_cells.setdefault(f.n_cells, []).append(f)
    failures = checked = 0
    for k, group in by_cells.items():
        mod = np.array([np.abs(f.values) for f in group])
        wid = np.array([f.widths for f in group])
        for m in CHAIN_MS:
            ok = chain_check_batch(mod, wid, m)[3]
            failures += int(np.sum(~ok.all(axis=1)))
            checked += len(group)
    elapsed = time.perf_counter() - t0
    verdict(failures == 0 and elapsed < 60,
            f"{checked} (f, m) pairs, {failures} chain failures, {elapsed:.1f}s")


def test_c02_exact_identities(verdict):
    rng = np.random.default_rng(2)
    worst_l1 = worst_ind = 0.0
    qw4_bad = 0
    for _ in range(2000):
        f = random_step(rng)
        worst_l1 = max(worst_l1, abs(integral_uniform(f, 1) - lp_norm(f, 1)))
        m = int(rng.integers(1, 65))
        n = m + int(rng.integers(0, 65))
        sup = max(lp_norm(f, math.inf), 1.0)
        a, b = integral_uniform(f, m), integral_uniform(f, n)
        qw4_bad += a > m * lp_norm(f, 1) + 1e-12 * sup
        qw4_bad += b > (n + 1) / m * a + 1e-12 * sup
    for size in np.round(np.arange(0.1, 1.0, 0.1), 10):
        for m in range(1, 65):
            got = integral_uniform(indicator(0.05, 0.05 + size), m)
            worst_ind = max(worst_ind, abs(got - (1 - (1 - size) ** m)))
    ok = worst_l1 <= 1e-12 and worst_ind <= 1e-12 and qw4_bad == 0
    verdict(ok, f"|m=1 - L1| {worst_l1:.1e}, indicator error {worst_ind:.1e}, "
                f"{qw4_bad} qw4 violations")


def test_c03_reference_values(verdict):
    f = f1()
    w, v = f.widths, np.abs(f.values)
    # expected maximum of two uniform samples, over all 9 cell pairs
    enum_m2 = sum(w[i] * w[j] * max(v[i], v[j]) for i, j in itertools.product(range(3), repeat=2))
    r = rearrangement(f)
    c = np.concatenate([[0.0], np.cumsum(r.widths)])
    big = np.concatenate([[0.0], np.cumsum(r.widths * r.values)])
    d = np.linspace(1 / 300_000, 1.0, 300_000)
    star_grid = float(np.max((1 - (1 - d) ** 2) / d * np.interp(d, c, big)))
    k = 1_000_000
    prime_mid = float(np.mean(r((np.arange(k) + 0.5) / (2 * k))))
    t = np.linspace(1 / k, 1.0, k)
    marc_grid = float(np.max(np.interp(t, c, big) / np.sqrt(t)))
    pinned = {"m_infty": 22 / 9, "prime": 8 / 3, "star": 20 / 9, "marcinkiewicz": 5 / math.sqrt(6)}
    oracles = {"m_infty": enum_m2, "prime": prime_mid, "star": star_grid, "marcinkiewicz": marc_grid}
    library = {"m_infty": integral_uniform(f, 2), "prime": relative_prime(f, 2),
               "star": relative_star(f, 2), "marcinkiewicz": marcinkiewicz(f, ConcaveProfile.power(0.5))}
    gaps = {key: max(abs(oracles[key] - pinned[key]), abs(library[key] - pinned[key])) for key in pinned}
    verdict(max(gaps.values()) <= 1e-6,
            ", ".join(f"{key} gap {g:.1e}" for key, g in gaps.items()))


def test_c04_khinchin_parseval(verdict):
    exact_sys = rademacher_system(12)
    signs = trial_values(exact_sys, RADEMACHER, [NormKind.lp(2)], 200, 4)[:, 0]
    parseval_err = float(np.max(np.abs(signs - math.sqrt(12))))
    kk = np.arange(101)
    exact = float(np.sum(stats.binom.pmf(kk, 100, 0.5) * np.abs(100 - 2 * kk)))
    est = estimate_expected_norm(sampled_rademacher_system(100, 4096, 7), RADEMACHER, None,
                                 NormKind.lp(1), 10_000, 11)
    inside = est.ci95[0] <= exact <= est.ci95[1]
    verdict(parseval_err <= 1e-12 and inside,
            f"Parseval error {parseval_err:.1e}; L1 mean {est.mean:.5f} "
            f"CI [{est.ci95[0]:.5f}, {est.ci95[1]:.5f}] vs exact {exact:.5f}")


def test_c05_salem_zygmund_rate(verdict):
    t0 = time.perf_counter()
    ns = [2**k for k in range(6, 13)]
    pts = []
    for n in ns:
        est = estimate_expected_norm(trig_system(n, symmetric=True), RADEMACHER, None,
                                     NormKind.lp(math.inf), 200, 5)
        pts.append((n * math.log(n), est.mean))
    fit = scaling_fit(pts, "n ln n")
    elapsed = time.perf_counter() - t0
    ok = abs(fit.exponent - 0.5) <= 0.05 and fit.r_squared >= 0.99 and elapsed < 600
    verdict(ok, f"exponent {fit.exponent:.4f}, r2 {fit.r_squared:.5f}, {elapsed:.0f}s")


@pytest.fixture(scope="module")
def rademacher_grid():
    """Mean ``m``-uniform norm over the (n, m) grid, with the square-function scale."""
    rows = []
    for n in GRID_NS:
        system = sampled_rademacher_system(n, GRID_CELLS, n)
        ms = [2**k for k in range(1, int(math.log2(n)) + 1)]
        ests = estimate_expected_norms(system, RADEMACHER, [NormKind.integral_uniform(m) for m in ms],
                                       200, 6)
        square = system.square_function()
        for m, est in zip(ms, ests):
            rows.append((n, m, est.mean, integral_uniform(square, m)))
    return rows


def test_c06_lower_rate(verdict, rademacher_grid):
    ratios = np.array([mean / math.sqrt(n * (1 + math.log(m))) for n, m, mean, _ in rademacher_grid])
    spread = ratios.max() / ratios.min()
    verdict(ratios.min() > 0 and spread < 3,
            f"{len(ratios)} grid points, ratio in [{ratios.min():.3f}, {ratios.max():.3f}], "
            f"spread {spread:.3f}")


def test_c07_square_function_ratio(verdict, rademacher_grid):
    ratios = np.array([mean / (sq * math.sqrt(1 + math.log(m))) for n, m, mean, sq in rademacher_grid])
    spread = ratios.max() / ratios.min()
    verdict(bool(np.all(np.isfinite(ratios))) and spread < 5,
            f"ratio in [{ratios.min():.3f}, {ratios.max():.3f}], max/min {spread:.3f}")


def test_c08_lemma_batteries(verdict):
    parts = {
        "lemma1": summarize_reports(random_lemma1(1000, 8)),
        "tver": summarize_reports(random_tver(1000, 8)),
        "tver2": summarize_reports(random_tver2(1000, 8)),
        "geom": summarize_reports(random_geom(1000, 8, max_n=16, bound_constant=10.0)),
    }
    ok = all(p["violations"] == 0 and p["instances"] >= 1000 for p in parts.values())
    verdict(ok, ", ".join(f"{k} {p['violations']}/{p['instances']}" for k, p in parts.items()))


def test_c09_clt_rate(verdict):
    lines, ok = [], True
    for n in (64, 256, 1024, 4096):
        s = clt_error(RADEMACHER, n).statistics
        ok &= s["exact"] and s["d_N"] <= 0.5 / math.sqrt(n) and 0.35 <= s["ratio"] <= 0.65
        lines.append(f"N={n} d={s['d_N']:.5f} ratio={s['ratio']:.4f}")
    verdict(bool(ok), "; ".join(lines))


def test_c10_gaussian_comparison(verdict):
    diag = gaussian_comparison(GaussianCompareConfig(np.eye(16), 0.25, 16), 1_000_000, 10).statistics
    z_diag = abs(diag["offdiag_ratio"] - 1) / diag["offdiag_ratio_se"]
    m = 32
    cov = np.full((m, m), 0.01)
    np.fill_diagonal(cov, 1.0)
    lines = [f"diagonal offdiag ratio {diag['offdiag_ratio']:.4f} (z {z_diag:.2f})"]
    ok = z_diag <= 4
    for R in (16, 32):
        rep = gaussian_comparison(GaussianCompareConfig(cov, 0.25, R), 1_000_000, 10)
        s = rep.statistics
        ok &= rep.hypothesis_ok and s["total_ratio"] <= 1.1
        lines.append(f"P={R + 1} total ratio {s['total_ratio']:.4f} (se {s['total_ratio_se']:.1e})")
    verdict(bool(ok), "; ".join(lines))


def test_c11_sweep_reproducible_across_threads(verdict, tmp_path):
    outputs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "iunorm", "sweep", "--system", "rademacher", "--coeffs", "rademacher",
             "--norm", "m-infty", "--n", "64:256:x2", "--m", "2:64:x2", "--trials", "200",
             "--seed", "42", "--no-timestamp", "--threads", str(threads), "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append(out.read_bytes())
    verdict(outputs[0] == outputs[1], f"{len(outputs[0])} bytes, identical={outputs[0] == outputs[1]}")
