"""Monte Carlo estimates for norms of random polynomials ``sum a_i xi_i f_i``.

Trials are split into fixed-size chunks.  Trial ``t`` always draws its
coefficients from the counter stream ``(seed, t)``, chunks may run on any
number of worker threads, and the per-trial values are accumulated in trial
order, so results are bitwise identical for every ``threads`` setting.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .coeffs import CoeffModel, sample_trials
from .norms import (
    ConcaveProfile,
    NormKind,
    _prepare,
    integral_uniform,
    relative_prime_batch,
)
from .systems import FunctionSystem, maximize_over_signs

CSV_COLUMNS = (
    "system", "coeff_model", "norm_kind", "n", "m", "trials", "seed",
    "mean", "stderr", "ci_low", "ci_high", "flag",
)
_CELL_BUDGET = 2**21  # values per chunk


@dataclass(frozen=True)
class TrialEstimate:
    mean: float
    stderr: float
    ci95: tuple
    trials: int
    norm_kind: str
    seed: int


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    intercept: float
    r_squared: float
    residual_max: float
    x_descriptor: str

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class SweepPoint:
    system: str
    coeff_model: str
    n: int
    m: Optional[int]
    estimate: TrialEstimate
    weights: str = "ones"
    flag: str = "ok"

    def row(self) -> dict:
        e = self.estimate
        return {
            "system": self.system,
            "coeff_model": self.coeff_model,
            "norm_kind": e.norm_kind,
            "n": self.n,
            "m": "" if self.m is None else self.m,
            "trials": e.trials,
            "seed": e.seed,
            "mean": repr(e.mean),
            "stderr": repr(e.stderr),
            "ci_low": repr(e.ci95[0]),
            "ci_high": repr(e.ci95[1]),
            "flag": self.flag,
        }


class _Welford:
    """One-pass mean and variance."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def estimate(self, label: str, seed: int) -> TrialEstimate:
        var = self.m2 / (self.count - 1) if self.count > 1 else 0.0
        se = math.sqrt(max(var, 0.0) / self.count)
        return TrialEstimate(self.mean, se, (self.mean - 1.96 * se, self.mean + 1.96 * se),
                             self.count, label, seed)


def trial_values(system: FunctionSystem, model: CoeffModel, kinds: Sequence[NormKind],
                 trials: int, seed: int, weights=None, threads: int = 1) -> np.ndarray:
    """``(trials, len(kinds))`` array of ``||sum a_i xi_i^(t) f_i||`` per trial and norm."""
    if trials < 1:
        raise ValueError("need at least one trial")
    a = np.ones(system.n) if weights is None else np.asarray(weights)
    if a.shape != (system.n,):
        raise ValueError(f"weights must have length {system.n}")
    chunk = max(1, min(256, _CELL_BUDGET // max(system.n_cells, system.n)))
    starts = list(range(0, trials, chunk))
    needs_sort = any(k.kind != "lp" for k in kinds)
    widths = system.widths

    def work(start: int) -> np.ndarray:
        count = min(chunk, trials - start)
        xi = sample_trials(model, system.n, seed, start, count) * a
        moduli = np.abs(system.combine(xi))
        srt = _prepare(moduli, widths) if needs_sort else None
        return np.stack([k.evaluate_batch(moduli, widths, srt) for k in kinds], axis=1)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(work, starts))
    else:
        blocks = [work(s) for s in starts]
    return np.concatenate(blocks, axis=0)


def summarize(values: np.ndarray, label: str, seed: int) -> TrialEstimate:
    acc = _Welford()
    for v in values:
        acc.push(float(v))
    return acc.estimate(label, seed)


def estimate_expected_norms(system, model, kinds, trials, seed, weights=None,
                            threads: int = 1) -> list[TrialEstimate]:
    vals = trial_values(system, model, kinds, trials, seed, weights, threads)
    return [summarize(vals[:, j], k.label, seed) for j, k in enumerate(kinds)]


def estimate_expected_norm(system: FunctionSystem, model: CoeffModel, weights,
                           norm_kind: NormKind, trials: int, seed: int,
                           threads: int = 1) -> TrialEstimate:
    """Mean of ``||sum a_i xi_i f_i||`` over ``trials`` draws with a 95% normal CI."""
    if trials < 2:
        raise ValueError("need at least two trials")
    return estimate_expected_norms(system, model, [norm_kind], trials, seed, weights, threads)[0]


# ---------------------------------------------------------------------------
# tail probabilities and rates


@dataclass(frozen=True)
class TailEstimate:
    probability: float
    ci_low: float
    ci_high: float
    hits: int
    trials: int
    threshold: float


def wilson_interval(hits: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    p = hits / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def tail_probability(system, model, weights, m: int, threshold_coeff: float, trials: int,
                     seed: int, threads: int = 1) -> TailEstimate:
    """Empirical ``P(||F_n||_{m,inf} <= c * sqrt(n (1 + ln m)))`` with a Wilson interval."""
    if threshold_coeff < 0:
        raise ValueError("threshold coefficient must be nonnegative")
    vals = trial_values(system, model, [NormKind.integral_uniform(m)], trials, seed, weights,
                        threads)[:, 0]
    thr = threshold_coeff * math.sqrt(system.n * (1 + math.log(m)))
    # a zero threshold only catches the degenerate zero polynomial
    hits = int(np.sum(vals <= thr)) if threshold_coeff > 0 else int(np.sum(vals <= 0))
    lo, hi = wilson_interval(hits, trials)
    return TailEstimate(hits / trials, lo, hi, hits, trials, thr)


def scaling_fit(points, x_descriptor: str = "x") -> ScalingFit:
    """Least squares line through ``(log x, log y)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("scaling fit needs at least three points")
    if np.any(pts <= 0):
        raise ValueError("scaling fit needs positive x and y")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    res = stats.linregress(lx, ly)
    resid = ly - (res.intercept + res.slope * lx)
    r2 = res.rvalue**2 if np.ptp(ly) > 0 else 1.0
    return ScalingFit(float(res.slope), float(res.intercept), float(r2),
                      float(np.max(np.abs(resid))), x_descriptor)


@dataclass(frozen=True)
class RatioEstimate:
    ratio: float
    ratio_ci: tuple
    estimate: TrialEstimate
    scale: float


def upper_ratio(system, model: CoeffModel, m: int, trials: int, seed: int,
                threads: int = 1) -> RatioEstimate:
    """``E||sum xi_k f_k||_{m,inf} / (||(sum |f_k|^2)^(1/2)||_{m,inf} sqrt(1 + ln m))``."""
    if not model.subgaussian:
        raise ValueError(f"model {model.label} is not shipped as subgaussian")
    est = estimate_expected_norm(system, model, None, NormKind.integral_uniform(m), trials,
                                 seed, threads)
    scale = integral_uniform(system.square_function(), m) * math.sqrt(1 + math.log(m))
    return RatioEstimate(est.mean / scale, (est.ci95[0] / scale, est.ci95[1] / scale), est, scale)


def marcinkiewicz_bound(n: int, profile: ConcaveProfile) -> tuple[float, int]:
    """``sqrt(n) * max_{m=2..n} sqrt(ln m) / (m phi(1/m))`` and the maximising ``m``."""
    if n < 2:
        raise ValueError("the bound needs n >= 2")
    ms = np.arange(2, n + 1)
    vals = np.sqrt(np.log(ms)) / (ms * profile(1.0 / ms))
    k = int(np.argmax(vals))
    return math.sqrt(n) * float(vals[k]), int(ms[k])


@dataclass(frozen=True)
class MarcinkiewiczGap:
    estimate: TrialEstimate
    bound_without_constant: float
    argmax_m: int
    fitted_constant: float


def marcinkiewicz_gap(system, model, profile: ConcaveProfile, trials: int, seed: int,
                      threads: int = 1) -> MarcinkiewiczGap:
    est = estimate_expected_norm(system, model, None, NormKind.marcinkiewicz(profile), trials,
                                 seed, threads)
    bound, arg = marcinkiewicz_bound(system.n, profile)
    return MarcinkiewiczGap(est, bound, arg, est.mean / bound)


# ---------------------------------------------------------------------------
# sign search for the ||.||'_{2^k} lower bound


@dataclass
class SignSearchReport:
    c0: float
    witness: np.ndarray
    per_k: dict
    k_max: int
    evaluations: int
    exhaustive: bool

    def to_json(self) -> dict:
        return {
            "c0": self.c0,
            "k_max": self.k_max,
            "per_k": {str(k): v for k, v in self.per_k.items()},
            "witness": [int(t) for t in self.witness],
            "evaluations": self.evaluations,
            "exhaustive": self.exhaustive,
        }


def sign_objective(widths, n: int, k_max: int) -> Callable[[np.ndarray], np.ndarray]:
    """``min_k ||values||'_{2^k} / sqrt(n k)`` over ``k = 1..k_max``, row by row."""

    def objective(vals: np.ndarray) -> np.ndarray:
        srt = _prepare(np.abs(vals), widths)
        ratios = [relative_prime_batch(None, None, 2**k, srt) / math.sqrt(n * k)
                  for k in range(1, k_max + 1)]
        return np.min(np.stack(ratios, axis=1), axis=1)

    return objective


def sign_search(system: FunctionSystem, k_max: int, budget: int = 1000, seed: int = 0,
                exhaustive: Optional[bool] = None) -> SignSearchReport:
    """Signs maximising ``min_{k<=k_max} ||sum theta_i f_i||'_{2^k} / sqrt(n k)``."""
    n = system.n
    limit = max(1, int(math.floor(math.log2(n)))) if n > 1 else 1
    if not 1 <= k_max <= limit:
        raise ValueError(f"k_max must lie in 1..{limit} for n={n}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    obj = sign_objective(system.widths, n, k_max)
    res = maximize_over_signs(system.combine, n, obj, budget, seed, exhaustive, system.n_cells)
    vals = np.abs(system.combine(res.witness[None, :]))
    srt = _prepare(vals, system.widths)
    per_k = {k: float(relative_prime_batch(None, None, 2**k, srt)[0] / math.sqrt(n * k))
             for k in range(1, k_max + 1)}
    return SignSearchReport(res.value, res.witness, per_k, k_max, res.evaluations, res.exhaustive)


# ---------------------------------------------------------------------------
# sweeps and CSV


@dataclass
class SweepConfig:
    system: str
    coeffs: str
    norm: str
    ns: list
    ms: list
    trials: int
    seed: int
    cells: int = 16384
    extra: dict = field(default_factory=dict)


def run_sweep(system_factory: Callable[[int], FunctionSystem], model: CoeffModel,
              kind_factory: Callable[[Optional[int]], NormKind], ns: Sequence[int],
              ms: Sequence[Optional[int]], trials: int, seed: int, threads: int = 1,
              system_label: Optional[str] = None) -> list[SweepPoint]:
    """One row per ``(n, m)``; every ``m`` at a given ``n`` reuses the same trials."""
    points = []
    for n in ns:
        try:
            system = system_factory(n)
            kinds = [kind_factory(m) for m in ms]
            ests = estimate_expected_norms(system, model, kinds, trials, seed, None, threads)
        except Exception as exc:  # failures are reported per row, never abort the sweep
            nan = float("nan")
            for m in ms:
                bad = TrialEstimate(nan, nan, (nan, nan), trials, "error", seed)
                points.append(SweepPoint(system_label or "?", model.label, n, m, bad,
                                         flag=f"error:{type(exc).__name__}"))
            continue
        for m, est in zip(ms, ests):
            flag = "ok"
            if m is not None and m > n:
                flag = "m>n"
            points.append(SweepPoint(system_label or system.label, model.label, n, m, est,
                                     flag=flag))
    return points


def write_sweep_csv(points: Sequence[SweepPoint], out, header_lines: Sequence[str] = ()) -> None:
    """Comment header lines (``# ...``) followed by the fixed CSV schema."""
    for line in header_lines:
        out.write(f"# {line}\n")
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for p in points:
        writer.writerow(p.row())


def read_sweep_csv(source) -> list[dict]:
    text = source.read() if hasattr(source, "read") else open(source).read()
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    rows = list(csv.DictReader(io.StringIO(body)))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns {tuple(rows[0].keys())}")
    return rows
