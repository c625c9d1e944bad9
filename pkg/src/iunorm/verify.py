"""Oracles for the probabilistic lemmas behind the lower bounds.

Exact oracles enumerate finite probability spaces; the Gaussian oracles use
seeded Monte Carlo with fixed-size chunks (derived seed per chunk) and
exact normal / bivariate-normal probabilities where those are available.
A lemma oracle that finds its hypothesis satisfied but its conclusion
violated has found a bug in this code, not in the lemma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import ndtr

from . import coeffs as _coeffs
from .coeffs import CoeffModel
from .systems import FunctionSystem, maximize_over_signs

TOL = 1e-12


@dataclass
class OracleReport:
    oracle: str
    instance_descriptor: str
    hypothesis_ok: bool
    conclusion_ok: bool
    statistics: dict = field(default_factory=dict)

    @property
    def violation(self) -> bool:
        return self.hypothesis_ok and not self.conclusion_ok

    def to_json(self) -> dict:
        return {
            "oracle": self.oracle,
            "instance_descriptor": self.instance_descriptor,
            "hypothesis_ok": bool(self.hypothesis_ok),
            "conclusion_ok": bool(self.conclusion_ok),
            "statistics": _jsonable(self.statistics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=_coeffs.stream_key(seed, stream)))


# ---------------------------------------------------------------------------
# finite probability spaces


@dataclass(frozen=True)
class FiniteSpace:
    """Atoms with positive probabilities and events given as bitmasks over the atoms."""

    probs: np.ndarray
    events: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p <= 0):
            raise ValueError("atom probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {p.sum()}, not 1")
        evs = tuple(int(e) for e in self.events)
        if any(e < 0 or e >> p.size for e in evs):
            raise ValueError("event bitmask refers to atoms outside the space")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "events", evs)

    @classmethod
    def from_sets(cls, probs, sets: Sequence[Sequence[int]]) -> "FiniteSpace":
        return cls(np.asarray(probs, dtype=float), tuple(sum(1 << a for a in set(s)) for s in sets))

    @property
    def membership(self) -> np.ndarray:
        """``(events, atoms)`` boolean matrix."""
        atoms = np.arange(self.probs.size)
        return np.array([[(e >> a) & 1 for a in atoms] for e in self.events], dtype=bool).reshape(
            len(self.events), self.probs.size)

    def prob(self, mask: np.ndarray) -> float:
        return float(np.sum(self.probs[mask]))


def lemma1_check(space: FiniteSpace, kappa: float) -> OracleReport:
    """Second-moment bound ``P(union) >= 1 - kappa``."""
    if not 0.0 <= kappa < 1.0:
        raise ValueError("kappa must lie in [0, 1)")
    mem = space.membership.astype(float)
    p = space.probs
    single = mem @ p
    pair = (mem * p) @ mem.T
    s1, s2 = float(single.sum()), float(pair.sum())
    union = space.prob(mem.any(axis=0)) if mem.size else 0.0
    # with every event null the inequality holds vacuously but the union is empty
    hyp = s1 > 0 and (1.0 - kappa) * s2 <= s1 * s1 + TOL
    concl = union >= 1.0 - kappa - TOL
    kappa_min = 1.0 - s1 * s1 / s2 if s2 > 0 else 1.0
    return OracleReport(
        "lemma1", f"atoms={p.size} events={len(space.events)} kappa={kappa:.6g}", hyp, concl,
        {"sum_p": s1, "sum_pairs": s2, "union": union, "kappa_min": kappa_min},
    )


@dataclass(frozen=True)
class DiscreteDist:
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if a.shape != p.shape or a.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("discrete distribution needs matching atoms and probabilities summing to 1")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "probs", p)


def _in_union(x: np.ndarray, intervals) -> np.ndarray:
    hit = np.zeros(np.shape(x), dtype=bool)
    for lo, hi in intervals:
        lo = -math.inf if lo is None else lo
        hi = math.inf if hi is None else hi
        hit |= (x >= lo - TOL) & (x <= hi + TOL)
    return hit


def shift_probability(dist: DiscreteDist, intervals, shifts) -> np.ndarray:
    """``P(eta + v in B)`` for each shift ``v``."""
    shifts = np.asarray(shifts, dtype=float)
    inside = _in_union(dist.atoms[None, :] + shifts[:, None], intervals)
    return inside.astype(float) @ dist.probs


def shift_candidates(dist: DiscreteDist, intervals) -> np.ndarray:
    """Shifts aligning an atom with an interval end, midpoints between them, and 0."""
    ends = [e for iv in intervals for e in iv if e is not None and math.isfinite(e)]
    cand = np.array([e - a for e in ends for a in dist.atoms] + [0.0])
    cand = np.unique(cand)
    mids = 0.5 * (cand[:-1] + cand[1:])
    return np.unique(np.concatenate([cand, mids, [cand[0] - 1.0, cand[-1] + 1.0]]))


def shift_lemma_check(dist_eta: DiscreteDist, dist_etac: DiscreteDist, intervals) -> OracleReport:
    """``sup_v P(eta + v in B) <= p`` implies ``P(eta + eta' in B) <= p``, with ``p`` the sup itself."""
    intervals = [tuple(iv) for iv in intervals]
    cand = shift_candidates(dist_eta, intervals)
    probs = shift_probability(dist_eta, intervals, cand)
    k = int(np.argmax(probs))
    sup = float(probs[k])
    sums = (dist_eta.atoms[:, None] + dist_etac.atoms[None, :]).ravel()
    weights = (dist_eta.probs[:, None] * dist_etac.probs[None, :]).ravel()
    conv = float(np.sum(weights[_in_union(sums, intervals)]))
    return OracleReport(
        "tver", f"|eta|={dist_eta.atoms.size} |eta'|={dist_etac.atoms.size} intervals={len(intervals)}",
        True, conv <= sup + TOL,
        {"sup_shift_probability": sup, "argmax_shift": float(cand[k]), "convolution_probability": conv},
    )


def indicator_sum_check(t_list, space: FiniteSpace, p: float) -> OracleReport:
    """``P(sum T_l 1[Omega_l] <= T/2) <= 2p`` when every ``P(Omega_l) >= 1 - p``."""
    t = np.asarray(t_list, dtype=float)
    if t.size != len(space.events) or np.any(t < 0):
        raise ValueError("need one nonnegative weight per event")
    mem = space.membership.astype(float)
    event_p = mem @ space.probs
    hyp = bool(np.all(event_p >= 1.0 - p - TOL))
    total = float(t.sum())
    per_atom = t @ mem
    lhs = space.prob(per_atom <= total / 2 + TOL)
    return OracleReport(
        "tver2", f"events={t.size} atoms={space.probs.size} p={p:.6g}", hyp, lhs <= 2 * p + TOL,
        {"lhs": lhs, "bound": 2 * p, "event_probabilities": event_p, "T": total},
    )


# ---------------------------------------------------------------------------
# the sign/coefficient geometry fact


def lp_oracle(p: float, weights=None) -> Callable[[np.ndarray], np.ndarray]:
    """Row-wise (weighted) ``l_p`` norm, the norm used by :func:`geom_lemma_ratio`."""

    def norm(rows: np.ndarray) -> np.ndarray:
        a = np.abs(np.atleast_2d(rows))
        w = np.ones(a.shape[1]) if weights is None else np.asarray(weights)
        if math.isinf(p):
            return np.max(np.where(w > 0, a, 0.0), axis=1)
        return np.sum(w * a**p, axis=1) ** (1.0 / p)

    return norm


def geom_lemma_ratio(vectors, norm_oracle, beta: float, coeff_budget: int = 1000, seed: int = 0,
                     bound_constant: float = 10.0, exhaustive: Optional[bool] = None) -> OracleReport:
    """Empirical constant in ``||sum a_i w_i|| <= C n^(1/4+beta/2) |a|_2``.

    ``c`` is the sign constant ``max_theta ||sum theta_i w_i|| / n^(1/2+beta)``
    (exact for small ``n``).  Splitting ``a`` at level ``t`` into a few large
    entries and a cube part gives ``C <= 2 sqrt(c)``; the report checks the
    observed ratio against that and against ``bound_constant``.
    """
    w = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = w.shape[0]
    if not 0.0 <= beta < 0.5:
        raise ValueError("beta must lie in [0, 1/2)")
    norms = norm_oracle(w)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("vectors must have unit norm")
    signs = maximize_over_signs(lambda th: th @ w, n, norm_oracle, coeff_budget, seed, exhaustive,
                                w.shape[1])
    c = signs.value / n ** (0.5 + beta)
    rng = _rng(seed, 3)
    cands = [rng.standard_normal((coeff_budget, n)), np.eye(n), np.ones((1, n)),
             (0.5 ** np.arange(n))[None, :], signs.witness[None, :]]
    a = np.vstack(cands)
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    ratio = norm_oracle(a @ w) / n ** (0.25 + beta / 2)
    k = int(np.argmax(ratio))
    best = float(ratio[k])
    two_sqrt_c = 2.0 * math.sqrt(c)
    return OracleReport(
        "geom", f"n={n} dim={w.shape[1]} beta={beta:.4g}", True,
        best <= bound_constant + TOL and best <= two_sqrt_c * (1 + 1e-9),
        {"sign_constant_c": c, "sign_search_exhaustive": signs.exhaustive, "max_ratio": best,
         "two_sqrt_c": two_sqrt_c, "bound_constant": bound_constant, "witness": a[k],
         "coefficient_vectors": a.shape[0]},
    )


# ---------------------------------------------------------------------------
# CLT error


def kolmogorov_lattice(pmf: np.ndarray, support: np.ndarray) -> float:
    """Exact ``sup_x |F(x) - Phi(x)|`` for a lattice law; the sup sits at the atoms."""
    cdf = np.cumsum(pmf)
    left = cdf - pmf
    phi = ndtr(support)
    return float(max(np.max(np.abs(cdf - phi)), np.max(np.abs(left - phi))))


def _lattice_sum(model: CoeffModel, n_terms: int) -> tuple[np.ndarray, np.ndarray]:
    """pmf and normalised support of ``N^(-1/2) sum xi_i`` for lattice models."""
    if model.tag == "rademacher":
        k = np.arange(n_terms + 1)
        return stats.binom.pmf(k, n_terms, 0.5), (2 * k - n_terms) / math.sqrt(n_terms)
    q = 0.5 / model.v**2
    step = np.array([q, 1 - 2 * q, q])
    pmf = np.array([1.0])
    for _ in range(n_terms):
        pmf = np.convolve(pmf, step)
    k = np.arange(-n_terms, n_terms + 1)
    return pmf, model.v * k / math.sqrt(n_terms)


def _kolmogorov_1d(model: CoeffModel, n_terms: int, seed: int, trials: int) -> tuple[float, bool]:
    if model.tag in ("rademacher", "two-point"):
        pmf, support = _lattice_sum(model, n_terms)
        return kolmogorov_lattice(pmf, support), True
    if model.tag == "gaussian":
        # the normalised sum is exactly standard normal
        grid = np.linspace(-8, 8, 16001)
        return float(np.max(np.abs(ndtr(grid) - ndtr(grid)))), True
    sums = _sample_sums(model, n_terms, trials, seed, 1)[:, 0]
    return float(stats.kstest(sums, "norm").statistic), False


def _sample_sums(model: CoeffModel, n_terms: int, trials: int, seed: int, dim: int) -> np.ndarray:
    """``(trials, dim)`` draws of ``N^(-1/2) sum X_i`` with i.i.d. coordinates."""
    rng = _rng(seed, 4)
    root = math.sqrt(n_terms)
    if model.tag == "rademacher":
        return (2 * rng.binomial(n_terms, 0.5, (trials, dim)) - n_terms) / root
    if model.tag == "gaussian":
        return rng.standard_normal((trials, dim))
    if model.tag == "two-point":
        q = 0.5 / model.v**2
        counts = rng.multinomial(n_terms, [q, q, 1 - 2 * q], (trials, dim))
        return model.v * (counts[..., 0] - counts[..., 1]) / root
    out = np.zeros((trials, dim))
    block = max(1, 2**22 // (n_terms * dim))
    for s in range(0, trials, block):
        e = min(trials, s + block)
        u = rng.random((e - s, dim, n_terms))
        out[s:e] = model.from_uniform(u).sum(axis=2) / root
    return out


def _convex_family(seed: int, count: int = 1000):
    rng = _rng(seed, 5)
    half = count // 2
    corners = np.sort(rng.uniform(-3, 3, (half, 2, 2)), axis=2)  # [coord, (lo, hi)]
    angles = rng.uniform(0, 2 * np.pi, count - half)
    normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    offsets = rng.uniform(-2.5, 2.5, count - half)
    return corners, normals, offsets


def _kolmogorov_2d(model: CoeffModel, n_terms: int, seed: int, trials: int) -> float:
    x = _sample_sums(model, n_terms, trials, seed, 2)
    corners, normals, offsets = _convex_family(seed)
    worst = 0.0
    for box in corners:
        inside = np.all((x >= box[:, 0]) & (x <= box[:, 1]), axis=1).mean()
        gauss = np.prod(ndtr(box[:, 1]) - ndtr(box[:, 0]))
        worst = max(worst, abs(inside - gauss))
    proj = x @ normals.T
    emp = (proj <= offsets).mean(axis=0)
    worst = max(worst, float(np.max(np.abs(emp - ndtr(offsets)))))
    return float(worst)


def clt_error(model: CoeffModel, n_terms: int, dim: int = 1, seed: int = 0,
              trials: int = 100_000) -> OracleReport:
    """Distance between the normalised sum of ``n_terms`` draws and the normal law, at N and 4N.

    In one dimension the Kolmogorov distance is exact for lattice models
    (Rademacher, two-point) and zero for the Gaussian model.  In two
    dimensions the sup runs over a fixed family of 500 rectangles and 500
    half-planes and is a Monte Carlo lower bound for the convex-set distance.
    """
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if n_terms < 4:
        raise ValueError("need N >= 4")
    if dim == 1:
        d1, exact1 = _kolmogorov_1d(model, n_terms, seed, trials)
        d4, exact4 = _kolmogorov_1d(model, 4 * n_terms, seed, trials)
        exact = exact1 and exact4
    else:
        d1 = _kolmogorov_2d(model, n_terms, seed, trials)
        d4 = _kolmogorov_2d(model, 4 * n_terms, seed, trials)
        exact = False
    ratio = d4 / d1 if d1 > 0 else float("nan")
    return OracleReport(
        "clt", f"model={model.label} N={n_terms} dim={dim}", True,
        d1 <= 0.5 / math.sqrt(n_terms) + TOL if exact else True,
        {"d_N": d1, "d_4N": d4, "ratio": ratio, "scaled_d_N": d1 * math.sqrt(n_terms),
         "exact": exact},
    )


# ---------------------------------------------------------------------------
# Gaussian pairwise comparison


def bivariate_upper(a: float, b: float, rho: float) -> float:
    """``P(X > a, Y > b)`` for standard normals with correlation ``rho``, by 1-D quadrature."""
    if rho >= 1.0 - 1e-15:
        return float(ndtr(-max(a, b)))
    if rho <= -1.0 + 1e-15:
        return float(max(0.0, ndtr(-b) - ndtr(a)))
    s = math.sqrt(1.0 - rho * rho)
    val, _ = integrate.quad(lambda x: stats.norm.pdf(x) * ndtr(-(b - rho * x) / s), a, np.inf,
                            epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(val)


@dataclass
class GaussianCompareConfig:
    covariance: np.ndarray
    alpha: float
    R: float
    c0: float = 1.0
    delta: float = 1.0
    r2: Optional[float] = None

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        self.covariance = cov
        if self.r2 is None:
            self.r2 = float(np.min(np.diag(cov)))
        if self.R < 1:
            raise ValueError("R must be >= 1")

    @property
    def m(self) -> int:
        return self.covariance.shape[0]

    @property
    def P(self) -> float:
        return _coeffs.log_gain_parameter(self.m, self.R)

    def thresholds(self) -> np.ndarray:
        return self.alpha * np.sqrt(np.diag(self.covariance) * math.log(self.P))

    def constraint(self) -> dict:
        cov = self.covariance
        off = np.abs(cov - np.diag(np.diag(cov))).sum() / self.m**2
        allowed = self.c0 * self.R ** (-self.delta) * self.r2
        diag_ok = bool(np.all(np.diag(cov) >= self.r2 - TOL)) and self.r2 > 0
        return {"avg_offdiag_abs": off, "allowed": allowed, "diag_ok": diag_ok,
                "alpha_ok": self.alpha < math.sqrt(self.delta),
                "ok": bool(diag_ok and off <= allowed + TOL)}


def covariance_factor(cov: np.ndarray) -> np.ndarray:
    """``L`` with ``L @ L.T == cov`` for positive semidefinite ``cov`` (spectral square root)."""
    vals, vecs = np.linalg.eigh(cov)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals.min() < -1e-10 * scale:
        raise ValueError("covariance is not positive semidefinite")
    factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
    resid = np.max(np.abs(factor @ factor.T - cov))
    if resid > 1e-10 * scale:
        raise ValueError(f"covariance factor residual {resid:.3g} too large")
    return factor


def _jackknife(num_blocks: np.ndarray, den_fn, num_fn) -> tuple[float, float]:
    """Delete-one-block jackknife for a ratio of block-summed statistics."""
    total = num_blocks.sum(axis=0)
    full = num_fn(total) / den_fn(total)
    b = num_blocks.shape[0]
    reps = np.array([num_fn(total - blk) / den_fn(total - blk) for blk in num_blocks])
    se = math.sqrt((b - 1) / b * np.sum((reps - reps.mean()) ** 2))
    return float(full), se


def gaussian_comparison(config: GaussianCompareConfig, trials: int = 1_000_000, seed: int = 0,
                        slack: float = 0.1, chunk: int = 2**14, threads: int = 1) -> OracleReport:
    """Monte Carlo ``sum_{j,k} P(Psi_j & Psi_k)`` against ``(sum_j P(Psi_j))^2``.

    ``Psi_j = {h_j > alpha sqrt(D_j log P)}`` with ``P = min(R, m) + 1``.
    Ratios come with delete-one-chunk jackknife standard errors; for
    diagonal covariances the largest pairwise z-score of joint frequency
    against the product of marginals is reported too.
    """
    factor = covariance_factor(config.covariance)
    m = config.m
    thr = config.thresholds()
    starts = list(range(0, trials, chunk))

    def work(idx: int) -> np.ndarray:
        count = min(chunk, trials - starts[idx])
        z = _rng(seed, 100 + idx).standard_normal((count, m))
        hit = (z @ factor.T > thr).astype(float)
        # row 0: marginal counts, rows 1..m: pair counts
        return np.vstack([hit.sum(axis=0), hit.T @ hit])

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            blocks = np.array(list(pool.map(work, range(len(starts)))))
    else:
        blocks = np.array([work(i) for i in range(len(starts))])
    counts = blocks.reshape(len(starts), -1)
    t_per_block = np.array([min(chunk, trials - s) for s in starts], dtype=float)
    counts = np.concatenate([counts, t_per_block[:, None]], axis=1)

    def split(vec):
        marg = vec[:m] / vec[-1]
        pairs = vec[m:-1].reshape(m, m) / vec[-1]
        return marg, pairs

    def total_num(vec):
        return split(vec)[1].sum()

    def total_den(vec):
        return split(vec)[0].sum() ** 2

    def off_num(vec):
        _, pairs = split(vec)
        return pairs.sum() - np.trace(pairs)

    def off_den(vec):
        marg, _ = split(vec)
        return marg.sum() ** 2 - np.sum(marg**2)

    total_ratio, total_se = _jackknife(counts, total_den, total_num)
    off_ratio, off_se = _jackknife(counts, off_den, off_num)
    marg, pairs = split(counts.sum(axis=0))
    prod = np.outer(marg, marg)
    se_pair = np.sqrt(np.maximum(prod * (1 - prod), 1e-300) / trials)
    z = np.abs(pairs - prod) / se_pair
    np.fill_diagonal(z, 0.0)
    exact_marg = ndtr(-config.alpha * math.sqrt(math.log(config.P)))
    cons = config.constraint()
    return OracleReport(
        "gauss", f"m={m} P={config.P:g} alpha={config.alpha:g} trials={trials}", cons["ok"],
        total_ratio <= 1.0 + slack,
        {"total_ratio": total_ratio, "total_ratio_se": total_se, "offdiag_ratio": off_ratio,
         "offdiag_ratio_se": off_se, "max_pair_z": float(z.max()) if m > 1 else 0.0,
         "marginal_mean": float(marg.mean()), "marginal_exact": float(exact_marg),
         "P": config.P, "constraint": cons, "slack": slack},
    )


def gaussian_comparison_exact(config: GaussianCompareConfig) -> dict:
    """Exact ratios for the same configuration via bivariate quadrature (small ``m`` only)."""
    cov = config.covariance
    m = config.m
    t = config.alpha * math.sqrt(math.log(config.P))  # standardised threshold
    marg = np.full(m, float(ndtr(-t)))
    pairs = np.diag(marg).astype(float)
    sd = np.sqrt(np.diag(cov))
    for j in range(m):
        for k in range(j + 1, m):
            rho = cov[j, k] / (sd[j] * sd[k])
            pairs[j, k] = pairs[k, j] = bivariate_upper(t, t, rho)
    total = pairs.sum() / marg.sum() ** 2
    off = (pairs.sum() - np.trace(pairs)) / (marg.sum() ** 2 - np.sum(marg**2))
    return {"total_ratio": float(total), "offdiag_ratio": float(off)}


# ---------------------------------------------------------------------------
# transfer from the random polynomial to its Gaussian twin


def _enumerate_model(model: CoeffModel, n: int):
    if model.tag == "rademacher":
        vals, probs = np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    elif model.tag == "two-point":
        q = 0.5 / model.v**2
        vals, probs = np.array([-model.v, 0.0, model.v]), np.array([q, 1 - 2 * q, q])
    else:
        raise ValueError("exact enumeration needs a discrete coefficient model")
    k = vals.size
    idx = np.array(np.unravel_index(np.arange(k**n), (k,) * n)).T
    return vals[idx], np.prod(probs[idx], axis=1)


def transfer_comparison(system: FunctionSystem, model: CoeffModel, points_m: int, alpha: float,
                        trials: int = 20_000, seed: int = 0, exact: bool = False,
                        max_pairs: int = 32) -> OracleReport:
    """Compare threshold events of ``eta_j = n^(-1/2) sum xi_i f_i(x_j)`` with the matched Gaussian.

    ``x_j`` are ``points_m`` uniform points.  The Gaussian side is computed
    exactly (normal tail and bivariate quadrature); the polynomial side is
    Monte Carlo, or exact enumeration when ``exact`` is set.
    """
    if not system.is_real:
        raise ValueError("transfer comparison needs a real-valued system")
    n = system.n
    rng = _rng(seed, 6)
    x = rng.random(points_m)
    vals = system.values_at(x)  # (m, n)
    cov = vals @ vals.T / n
    diag = np.diag(cov)
    keep = diag > TOL
    excluded = np.flatnonzero(~keep).tolist()
    vals, cov, diag = vals[keep], cov[np.ix_(keep, keep)], diag[keep]
    m = vals.shape[0]
    big_p = _coeffs.log_gain_parameter(points_m, _coeffs.effective_dimension(np.ones(n)))
    t_std = alpha * math.sqrt(math.log(big_p))
    thr = t_std * np.sqrt(diag)
    sd = np.sqrt(diag)
    pair_idx = [(j, k) for j in range(m) for k in range(j + 1, m)]
    if len(pair_idx) > max_pairs:
        pick = rng.choice(len(pair_idx), max_pairs, replace=False)
        pair_idx = [pair_idx[i] for i in sorted(pick)]
    gauss_marg = float(ndtr(-t_std))
    gauss_pair = np.array([bivariate_upper(t_std, t_std, cov[j, k] / (sd[j] * sd[k]))
                           for j, k in pair_idx])

    if exact:
        xi, w = _enumerate_model(model, n)
        hits = (xi @ vals.T / math.sqrt(n) > thr + TOL).astype(float)
        p_u = w @ hits
        p_uu = np.array([w @ (hits[:, j] * hits[:, k]) for j, k in pair_idx])
        se_u = np.zeros_like(p_u)
        se_uu = np.zeros_like(p_uu)
    else:
        chunk = 4096
        acc_u = np.zeros(m)
        acc_uu = np.zeros(len(pair_idx))
        for start in range(0, trials, chunk):
            count = min(chunk, trials - start)
            xi = _coeffs.sample_trials(model, n, seed, start, count)
            hits = (xi @ vals.T / math.sqrt(n) > thr + TOL).astype(float)
            acc_u += hits.sum(axis=0)
            acc_uu += np.array([np.sum(hits[:, j] * hits[:, k]) for j, k in pair_idx])
        p_u, p_uu = acc_u / trials, acc_uu / trials
        se_u = np.sqrt(p_u * (1 - p_u) / trials)
        se_uu = np.sqrt(p_uu * (1 - p_uu) / trials)
    gap_u = np.abs(p_u - gauss_marg)
    ju = int(np.argmax(gap_u))
    stats_out = {
        "P": big_p, "threshold_std": t_std, "points": m, "excluded_points": excluded,
        "marginal_gap": float(gap_u[ju]), "marginal_gap_se": float(se_u[ju]),
        "gaussian_marginal": gauss_marg, "polynomial_marginals": p_u, "exact": exact,
    }
    if pair_idx:
        gap_uu = np.abs(p_uu - gauss_pair)
        jp = int(np.argmax(gap_uu))
        stats_out.update({"pair_gap": float(gap_uu[jp]), "pair_gap_se": float(se_uu[jp]),
                          "pairs": [list(p) for p in pair_idx], "polynomial_pairs": p_uu,
                          "gaussian_pairs": gauss_pair})
    return OracleReport("transfer", f"system={system.label} n={n} m={points_m} model={model.label}",
                        True, True, stats_out)


# ---------------------------------------------------------------------------
# randomised instance batteries


def random_space(rng: np.random.Generator, atoms: int, events: int) -> FiniteSpace:
    p = rng.dirichlet(np.ones(atoms))
    p = p / p.sum()
    masks = []
    for _ in range(events):
        mask = rng.random(atoms) < rng.uniform(0.1, 0.9)
        if not mask.any():
            mask[rng.integers(atoms)] = True
        masks.append(sum(1 << int(a) for a in np.flatnonzero(mask)))
    return FiniteSpace(p, tuple(masks))


def random_lemma1(count: int, seed: int) -> list[OracleReport]:
    rng = _rng(seed, 7)
    out = []
    for _ in range(count):
        space = random_space(rng, int(rng.integers(1, 13)), int(rng.integers(1, 7)))
        lo = max(lemma1_check(space, 0.5).statistics["kappa_min"], 0.0)
        if lo >= 1.0:
            continue
        kappa = lo if rng.random() < 0.5 else float(rng.uniform(lo, 1.0))
        out.append(lemma1_check(space, kappa))
    return out


def random_tver(count: int, seed: int) -> list[OracleReport]:
    rng = _rng(seed, 8)
    out = []
    for _ in range(count):
        def dist(k):
            atoms = rng.integers(-6, 7, k) * 0.5 if rng.random() < 0.5 else rng.normal(0, 2, k)
            p = rng.dirichlet(np.ones(k))
            return DiscreteDist(atoms, p / p.sum())

        eta, etac = dist(int(rng.integers(1, 7))), dist(int(rng.integers(1, 7)))
        ivs = []
        for _ in range(int(rng.integers(1, 4))):
            lo = float(rng.uniform(-4, 4))
            ivs.append((lo, lo + float(rng.uniform(0, 2))))
        out.append(shift_lemma_check(eta, etac, ivs))
    return out


def random_tver2(count: int, seed: int) -> list[OracleReport]:
    rng = _rng(seed, 9)
    out = []
    for _ in range(count):
        space = random_space(rng, int(rng.integers(2, 13)), int(rng.integers(1, 6)))
        t = rng.exponential(1.0, len(space.events))
        ev = space.membership.astype(float) @ space.probs
        p = float(min(1.0, 1.0 - ev.min()))  # smallest p making the hypothesis true
        out.append(indicator_sum_check(t, space, p))
    return out


def random_geom(count: int, seed: int, max_n: int = 16, bound_constant: float = 10.0,
                coeff_budget: int = 200) -> list[OracleReport]:
    rng = _rng(seed, 10)
    out = []
    for i in range(count):
        n = int(rng.integers(1, max_n + 1))
        d = int(rng.integers(2, 13))
        p = [1.0, 2.0, math.inf][int(rng.integers(0, 3))]
        oracle = lp_oracle(p)
        w = rng.standard_normal((n, d))
        w = w / oracle(w)[:, None]
        beta = float(rng.uniform(0, 0.5))
        out.append(geom_lemma_ratio(w, oracle, beta, coeff_budget, seed + i, bound_constant))
    return out


def summarize_reports(reports: Sequence[OracleReport]) -> dict:
    return {
        "instances": len(reports),
        "hypothesis_held": int(sum(r.hypothesis_ok for r in reports)),
        "violations": int(sum(r.violation for r in reports)),
    }
