"""Exact norms of step functions: L_p, integral-uniform, relative and Marcinkiewicz.

Every norm here is rearrangement invariant, so it only needs the cell moduli
and cell widths.  The ``*_batch`` functions take a ``(B, K)`` array of moduli
with widths of shape ``(K,)`` or ``(B, K)`` and return ``(B,)``; the Monte
Carlo code evaluates thousands of random polynomials this way.  The scalar
functions wrap them for a single :class:`StepFunction`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .stepfn import StepFunction

GOLDEN_ITERS = 60
MARCINKIEWICZ_GRID = 10_000
CHAIN_SLACK = 1e-9
_INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# batched plumbing


@dataclass
class _Sorted:
    u: np.ndarray  # (B, K) moduli, descending
    w: np.ndarray  # (B, K) widths in the same order
    c: np.ndarray  # (B, K+1) cumulative widths, c[:, 0] = 0
    big: np.ndarray  # (B, K+1) cumulative integrals of f*


def _prepare(moduli, widths) -> _Sorted:
    mod = np.atleast_2d(np.asarray(moduli, dtype=float))
    w = np.asarray(widths, dtype=float)
    zeros = np.zeros((mod.shape[0], 1))
    if w.ndim == 1 and w.size and np.all(w == w[0]):
        # equal widths: ties are interchangeable, so a plain sort gives the same arrays
        u = np.sort(mod, axis=1)[:, ::-1]
        ws = np.broadcast_to(w, mod.shape)
        c = np.broadcast_to(np.concatenate([[0.0], np.minimum(np.cumsum(w), 1.0)]),
                            (mod.shape[0], w.size + 1))
        big = np.concatenate([zeros, np.cumsum(u * ws, axis=1)], axis=1)
        return _Sorted(u, ws, c, big)
    w = np.broadcast_to(w, mod.shape)
    order = np.argsort(-mod, axis=1, kind="stable")
    u = np.take_along_axis(mod, order, axis=1)
    ws = np.take_along_axis(w, order, axis=1)
    c = np.concatenate([zeros, np.cumsum(ws, axis=1)], axis=1)
    big = np.concatenate([zeros, np.cumsum(u * ws, axis=1)], axis=1)
    return _Sorted(u, ws, np.minimum(c, 1.0), big)


def _survival(c, m: int):
    """``(1 - c)**m`` without losing digits for small ``c`` or huge ``m``."""
    with np.errstate(divide="ignore"):
        return np.exp(m * np.log1p(-np.minimum(c, 1.0)))


def _one_minus_survival(c, m: int):
    with np.errstate(divide="ignore"):
        return -np.expm1(m * np.log1p(-np.minimum(c, 1.0)))


def _check_m(m) -> int:
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    return int(m)


def lp_norm_batch(moduli, widths, p: float) -> np.ndarray:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mod = np.atleast_2d(np.asarray(moduli, dtype=float))
    w = np.broadcast_to(np.asarray(widths, dtype=float), mod.shape)
    if math.isinf(p):
        # zero-width padding cells must not count
        return np.max(np.where(w > 0, mod, 0.0), axis=1)
    if p == 1:
        return np.sum(w * mod, axis=1)
    if p == 2:
        return np.sqrt(np.sum(w * mod * mod, axis=1))
    return np.sum(w * mod**p, axis=1) ** (1.0 / p)


def integral_uniform_batch(moduli, widths, m: int, sorted_=None) -> np.ndarray:
    """Expected maximum of ``m`` uniform samples of ``|f|``."""
    m = _check_m(m)
    s = sorted_ or _prepare(moduli, widths)
    surv = _survival(s.c, m)
    return np.sum(s.u * (surv[:, :-1] - surv[:, 1:]), axis=1)


def integral_uniform_distribution_batch(moduli, widths, m: int, sorted_=None) -> np.ndarray:
    """``int_0^inf (1 - (1 - lambda(t))**m) dt`` summed plateau by plateau."""
    m = _check_m(m)
    s = sorted_ or _prepare(moduli, widths)
    drops = s.u - np.concatenate([s.u[:, 1:], np.zeros((s.u.shape[0], 1))], axis=1)
    return np.sum(drops * _one_minus_survival(s.c[:, 1:], m), axis=1)


def _prefix_at(s: _Sorted, t: np.ndarray) -> np.ndarray:
    """``I(t)`` per row for a column of ``t`` values of shape ``(B,)``."""
    k = np.sum(s.c[:, 1:-1] < t[:, None], axis=1)
    rows = np.arange(s.u.shape[0])
    return s.big[rows, k] + s.u[rows, k] * (t - s.c[rows, k])


def relative_prime_batch(moduli, widths, m: int, sorted_=None) -> np.ndarray:
    """``m * int_0^{1/m} f*``: the best set of measure ``1/m``."""
    m = _check_m(m)
    s = sorted_ or _prepare(moduli, widths)
    t = np.full(s.u.shape[0], 1.0 / m)
    return m * _prefix_at(s, t)


def _star_objective(delta, base, u, c0, m):
    # ((1 - (1-delta)^m) / delta) * I(delta), I linear on the plateau
    prefix = base + u * (delta - c0)
    safe = np.where(delta > 0, delta, 1.0)
    factor = np.where(delta > 0, _one_minus_survival(delta, m) / safe, float(m))
    return factor * prefix


def relative_star_batch(moduli, widths, m: int, sorted_=None, return_arg: bool = False):
    """``sup_delta ((1-(1-delta)^m)/delta) * int_0^delta f*``.

    On a plateau of ``f*`` the objective is unimodal in ``delta`` (after the
    substitution ``s = 1 - delta`` its derivative changes sign at most once),
    so a golden-section search per plateau finds the exact maximum.
    """
    m = _check_m(m)
    s = sorted_ or _prepare(moduli, widths)
    lo = s.c[:, :-1].copy()
    hi = s.c[:, 1:].copy()
    base, u, c0 = s.big[:, :-1], s.u, s.c[:, :-1]

    def g(d):
        return _star_objective(d, base, u, c0, m)

    a, b = lo.copy(), hi.copy()
    for _ in range(GOLDEN_ITERS):
        x1 = b - _INVGOLD * (b - a)
        x2 = a + _INVGOLD * (b - a)
        left = g(x1) >= g(x2)
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
    mid = 0.5 * (a + b)
    # snap to a plateau end when the interior point does not beat it
    g_mid = g(mid)
    mid = np.where(g(hi) >= g_mid, hi, mid)
    mid = np.where(g(lo) >= g_mid, lo, mid)
    # candidates per plateau, ordered by delta: left end, interior, right end
    cand_d = np.stack([lo, mid, hi], axis=2).reshape(lo.shape[0], -1)
    cand_v = np.stack([g(lo), g(mid), g(hi)], axis=2).reshape(lo.shape[0], -1)
    best = np.max(cand_v, axis=1)
    if not return_arg:
        return best
    tol = 1e-13 * np.maximum(np.abs(best), 1e-300)
    hit = cand_v >= (best - tol)[:, None]
    d_at = np.where(hit & (cand_d > 0), cand_d, np.inf)
    return best, np.min(d_at, axis=1)


# ---------------------------------------------------------------------------
# concave profiles and the Marcinkiewicz norm


@dataclass(frozen=True)
class ConcaveProfile:
    """Increasing concave ``phi`` on [0, 1] with ``phi(0) = 0`` and ``phi(1) = 1``."""

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    gamma: Optional[float] = None
    knots: Optional[tuple] = None  # (ts, values) for tabulated profiles

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))

    def validate(self, grid_size: int = MARCINKIEWICZ_GRID, tol: float = 1e-12) -> None:
        t = np.linspace(0.0, 1.0, grid_size + 1)
        v = self(t)
        if abs(v[0]) > tol or abs(v[-1] - 1.0) > tol:
            raise ValueError(f"profile {self.name}: need phi(0)=0 and phi(1)=1")
        if np.any(np.diff(v) < -tol):
            raise ValueError(f"profile {self.name}: not nondecreasing")
        # midpoint test on neighbouring grid triples
        if np.any(v[1:-1] - 0.5 * (v[:-2] + v[2:]) < -tol):
            raise ValueError(f"profile {self.name}: not concave")

    @classmethod
    def power(cls, gamma: float) -> "ConcaveProfile":
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"power profile needs gamma in (0, 1], got {gamma}")
        return cls(f"t^{gamma:g}", lambda t, g=gamma: np.power(t, g), gamma=float(gamma))

    @classmethod
    def tabulated(cls, ts, values) -> "ConcaveProfile":
        ts = np.asarray(ts, dtype=float)
        vs = np.asarray(values, dtype=float)
        if ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0):
            raise ValueError("tabulated profile knots must increase from 0 to 1")
        prof = cls(
            "tabulated",
            lambda t, x=ts, y=vs: np.interp(t, x, y),
            knots=(tuple(ts), tuple(vs)),
        )
        prof.validate()
        return prof


def marcinkiewicz_batch(moduli, widths, profile: ConcaveProfile, sorted_=None,
                        return_arg: bool = False):
    """``sup_{0<t<=1} I(t) / phi(t)`` with ``I`` the prefix integral of ``f*``.

    Candidates: plateau ends, a uniform grid, the knots of a tabulated
    profile and, for ``phi = t**gamma``, the stationary point of
    ``(A + u t) / t**gamma`` on every plateau.  ``I/phi`` is a linear
    fraction between consecutive knots of a tabulated profile, so the
    candidate set is exhaustive for both built-in families.
    """
    s = sorted_ or _prepare(moduli, widths)
    nrows, k = s.u.shape
    grid = np.arange(1, MARCINKIEWICZ_GRID + 1) / MARCINKIEWICZ_GRID
    extra = [] if profile.knots is None else [np.asarray(profile.knots[0])[1:]]
    shared = np.concatenate([grid] + extra)
    best = np.empty(nrows)
    arg = np.empty(nrows)
    for r in range(nrows):
        c, big, u = s.c[r], s.big[r], s.u[r]
        cands = [c[1:][s.w[r] > 0], shared]
        if profile.gamma is not None and profile.gamma < 1.0:
            gam = profile.gamma
            intercept = big[:-1] - u * c[:-1]
            with np.errstate(divide="ignore", invalid="ignore"):
                ts = gam * intercept / ((1.0 - gam) * u)
            ok = np.isfinite(ts) & (ts > c[:-1]) & (ts < c[1:])
            cands.append(ts[ok])
        t = np.unique(np.concatenate(cands))
        t = t[(t > 0) & (t <= 1.0)]
        vals = np.interp(t, c, big) / profile(t)
        top = vals.max()
        best[r] = top
        arg[r] = t[np.argmax(vals >= top - 1e-13 * abs(top))]
    return (best, arg) if return_arg else best


# ---------------------------------------------------------------------------
# norm kinds


@dataclass(frozen=True)
class NormKind:
    """Tag for one member of the norm family."""

    kind: str  # "lp" | "m-infty" | "star" | "prime" | "marcinkiewicz"
    p: Optional[float] = None
    m: Optional[int] = None
    profile: Optional[ConcaveProfile] = None

    def __post_init__(self):
        if self.kind == "lp":
            if self.p is None or self.p < 1:
                raise ValueError("Lp norm needs p >= 1")
        elif self.kind in ("m-infty", "star", "prime"):
            _check_m(self.m if self.m is not None else 0)
        elif self.kind == "marcinkiewicz":
            if self.profile is None:
                raise ValueError("Marcinkiewicz norm needs a profile")
            self.profile.validate()
        else:
            raise ValueError(f"unknown norm kind {self.kind!r}")

    @classmethod
    def lp(cls, p: float) -> "NormKind":
        return cls("lp", p=float(p))

    @classmethod
    def integral_uniform(cls, m: int) -> "NormKind":
        return cls("m-infty", m=int(m))

    @classmethod
    def star(cls, m: int) -> "NormKind":
        return cls("star", m=int(m))

    @classmethod
    def prime(cls, m: int) -> "NormKind":
        return cls("prime", m=int(m))

    @classmethod
    def marcinkiewicz(cls, profile: ConcaveProfile) -> "NormKind":
        return cls("marcinkiewicz", profile=profile)

    @property
    def uses_m(self) -> bool:
        return self.kind in ("m-infty", "star", "prime")

    @property
    def label(self) -> str:
        if self.kind == "lp":
            if math.isinf(self.p):
                return "sup"
            return f"l{self.p:g}"
        if self.kind == "marcinkiewicz":
            return f"marcinkiewicz[{self.profile.name}]"
        return self.kind

    def evaluate_batch(self, moduli, widths, sorted_=None) -> np.ndarray:
        if self.kind == "lp":
            return lp_norm_batch(moduli, widths, self.p)
        if self.kind == "m-infty":
            return integral_uniform_batch(moduli, widths, self.m, sorted_)
        if self.kind == "star":
            return relative_star_batch(moduli, widths, self.m, sorted_)
        if self.kind == "prime":
            return relative_prime_batch(moduli, widths, self.m, sorted_)
        return marcinkiewicz_batch(moduli, widths, self.profile, sorted_)

    def __call__(self, f: StepFunction) -> float:
        return float(self.evaluate_batch(np.abs(f.values)[None, :], f.widths)[0])


def parse_norm_kind(text: str, m: Optional[int] = None) -> NormKind:
    """Parse CLI names: ``l1``, ``l2``, ``sup``, ``lp:P``, ``m-infty``, ``star``,
    ``prime``, ``marcinkiewicz:GAMMA``.  ``m`` fills in for the m-family."""
    name, _, arg = text.partition(":")
    name = name.lower()
    if name in ("l1", "l2"):
        return NormKind.lp(float(name[1]))
    if name in ("sup", "linf", "l-inf", "infty"):
        return NormKind.lp(math.inf)
    if name == "lp":
        return NormKind.lp(float(arg))
    if name in ("m-infty", "star", "prime"):
        mm = int(arg) if arg else m
        if mm is None:
            raise ValueError(f"norm {name} needs m")
        return NormKind(name, m=mm)
    if name == "marcinkiewicz":
        return NormKind.marcinkiewicz(ConcaveProfile.power(float(arg) if arg else 0.5))
    raise ValueError(f"unknown norm kind {text!r}")


# ---------------------------------------------------------------------------
# scalar API


def _one(f: StepFunction):
    return np.abs(f.values)[None, :], f.widths


def lp_norm(f: StepFunction, p: float) -> float:
    return float(lp_norm_batch(*_one(f), p)[0])


def integral_uniform(f: StepFunction, m: int) -> float:
    return float(integral_uniform_batch(*_one(f), m)[0])


def integral_uniform_via_distribution(f: StepFunction, m: int) -> float:
    return float(integral_uniform_distribution_batch(*_one(f), m)[0])


def relative_prime(f: StepFunction, m: int) -> float:
    return float(relative_prime_batch(*_one(f), m)[0])


def relative_star(f: StepFunction, m: int) -> float:
    return float(relative_star_batch(*_one(f), m)[0])


def relative_star_argmax(f: StepFunction, m: int) -> tuple[float, float]:
    val, arg = relative_star_batch(*_one(f), m, return_arg=True)
    return float(val[0]), float(arg[0])


def marcinkiewicz(f: StepFunction, profile: ConcaveProfile) -> float:
    profile.validate()
    return float(marcinkiewicz_batch(*_one(f), profile)[0])


def marcinkiewicz_argmax(f: StepFunction, profile: ConcaveProfile) -> tuple[float, float]:
    profile.validate()
    val, arg = marcinkiewicz_batch(*_one(f), profile, return_arg=True)
    return float(val[0]), float(arg[0])


@dataclass(frozen=True)
class ChainReport:
    """``(1-1/e) prime <= star <= m_infty <= 2 prime`` evaluated for one (f, m)."""

    prime: float
    star: float
    m_infty: float
    lower_ok: bool
    mid_ok: bool
    upper_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.lower_ok and self.mid_ok and self.upper_ok


def _leq(a, b, slack=CHAIN_SLACK):
    return a <= b + slack * np.maximum(np.abs(a), np.abs(b))


def chain_check_batch(moduli, widths, m: int):
    """Vectorised chain check; returns (prime, star, m_infty, ok-mask of shape (B, 3))."""
    s = _prepare(moduli, widths)
    prime = relative_prime_batch(None, None, m, s)
    star = relative_star_batch(None, None, m, s)
    minf = integral_uniform_batch(None, None, m, s)
    ok = np.stack(
        [_leq((1 - math.exp(-1)) * prime, star), _leq(star, minf), _leq(minf, 2 * prime)],
        axis=1,
    )
    return prime, star, minf, ok


def chain_report(f: StepFunction, m: int) -> ChainReport:
    prime, star, minf, ok = chain_check_batch(*_one(f), m)
    return ChainReport(
        float(prime[0]), float(star[0]), float(minf[0]),
        bool(ok[0, 0]), bool(ok[0, 1]), bool(ok[0, 2]),
    )
