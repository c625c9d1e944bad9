"""Random coefficient laws, weight vectors and the effective dimension.

Draws are counter based: coefficient ``i`` of a stream keyed by ``seed`` is a
fixed function of ``(seed, i)``.  Each draw consumes exactly one 64-bit
Philox output and is mapped through an inverse CDF, so a block of indices
can be produced independently of the others and parallel sampling matches
serial sampling bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

# closed forms for E|xi|^3
GAUSSIAN_ABS3 = 2.0 * math.sqrt(2.0 / math.pi)
UNIFORM_SYM_ABS3 = 3.0 * math.sqrt(3.0) / 4.0


@dataclass(frozen=True)
class CoeffModel:
    """Symmetric law with mean 0 and variance 1.

    ``tag`` is one of ``rademacher``, ``gaussian``, ``uniform-sym`` and
    ``two-point`` (values ``+-v`` with probability ``1/(2 v**2)`` each, else 0).
    """

    tag: str
    v: float = 1.0

    def __post_init__(self):
        if self.tag not in ("rademacher", "gaussian", "uniform-sym", "two-point"):
            raise ValueError(f"unknown coefficient model {self.tag!r}")
        if self.tag == "two-point" and self.v < 1.0:
            raise ValueError("two-point model needs v >= 1 so that P(xi != 0) <= 1")

    @property
    def label(self) -> str:
        return f"two-point:{self.v:g}" if self.tag == "two-point" else self.tag

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def second_moment(self) -> float:
        return 1.0

    @property
    def third_abs_moment(self) -> float:
        return {
            "rademacher": 1.0,
            "gaussian": GAUSSIAN_ABS3,
            "uniform-sym": UNIFORM_SYM_ABS3,
            "two-point": self.v,
        }[self.tag]

    @property
    def subgaussian(self) -> bool:
        """Whether the model is shipped as satisfying the exponential tail estimate."""
        return self.tag != "two-point"

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        if self.tag == "rademacher":
            return np.where(u < 0.5, -1.0, 1.0)
        if self.tag == "gaussian":
            return ndtri(u)
        if self.tag == "uniform-sym":
            return math.sqrt(3.0) * (2.0 * u - 1.0)
        half = 0.5 / self.v**2
        return np.where(u < half, self.v, np.where(u < 2 * half, -self.v, 0.0))


def parse_model(text: str) -> CoeffModel:
    name, _, arg = text.partition(":")
    if name == "two-point":
        return CoeffModel("two-point", float(arg) if arg else 2.0)
    return CoeffModel(name)


def stream_key(seed: int, stream: int | None = None) -> np.ndarray:
    """Philox key for ``seed``, optionally derived for a sub-stream (e.g. a trial index)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=() if stream is None else (int(stream),))
    return ss.generate_state(2, dtype=np.uint64)


def uniforms(key: np.ndarray, count: int, offset: int = 0) -> np.ndarray:
    """Uniforms in (0, 1) for counter positions ``offset .. offset+count-1``."""
    bg = np.random.Philox(key=key)
    # Philox4x64 emits four words per counter step
    steps, skip = divmod(offset, 4)
    if steps:
        bg.advance(steps)
    raw = bg.random_raw(count + skip)[skip:]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def sample_coeffs(model: CoeffModel, n: int, seed: int, offset: int = 0) -> np.ndarray:
    """``n`` i.i.d. draws; draw ``i`` depends only on ``(seed, offset + i)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return model.from_uniform(uniforms(stream_key(seed), n, offset))


def sample_trials(model: CoeffModel, n: int, seed: int, first: int, count: int) -> np.ndarray:
    """Coefficient rows for trials ``first .. first+count-1``; row ``t`` uses the stream ``(seed, t)``."""
    out = np.empty((count, n))
    for r in range(count):
        out[r] = model.from_uniform(uniforms(stream_key(seed, first + r), n))
    return out


def effective_dimension(a) -> float:
    """``(sum |a_i|^2)^2 / sum |a_i|^4``, between 1 and ``len(a)``."""
    sq = np.abs(np.asarray(a, dtype=complex)) ** 2
    if not np.any(sq > 0):
        raise ValueError("weight vector must not be all zero")
    # rescale so the fourth powers cannot underflow or overflow
    sq = sq / sq.max()
    return float(sq.sum() ** 2 / np.sum(sq * sq))


def log_gain_parameter(m: int, r: float) -> float:
    """``P = min(m, R) + 1``."""
    return min(float(m), float(r)) + 1.0


@dataclass
class MomentAudit:
    model: str
    trials: int
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    abs3: float
    abs3_se: float
    flags: list

    @property
    def ok(self) -> bool:
        return not self.flags


def moment_audit(model: CoeffModel, trials: int, seed: int, sigmas: float = 4.0) -> MomentAudit:
    """Empirical mean, variance and ``E|xi|^3`` with standard errors."""
    if trials < 10_000:
        raise ValueError("moment audit needs at least 1e4 trials")
    x = sample_coeffs(model, trials, seed)
    mean = x.mean()
    mean_se = x.std(ddof=1) / math.sqrt(trials)
    sq = x * x
    var = sq.mean()  # mean is known to be zero
    var_se = sq.std(ddof=1) / math.sqrt(trials)
    a3 = np.abs(x) ** 3
    abs3 = a3.mean()
    abs3_se = a3.std(ddof=1) / math.sqrt(trials)
    flags = []
    for name, est, se, want in (
        ("mean", mean, mean_se, model.mean),
        ("variance", var, var_se, model.second_moment),
        ("abs3", abs3, abs3_se, model.third_abs_moment),
    ):
        # zero-variance statistics (|xi| = 1) must match exactly
        if abs(est - want) > sigmas * se + 1e-12:
            flags.append(name)
    return MomentAudit(model.label, trials, float(mean), float(mean_se), float(var),
                       float(var_se), float(abs3), float(abs3_se), flags)
