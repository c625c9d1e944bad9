"""Piecewise-constant functions on [0, 1] with Lebesgue measure.

A :class:`StepFunction` stores a strictly increasing partition of [0, 1]
and one complex value per cell.  Everything here is exact up to double
precision: integrals are finite sums over cells, the distribution function
is a staircase, and the decreasing rearrangement is a sort.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

# breakpoints closer than this are treated as one when refining partitions
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class StepFunction:
    """Complex-valued step function; cell ``k`` is ``[breakpoints[k], breakpoints[k+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if bp.ndim != 1 or bp.size < 2:
            raise ValueError("need at least two breakpoints")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if vals.shape != (bp.size - 1,):
            raise ValueError(
                f"expected {bp.size - 1} values for {bp.size} breakpoints, got {vals.shape}"
            )
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0))

    def __call__(self, x):
        """Evaluate at points of [0, 1]; the right endpoint belongs to the last cell."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        idx = np.clip(idx, 0, self.n_cells - 1)
        return self.values[idx]

    def integral(self) -> complex:
        return complex(np.sum(self.widths * self.values))

    def to_json(self) -> dict:
        vals = [
            float(v.real) if v.imag == 0 else [float(v.real), float(v.imag)]
            for v in self.values
        ]
        return {"breakpoints": [float(b) for b in self.breakpoints], "values": vals}

    @classmethod
    def from_json(cls, obj: dict) -> "StepFunction":
        try:
            bp = obj["breakpoints"]
            raw = obj["values"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed function object: {exc}") from exc
        return make_step(bp, [_parse_value(v) for v in raw])


def _parse_value(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError(f"complex value must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


@dataclass(frozen=True)
class DistributionFunction:
    """Staircase ``lambda(t) = mu{|f| >= t}``.

    ``thresholds`` are the distinct moduli in decreasing order and
    ``measures[k] = lambda(thresholds[k])``.  Between consecutive thresholds
    ``lambda`` equals the value at the larger one (closed inequality).
    """

    thresholds: np.ndarray
    measures: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        # number of thresholds >= t, thresholds stored descending
        asc = self.thresholds[::-1]
        k = asc.size - np.searchsorted(asc, t, side="left")
        padded = np.concatenate([[0.0], self.measures])
        out = padded[k]
        return np.where(t <= 0, 1.0, out)

    def integral(self) -> float:
        """``int_0^inf lambda(t) dt``, which equals ``||f||_1``."""
        nxt = np.append(self.thresholds[1:], 0.0)
        return float(np.sum((self.thresholds - nxt) * self.measures))


@dataclass(frozen=True)
class Rearrangement:
    """Decreasing rearrangement ``f*`` as plateaus (value, width), values nonincreasing."""

    values: np.ndarray
    widths: np.ndarray

    @property
    def cumulative_widths(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.widths)])

    @property
    def cumulative_integrals(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.values * self.widths)])

    def prefix_integral(self, t):
        """``I(t) = int_0^t f*(s) ds``, piecewise linear in ``t``."""
        t = np.asarray(t, dtype=float)
        c = self.cumulative_widths
        big = self.cumulative_integrals
        k = np.clip(np.searchsorted(c, t, side="right") - 1, 0, self.values.size - 1)
        return big[k] + self.values[k] * (t - c[k])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        c = self.cumulative_widths
        k = np.clip(np.searchsorted(c, s, side="right") - 1, 0, self.values.size - 1)
        return self.values[k]

    def distribution(self) -> DistributionFunction:
        return _distribution_from(self.values, self.widths)


def make_step(breakpoints: Sequence[float], values: Sequence[complex]) -> StepFunction:
    """Build a step function, rejecting bad partitions.  Equal neighbours are kept."""
    return StepFunction(np.asarray(breakpoints, dtype=float), np.asarray(values, dtype=complex))


def constant(value: complex = 1.0) -> StepFunction:
    return make_step([0.0, 1.0], [value])


def indicator(a: float, b: float, height: float = 1.0) -> StepFunction:
    """``height`` times the indicator of ``[a, b)``."""
    if not 0.0 <= a < b <= 1.0:
        raise ValueError("need 0 <= a < b <= 1")
    bp = [0.0]
    vals = []
    if a > 0:
        bp.append(a)
        vals.append(0.0)
    bp.append(b)
    vals.append(height)
    if b < 1:
        bp.append(1.0)
        vals.append(0.0)
    return make_step(bp, vals)


def modulus(f: StepFunction) -> StepFunction:
    return StepFunction(f.breakpoints, np.abs(f.values))


def _distribution_from(moduli: np.ndarray, widths: np.ndarray) -> DistributionFunction:
    order = np.argsort(-moduli, kind="stable")
    u = moduli[order]
    w = widths[order]
    cum = np.cumsum(w)
    # keep the last index of every run of equal moduli
    last = np.append(u[1:] != u[:-1], True)
    thr = u[last]
    meas = np.minimum(cum[last], 1.0)
    if thr.size and thr[-1] == 0.0:
        # lambda(0) = 1 is implicit; do not store a zero threshold
        thr, meas = thr[:-1], meas[:-1]
    return DistributionFunction(thr, meas)


def distribution(f: StepFunction) -> DistributionFunction:
    return _distribution_from(np.abs(f.values), f.widths)


def rearrangement(f: StepFunction) -> Rearrangement:
    """Sort the cell moduli in decreasing order, carrying the cell widths along."""
    mod = np.abs(f.values)
    order = np.argsort(-mod, kind="stable")
    return Rearrangement(mod[order], f.widths[order])


def _merge_breakpoints(arrays: Sequence[np.ndarray]) -> np.ndarray:
    merged = np.unique(np.concatenate([np.asarray(a, dtype=float) for a in arrays]))
    keep = np.append(True, np.diff(merged) > MERGE_TOL)
    merged = merged[keep]
    merged[0], merged[-1] = 0.0, 1.0
    return merged


def restrict_to(f: StepFunction, breakpoints: np.ndarray) -> StepFunction:
    """Re-express ``f`` on a finer partition by midpoint evaluation."""
    mids = 0.5 * (breakpoints[:-1] + breakpoints[1:])
    return StepFunction(breakpoints, f(mids))


def refine_all(functions: Sequence[StepFunction]) -> list[StepFunction]:
    bp = _merge_breakpoints([f.breakpoints for f in functions])
    return [restrict_to(f, bp) for f in functions]


def common_refinement(f: StepFunction, g: StepFunction) -> tuple[StepFunction, StepFunction]:
    a, b = refine_all([f, g])
    return a, b


def linear_combination(coeffs, system) -> StepFunction:
    """``sum_i coeffs[i] * f_i`` for a :class:`~iunorm.systems.FunctionSystem`."""
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (system.n,):
        raise ValueError(f"expected {system.n} coefficients, got shape {coeffs.shape}")
    vals = system.combine(coeffs[None, :])[0]
    return StepFunction(system.breakpoints, vals)


def load_function(path: str | Path) -> StepFunction:
    with open(path) as fh:
        return StepFunction.from_json(json.load(fh))


def save_function(f: StepFunction, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(f.to_json(), fh)
