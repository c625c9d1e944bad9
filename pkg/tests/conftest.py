import numpy as np
import hypothesis.strategies as st
from hypothesis import settings
from hypothesis.strategies import composite

from iunorm.stepfn import StepFunction

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

THIRDS = [0.0, 1 / 3, 2 / 3, 1.0]


def f1() -> StepFunction:
    return StepFunction(THIRDS, [3, 1, 2])


@composite
def step_functions(draw, max_cells=12, complex_values=False, nonneg=False):
    k = draw(st.integers(1, max_cells))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    bps = np.concatenate([[0.0], np.cumsum(raw) / np.sum(raw)])
    bps[-1] = 1.0
    lo = 0.0 if nonneg else -5.0
    vals = np.array(draw(st.lists(st.floats(lo, 5.0), min_size=k, max_size=k)))
    if complex_values:
        im = np.array(draw(st.lists(st.floats(-5.0, 5.0), min_size=k, max_size=k)))
        vals = vals + 1j * im
    return StepFunction(bps, vals)


def random_step(rng: np.random.Generator, max_cells: int = 64) -> StepFunction:
    k = int(rng.integers(1, max_cells + 1))
    cuts = np.sort(rng.random(k - 1))
    bps = np.concatenate([[0.0], cuts, [1.0]])
    if np.any(np.diff(bps) <= 0):
        bps = np.linspace(0, 1, k + 1)
    vals = rng.exponential(1.0, k) * (rng.random(k) < 0.8)
    return StepFunction(bps, vals)
