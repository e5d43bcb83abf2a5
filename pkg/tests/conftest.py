import numpy as np
import pytest

from poseng.attention import AttentionSpec, LinearBias, Rotary, SinusoidalAbsolute
from poseng.positions import PositionMap

SCHEMES = ("sinusoidal", "rotary", "linear_bias")


def make_scheme(kind, n_heads, rng=None):
    if kind == "sinusoidal":
        return SinusoidalAbsolute()
    if kind == "rotary":
        return Rotary()
    if rng is None:
        return LinearBias.geometric(n_heads)
    return LinearBias(tuple(rng.uniform(0.05, 1.0, size=n_heads)))


def random_spec(rng, kind, d=8, n_heads=2, scale=1.0):
    return AttentionSpec.random(d, n_heads, make_scheme(kind, n_heads, rng), rng, scale=scale)


def random_map(rng, n, max_gap=8, max_lead=8):
    lead = int(rng.integers(0, max_lead + 1))
    steps = rng.integers(1, max_gap + 2, size=max(n - 1, 0))
    return PositionMap(np.concatenate([[lead], lead + np.cumsum(steps)]).astype(int)[:n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
