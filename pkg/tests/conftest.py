import math

import numpy as np
import pytest

from lichflow import Field, ProblemData, constant_field, make_grid

TWO_PI = 2.0 * math.pi


@pytest.fixture
def circle64():
    return make_grid(1, [64], [TWO_PI])


@pytest.fixture
def circle128():
    return make_grid(1, [128], [TWO_PI])


@pytest.fixture
def torus16():
    return make_grid(2, [16, 16], [TWO_PI, TWO_PI])


def mms_problem(n: int) -> tuple[ProblemData, np.ndarray]:
    """Problem whose exact steady state is u* = 2 + cos(x)/2 (p = q = 2, B = 1).

    A is chosen as u*^2 (cos(x)/2 + u*^2), which is strictly positive
    (minimum 2.25 * 1.75 at x = pi) and balances -u*'' = cos(x)/2 exactly.
    """
    g = make_grid(1, [n], [TWO_PI])
    x = g.coordinates(0)
    ustar = 2.0 + 0.5 * np.cos(x)
    a_vals = ustar**2 * (0.5 * np.cos(x) + ustar**2)
    pd = ProblemData(p=2.0, q=2.0, A=Field(g, a_vals), B=constant_field(g, 1.0))
    return pd, ustar


def random_smooth_field(grid, rng, amplitude=1.0, offset=0.0) -> Field:
    """Low-frequency random field: a handful of smooth periodic modes."""
    vals = np.full(grid.npoints, offset)
    for axis in range(grid.dim):
        x = grid.coordinates(axis) * (TWO_PI / grid.axis_length[axis])
        for k in (1, 2, 3):
            vals += amplitude * rng.uniform(-1, 1) / k * np.sin(k * x + rng.uniform(0, TWO_PI))
    return Field(grid, vals)
