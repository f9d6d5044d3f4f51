import numpy as np
import pytest

from nbreserve import RunOffTriangle, australian_bodily_injury, taylor_ashe


@pytest.fixture(scope="session")
def australian():
    return australian_bodily_injury()


@pytest.fixture(scope="session")
def taylor():
    return taylor_ashe()


def random_triangle(rng: np.random.Generator, dimension: int) -> RunOffTriangle:
    """Draw a run-off triangle from a random two-way Poisson model.

    Row totals around exp(5..7) keep every column sum positive with
    overwhelming probability, which the chain-ladder factors require.
    """
    alpha = rng.uniform(5.0, 7.0, size=dimension)
    raw = rng.uniform(0.5, 2.0, size=dimension)
    weights = raw / raw.sum()
    rows = []
    for i in range(1, dimension + 1):
        mu = np.exp(alpha[i - 1]) * weights[: dimension - i + 1]
        rows.append(rng.poisson(mu).tolist())
    return RunOffTriangle(rows)


@pytest.fixture
def make_triangle():
    return random_triangle
