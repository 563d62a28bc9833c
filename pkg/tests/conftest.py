import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bilevel_gn.problems import REGISTRY

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ALL_PROBLEMS = list(REGISTRY)


def random_iterate(problem, rng, spread=2.0):
    """Random z with (x, y) around the default start and O(1) multipliers."""
    x0, y0 = problem.start_point()
    z = rng.normal(scale=spread, size=problem.N)
    z[: problem.n] += x0
    z[problem.n : problem.n + problem.m] += y0
    return z


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
