import numpy as np
import pytest

from inflbetareg.links import LinkSpec
from inflbetareg.model import ObservationSet, ParamVector
from inflbetareg.simulate import ScenarioSpec, generate_clean

BENCH_KAPPA = (0.0, 2.0, 2.0)
BENCH_BETA = (-1.8, -2.0)
BENCH_GAMMA = (4.5,)


def bench_spec(n=100, seed=0, **kwargs) -> ScenarioSpec:
    return ScenarioSpec(n=n, kappa=BENCH_KAPPA, beta=BENCH_BETA, gamma=BENCH_GAMMA,
                        seed=seed, reps=kwargs.pop("reps", 1), **kwargs)


@pytest.fixture(scope="session")
def links() -> LinkSpec:
    return LinkSpec()


@pytest.fixture(scope="session")
def bench_obs(links) -> ObservationSet:
    """One benchmark-design dataset shared by read-only tests."""
    return generate_clean(bench_spec(n=100), seed=12345, links=links)


@pytest.fixture(scope="session")
def bench_truth() -> ParamVector:
    return ParamVector(np.array(BENCH_KAPPA), np.array(BENCH_BETA), np.array(BENCH_GAMMA))


def tiny_obs(y, c=0, p0=1, p1=1, p2=1) -> ObservationSet:
    """Intercept-only dataset with the given responses."""
    y = np.asarray(y, dtype=float)
    n = y.size
    ones = np.ones((n, 1))
    return ObservationSet(y=y, S=np.tile(ones, (1, p0)), X=np.tile(ones, (1, p1)),
                          Z=np.tile(ones, (1, p2)), c=c)
