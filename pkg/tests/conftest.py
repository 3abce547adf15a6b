import numpy as np
import pytest

import rsheston as rs

Q_TWO_STATE = [[-1.0909, 1.0909], [3.4413, -3.4413]]

SET1 = dict(
    variant="smmh_rho",
    horizon=5.0,
    delta=0.3,
    rho=-0.8,
    r=[0.03, 0.01],
    nu=[1.0, 1.3],
    kappa=4.0,
    theta=[0.02, 0.04],
    chi=0.35,
    d=1.7,
)


def make_params(**overrides) -> rs.HestonRegimeParams:
    kwargs = dict(SET1)
    kwargs.update(overrides)
    return rs.HestonRegimeParams(**kwargs)


@pytest.fixture(scope="session")
def chain2() -> rs.MarkovChainSpec:
    return rs.validate_intensity(Q_TWO_STATE)


@pytest.fixture(scope="session")
def chain1() -> rs.MarkovChainSpec:
    return rs.validate_intensity([[0.0]])


@pytest.fixture(scope="session")
def set1() -> rs.HestonRegimeParams:
    return make_params()


@pytest.fixture(scope="session")
def set2() -> rs.HestonRegimeParams:
    return make_params(delta=-1.0)


def random_intensity(rng: np.random.Generator, l: int, max_rate: float = 2.0) -> np.ndarray:
    q = rng.uniform(0.0, max_rate, size=(l, l))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q
