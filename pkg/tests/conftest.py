import numpy as np
import pytest
from hypothesis import settings

from voisim import GaussMarkovModel, Scenario, ConstantRate, load_scenario

settings.register_profile("suite", deadline=None, max_examples=200)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def broadcast():
    return load_scenario("spacecraft_broadcast")


@pytest.fixture(scope="session")
def multiaccess():
    return load_scenario("spacecraft_multiaccess")


@pytest.fixture(scope="session")
def bursty():
    return load_scenario("spacecraft_broadcast_bursty")


def scalar_model(a=1.0, c=1.0, w=1.0, v=1.0, m0=0.0, M0=1.0, horizon=10):
    return GaussMarkovModel.constant(
        A=np.array([[a]]),
        C=np.array([[c]]),
        W=np.array([[w]]),
        V=np.array([[v]]),
        m0=np.array([m0]),
        M0=np.array([[M0]]),
        horizon=horizon,
    )


def small_scenario(kind="broadcast", horizon=10, rates=(0.2, 0.4), price=0.5,
                   weight=1.0, a=0.9, w=0.3, M0=1.0, name="small"):
    """Scalar-source scenario for cheap engine runs."""
    src = scalar_model(a=a, w=w, M0=M0, horizon=horizon)
    sources = (
        (src,)
        if kind == "broadcast"
        else (src, scalar_model(a=0.7, w=0.5, M0=2.0, horizon=horizon))
    )
    senders = 1 if kind == "broadcast" else 2
    return Scenario(
        kind=kind,
        sources=sources,
        links=tuple(ConstantRate(r) for r in rates),
        price=np.full((senders, horizon + 1), price),
        weight=np.full((2, horizon + 1), weight),
        name=name,
    )
