import numpy as np
import pytest

from rsjd import LqSpec, two_state


@pytest.fixture(scope="session")
def symmetric_chain():
    return two_state(1.0, 1.0)


@pytest.fixture(scope="session")
def benchmark_spec(symmetric_chain):
    """The two-regime quadratic benchmark with its fixed constants."""
    return LqSpec(
        c1=(-1.0, 0.0),
        c2=(0.0, -0.5),
        c3=(0.0, 1.0),
        c4=(0.5, 1.0),
        horizon=1.0,
        chain=symmetric_chain,
        sigma=lambda t: 1.0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
