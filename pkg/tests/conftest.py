import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def f64():
    """Run a test at float64 default precision."""
    from odyn.tensor import precision

    with precision("float64"):
        yield
