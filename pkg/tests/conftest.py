import numpy as np
import pytest

from meshforge.body_model import procedural_template


@pytest.fixture(scope="session")
def template():
    return procedural_template("low")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
