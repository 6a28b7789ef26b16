import hypothesis
import numpy as np
import pytest

from lcfit.cli import load_mi

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture()
def rng():
    return np.random.default_rng(20170612)


@pytest.fixture(scope="session")
def mi():
    return load_mi()
