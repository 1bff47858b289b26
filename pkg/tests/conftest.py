import numpy as np
import pytest

from atomprep.model import AtomModel, CouplingSchedule, FormFactor


@pytest.fixture
def sigma_x():
    return AtomModel.two_level_sigma_x()


@pytest.fixture
def expo():
    return FormFactor.exponential()


@pytest.fixture
def decaying():
    return CouplingSchedule.decaying(0.1, -0.25)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
