import pytest

from gamma_forge.bicombing import Bicombing
from gamma_forge.group_model import build_ball, preset
from gamma_forge.homotopy import RetractionEta, RipsContraction


@pytest.fixture(scope="session")
def free2():
    return preset("free2")


@pytest.fixture(scope="session")
def f2_ball(free2):
    return build_ball(free2, 8)


@pytest.fixture(scope="session")
def f2_small(free2):
    return build_ball(free2, 6)


@pytest.fixture(scope="session")
def pslz_ball():
    return build_ball(preset("pslz"), 6)


@pytest.fixture(scope="session")
def f2_bicombing(f2_ball):
    return Bicombing(f2_ball, 2, 1)


@pytest.fixture(scope="session")
def f2_contraction(f2_bicombing):
    return RipsContraction(f2_bicombing, RetractionEta(f2_bicombing.ball, 2))
