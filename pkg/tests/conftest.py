import numpy as np
import pytest

from phaserec.model import ModelParams
from phaserec.splines import SplineSpace


@pytest.fixture(scope="session")
def params():
    """Desk-scale parameter set used across the unit tests."""
    return ModelParams(M=1.0, ell=40.0, eta=20000.0, D=10000.0,
                       gamma_h=1.0, gamma_c=2.0, S_h=1.0, S_c=0.5,
                       gamma_p=0.5, alpha_h=0.1, alpha_c=1.0,
                       m_ref=0.12, rho=1.0, A=0.1, sigma_l=0.4, sigma_r=0.1,
                       c0_sigma=1.0, c1_sigma=-0.75, c0_p=0.2, c1_p=1.0)


@pytest.fixture(scope="session")
def space8():
    return SplineSpace(8, 1000.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
