import numpy as np
import pytest

from twophase.eos import AnalysisParams, EosParams, ViscosityParams
from twophase.fields import DiscretizationScheme

TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="session")
def params():
    """Canonical parameter set used across the suite (k0 = 1, a0 = 0.81)."""
    return EosParams(a_l=1.0, a_g=0.9, rho_l0=1.0, P_l0=0.0,
                     m_tilde=1.2, n_tilde=0.8)


@pytest.fixture(scope="session")
def unit_params():
    """Unit parameters: C0 = 1/2, k0 = 1, a0 = 1, far field (1, 1)."""
    return EosParams(a_l=1.0, a_g=1.0, rho_l0=1.0, P_l0=0.0,
                     m_tilde=1.0, n_tilde=1.0)


@pytest.fixture(scope="session")
def visc():
    return ViscosityParams(mu=0.1, lam=0.05)


@pytest.fixture(scope="session")
def analysis(visc):
    return AnalysisParams.validated(q=1.2, theta=0.5, visc=visc)


@pytest.fixture(scope="session")
def spectral():
    return DiscretizationScheme("spectral", True)


@pytest.fixture(scope="session")
def central2():
    return DiscretizationScheme("central2", False)


@pytest.fixture(scope="session")
def central4():
    return DiscretizationScheme("central4", False)
