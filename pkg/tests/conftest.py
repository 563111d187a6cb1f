import numpy as np
import pytest

from svolkit.pricing import HestonParams, OptionContract, QuadratureConfig, SvjParams


@pytest.fixture(scope="session")
def std_heston():
    return HestonParams(kappa=2.0, theta=0.04, sigma=0.3, rho=-0.7, v0=0.04)


@pytest.fixture(scope="session")
def param_sets():
    """Three admissible parameter sets spanning correlation signs and
    vol-of-variance levels."""
    return (
        HestonParams(kappa=2.0, theta=0.04, sigma=0.3, rho=-0.7, v0=0.04),
        HestonParams(kappa=1.5, theta=0.09, sigma=0.5, rho=-0.9, v0=0.09),
        HestonParams(kappa=3.0, theta=0.02, sigma=0.2, rho=0.3, v0=0.03),
    )


@pytest.fixture(scope="session")
def atm_contract():
    return OptionContract(spot=100.0, strike=100.0, tau=0.5, rate=0.03)


@pytest.fixture(scope="session")
def contract_grid():
    """20 contracts: 5 strikes x 4 maturities around the money."""
    contracts = []
    for tau in (0.1, 0.25, 0.5, 1.0):
        for strike in (80.0, 90.0, 100.0, 110.0, 120.0):
            contracts.append(OptionContract(spot=100.0, strike=strike,
                                            tau=tau, rate=0.03))
    return contracts


@pytest.fixture(scope="session")
def quad():
    return QuadratureConfig()


@pytest.fixture(scope="session")
def svj_jumpy(std_heston):
    return SvjParams(heston=std_heston, lam=20.0, jump_lo=-0.05, jump_hi=0.05)


@pytest.fixture(scope="session")
def strike_axis():
    return np.linspace(60.0, 140.0, 40)
