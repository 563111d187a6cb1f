import math

import numpy as np
import pytest

from svolkit.implied_vol import bs_price
from svolkit.mc import (McConfig, McEstimate, riccati_numeric,
                        simulate_strike_grid, simulate_svj)
from svolkit.pricing import (HestonParams, OptionContract, SvjParams, cf_terms,
                             price_svj)


def test_fixed_seed_bit_identical(std_heston):
    c = OptionContract(spot=100.0, strike=100.0, tau=0.5, rate=0.03)
    p = SvjParams(heston=std_heston, lam=20.0, jump_lo=-0.05, jump_hi=0.05)
    config = McConfig(paths=40_000, seed=11)
    assert simulate_svj(c, p, config) == simulate_svj(c, p, config)


def test_standard_error_scaling(std_heston):
    """Quadrupling the paths should roughly halve the standard error."""
    c = OptionContract(spot=100.0, strike=100.0, tau=0.5, rate=0.03)
    p = SvjParams(heston=std_heston, lam=0.0)
    small = simulate_svj(c, p, McConfig(paths=50_000, seed=5))
    large = simulate_svj(c, p, McConfig(paths=200_000, seed=5))
    ratio = small.std_error / large.std_error
    assert 2.0 * 0.8 <= ratio <= 2.0 * 1.2


def test_deterministic_variance_limit_matches_flat_vol():
    """Vanishing vol-of-variance freezes the variance at its start, so the
    simulation must agree with the flat-vol closed form."""
    p = SvjParams(heston=HestonParams(kappa=2.0, theta=0.04, sigma=1e-6,
                                      rho=0.0, v0=0.04), lam=0.0)
    c = OptionContract(spot=100.0, strike=100.0, tau=1.0, rate=0.05)
    est = simulate_svj(c, p, McConfig(paths=400_000, seed=12))
    assert abs(est.price - bs_price(c, 0.2)) <= 3.0 * est.std_error


def test_martingale_with_jumps(std_heston):
    """The drift compensator makes the discounted spot driftless even with
    jumps switched on."""
    c = OptionContract(spot=100.0, strike=100.0, tau=0.5, rate=0.03)
    p = SvjParams(heston=std_heston, lam=30.0, jump_lo=-0.08, jump_hi=0.06)
    est = simulate_svj(c, p, McConfig(paths=400_000, seed=3), statistic="forward")
    assert abs(est.price - 100.0) <= 3.0 * est.std_error


def test_narrow_jumps_match_pure_diffusion(std_heston):
    """Jumps of vanishing size with full compensation leave the price
    distribution unchanged up to sampling noise."""
    c = OptionContract(spot=100.0, strike=100.0, tau=0.5, rate=0.03)
    plain = simulate_svj(c, SvjParams(heston=std_heston, lam=0.0),
                         McConfig(paths=200_000, seed=8))
    narrow = simulate_svj(c, SvjParams(heston=std_heston, lam=5.0,
                                       jump_lo=-1e-5, jump_hi=1e-5),
                          McConfig(paths=200_000, seed=9))
    joint = math.hypot(plain.std_error, narrow.std_error)
    assert abs(plain.price - narrow.price) <= 3.0 * joint


def test_price_consistency_with_analytic(svj_jumpy):
    c = OptionContract(spot=100.0, strike=105.0, tau=0.5, rate=0.03)
    est = simulate_svj(c, svj_jumpy, McConfig(paths=300_000, steps_per_year=500,
                                              seed=17))
    assert abs(est.price - price_svj(c, svj_jumpy)) <= 3.0 * est.std_error


def test_put_simulation(std_heston):
    c = OptionContract(spot=100.0, strike=105.0, tau=0.5, rate=0.03, kind="P")
    p = SvjParams(heston=std_heston, lam=0.0)
    est = simulate_svj(c, p, McConfig(paths=300_000, seed=19))
    assert abs(est.price - price_svj(c, p)) <= 3.0 * est.std_error


def test_antithetic_reduces_error(std_heston):
    c = OptionContract(spot=100.0, strike=100.0, tau=0.5, rate=0.03)
    p = SvjParams(heston=std_heston, lam=0.0)
    plain = simulate_svj(c, p, McConfig(paths=100_000, seed=4))
    anti = simulate_svj(c, p, McConfig(paths=100_000, seed=4, antithetic=True))
    assert anti.std_error < plain.std_error
    assert anti.paths == 50_000  # per-pair averages


def test_strike_grid_shares_paths(std_heston):
    strikes = [90.0, 100.0, 110.0]
    grid = simulate_strike_grid(100.0, strikes, 0.5, 0.03,
                                SvjParams(heston=std_heston, lam=0.0),
                                McConfig(paths=50_000, seed=2))
    singles = [simulate_svj(OptionContract(100.0, k, 0.5, 0.03),
                            SvjParams(heston=std_heston, lam=0.0),
                            McConfig(paths=50_000, seed=2)) for k in strikes]
    for a, b in zip(grid, singles):
        assert a == b  # same streams, same estimates


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(paths=10)
    with pytest.raises(ValueError):
        McConfig(steps_per_year=10)
    with pytest.raises(ValueError):
        simulate_strike_grid(100.0, [100.0], 0.5, 0.03, None, McConfig(),
                             statistic="median")


# ---------------------------------------------------------------------------
# Riccati cross-check
# ---------------------------------------------------------------------------

def test_riccati_zero_horizon(std_heston):
    assert riccati_numeric(1, 1.0, 0.0, std_heston) == (0.0, 0.0)


def test_riccati_matches_closed_form(std_heston):
    a1_ode, a2_ode = riccati_numeric(1, 1.0, 0.5, std_heston)
    terms = cf_terms(1, 1.0, 0.5, std_heston)
    assert abs(a1_ode - terms.a1prime) < 1e-8
    assert abs(a2_ode - terms.a2) < 1e-8


def test_riccati_long_maturity_stress(std_heston):
    """Long maturity and high frequency is where a branch-cut mistake in
    the closed form would show up."""
    for j in (1, 2):
        a1_ode, a2_ode = riccati_numeric(j, 50.0, 5.0, std_heston)
        terms = cf_terms(j, 50.0, 5.0, std_heston)
        assert abs(a1_ode - terms.a1prime) < 1e-7
        assert abs(a2_ode - terms.a2) < 1e-7


def test_estimate_fields():
    est = McEstimate(price=1.0, std_error=0.1, paths=1000)
    assert est.paths == 1000
