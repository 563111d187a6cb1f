import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svolkit import pricers
from svolkit.calibration import (HESTON, MSV, SVJ, CalibrationResult,
                                 MreReport, ParamVector, calibrate,
                                 kappa_to_zeta, mre, mre_report, objective,
                                 residuals, staged_calibrate, zeta_to_kappa)
from svolkit.errors import EmptyChainError
from svolkit.market_data import OptionChain, OptionQuote, synth_chain
from svolkit.pricing import HestonParams


def _small_chain(std_heston, n_strikes=5, maturities=(61, 135)):
    return synth_chain("heston", std_heston,
                       np.linspace(85.0, 115.0, n_strikes),
                       [d / 365.0 for d in maturities], spot=100.0, rate=0.03)


def _truth_vector(model=HESTON):
    vec = ParamVector.default_init(model)
    vec.values[:5] = [kappa_to_zeta(2.0, 0.3, 0.04), -0.7, 0.3, 0.04, 0.04]
    return vec


# ---------------------------------------------------------------------------
# reparameterisation
# ---------------------------------------------------------------------------

def test_zeta_boundary_hits_positivity_exactly():
    kappa = zeta_to_kappa(0.0, 0.4, 0.04)
    assert kappa == pytest.approx(2.0)
    assert 2.0 * kappa * 0.04 == pytest.approx(0.16)


def test_zeta_interior():
    assert zeta_to_kappa(1.0, 0.3, 0.04) == pytest.approx(2.125)


def test_zeta_rejects_negative():
    with pytest.raises(ValueError):
        zeta_to_kappa(-0.1, 0.3, 0.04)


@settings(max_examples=50, deadline=None)
@given(zeta=st.floats(0.0, 20.0), sigma=st.floats(0.01, 2.0),
       theta=st.floats(1e-3, 1.0))
def test_zeta_kappa_round_trip(zeta, sigma, theta):
    kappa = zeta_to_kappa(zeta, sigma, theta)
    assert kappa_to_zeta(kappa, sigma, theta) == pytest.approx(zeta, abs=1e-12)
    assert 2.0 * kappa * theta >= sigma ** 2 * (1.0 - 1e-12)


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def test_objective_zero_on_own_chain(std_heston):
    chain = _small_chain(std_heston)
    value = objective(HESTON, _truth_vector(), chain)
    scale = sum(q.mid_price ** 2 for q in chain)
    assert value <= 1e-12 * scale


def test_objective_single_quote_arithmetic(std_heston):
    chain = _small_chain(std_heston, n_strikes=1, maturities=(91,))
    quote = chain.quotes[0]
    shifted = OptionChain(quotes=(
        OptionQuote(quote_date=quote.quote_date, expiry_date=quote.expiry_date,
                    tau=quote.tau, strike=quote.strike, spot=quote.spot,
                    mid_price=quote.mid_price + 1.0, kind=quote.kind,
                    rate=quote.rate),))
    assert objective(HESTON, _truth_vector(), shifted) == pytest.approx(1.0,
                                                                        abs=1e-9)


def test_objective_decreases_as_perturbation_shrinks(std_heston):
    chain = _small_chain(std_heston)
    values = []
    for bump in (1.10, 1.05, 1.01):
        vec = _truth_vector()
        vec.values[3] *= bump  # long-run variance
        values.append(objective(HESTON, vec, chain))
    assert values[0] > values[1] > values[2] > 0.0


def test_objective_rejects_out_of_box(std_heston):
    chain = _small_chain(std_heston, n_strikes=2, maturities=(91,))
    vec = _truth_vector()
    vec.values[0] = -1.0
    with pytest.raises(ValueError):
        objective(HESTON, vec, chain)


def test_residuals_exposed(std_heston):
    chain = _small_chain(std_heston)
    r = residuals(HESTON, _truth_vector(), chain)
    assert r.shape == (len(chain),)
    assert np.max(np.abs(r)) < 1e-7


def test_empty_chain_rejected():
    with pytest.raises(EmptyChainError):
        objective(HESTON, _truth_vector(), OptionChain(quotes=()))


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def test_calibrate_fixed_point(std_heston):
    chain = _small_chain(std_heston)
    init = _truth_vector()
    init_objective = objective(HESTON, init, chain)
    result = calibrate(HESTON, chain, init)
    assert result.objective <= init_objective + 1e-15
    assert result.objective < 1e-12
    assert result.iterations <= 5
    assert result.converged


def test_calibrate_recovers_prices_from_perturbed_init(std_heston):
    chain = _small_chain(std_heston)
    init = _truth_vector()
    init.values[:5] = init.values[:5] * np.array([1.2, 0.8, 1.2, 0.8, 1.2])
    result = calibrate(HESTON, chain, init)
    market = np.array([q.mid_price for q in chain])
    model = market + result.residuals
    assert result.converged
    n = len(chain)
    assert result.objective < 1e-6 * np.mean(market) ** 2 * n
    assert np.max(np.abs(model - market) / market) < 1e-3


def test_calibrate_respects_bounds(std_heston):
    chain = _small_chain(std_heston, n_strikes=3, maturities=(91,))
    result = calibrate(HESTON, chain)
    assert result.params.within_bounds()
    assert 2.0 * result.kappa * result.params.values[3] >= \
        result.params.values[2] ** 2 * (1.0 - 1e-12)


def test_calibrate_iteration_budget(std_heston):
    chain = _small_chain(std_heston, n_strikes=3, maturities=(91,))
    init = _truth_vector()
    init.values[:5] = init.values[:5] * np.array([1.3, 0.7, 1.3, 0.7, 1.3])
    result = calibrate(HESTON, chain, init, max_iterations=2)
    assert not result.converged
    assert result.objective >= 0.0


# ---------------------------------------------------------------------------
# staged calibration
# ---------------------------------------------------------------------------

def test_staged_on_base_model_chain(std_heston):
    """On a pure-diffusion chain both extensions end up nested: the jump
    stage collapses its marks and the correction stage keeps coefficients
    near zero, with objectives comparable to the base fit.

    The chain carries more quotes than the largest stage has parameters;
    an underdetermined stage would wander for its whole iteration budget.
    """
    chain = _small_chain(std_heston, n_strikes=5, maturities=(61, 98, 135))
    staged = staged_calibrate(chain)
    assert staged.heston.objective < 1e-10
    market = np.array([q.mid_price for q in chain])
    for name, result in staged:
        model = market + result.residuals
        assert np.max(np.abs(model - market) / market) < 1e-3, name
    assert np.max(np.abs(staged.msv.params.values[5:])) < 1e-3
    svj_values = dict(zip(staged.svj.params.names, staged.svj.params.values))
    assert svj_values["n"] - svj_values["m"] < 0.01


def test_staged_warm_start_values(std_heston):
    vec = ParamVector.warm_start(SVJ, np.array([0.9, -0.6, 0.25, 0.05, 0.03]))
    assert list(vec.values[:5]) == [0.9, -0.6, 0.25, 0.05, 0.03]
    assert list(vec.values[5:]) == [50.0, -0.01, 0.01]
    assert list(vec.lower[5:]) == [1.0, -1.0, 0.0]
    assert list(vec.upper[5:]) == [100.0, 0.0, 1.0]
    msv_vec = ParamVector.warm_start(MSV, np.array([0.9, -0.6, 0.25, 0.05, 0.03]))
    assert list(msv_vec.values[5:]) == [1e-4, 0.0, 0.0, 0.0]
    assert list(msv_vec.lower[5:]) == [-0.05] * 4
    assert list(msv_vec.upper[5:]) == [0.05] * 4


def test_param_vector_kappa_and_dict():
    vec = _truth_vector()
    assert vec.kappa == pytest.approx(2.0)
    d = vec.as_dict()
    assert d["kappa"] == pytest.approx(2.0)
    assert set(d) == {"zeta", "rho", "sigma", "theta", "v0", "kappa"}


def test_param_vector_validation():
    with pytest.raises(ValueError):
        ParamVector.default_init("unknown")
    with pytest.raises(ValueError):
        ParamVector(HESTON, np.zeros(3), np.zeros(3), np.zeros(3))


# ---------------------------------------------------------------------------
# mean relative error
# ---------------------------------------------------------------------------

def _two_quote_chain():
    start = dt.date(2024, 1, 2)
    expiry = start + dt.timedelta(days=91)
    quotes = (
        OptionQuote(quote_date=start, expiry_date=expiry, tau=91 / 365.0,
                    strike=95.0, spot=100.0, mid_price=10.0, kind="C", rate=0.03),
        OptionQuote(quote_date=start, expiry_date=expiry, tau=91 / 365.0,
                    strike=105.0, spot=100.0, mid_price=20.0, kind="C", rate=0.03),
    )
    return OptionChain(quotes=quotes), expiry


def test_mre_exact_match_is_zero():
    chain, expiry = _two_quote_chain()
    assert mre(np.array([10.0, 20.0]), chain, expiry) == 0.0


def test_mre_two_quote_arithmetic():
    chain, expiry = _two_quote_chain()
    assert mre(np.array([9.0, 22.0]), chain, expiry) == pytest.approx(0.1)


def test_mre_permutation_and_scale_invariance():
    chain, expiry = _two_quote_chain()
    base = mre(np.array([9.0, 22.0]), chain, expiry)
    swapped_quotes = (chain.quotes[1], chain.quotes[0])
    swapped = OptionChain(quotes=swapped_quotes)
    assert mre(np.array([22.0, 9.0]), swapped, expiry) == pytest.approx(base)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(1e-3, 1e3))
def test_mre_scale_invariance(scale):
    chain, expiry = _two_quote_chain()
    scaled_quotes = tuple(
        OptionQuote(quote_date=q.quote_date, expiry_date=q.expiry_date,
                    tau=q.tau, strike=q.strike, spot=q.spot,
                    mid_price=q.mid_price * scale, kind=q.kind, rate=q.rate)
        for q in chain.quotes)
    scaled = OptionChain(quotes=scaled_quotes)
    value = mre(np.array([9.0 * scale, 22.0 * scale]), scaled, expiry)
    assert value == pytest.approx(0.1, rel=1e-9)


def test_mre_unknown_bucket_rejected():
    chain, _ = _two_quote_chain()
    with pytest.raises(EmptyChainError):
        mre(np.array([9.0, 22.0]), chain, dt.date(2030, 1, 1))


def test_mre_report_structure(std_heston):
    chain = _small_chain(std_heston, n_strikes=3, maturities=(30, 91, 180))
    prices = pricers.chain_values("heston", std_heston, chain)
    report = mre_report(prices, chain)
    assert isinstance(report, MreReport)
    assert [b.tau_days for b in report.buckets] == [30, 91, 180]
    assert all(b.count == 3 for b in report.buckets)
    assert all(b.value < 1e-10 for b in report.buckets)


def test_noise_floor_sets_objective_scale(std_heston):
    """With additive Gaussian noise of known size, the objective at the
    generating parameters is the realised noise energy, close to
    n * noise_sd^2."""
    noise_sd = 0.05
    chain = synth_chain("heston", std_heston, np.linspace(85, 115, 10),
                        [61 / 365.0, 135 / 365.0], spot=100.0, rate=0.03,
                        noise_sd=noise_sd, seed=123)
    value = objective(HESTON, _truth_vector(), chain)
    expected = len(chain) * noise_sd ** 2
    assert 0.4 * expected <= value <= 2.5 * expected


def test_calibration_result_fields(std_heston):
    chain = _small_chain(std_heston, n_strikes=2, maturities=(91,))
    result = calibrate(HESTON, chain, _truth_vector())
    assert isinstance(result, CalibrationResult)
    assert result.residuals.shape == (2,)
    assert result.kappa > 0.0
