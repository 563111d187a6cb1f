"""Black-Scholes valuation and implied-volatility extraction.

The inverter is a safeguarded Newton iteration: vega steps while they stay
inside the current bracket, bisection otherwise, on vol in
[VOL_LO, VOL_HI].  Smile curves pair a market-implied and a model-implied
volatility per quote, keyed by log-moneyness ln(K/spot).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from scipy.stats import norm

from .errors import NoSolutionError
from .market_data import quote_contract
from .pricing import CALL, intrinsic_bounds

log = logging.getLogger(__name__)

VOL_LO = 1e-4
VOL_HI = 5.0
_MAX_ITER = 100


def bs_price(c, vol):
    """Black-Scholes value of the contract at the given volatility."""
    if vol <= 0.0:
        raise ValueError("vol must be positive")
    sqrt_t = math.sqrt(c.tau)
    disc_k = c.strike * math.exp(-c.rate * c.tau)
    d1 = (math.log(c.spot / c.strike) + (c.rate + 0.5 * vol * vol) * c.tau) / (vol * sqrt_t)
    d2 = d1 - vol * sqrt_t
    call = c.spot * norm.cdf(d1) - disc_k * norm.cdf(d2)
    if c.kind == CALL:
        return call
    return call - c.spot + disc_k


def bs_vega(c, vol):
    """Price sensitivity to volatility (same for calls and puts)."""
    sqrt_t = math.sqrt(c.tau)
    d1 = (math.log(c.spot / c.strike) + (c.rate + 0.5 * vol * vol) * c.tau) / (vol * sqrt_t)
    return c.spot * norm.pdf(d1) * sqrt_t


def implied_vol(c, price):
    """Volatility whose Black-Scholes value reproduces ``price``.

    The price must lie strictly between the zero-vol limit and the
    large-vol limit of the contract; otherwise a NoSolutionError names the
    violated bound.  Converges to |price residual| < 1e-10 * spot.
    """
    lo_price, hi_price = intrinsic_bounds(c)
    if price <= lo_price:
        raise NoSolutionError(
            f"price {price:.10g} at or below the zero-volatility bound {lo_price:.10g}"
        )
    if price >= hi_price:
        raise NoSolutionError(
            f"price {price:.10g} at or above the large-volatility bound {hi_price:.10g}"
        )
    tol = 1e-10 * c.spot
    # polish well past the contract tolerance; a couple of extra Newton
    # steps buy vol accuracy even where vega is small
    target = 1e-13 * c.spot
    lo, hi = VOL_LO, VOL_HI
    f_lo = bs_price(c, lo) - price
    f_hi = bs_price(c, hi) - price
    if f_lo > 0.0:
        raise NoSolutionError(
            f"price {price:.10g} below the value at the solver floor vol={VOL_LO}"
        )
    if f_hi < 0.0:
        raise NoSolutionError(
            f"price {price:.10g} above the value at the solver cap vol={VOL_HI}"
        )
    vol = min(max(0.25, lo), hi)
    best_vol, best_diff = vol, math.inf
    for _ in range(_MAX_ITER):
        diff = bs_price(c, vol) - price
        if abs(diff) < abs(best_diff):
            best_vol, best_diff = vol, diff
        if abs(diff) < target:
            return vol
        if diff > 0.0:
            hi = vol
        else:
            lo = vol
        vega = bs_vega(c, vol)
        if vega > 1e-12:
            step = vol - diff / vega
        else:
            step = math.nan
        vol = step if lo < step < hi else 0.5 * (lo + hi)
    if abs(best_diff) < tol:
        return best_vol
    raise NoSolutionError(
        f"no convergence to |residual| < {tol:.3g} within {_MAX_ITER} iterations"
    )


@dataclass(frozen=True)
class SmilePoint:
    log_moneyness: float
    implied_vol: float
    source: str


def smile_curve(chain, pricer, q_filter=None):
    """(market, model) implied-vol pairs for every quote in the chain.

    ``pricer`` maps an OptionContract to a model price.  Quotes whose
    market or model price cannot be inverted (outside the no-arbitrage
    band, or beyond the solver's vol bounds) are collected in the second
    return value as (quote, reason) and logged, never fatal.
    """
    pairs = []
    failures = []
    for quote in chain:
        contract = quote_contract(quote)
        lm = math.log(quote.strike / quote.spot)
        try:
            market_iv = implied_vol(contract, quote.mid_price)
        except NoSolutionError as exc:
            failures.append((quote, f"market quote: {exc}"))
            log.warning("smile: skipping K=%g tau=%g (market): %s",
                        quote.strike, quote.tau, exc)
            continue
        try:
            model_iv = implied_vol(contract, pricer(contract))
        except NoSolutionError as exc:
            failures.append((quote, f"model price: {exc}"))
            log.warning("smile: skipping K=%g tau=%g (model): %s",
                        quote.strike, quote.tau, exc)
            continue
        pairs.append((SmilePoint(lm, market_iv, "market"),
                      SmilePoint(lm, model_iv, "model")))
    return pairs, failures
