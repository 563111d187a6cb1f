"""Model dispatch: batched pricing for any of the three model families.

Keeps the per-model plumbing (which params type, which batch routine) in
one place for the calibration, chain-generation and CLI layers.
"""

from __future__ import annotations

import math

import numpy as np

from . import msv, pricing

MODELS = ("heston", "svj", "msv")


def call_values(model, params, spot, strikes, tau, rate, q=None, nq=None):
    """Call prices for an array of strikes sharing (spot, tau, rate)."""
    strikes = np.asarray(strikes, dtype=float)
    if model == "heston":
        return pricing.call_prices_batch(
            spot, strikes, tau, rate, pricing.SvjParams(heston=params), q)
    if model == "svj":
        return pricing.call_prices_batch(spot, strikes, tau, rate, params, q)
    if model == "msv":
        base = pricing.call_prices_batch(
            spot, strikes, tau, rate, pricing.SvjParams(heston=params.heston), q)
        basis = msv.correction_basis_batch(spot, strikes, tau, rate,
                                           params.heston, q, nq)
        return base + params.coeffs @ basis
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def contract_value(model, params, contract, q=None, nq=None):
    """Price one contract under the selected model (puts via parity)."""
    call = float(call_values(model, params, contract.spot,
                             np.array([contract.strike]), contract.tau,
                             contract.rate, q=q, nq=nq)[0])
    if contract.kind == pricing.PUT:
        return call - contract.spot + contract.strike * math.exp(
            -contract.rate * contract.tau)
    return call


def chain_values(model, params, chain, q=None, nq=None):
    """Model prices aligned with the chain's quote order.

    Quotes are grouped by (tau, rate, spot) so each maturity slice costs a
    single pair of inversions.
    """
    prices = np.empty(len(chain))
    groups: dict[tuple, list[int]] = {}
    quotes = list(chain)
    for idx, quote in enumerate(quotes):
        groups.setdefault((quote.tau, quote.rate, quote.spot), []).append(idx)
    for (tau, rate, spot), indices in groups.items():
        strikes = np.array([quotes[i].strike for i in indices])
        calls = call_values(model, params, spot, strikes, tau, rate, q=q, nq=nq)
        disc_k = strikes * math.exp(-rate * tau)
        for pos, idx in enumerate(indices):
            value = calls[pos]
            if quotes[idx].kind == pricing.PUT:
                value = value - spot + disc_k[pos]
            prices[idx] = value
    return prices
