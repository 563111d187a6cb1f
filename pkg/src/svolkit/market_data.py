"""Option-chain ingestion, windowing and synthetic-chain generation.

Chain files are plain CSV with a header:

    quote_date, expiry_date, spot, strike, kind, mid_price[, rate]

Dates are ISO-8601, decimals use '.', kind is C or P.  The per-row rate
column is optional; a flat default can be supplied instead.  Maturities
are year fractions on ACT/365.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ChainSchemaError, EmptyChainError
from . import pricers

log = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.0
REQUIRED_COLUMNS = ("quote_date", "expiry_date", "spot", "strike", "kind", "mid_price")


@dataclass(frozen=True)
class OptionQuote:
    quote_date: dt.date
    expiry_date: dt.date
    tau: float
    strike: float
    spot: float
    mid_price: float
    kind: str
    rate: float

    def __post_init__(self):
        if self.mid_price <= 0.0:
            raise ValueError("mid_price must be positive")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.strike <= 0.0 or self.spot <= 0.0:
            raise ValueError("strike and spot must be positive")
        if self.kind not in ("C", "P"):
            raise ValueError(f"kind must be C or P, got {self.kind!r}")


@dataclass(frozen=True)
class OptionChain:
    quotes: tuple
    provenance: str = "market"
    seed: int | None = None

    def __len__(self):
        return len(self.quotes)

    def __iter__(self):
        return iter(self.quotes)

    def by_expiry(self):
        """Quotes grouped by expiry date, insertion-ordered within groups."""
        groups: dict[dt.date, list[OptionQuote]] = {}
        for quote in self.quotes:
            groups.setdefault(quote.expiry_date, []).append(quote)
        return dict(sorted(groups.items()))


def quote_contract(quote):
    """The pricing contract for one quote."""
    from .pricing import OptionContract

    return OptionContract(spot=quote.spot, strike=quote.strike, tau=quote.tau,
                          rate=quote.rate, kind=quote.kind)


def load_chain(path, default_rate=None):
    """Parse a chain CSV; malformed rows are skipped with a logged warning.

    Raises ChainSchemaError if a required column is missing and
    EmptyChainError if no row survives.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in REQUIRED_COLUMNS:
            if column not in header:
                raise ChainSchemaError(f"missing required column {column!r} in {path}")
        quotes = []
        for lineno, row in enumerate(reader, start=2):
            try:
                quotes.append(_parse_row(row, default_rate))
            except (ValueError, KeyError) as exc:
                log.warning("%s:%d skipped: %s", path, lineno, exc)
    if not quotes:
        raise EmptyChainError(f"no valid quotes in {path}")
    return OptionChain(quotes=tuple(quotes), provenance="market")


def _parse_row(row, default_rate):
    quote_date = dt.date.fromisoformat(row["quote_date"].strip())
    expiry_date = dt.date.fromisoformat(row["expiry_date"].strip())
    days = (expiry_date - quote_date).days
    if days <= 0:
        raise ValueError(f"expiry {expiry_date} not after quote date {quote_date}")
    rate_text = (row.get("rate") or "").strip()
    if rate_text:
        rate = float(rate_text)
    elif default_rate is not None:
        rate = float(default_rate)
    else:
        raise ValueError("no rate column value and no default rate supplied")
    return OptionQuote(
        quote_date=quote_date,
        expiry_date=expiry_date,
        tau=days / DAYS_PER_YEAR,
        strike=float(row["strike"]),
        spot=float(row["spot"]),
        mid_price=float(row["mid_price"]),
        kind=row["kind"].strip().upper(),
        rate=rate,
    )


def save_chain(chain, path):
    """Write a chain in the load_chain format; floats use their shortest
    exact decimal form so a save/load cycle is bit-identical."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(REQUIRED_COLUMNS) + ["rate"])
        for quote in chain:
            writer.writerow([
                quote.quote_date.isoformat(),
                quote.expiry_date.isoformat(),
                repr(quote.spot),
                repr(quote.strike),
                quote.kind,
                repr(quote.mid_price),
                repr(quote.rate),
            ])


def filter_chain(chain, moneyness_lo=0.75, moneyness_hi=1.25,
                 tau_lo_days=30.0, tau_hi_days=180.0):
    """Retain quotes inside the moneyness and maturity window, both ends
    inclusive; maturities compare in calendar days."""
    if moneyness_lo > moneyness_hi or tau_lo_days > tau_hi_days:
        raise ValueError("filter bounds must be ordered")
    eps = 1e-9
    kept = []
    for quote in chain:
        moneyness = quote.strike / quote.spot
        days = quote.tau * DAYS_PER_YEAR
        if (moneyness_lo - eps <= moneyness <= moneyness_hi + eps
                and tau_lo_days - eps <= days <= tau_hi_days + eps):
            kept.append(quote)
    if not kept:
        log.warning("filter removed every quote (window %.4g-%.4g, %g-%g days)",
                    moneyness_lo, moneyness_hi, tau_lo_days, tau_hi_days)
    return replace(chain, quotes=tuple(kept))


def synth_chain(model, params, strikes, maturities, spot, rate,
                noise_sd=0.0, seed=0, quote_date=dt.date(2024, 1, 2),
                q=None, nq=None):
    """Model-generated chain over a strike x maturity grid.

    Maturities (year fractions) are snapped to whole calendar days so that
    the stored dates reproduce tau exactly on reload.  Optional zero-mean
    Gaussian noise (standard deviation in price units) is added to every
    price; quotes whose noisy price is not positive are dropped with a
    warning.
    """
    if noise_sd < 0.0:
        raise ValueError("noise_sd must be non-negative")
    strikes = np.asarray(strikes, dtype=float)
    rng = np.random.default_rng(seed)
    quotes = []
    for tau in maturities:
        days = max(1, round(float(tau) * DAYS_PER_YEAR))
        snapped = days / DAYS_PER_YEAR
        prices = pricers.call_values(model, params, spot, strikes, snapped, rate,
                                     q=q, nq=nq)
        noise = rng.normal(0.0, noise_sd, size=strikes.size) if noise_sd > 0.0 \
            else np.zeros(strikes.size)
        for strike, price, eps in zip(strikes, prices, noise):
            mid = float(price + eps)
            if mid <= 0.0:
                log.warning("dropping synthetic quote K=%g tau=%g: noisy price %g <= 0",
                            strike, snapped, mid)
                continue
            quotes.append(OptionQuote(
                quote_date=quote_date,
                expiry_date=quote_date + dt.timedelta(days=days),
                tau=snapped,
                strike=float(strike),
                spot=float(spot),
                mid_price=mid,
                kind="C",
                rate=float(rate),
            ))
    if not quotes:
        raise EmptyChainError("synthetic generation produced no quotes")
    return OptionChain(quotes=tuple(quotes), provenance="synthetic", seed=seed)
