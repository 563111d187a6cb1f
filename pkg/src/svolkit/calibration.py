"""Bounded non-linear least-squares calibration and error reporting.

The mean-reversion rate is reparameterised as zeta = kappa - sigma^2/(2
theta) with zeta >= 0, which turns the variance-positivity condition into
a plain box constraint: every iterate the optimizer visits corresponds to
a valid parameter set.  Calibration is staged: the plain model first, then
the jump and correction extensions warm-started from its optimum with
their documented initial iterates and boxes.

The objective is the unweighted sum of squared price residuals pooled
over every quote in the chain; fit quality is reported per maturity as
the mean relative error of model prices against market prices.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from . import msv as msv_mod
from . import pricing
from .errors import (CalibrationError, EmptyChainError, NumericalDomainError,
                     QuadratureError)
from .market_data import DAYS_PER_YEAR

log = logging.getLogger(__name__)

HESTON, SVJ, MSV = "heston", "svj", "msv"

_HESTON_NAMES = ("zeta", "rho", "sigma", "theta", "v0")
PARAM_NAMES = {
    HESTON: _HESTON_NAMES,
    SVJ: _HESTON_NAMES + ("lambda", "m", "n"),
    MSV: _HESTON_NAMES + ("v1", "v2", "v3", "v4"),
}

_HESTON_LOWER = (0.0, -0.999, 1e-3, 1e-4, 1e-4)
_HESTON_UPPER = (20.0, 0.999, 2.0, 1.0, 1.0)
_HESTON_INIT = (1.0, -0.5, 0.3, 0.04, 0.04)
_SVJ_TAIL_LOWER = (1.0, -1.0, 0.0)
_SVJ_TAIL_UPPER = (100.0, 0.0, 1.0)
_SVJ_TAIL_INIT = (50.0, -0.01, 0.01)
_MSV_TAIL_LOWER = (-0.05,) * 4
_MSV_TAIL_UPPER = (0.05,) * 4
_MSV_TAIL_INIT = (1e-4, 0.0, 0.0, 0.0)

# forward-difference step: relative 1e-6, floored at 1e-8 absolute
_FD_REL = 1e-6
_FD_ABS = 1e-8
_TOL = 1e-10
_MAX_ITER = 400


def zeta_to_kappa(zeta, sigma, theta):
    """Mean-reversion rate from the positivity-margin parameter.

    kappa = zeta + sigma^2/(2 theta); any zeta >= 0 satisfies
    2 kappa theta >= sigma^2, with equality exactly at zeta = 0.
    """
    if zeta < 0.0:
        raise ValueError(f"zeta must be non-negative, got {zeta}")
    if sigma <= 0.0 or theta <= 0.0:
        raise ValueError("sigma and theta must be positive")
    return zeta + sigma * sigma / (2.0 * theta)


def kappa_to_zeta(kappa, sigma, theta):
    """Inverse of zeta_to_kappa (may be negative if positivity fails)."""
    return kappa - sigma * sigma / (2.0 * theta)


def _values_to_params(model, values):
    """Model parameter record for an ordered calibration vector."""
    zeta, rho, sigma, theta, v0 = values[:5]
    hp = pricing.HestonParams(kappa=zeta_to_kappa(zeta, sigma, theta),
                              theta=theta, sigma=sigma, rho=rho, v0=v0)
    if model == HESTON:
        return hp
    if model == SVJ:
        lam, lo, hi = values[5:]
        # the optimizer may park both mark bounds on the shared edge 0;
        # keep the interval non-degenerate without moving it measurably
        return pricing.SvjParams(heston=hp, lam=lam,
                                 jump_lo=min(lo, -1e-10),
                                 jump_hi=max(hi, 1e-10))
    if model == MSV:
        return msv_mod.MsvParams(hp, *values[5:])
    raise ValueError(f"unknown model {model!r}")


@dataclass
class ParamVector:
    """Ordered calibration variables with their box for one model family."""

    model: str
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        names = PARAM_NAMES.get(self.model)
        if names is None:
            raise ValueError(f"unknown model {self.model!r}")
        self.values = np.asarray(self.values, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not (self.values.size == self.lower.size == self.upper.size == len(names)):
            raise ValueError(f"{self.model} expects {len(names)} components")

    @property
    def names(self):
        return PARAM_NAMES[self.model]

    def within_bounds(self):
        return bool(np.all(self.values >= self.lower - 1e-12)
                    and np.all(self.values <= self.upper + 1e-12))

    @classmethod
    def default_init(cls, model):
        values, lower, upper = list(_HESTON_INIT), list(_HESTON_LOWER), list(_HESTON_UPPER)
        if model == SVJ:
            values += _SVJ_TAIL_INIT
            lower += _SVJ_TAIL_LOWER
            upper += _SVJ_TAIL_UPPER
        elif model == MSV:
            values += _MSV_TAIL_INIT
            lower += _MSV_TAIL_LOWER
            upper += _MSV_TAIL_UPPER
        elif model != HESTON:
            raise ValueError(f"unknown model {model!r}")
        return cls(model, np.array(values), np.array(lower), np.array(upper))

    @classmethod
    def warm_start(cls, model, heston_values):
        """Extension-stage initial iterate seeded by a calibrated base set."""
        init = cls.default_init(model)
        init.values[:5] = np.asarray(heston_values, dtype=float)
        return init

    def to_model_params(self):
        return _values_to_params(self.model, self.values)

    @property
    def kappa(self):
        zeta, _, sigma, theta, _ = self.values[:5]
        return zeta_to_kappa(zeta, sigma, theta)

    def as_dict(self):
        out = dict(zip(self.names, (float(v) for v in self.values)))
        out["kappa"] = float(self.kappa)
        return out


@dataclass
class CalibrationResult:
    params: ParamVector
    objective: float
    residuals: np.ndarray
    iterations: int
    converged: bool

    @property
    def kappa(self):
        return self.params.kappa


class _ChainResiduals:
    """Residual vector, objective and forward-difference Jacobian for one
    (model, chain) pair.

    Quotes are grouped by (tau, rate, spot) so one maturity costs a single
    batched inversion.  For the corrected model the expensive nested
    integrals depend only on the base parameters, so the four
    per-coefficient correction components are cached per base point and
    coefficient-only steps (e.g. Jacobian columns for v1..v4) are nearly
    free.
    """

    def __init__(self, model, chain, q=None, nq=None):
        if len(chain) == 0:
            raise EmptyChainError("cannot calibrate against an empty chain")
        self.model = model
        self.q = q or pricing.QuadratureConfig()
        self.nq = nq or msv_mod.NestedQuadConfig()
        quotes = list(chain)
        self.market = np.array([quote.mid_price for quote in quotes])
        self.n_quotes = len(quotes)
        groups: dict[tuple, list[int]] = {}
        for idx, quote in enumerate(quotes):
            groups.setdefault((quote.tau, quote.rate, quote.spot), []).append(idx)
        self.groups = []
        for (tau, rate, spot), indices in groups.items():
            strikes = np.array([quotes[i].strike for i in indices])
            puts = np.array([quotes[i].kind == pricing.PUT for i in indices])
            self.groups.append((tau, rate, spot, strikes, puts, np.array(indices)))
        self.quotes = quotes
        self._price_cache: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self._msv_cache: OrderedDict[tuple, list] = OrderedDict()

    def _cached(self, cache, key, build):
        if key not in cache:
            cache[key] = build()
            while len(cache) > 16:
                cache.popitem(last=False)
        else:
            cache.move_to_end(key)
        return cache[key]

    def _group_calls(self, params, tau, rate, spot, strikes):
        if self.model == MSV:
            hp = params.heston
            base_key = (hp.kappa, hp.theta, hp.sigma, hp.rho, hp.v0,
                        tau, rate, spot, strikes.tobytes())
            c0, basis = self._cached(
                self._msv_cache, base_key,
                lambda: (
                    pricing.call_prices_batch(spot, strikes, tau, rate,
                                              pricing.SvjParams(heston=hp), self.q),
                    msv_mod.correction_basis_batch(spot, strikes, tau, rate,
                                                   hp, self.q, self.nq),
                ),
            )
            return c0 + params.coeffs @ basis
        svj_params = params if self.model == SVJ else pricing.SvjParams(heston=params)
        return pricing.call_prices_batch(spot, strikes, tau, rate, svj_params, self.q)

    def prices(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key in self._price_cache:
            self._price_cache.move_to_end(key)
            return self._price_cache[key]
        params = _values_to_params(self.model, np.asarray(x, dtype=float))
        out = np.empty(self.n_quotes)
        for tau, rate, spot, strikes, puts, indices in self.groups:
            try:
                calls = self._group_calls(params, tau, rate, spot, strikes)
            except (QuadratureError, NumericalDomainError) as exc:
                worst = self.quotes[indices[0]]
                raise CalibrationError(
                    f"pricing failed for quotes at tau={tau:g} "
                    f"(e.g. strike={worst.strike:g}): {exc}"
                ) from exc
            values = np.where(
                puts, calls - spot + strikes * np.exp(-rate * tau), calls)
            out[indices] = values
        self._price_cache[key] = out
        while len(self._price_cache) > 32:
            self._price_cache.popitem(last=False)
        return out

    def residuals(self, x):
        return self.prices(x) - self.market

    def objective(self, x):
        r = self.residuals(x)
        return float(r @ r)

    def jacobian_factory(self, lower, upper):
        def jac(x):
            x = np.asarray(x, dtype=float)
            f0 = self.residuals(x)
            out = np.empty((f0.size, x.size))
            for i in range(x.size):
                h = max(_FD_REL * abs(x[i]), _FD_ABS)
                if x[i] + h > upper[i]:
                    h = -h
                stepped = x.copy()
                stepped[i] += h
                out[:, i] = (self.residuals(stepped) - f0) / h
            return out

        return jac


def residuals(model, params, chain, q=None, nq=None):
    """Per-quote price residuals (model minus market) at a parameter vector."""
    return _ChainResiduals(model, chain, q, nq).residuals(params.values)


def objective(model, params, chain, q=None, nq=None):
    """Sum of squared price residuals pooled over every quote."""
    if not params.within_bounds():
        raise ValueError("parameter vector outside its box")
    return _ChainResiduals(model, chain, q, nq).objective(params.values)


def calibrate(model, chain, init=None, q=None, nq=None, max_iterations=_MAX_ITER):
    """Box-constrained trust-region least squares from the given iterate.

    The Jacobian uses forward differences with relative step 1e-6 floored
    at 1e-8 (stepping backwards at an active upper bound).  Returns the
    best iterate found with converged=False when the iteration budget is
    exhausted rather than raising.
    """
    init = init or ParamVector.default_init(model)
    if not init.within_bounds():
        raise ValueError("initial iterate outside its box")
    fn = _ChainResiduals(model, chain, q, nq)
    init_objective = fn.objective(init.values)
    result = least_squares(
        fn.residuals,
        init.values,
        jac=fn.jacobian_factory(init.lower, init.upper),
        bounds=(init.lower, init.upper),
        method="trf",
        ftol=_TOL,
        xtol=_TOL,
        gtol=_TOL,
        max_nfev=max_iterations,
    )
    final_objective = fn.objective(result.x)
    values = result.x
    converged = bool(result.status > 0)
    if final_objective > init_objective:
        # trust-region steps are monotone; guard against pathological exits
        log.warning("calibration ended above its start (%.3e > %.3e); keeping init",
                    final_objective, init_objective)
        values, final_objective, converged = init.values, init_objective, False
    optimum = ParamVector(model, values, init.lower, init.upper)
    return CalibrationResult(
        params=optimum,
        objective=final_objective,
        residuals=fn.residuals(values),
        iterations=int(result.njev or 0),
        converged=converged,
    )


@dataclass
class StagedCalibration:
    heston: CalibrationResult
    svj: CalibrationResult
    msv: CalibrationResult

    def __iter__(self):
        yield HESTON, self.heston
        yield SVJ, self.svj
        yield MSV, self.msv


def staged_calibrate(chain, q=None, nq=None, init=None, max_iterations=_MAX_ITER):
    """Calibrate the base model, then both extensions warm-started from its
    optimum (best-so-far even when the base stage did not converge)."""
    base = calibrate(HESTON, chain, init or ParamVector.default_init(HESTON),
                     q, nq, max_iterations)
    if not base.converged:
        log.warning("base stage did not converge; extensions start from best-so-far")
    seed = base.params.values
    svj = calibrate(SVJ, chain, ParamVector.warm_start(SVJ, seed), q, nq,
                    max_iterations)
    msv = calibrate(MSV, chain, ParamVector.warm_start(MSV, seed), q, nq,
                    max_iterations)
    return StagedCalibration(heston=base, svj=svj, msv=msv)


@dataclass(frozen=True)
class MreBucket:
    expiry: object
    tau_days: float
    value: float
    count: int


@dataclass(frozen=True)
class MreReport:
    buckets: tuple

    def as_rows(self):
        return [(b.expiry, b.tau_days, b.value, b.count) for b in self.buckets]


def mre(model_prices, chain, expiry):
    """Mean relative price error over the quotes expiring on ``expiry``.

    Quotes without a positive market price are excluded with a warning.
    """
    model_prices = np.asarray(model_prices, dtype=float)
    if model_prices.size != len(chain):
        raise ValueError("model_prices must align with the chain quotes")
    errors = []
    for price, quote in zip(model_prices, chain):
        if quote.expiry_date != expiry:
            continue
        if quote.mid_price <= 0.0:
            log.warning("mre: excluding quote K=%g with non-positive market price",
                        quote.strike)
            continue
        errors.append(abs(price - quote.mid_price) / quote.mid_price)
    if not errors:
        raise EmptyChainError(f"no usable quotes expiring {expiry}")
    return float(np.mean(errors))


def mre_report(model_prices, chain):
    """Per-expiry mean relative errors, one bucket per expiry date."""
    buckets = []
    for expiry, quotes in chain.by_expiry().items():
        try:
            value = mre(model_prices, chain, expiry)
        except EmptyChainError:
            log.warning("mre: bucket %s skipped (no usable quotes)", expiry)
            continue
        tau_days = round(quotes[0].tau * DAYS_PER_YEAR)
        buckets.append(MreBucket(expiry=expiry, tau_days=tau_days,
                                 value=value, count=len(quotes)))
    return MreReport(buckets=tuple(buckets))
