"""Semi-closed-form European option pricing under square-root stochastic
variance, with and without log-uniform price jumps.

Calls are valued as ``spot * P1 - strike * e^{-r tau} * P2`` where each
exercise probability P_j comes from the half-plus-integral Fourier
inversion of a characteristic function.  The exponent terms are evaluated
in the ``e^{-d tau}`` form (discriminant root with non-negative real part),
which keeps the complex logarithm on its principal branch for every
maturity and frequency and never exponentiates a growing quantity.  Puts
are obtained from put-call parity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalDomainError, QuadratureError
from .quadrature import adaptive_gk

CALL = "C"
PUT = "P"

# Geometric tail extension is capped at this multiple of phi_max.
_TAIL_CAP = 32.0


@dataclass(frozen=True)
class OptionContract:
    """One European option: spot, strike, year-fraction maturity, flat
    continuously-compounded rate, and a call/put flag."""

    spot: float
    strike: float
    tau: float
    rate: float
    kind: str = CALL

    def __post_init__(self):
        if not (self.spot > 0.0 and self.strike > 0.0 and self.tau > 0.0):
            raise ValueError("spot, strike and tau must all be positive")
        if self.kind not in (CALL, PUT):
            raise ValueError(f"kind must be {CALL!r} or {PUT!r}, got {self.kind!r}")


@dataclass(frozen=True)
class HestonParams:
    """Square-root variance parameters.

    kappa : mean-reversion rate of the variance
    theta : long-run variance
    sigma : volatility of variance
    rho   : spot/variance correlation, strictly inside (-1, 1)
    v0    : variance at the valuation date

    ``2 kappa theta >= sigma^2`` is required so the variance process stays
    positive.
    """

    kappa: float
    theta: float
    sigma: float
    rho: float
    v0: float

    def __post_init__(self):
        if not (self.kappa > 0.0 and self.theta > 0.0 and self.sigma > 0.0 and self.v0 > 0.0):
            raise ValueError("kappa, theta, sigma and v0 must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie strictly inside (-1, 1)")
        if 2.0 * self.kappa * self.theta < self.sigma ** 2 * (1.0 - 1e-12):
            raise ValueError(
                "positivity condition violated: 2*kappa*theta = "
                f"{2.0 * self.kappa * self.theta:.6g} < sigma^2 = {self.sigma ** 2:.6g}"
            )


@dataclass(frozen=True)
class SvjParams:
    """Jump-diffusion extension: Poisson jumps with log-uniform amplitude.

    lam      : jump intensity (jumps per year), >= 0
    jump_lo  : lower bound of the uniform jump mark (log amplitude)
    jump_hi  : upper bound of the uniform jump mark
    """

    heston: HestonParams
    lam: float = 0.0
    jump_lo: float = -0.01
    jump_hi: float = 0.01

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("jump intensity must be non-negative")
        if self.lam > 0.0 and not self.jump_lo < self.jump_hi:
            raise ValueError("jump mark bounds must satisfy jump_lo < jump_hi")


@dataclass(frozen=True)
class CFTerms:
    """Intermediate quantities of one characteristic-function evaluation."""

    alpha: float
    b: float
    d: complex
    g: complex
    a2: complex
    a1prime: complex
    beta: float


@dataclass(frozen=True)
class QuadratureConfig:
    """Controls for the inversion integral over frequency."""

    phi_min: float = 1e-8
    phi_max: float = 200.0
    abs_tol: float = 1e-9
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not 0.0 < self.phi_min < self.phi_max:
            raise ValueError("need 0 < phi_min < phi_max")
        if self.abs_tol <= 0.0:
            raise ValueError("abs_tol must be positive")
        if self.max_subdivisions < 16:
            raise ValueError("max_subdivisions must be at least 16")


def mean_jump(lo, hi):
    """Mean relative jump size for marks uniform on [lo, hi].

    The mark u multiplies the spot by e^u, so the expected relative move is
    ``(e^hi - e^lo)/(hi - lo) - 1``, evaluated via expm1 so that narrow mark
    intervals do not cancel catastrophically.
    """
    if not lo < hi:
        raise ValueError(f"degenerate jump-mark interval: lo={lo} >= hi={hi}")
    width = hi - lo
    return math.exp(lo) * math.expm1(width) / width - 1.0


def _expm1_over(w):
    """expm1(w)/w for complex arrays, stable as w -> 0."""
    w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-4
    ws = w[small]
    out[small] = 1.0 + ws / 2.0 * (1.0 + ws / 3.0 * (1.0 + ws / 4.0))
    wb = w[~small]
    out[~small] = np.expm1(wb) / wb
    return out


_ALPHA = {1: 0.5, 2: -0.5}


def _b_coeff(j, p):
    return p.kappa - p.rho * p.sigma if j == 1 else p.kappa


def _check_index(j):
    if j not in (1, 2):
        raise ValueError(f"characteristic-function index must be 1 or 2, got {j}")


def _discriminant(j, phi, p):
    """(c, d, G) for an array of frequencies.

    c is the shifted drift coefficient, d the principal-branch discriminant
    (Re d >= 0), and G = (c - d)/(c + d) the bounded ratio used by the
    decaying-exponential form of the exponents.
    """
    alpha = _ALPHA[j]
    b = _b_coeff(j, p)
    c = b - 1j * p.rho * p.sigma * phi
    d = np.sqrt(c * c - p.sigma ** 2 * (2.0 * alpha * 1j * phi - phi * phi))
    G = (c - d) / (c + d)
    return c, d, G


def _cf_exponents(j, phi, tau, p):
    """Variance-slope and drift exponent terms (a2, a1prime) plus (c, d, G).

    Algebraically identical to the textbook ratio-of-logs expression, but
    written with e^{-d tau}: the log argument then stays inside the unit
    disk around 1, so the principal branch is continuous in phi and nothing
    overflows for large phi*tau.
    """
    c, d, G = _discriminant(j, phi, p)
    sig2 = p.sigma ** 2
    decay = np.exp(-d * tau)
    denom = 1.0 - G * decay
    a2 = (c - d) / sig2 * (1.0 - decay) / denom
    a1p = p.kappa * p.theta / sig2 * (
        (c - d) * tau - 2.0 * (np.log(denom) - np.log(1.0 - G))
    )
    return c, d, G, a2, a1p


def cf_terms(j, phi, tau, p, rate=0.0):
    """All intermediate quantities of one characteristic-function term.

    ``rate`` only feeds the additive discount exponent beta (zero for the
    first index); the variance exponents do not depend on it.
    """
    _check_index(j)
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if phi <= 0.0:
        raise ValueError("phi must be positive; the integrand is never evaluated at 0")
    arr = np.array([float(phi)])
    c, d, G, a2, a1p = _cf_exponents(j, arr, tau, p)
    values = (d[0], G[0], a2[0], a1p[0])
    if not all(np.isfinite(z) for z in values):
        raise NumericalDomainError(
            f"non-finite characteristic-function term at phi={phi}, tau={tau}"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(G == 0.0, np.inf + 0j, 1.0 / G)[()]
    beta = rate * tau if j == 2 else 0.0
    return CFTerms(
        alpha=_ALPHA[j],
        b=_b_coeff(j, p),
        d=complex(d[0]),
        g=complex(g[0]),
        a2=complex(a2[0]),
        a1prime=complex(a1p[0]),
        beta=beta,
    )


def _svj_cf_values(j, phi, s, v, tau, p, rate):
    """Characteristic-function values f_j over an array of frequencies."""
    hp = p.heston
    _, _, _, a2, a1p = _cf_exponents(j, phi, tau, hp)
    iphi = 1j * phi
    delta1 = 1.0 if j == 1 else 0.0
    delta2 = 1.0 - delta1
    exponent = rate * iphi * tau - rate * delta2 * tau + a1p
    if p.lam > 0.0:
        jbar = mean_jump(p.jump_lo, p.jump_hi)
        z = iphi + delta1
        width = p.jump_hi - p.jump_lo
        bracket = np.exp(z * p.jump_lo) * _expm1_over(z * width) - 1.0
        exponent = exponent - (p.lam * jbar * iphi + p.lam * jbar * delta1) * tau \
            + p.lam * tau * bracket
    f = np.exp(exponent + a2 * v + iphi * s + rate * tau * delta2)
    if not np.all(np.isfinite(f)):
        raise NumericalDomainError(
            f"characteristic function not finite (j={j}, tau={tau})"
        )
    return f


def svj_cf(j, phi, s, v, tau, p, rate=0.0):
    """Characteristic function f_j at a single frequency.

    s is the log spot, v the current variance.  With zero jump intensity
    this is exactly the square-root-variance characteristic function.
    """
    _check_index(j)
    if v < 0.0:
        raise ValueError("variance must be non-negative")
    return complex(_svj_cf_values(j, np.array([float(phi)]), s, v, tau, p, rate)[0])


def _half_integral(cf_fn, ln_strikes, q, extend_tail=True, osc_freq=0.0):
    """(1/pi) * integral of Re[e^{-i phi lnK} F(phi) / (i phi)].

    ``cf_fn`` returns F over a frequency array with optional leading axes;
    the result has shape (leading..., len(ln_strikes)).  The truncation
    point grows geometrically until the integrand modulus at the endpoint
    passes the tail estimate, up to a fixed cap.

    ``osc_freq`` is the dominant phase rate of the integrand; the initial
    partition places roughly one oscillation period per interval so the
    embedded error estimate cannot alias a fast oscillation into a false
    pass.
    """
    phi_max = q.phi_max
    cap = q.phi_max * _TAIL_CAP
    while True:
        tail_f = np.abs(cf_fn(np.array([phi_max]))).max() / phi_max
        if tail_f <= q.abs_tol / phi_max:
            break
        if not extend_tail or phi_max >= cap:
            raise QuadratureError(
                f"integrand modulus {tail_f:.3e} at phi_max={phi_max:g} exceeds "
                f"the tail bound {q.abs_tol / phi_max:.3e}"
            )
        phi_max *= 2.0

    def integrand(ph):
        w = cf_fn(ph) / (1j * ph)
        osc = np.exp(np.multiply.outer(-1j * ln_strikes, ph))
        return np.real(w[..., None, :] * osc)

    initial = int(math.ceil((phi_max - q.phi_min) * (osc_freq + 0.5) / (2.0 * math.pi)))
    initial = max(16, min(initial, max(16, q.max_subdivisions // 2)))
    value, _ = adaptive_gk(integrand, q.phi_min, phi_max, q.abs_tol,
                           q.max_subdivisions, initial_intervals=initial)
    # the integrand has a finite limit at 0; the strip below phi_min would
    # otherwise bias deep in/out-of-the-money probabilities by
    # ~|ln K - s| * phi_min, which is visible next to abs_tol
    strip = integrand(np.array([q.phi_min]))[..., 0] * q.phi_min
    return (value + strip) / math.pi


def _pj_batch(j, s, v, tau, strikes, p, q, rate, extend_tail=True):
    """Raw exercise probabilities for strikes sharing one maturity."""
    ln_strikes = np.log(np.asarray(strikes, dtype=float))
    cf_fn = lambda ph: _svj_cf_values(j, ph, s, v, tau, p, rate)
    freq = float(np.max(np.abs(s - ln_strikes))) + abs(rate) * tau
    return 0.5 + _half_integral(cf_fn, ln_strikes, q, extend_tail, osc_freq=freq)


def prob_pj(j, s, v, tau, strike, p, q=None, rate=0.0, clamp=True):
    """Exercise probability P_j for a single strike.

    The raw inversion value can stray outside [0, 1] by up to the
    quadrature tolerance; pass ``clamp=False`` to see it unclamped.
    """
    _check_index(j)
    q = q or QuadratureConfig()
    raw = float(_pj_batch(j, s, v, tau, np.array([strike]), p, q, rate)[0])
    if clamp:
        return min(max(raw, 0.0), 1.0)
    return raw


def call_prices_batch(spot, strikes, tau, rate, p, q=None, extend_tail=True):
    """Call values for an array of strikes sharing (spot, tau, rate)."""
    q = q or QuadratureConfig()
    strikes = np.asarray(strikes, dtype=float)
    s = math.log(spot)
    v = p.heston.v0
    p1 = _pj_batch(1, s, v, tau, strikes, p, q, rate, extend_tail)
    p2 = _pj_batch(2, s, v, tau, strikes, p, q, rate, extend_tail)
    return spot * p1 - strikes * math.exp(-rate * tau) * p2


def price_svj(c, p, q=None):
    """Value of a European option under the jump-diffusion model.

    Calls use the two-probability inversion; puts are converted through
    put-call parity so both kinds share one quadrature.
    """
    call = float(call_prices_batch(c.spot, [c.strike], c.tau, c.rate, p, q)[0])
    if c.kind == PUT:
        return call - c.spot + c.strike * math.exp(-c.rate * c.tau)
    return call


def price_heston(c, p, q=None):
    """Pure stochastic-volatility price: the jump model with intensity 0."""
    return price_svj(c, SvjParams(heston=p, lam=0.0), q)


def intrinsic_bounds(c):
    """(lower, upper) static no-arbitrage bounds for the contract."""
    disc_k = c.strike * math.exp(-c.rate * c.tau)
    if c.kind == CALL:
        return max(c.spot - disc_k, 0.0), c.spot
    return max(disc_k - c.spot, 0.0), disc_k
