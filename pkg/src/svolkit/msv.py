"""First-order fast-scale volatility correction on top of the base pricer.

The corrected price is the plain stochastic-volatility value plus a small
term driven by four group coefficients v1..v4.  That term has the same
half-plus-integral inversion structure as the base price, but its
transform stacks two nested time integrals (a running integral of a
weighted exponential, then the integral of that).  Everything here is
linear in (v1..v4), so all internals evaluate the four per-coefficient
basis components at once; the public operations contract them with the
actual coefficients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalDomainError, QuadratureError
from .pricing import (
    _ALPHA,
    _check_index,
    _cf_exponents,
    _discriminant,
    _half_integral,
    HestonParams,
    OptionContract,
    QuadratureConfig,
    intrinsic_bounds,
    price_heston,
)
from .quadrature import gauss_legendre

log = logging.getLogger(__name__)

_COEF_BOX = 0.05


@dataclass(frozen=True)
class MsvParams:
    """Base variance parameters plus the four correction coefficients.

    The coefficients are dimensionless and small; the calibration box is
    [-0.05, 0.05] per component, enforced here.
    """

    heston: HestonParams
    v1: float = 0.0
    v2: float = 0.0
    v3: float = 0.0
    v4: float = 0.0

    def __post_init__(self):
        for name in ("v1", "v2", "v3", "v4"):
            value = getattr(self, name)
            if abs(value) > _COEF_BOX + 1e-12:
                raise ValueError(
                    f"{name}={value} outside the correction box [-{_COEF_BOX}, {_COEF_BOX}]"
                )

    @property
    def coeffs(self):
        return np.array([self.v1, self.v2, self.v3, self.v4])


@dataclass(frozen=True)
class NestedQuadConfig:
    """Node counts for the nested time integrals of the correction."""

    inner_nodes: int = 48
    outer_nodes: int = 32
    refinement_factor: int = 2

    def __post_init__(self):
        if self.inner_nodes < 8 or self.outer_nodes < 8:
            raise ValueError("inner_nodes and outer_nodes must be at least 8")
        if self.refinement_factor < 2:
            raise ValueError("refinement_factor must be at least 2")


def _log_arg(G, d, t):
    """log(1 - G e^{-d t}), guarded against the pole of the inner ratio."""
    w = 1.0 - G * np.exp(-d * t)
    if np.any(np.abs(w) < 1e-14):
        raise NumericalDomainError("inner-ratio pole: g*e^{d z} = 1 within tolerance")
    return np.log(w)


def a3(j, phi, tau, z, p):
    """Time-bridge exponent between the inner integration point z and tau.

    Evaluates as -2*[d*(tau-z) + log(1 - G e^{-d tau}) - log(1 - G e^{-d z})],
    which is the prefactor-times-log expression with (1-g)/(d g) reduced to
    -2/(c+d); the split form keeps the logarithm continuous in both z and
    phi.  Exactly zero at z = tau.
    """
    _check_index(j)
    if not 0.0 <= z <= tau:
        raise ValueError("need 0 <= z <= tau")
    arr = np.array([float(phi)])
    _, d, G = _discriminant(j, arr, p)
    val = -2.0 * (d * (tau - z) + _log_arg(G, d, tau) - _log_arg(G, d, z))
    return complex(val[0])


def _b_basis(j, phi, a2_vals):
    """Per-coefficient factors of the correction drive, stacked on axis 0.

    Row k multiplied by v_{k+1} and summed gives the drive B(t, phi); a2_vals
    must be the variance-slope exponent evaluated at the same times.
    """
    alpha = _ALPHA[j]
    phi2 = phi * phi
    w1 = a2_vals * (2.0 * alpha * 1j * phi - phi2)
    w2 = a2_vals * a2_vals * (1j * phi)
    w3 = (2.0 * alpha * 1j * phi * phi2 + phi2) * np.ones_like(a2_vals)
    w4 = a2_vals * (-phi2)
    return -np.stack([w1, w2, w3, w4])


def b_coef(j, phi, tau, p):
    """Correction drive B(tau, phi): linear combination of the four basis
    factors with the model's coefficients."""
    _check_index(j)
    arr = np.array([float(phi)])
    _, _, _, a2, _ = _cf_exponents(j, arr, tau, p.heston)
    basis = _b_basis(j, arr, a2)
    return complex(p.coeffs @ basis[:, 0])


_PHI_CHUNK = 128


def _inner_rows(j, ph, c, d, G, sig2, t_end, xi, wi):
    """Four per-coefficient values of the inner running integral ending at
    ``t_end`` (broadcast against the frequency axis).

    The drive factorises into frequency-only terms times powers of the
    variance-slope exponent, so the inner contraction only needs the three
    weighted moments of (1, a2, a2^2) against the bridge kernel
    e^{A3(t_end, u)} = e^{-2 d (t_end-u)} ((1 - G e^{-d u})/(1 - G e^{-d t_end}))^2,
    evaluated without logs.
    """
    alpha = _ALPHA[j]
    t = np.asarray(t_end)[..., None]
    u = t * (0.5 * (xi + 1.0))
    d_b = d[..., None] if t.ndim == 1 else d[:, None, None]
    c_b = c[..., None] if t.ndim == 1 else c[:, None, None]
    G_b = G[..., None] if t.ndim == 1 else G[:, None, None]
    decay_u = np.exp(-d_b * u)
    num = 1.0 - G_b * decay_u
    den = 1.0 - G_b * np.exp(-d_b * t)
    if np.any(np.abs(den) < 1e-14) or np.any(np.abs(num) < 1e-14):
        raise NumericalDomainError("inner-ratio pole: g*e^{d z} = 1 within tolerance")
    bridge = np.exp(-2.0 * d_b * (t - u)) * (num / den) ** 2
    kernel = bridge * wi * (0.5 * t)
    a2_u = (c_b - d_b) / sig2 * (1.0 - decay_u) / num
    s0 = kernel.sum(axis=-1)
    s1 = (a2_u * kernel).sum(axis=-1)
    s2 = (a2_u * a2_u * kernel).sum(axis=-1)
    phi2 = ph * ph
    shape = ph.shape + (1,) * (s0.ndim - 1)
    f1 = (2.0 * alpha * 1j * ph - phi2).reshape(shape)
    f2 = (1j * ph).reshape(shape)
    f3 = (2.0 * alpha * 1j * ph * phi2 + phi2).reshape(shape)
    f4 = (-phi2).reshape(shape)
    return -np.stack([f1 * s1, f2 * s2, f3 * s0, f4 * s1])


def _qhat_basis(j, phi, tau, hp, inner, outer, want_q0=True):
    """Per-coefficient values of the running integrals at maturity.

    Returns (q0, q1), each (4, len(phi)) complex; q0 is None when not
    requested.  Gauss-Legendre in time, vectorised over frequencies in
    chunks to bound the (phi, outer, inner) tensor size.
    """
    phi = np.asarray(phi, dtype=float)
    sig2 = hp.sigma ** 2
    xi, wi = gauss_legendre(inner)
    xo, wo = gauss_legendre(outer)
    q1_out = np.empty((4, phi.size), dtype=complex)
    q0_out = np.empty((4, phi.size), dtype=complex) if want_q0 else None

    for start in range(0, phi.size, _PHI_CHUNK):
        ph = phi[start:start + _PHI_CHUNK]
        c, d, G = _discriminant(j, ph, hp)
        q1_out[:, start:start + ph.size] = _inner_rows(
            j, ph, c, d, G, sig2, np.array(tau), xi, wi)
        if not want_q0:
            continue
        z = tau * 0.5 * (xo + 1.0)
        rows_z = _inner_rows(j, ph, c, d, G, sig2,
                             np.broadcast_to(z, (ph.size, z.size)), xi, wi)
        q0_out[:, start:start + ph.size] = 0.5 * tau * (rows_z * wo).sum(axis=-1)

    return q0_out, q1_out


def _refined(value, refined_value, rel_tol, what):
    scale = max(np.max(np.abs(refined_value)), 1e-300)
    change = np.max(np.abs(refined_value - value))
    if change > max(rel_tol * scale, 1e-15):
        raise QuadratureError(
            f"{what} did not converge under node refinement "
            f"(change {change:.3e} vs scale {scale:.3e})"
        )
    return refined_value


def qhat1(j, phi, tau, p, nq=None):
    """Inner running integral at maturity, with an automatic refinement
    check: the node count is multiplied by the configured factor and the
    two estimates must agree to 1e-9 relative."""
    _check_index(j)
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    nq = nq or NestedQuadConfig()
    arr = np.array([float(phi)])
    _, base = _qhat_basis(j, arr, tau, p.heston, nq.inner_nodes, nq.outer_nodes,
                          want_q0=False)
    _, fine = _qhat_basis(j, arr, tau, p.heston,
                          nq.inner_nodes * nq.refinement_factor, nq.outer_nodes,
                          want_q0=False)
    coeffs = p.coeffs
    value = _refined(coeffs @ base[:, 0], coeffs @ fine[:, 0], 1e-9,
                     "inner correction integral")
    return complex(value)


def qhat0(j, phi, tau, p, nq=None):
    """Outer running integral at maturity (integral of the inner one),
    refinement-checked on the outer node count to 1e-8 relative."""
    _check_index(j)
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    nq = nq or NestedQuadConfig()
    arr = np.array([float(phi)])
    base, _ = _qhat_basis(j, arr, tau, p.heston, nq.inner_nodes, nq.outer_nodes)
    fine, _ = _qhat_basis(j, arr, tau, p.heston, nq.inner_nodes,
                          nq.outer_nodes * nq.refinement_factor)
    coeffs = p.coeffs
    value = _refined(coeffs @ base[:, 0], coeffs @ fine[:, 0], 1e-8,
                     "outer correction integral")
    return complex(value)


def _msv_cf_basis(j, phi, s, v, tau, hp, nq):
    """Per-coefficient transform values of the correction."""
    q0, q1 = _qhat_basis(j, phi, tau, hp, nq.inner_nodes, nq.outer_nodes)
    _, _, _, a2, a1p = _cf_exponents(j, phi, tau, hp)
    envelope = np.exp(a1p + a2 * v + 1j * phi * s)
    return (hp.kappa * hp.theta * q0 + v * q1) * envelope


def msv_cf(j, phi, s, v, tau, p, nq=None):
    """Correction transform q_j at a single frequency."""
    _check_index(j)
    if v < 0.0:
        raise ValueError("variance must be non-negative")
    nq = nq or NestedQuadConfig()
    basis = _msv_cf_basis(j, np.array([float(phi)]), s, v, tau, p.heston, nq)
    return complex(p.coeffs @ basis[:, 0])


def correction_basis_batch(spot, strikes, tau, rate, hp, q=None, nq=None):
    """Per-coefficient price corrections for strikes sharing one maturity.

    Returns a (4, len(strikes)) array; the model correction is the
    coefficient vector contracted against it.  Only the integral part of
    each inversion enters, so a zero coefficient vector maps to a zero
    correction by construction.
    """
    q = q or QuadratureConfig()
    nq = nq or NestedQuadConfig()
    strikes = np.asarray(strikes, dtype=float)
    ln_strikes = np.log(strikes)
    s = math.log(spot)
    v = hp.v0
    freq = float(np.max(np.abs(s - ln_strikes))) + abs(rate) * tau
    parts = []
    for j in (1, 2):
        cf_fn = lambda ph, jj=j: _msv_cf_basis(jj, ph, s, v, tau, hp, nq)
        parts.append(_half_integral(cf_fn, ln_strikes, q, osc_freq=freq))
    i1, i2 = parts
    return spot * i1 - strikes[None, :] * math.exp(-rate * tau) * i2


def correction_c1(c, p, q=None, nq=None):
    """Signed first-order price correction for one contract.

    Linear and superposable in (v1..v4); vanishes when all four are zero.
    Identical for calls and puts (parity shifts cancel in the difference).
    """
    basis = correction_basis_batch(c.spot, [c.strike], c.tau, c.rate,
                                   p.heston, q, nq)
    return float(p.coeffs @ basis[:, 0])


def price_msv(c, p, q=None, nq=None):
    """Corrected price: base square-root-variance value plus the
    first-order term, clamped to the static no-arbitrage bounds (a clamp
    is logged; it only triggers for coefficient sets that push the small
    correction past the bounds)."""
    value = price_heston(c, p.heston, q) + correction_c1(c, p, q, nq)
    lo, hi = intrinsic_bounds(c)
    if value < lo or value > hi:
        clamped = min(max(value, lo), hi)
        log.warning(
            "corrected price %.10g clamped to no-arbitrage bounds [%.10g, %.10g]",
            value, lo, hi,
        )
        return clamped
    return value
