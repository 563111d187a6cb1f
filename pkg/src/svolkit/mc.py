"""Independent verification engines for the analytic pricers.

Two routes: full-truncation Euler simulation of the jump-diffusion
dynamics (the variance enters drift and diffusion floored at zero, the
state itself may go negative), and direct numerical integration of the
Riccati system whose closed-form solution the characteristic-function
exponents are.

Randomness is counter-based: paths are simulated in fixed-size blocks and
block k draws from a Philox stream keyed by (seed, k), so results are
reproducible path-for-path regardless of how blocks would be scheduled.
Per-block sums are reduced in block order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .pricing import CALL, _ALPHA, _b_coeff, mean_jump

_BLOCK = 1 << 16


@dataclass(frozen=True)
class McConfig:
    paths: int = 200_000
    steps_per_year: int = 250
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.paths < 1000:
            raise ValueError("paths must be at least 1000")
        if self.steps_per_year < 50:
            raise ValueError("steps_per_year must be at least 50")


@dataclass(frozen=True)
class McEstimate:
    price: float
    std_error: float
    paths: int


def _block_rng(seed, block):
    return np.random.Generator(np.random.Philox(key=np.array([seed, block],
                                                             dtype=np.uint64)))


def _simulate_block(rng, n, rate, p, steps, dt, jbar, antithetic):
    """Terminal log-returns for one block of paths.

    With antithetic variates the Brownian increments of the second half
    mirror the first and the jump component is drawn once and shared, so
    each half keeps the correct marginal law.
    """
    hp = p.heston
    draw = n // 2 if antithetic else n
    x = np.zeros(n)
    v = np.full(n, hp.v0)
    rho_c = math.sqrt(1.0 - hp.rho ** 2)
    drift_rate = rate - p.lam * jbar
    sqrt_dt = math.sqrt(dt)
    for _ in range(steps):
        e1 = rng.standard_normal(draw)
        e2 = rng.standard_normal(draw)
        if antithetic:
            e1 = np.concatenate([e1, -e1])
            e2 = np.concatenate([e2, -e2])
        zx = e1
        zv = hp.rho * e1 + rho_c * e2
        v_pos = np.maximum(v, 0.0)
        vol = np.sqrt(v_pos)
        x += (drift_rate - 0.5 * v_pos) * dt + vol * sqrt_dt * zx
        if p.lam > 0.0:
            counts = rng.poisson(p.lam * dt, draw)
            add = np.zeros(draw)
            for k in range(1, int(counts.max()) + 1):
                mask = counts >= k
                hits = int(mask.sum())
                if hits == 0:
                    break
                add[mask] += rng.uniform(p.jump_lo, p.jump_hi, hits)
            x += np.concatenate([add, add]) if antithetic else add
        v = v + hp.kappa * (hp.theta - v_pos) * dt + hp.sigma * vol * sqrt_dt * zv
    return x


def simulate_strike_grid(spot, strikes, tau, rate, p, mc=None, kind=CALL,
                         statistic="price"):
    """McEstimates for several strikes sharing one simulated maturity.

    One pass over the paths serves every strike, so the estimates are
    perfectly correlated across strikes.  ``statistic`` selects the
    discounted payoff ("price"), the discounted terminal spot ("forward",
    whose expectation is the spot by the martingale property) or the
    undiscounted exercise indicator ("exercise", the direct estimate of
    the risk-neutral probability that the call finishes in the money).
    """
    if statistic not in ("price", "forward", "exercise"):
        raise ValueError("statistic must be 'price', 'forward' or 'exercise'")
    mc = mc or McConfig()
    strikes = np.asarray(strikes, dtype=float)
    jbar = mean_jump(p.jump_lo, p.jump_hi) if p.lam > 0.0 else 0.0
    steps = max(1, round(mc.steps_per_year * tau))
    dt = tau / steps
    disc = math.exp(-rate * tau)

    total = np.zeros(strikes.size)
    total_sq = np.zeros(strikes.size)
    count = 0
    n_blocks = (mc.paths + _BLOCK - 1) // _BLOCK
    for block in range(n_blocks):
        n = min(_BLOCK, mc.paths - block * _BLOCK)
        if mc.antithetic and n % 2:
            n -= 1
        if n <= 0:
            continue
        rng = _block_rng(mc.seed, block)
        x = _simulate_block(rng, n, rate, p, steps, dt, jbar, mc.antithetic)
        spot_t = spot * np.exp(x)
        for i, strike in enumerate(strikes):
            if statistic == "forward":
                sample = disc * spot_t
            elif statistic == "exercise":
                sample = (spot_t > strike).astype(float)
            elif kind == CALL:
                sample = disc * np.maximum(spot_t - strike, 0.0)
            else:
                sample = disc * np.maximum(strike - spot_t, 0.0)
            if mc.antithetic:
                sample = 0.5 * (sample[: n // 2] + sample[n // 2:])
            total[i] += float(sample.sum())
            total_sq[i] += float((sample * sample).sum())
        count += n // 2 if mc.antithetic else n
    estimates = []
    for i in range(strikes.size):
        mean = total[i] / count
        var = max(total_sq[i] / count - mean * mean, 0.0)
        estimates.append(McEstimate(price=mean, std_error=math.sqrt(var / count),
                                    paths=count))
    return estimates


def simulate_svj(c, p, mc=None, statistic="price"):
    """Monte Carlo estimate for one contract under the jump-diffusion
    dynamics (zero intensity reduces to the pure diffusion).

    Standard errors use per-pair averages when antithetic variates are on.
    """
    return simulate_strike_grid(c.spot, [c.strike], c.tau, c.rate, p, mc,
                                kind=c.kind, statistic=statistic)[0]


def riccati_numeric(j, phi, tau, p, tol=1e-12):
    """(a1prime, a2) by adaptive integration of the defining ODE system.

    The pair solves  a2' = sigma^2/2 a2^2 - c a2 + (alpha phi i - phi^2/2),
    a1prime' = kappa theta a2  from zero initial conditions; it is the
    independent cross-check for the closed-form exponents.
    """
    if j not in (1, 2):
        raise ValueError("index must be 1 or 2")
    if tau < 0.0:
        raise ValueError("tau must be non-negative")
    if tau == 0.0:
        return 0.0 + 0.0j, 0.0 + 0.0j
    alpha = _ALPHA[j]
    b = _b_coeff(j, p)
    c = b - 1j * p.rho * p.sigma * phi
    c0 = alpha * 1j * phi - 0.5 * phi * phi
    half_sig2 = 0.5 * p.sigma ** 2
    kt = p.kappa * p.theta

    def rhs(_, y):
        a2 = y[2] + 1j * y[3]
        da2 = half_sig2 * a2 * a2 - c * a2 + c0
        da1 = kt * a2
        return [da1.real, da1.imag, da2.real, da2.imag]

    sol = solve_ivp(rhs, (0.0, tau), [0.0, 0.0, 0.0, 0.0], method="DOP853",
                    rtol=tol, atol=tol)
    if not sol.success:
        raise RuntimeError(f"ODE integration failed: {sol.message}")
    y = sol.y[:, -1]
    return complex(y[0], y[1]), complex(y[2], y[3])
