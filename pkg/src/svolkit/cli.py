"""Command-line entry point.

Subcommands wire the pricing, calibration, smile and validation layers
into file-based runs: chains come in as CSV, every result goes out as a
CSV or key-value report under --output-dir.  Diagnostics go to stderr;
stdout stays silent so runs compose in scripts.

Exit codes: 0 success, 1 validation-check failure, 2 configuration or
input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import calibration, mc, msv, pricers, pricing, reports
from .errors import (CalibrationError, ChainSchemaError, EmptyChainError,
                     NoSolutionError, NumericalDomainError, QuadratureError)
from .implied_vol import smile_curve
from .market_data import (DAYS_PER_YEAR, filter_chain, load_chain, save_chain,
                          synth_chain)

log = logging.getLogger(__name__)

_MODEL_CHOICES = ("heston", "svj", "msv", "all")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------------------
# parameter files
# ---------------------------------------------------------------------------

_PARAM_KEYS = {"model", "kappa", "zeta", "theta", "sigma", "rho", "v0",
               "lambda", "m", "n", "v1", "v2", "v3", "v4"}


def parse_params_file(path):
    """Flat key-value parameter file: ``key = value`` lines, '#' comments.

    Both kappa and zeta are accepted; zeta wins when both are present.
    """
    entries = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key not in _PARAM_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown parameter {key!r}")
        entries[key] = value.strip() if key == "model" else float(value)
    return entries


def heston_from_entries(entries):
    try:
        theta = entries["theta"]
        sigma = entries["sigma"]
        rho = entries["rho"]
        v0 = entries["v0"]
    except KeyError as exc:
        raise ValueError(f"parameter file missing {exc.args[0]!r}") from exc
    if "zeta" in entries:
        kappa = calibration.zeta_to_kappa(entries["zeta"], sigma, theta)
    elif "kappa" in entries:
        kappa = entries["kappa"]
    else:
        raise ValueError("parameter file must define zeta or kappa")
    return pricing.HestonParams(kappa=kappa, theta=theta, sigma=sigma,
                                rho=rho, v0=v0)


def params_for_model(model, entries):
    hp = heston_from_entries(entries)
    if model == "heston":
        return hp
    if model == "svj":
        return pricing.SvjParams(heston=hp,
                                 lam=entries.get("lambda", 0.0),
                                 jump_lo=entries.get("m", -0.01),
                                 jump_hi=entries.get("n", 0.01))
    if model == "msv":
        return msv.MsvParams(hp, entries.get("v1", 0.0), entries.get("v2", 0.0),
                             entries.get("v3", 0.0), entries.get("v4", 0.0))
    raise ValueError(f"unknown model {model!r}")


def _selected_models(namespace):
    return list(pricers.MODELS) if namespace.model == "all" else [namespace.model]


def _quad_config(namespace):
    kwargs = {}
    if namespace.phi_max is not None:
        kwargs["phi_max"] = namespace.phi_max
    if namespace.abs_tol is not None:
        kwargs["abs_tol"] = namespace.abs_tol
    return pricing.QuadratureConfig(**kwargs)


def _load_filtered(namespace):
    chain = load_chain(namespace.input, default_rate=namespace.rate)
    chain = filter_chain(chain,
                         moneyness_lo=namespace.moneyness_lo,
                         moneyness_hi=namespace.moneyness_hi,
                         tau_lo_days=namespace.tau_lo,
                         tau_hi_days=namespace.tau_hi)
    if len(chain) == 0:
        raise EmptyChainError("no quotes left after the moneyness/maturity filter")
    return chain


def _out_dir(namespace):
    directory = Path(namespace.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _grid_contracts(namespace):
    if namespace.spot is None or namespace.strikes is None or namespace.maturities is None:
        raise ValueError("grid pricing needs --spot, --strikes and --maturities "
                         "(or --input with a chain file)")
    rate = namespace.rate if namespace.rate is not None else 0.0
    contracts = []
    for days in namespace.maturities:
        tau = days / DAYS_PER_YEAR
        for strike in namespace.strikes:
            contracts.append(pricing.OptionContract(
                spot=namespace.spot, strike=strike, tau=tau, rate=rate))
    return contracts


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_price(namespace):
    entries = parse_params_file(namespace.params)
    q = _quad_config(namespace)
    if namespace.input:
        chain = _load_filtered(namespace)
        from .market_data import quote_contract
        contracts = [quote_contract(quote) for quote in chain]
    else:
        contracts = _grid_contracts(namespace)
    if not contracts:
        raise ValueError("empty pricing grid")
    rows = []
    for model in _selected_models(namespace):
        params = params_for_model(model, entries)
        for contract in contracts:
            value = pricers.contract_value(model, params, contract, q=q)
            rows.append((contract.strike, contract.tau, model, value))
    out = _out_dir(namespace) / "prices.csv"
    reports.write_price_table(rows, out)
    log.info("wrote %d price rows to %s", len(rows), out)
    return EXIT_OK


def _calibrated_params(namespace, chain, q):
    """(model -> params) either from a parameter file or by calibrating."""
    models = _selected_models(namespace)
    if namespace.params:
        entries = parse_params_file(namespace.params)
        return {model: params_for_model(model, entries) for model in models}
    log.info("no parameter file supplied; calibrating (stages: heston -> svj, msv)")
    staged = calibration.staged_calibrate(chain, q=q)
    by_model = {name: result.params.to_model_params() for name, result in staged}
    return {model: by_model[model] for model in models}


def run_calibrate(namespace):
    chain = _load_filtered(namespace)
    q = _quad_config(namespace)
    out = _out_dir(namespace)
    models = _selected_models(namespace)
    log.info("calibration stages: heston -> {svj, msv}")
    base = calibration.calibrate("heston", chain, q=q)
    results = {"heston": base}
    for model in ("svj", "msv"):
        if model in models:
            init = calibration.ParamVector.warm_start(model, base.params.values)
            results[model] = calibration.calibrate(model, chain, init, q=q)
    failures = 0
    for model in models:
        result = results[model]
        if not result.converged:
            failures += 1
            log.warning("%s stage did not converge (best objective %.6g kept)",
                        model, result.objective)
        prices = pricers.chain_values(model, result.params.to_model_params(),
                                      chain, q=q)
        rep = calibration.mre_report(prices, chain)
        reports.write_calibration_report(
            model, result, out / f"calibration_{model}.txt",
            out / f"calibration_{model}.json", rep)
        log.info("%s: objective=%.6g iterations=%d converged=%s",
                 model, result.objective, result.iterations, result.converged)
    return EXIT_OK if failures < len(models) else EXIT_NUMERICAL


def run_smile(namespace):
    chain = _load_filtered(namespace)
    q = _quad_config(namespace)
    out = _out_dir(namespace)
    params = _calibrated_params(namespace, chain, q)
    from .market_data import OptionChain

    for expiry, quotes in chain.by_expiry().items():
        bucket = OptionChain(quotes=tuple(quotes), provenance=chain.provenance)
        tau_days = round(quotes[0].tau * DAYS_PER_YEAR)
        rows = []
        for model, model_params in params.items():
            pricer = lambda contract, m=model, p=model_params: \
                pricers.contract_value(m, p, contract, q=q)
            pairs, failures = smile_curve(bucket, pricer)
            for market_pt, model_pt in pairs:
                rows.append((market_pt.log_moneyness, market_pt.implied_vol,
                             model_pt.implied_vol, model, tau_days))
            for quote, reason in failures:
                log.warning("smile %dd K=%g: %s", tau_days, quote.strike, reason)
        path = out / f"smile_{tau_days}d.csv"
        reports.write_smile_csv(rows, path)
        log.info("wrote %s (%d rows)", path, len(rows))
    return EXIT_OK


def run_mre(namespace):
    chain = _load_filtered(namespace)
    q = _quad_config(namespace)
    out = _out_dir(namespace)
    params = _calibrated_params(namespace, chain, q)
    table = {}
    for model, model_params in params.items():
        prices = pricers.chain_values(model, model_params, chain, q=q)
        table[model] = calibration.mre_report(prices, chain)
    path = out / "mre.csv"
    reports.write_mre_table(table, path)
    log.info("wrote %s", path)
    return EXIT_OK


def run_synth(namespace):
    if namespace.params is None:
        raise ValueError("synth requires --params")
    if namespace.model == "all":
        raise ValueError("synth requires a single --model")
    entries = parse_params_file(namespace.params)
    params = params_for_model(namespace.model, entries)
    if namespace.spot is None or namespace.strikes is None or namespace.maturities is None:
        raise ValueError("synth needs --spot, --strikes and --maturities")
    rate = namespace.rate if namespace.rate is not None else 0.0
    chain = synth_chain(namespace.model, params,
                        strikes=namespace.strikes,
                        maturities=[d / DAYS_PER_YEAR for d in namespace.maturities],
                        spot=namespace.spot, rate=rate,
                        noise_sd=namespace.noise_sd, seed=namespace.seed,
                        q=_quad_config(namespace))
    out = _out_dir(namespace) / "synthetic_chain.csv"
    save_chain(chain, out)
    log.info("wrote %d synthetic quotes to %s", len(chain), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

_VALIDATE_SETS = (
    pricing.HestonParams(kappa=2.0, theta=0.04, sigma=0.3, rho=-0.7, v0=0.04),
    pricing.HestonParams(kappa=1.5, theta=0.09, sigma=0.5, rho=-0.9, v0=0.09),
    pricing.HestonParams(kappa=3.0, theta=0.02, sigma=0.2, rho=0.3, v0=0.03),
)


def _check_riccati(tol):
    worst = 0.0
    phis = np.linspace(0.01, 100.0, 50)
    for hp, tau in zip(_VALIDATE_SETS, (0.5, 1.0, 5.0)):
        for j in (1, 2):
            for phi in phis:
                a1_ode, a2_ode = mc.riccati_numeric(j, phi, tau, hp)
                terms = pricing.cf_terms(j, phi, tau, hp)
                worst = max(worst, abs(terms.a1prime - a1_ode), abs(terms.a2 - a2_ode))
    return worst <= tol, f"max |analytic - ODE| = {worst:.3e} (tol {tol:.1e})"


def _check_mc(paths, seed):
    hp = _VALIDATE_SETS[0]
    strikes = np.array([90.0, 100.0, 110.0])
    worst_z = 0.0
    for p in (pricing.SvjParams(heston=hp, lam=0.0),
              pricing.SvjParams(heston=hp, lam=20.0, jump_lo=-0.05, jump_hi=0.05)):
        for tau in (0.25, 0.75):
            config = mc.McConfig(paths=paths, steps_per_year=500, seed=seed)
            estimates = mc.simulate_strike_grid(100.0, strikes, tau, 0.03, p, config)
            for strike, estimate in zip(strikes, estimates):
                contract = pricing.OptionContract(100.0, strike, tau, 0.03)
                analytic = pricing.price_svj(contract, p)
                z = abs(estimate.price - analytic) / estimate.std_error
                worst_z = max(worst_z, z)
    return worst_z <= 3.0, f"max |analytic - MC| = {worst_z:.2f} standard errors (limit 3)"


def _check_reductions(tol):
    hp = _VALIDATE_SETS[0]
    worst = 0.0
    for strike in (85.0, 100.0, 115.0):
        contract = pricing.OptionContract(100.0, strike, 0.5, 0.03)
        heston_value = pricing.price_heston(contract, hp)
        svj_value = pricing.price_svj(
            contract, pricing.SvjParams(heston=hp, lam=0.0, jump_lo=-0.3, jump_hi=0.2))
        msv_value = msv.price_msv(contract, msv.MsvParams(heston=hp))
        worst = max(worst, abs(svj_value - heston_value), abs(msv_value - heston_value))
    return worst <= tol, f"max reduction mismatch = {worst:.3e} (tol {tol:.1e})"


def _check_linearity(tol):
    hp = _VALIDATE_SETS[0]
    contract = pricing.OptionContract(100.0, 105.0, 0.5, 0.03)
    base = msv.correction_c1(contract, msv.MsvParams(hp, 0.01, -0.004, 0.002, 0.005))
    doubled = msv.correction_c1(contract, msv.MsvParams(hp, 0.02, -0.008, 0.004, 0.01))
    rel = abs(doubled - 2.0 * base) / abs(doubled)
    return rel <= tol, f"correction scaling error = {rel:.3e} (tol {tol:.1e})"


def run_validate(namespace):
    out = _out_dir(namespace)
    riccati_tol = 1e-16 if namespace.inject_failure else 1e-8
    checks = [
        ("riccati-equivalence", lambda: _check_riccati(riccati_tol)),
        ("mc-consistency", lambda: _check_mc(namespace.paths, namespace.seed)),
        ("model-reductions", lambda: _check_reductions(1e-10)),
        ("correction-linearity", lambda: _check_linearity(1e-9)),
    ]
    lines = []
    all_ok = True
    for name, check in checks:
        ok, detail = check()
        all_ok &= ok
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        lines.append(line)
        log.info("%s", line)
    path = out / "validation_report.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("wrote %s", path)
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _csv_floats(text):
    return [float(part) for part in text.split(",") if part.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="svolkit",
        description="Option pricing and calibration under three stochastic "
                    "volatility models",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "price": run_price,
        "calibrate": run_calibrate,
        "smile": run_smile,
        "mre": run_mre,
        "validate": run_validate,
        "synth": run_synth,
    }
    for name, handler in commands.items():
        p = sub.add_parser(name)
        p.set_defaults(handler=handler)
        p.add_argument("--input", help="option-chain CSV")
        p.add_argument("--output-dir", default=".", help="directory for result files")
        p.add_argument("--model", choices=_MODEL_CHOICES, default="all")
        p.add_argument("--params", help="flat key-value parameter file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--phi-max", type=float, default=None,
                       help="inversion truncation frequency")
        p.add_argument("--abs-tol", type=float, default=None,
                       help="absolute tolerance per inversion integral")
        p.add_argument("--paths", type=int, default=200_000,
                       help="Monte Carlo paths (validate)")
        p.add_argument("--moneyness-lo", type=float, default=0.75)
        p.add_argument("--moneyness-hi", type=float, default=1.25)
        p.add_argument("--tau-lo", type=float, default=30.0,
                       help="minimum maturity in days")
        p.add_argument("--tau-hi", type=float, default=180.0,
                       help="maximum maturity in days")
        p.add_argument("--spot", type=float, default=None)
        p.add_argument("--rate", type=float, default=None)
        p.add_argument("--strikes", type=_csv_floats, default=None,
                       help="comma-separated strike list")
        p.add_argument("--maturities", type=_csv_floats, default=None,
                       help="comma-separated maturities in days")
        p.add_argument("--noise-sd", type=float, default=0.0,
                       help="synthetic price noise (price units)")
        p.add_argument("--inject-failure", action="store_true",
                       help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    namespace = parser.parse_args(argv)
    try:
        return namespace.handler(namespace)
    except (ChainSchemaError, EmptyChainError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (QuadratureError, NumericalDomainError, NoSolutionError,
            CalibrationError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
