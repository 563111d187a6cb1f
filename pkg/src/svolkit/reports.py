"""Writers for calibration reports, error tables and smile data.

Every artifact is a flat text or CSV file: a key-value report plus a JSON
twin per calibrated model, a maturity-row by model-column table of mean
relative errors, and per-maturity smile files with one row per
(quote, model) pair.
"""

from __future__ import annotations

import csv
import json


def format_calibration_report(model, result, mre_rep=None):
    """Key-value text block for one calibration result."""
    lines = [f"model = {model}"]
    for name, value in result.params.as_dict().items():
        lines.append(f"{name} = {value!r}")
    lines.append(f"objective = {result.objective!r}")
    lines.append(f"iterations = {result.iterations}")
    lines.append(f"converged = {str(result.converged).lower()}")
    if mre_rep is not None:
        for bucket in mre_rep.buckets:
            lines.append(
                f"mre[{bucket.tau_days}d] = {bucket.value!r}  # {bucket.count} quotes"
            )
    return "\n".join(lines) + "\n"


def write_calibration_report(model, result, txt_path, json_path, mre_rep=None):
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(format_calibration_report(model, result, mre_rep))
    payload = {
        "model": model,
        "parameters": result.params.as_dict(),
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
    }
    if mre_rep is not None:
        payload["mre"] = [
            {"maturity_days": b.tau_days, "value": b.value, "quotes": b.count}
            for b in mre_rep.buckets
        ]
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_mre_table(reports, path):
    """Maturity-row by model-column table of mean relative errors.

    ``reports`` maps model name -> MreReport; rows are the union of the
    buckets, columns follow the mapping's insertion order.
    """
    models = list(reports)
    days = sorted({b.tau_days for rep in reports.values() for b in rep.buckets})
    lookup = {
        (model, b.tau_days): b.value
        for model, rep in reports.items()
        for b in rep.buckets
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["maturity_days"] + models)
        for day in days:
            row = [day]
            for model in models:
                value = lookup.get((model, day))
                row.append("" if value is None else f"{value:.6g}")
            writer.writerow(row)


def write_smile_csv(rows, path):
    """Smile rows: (log_moneyness, market_iv, model_iv, model_name, tau_days)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["log_moneyness", "market_iv", "model_iv",
                         "model_name", "tau_days"])
        for log_moneyness, market_iv, model_iv, model_name, tau_days in rows:
            writer.writerow([f"{log_moneyness:.10g}", f"{market_iv:.10g}",
                             f"{model_iv:.10g}", model_name, tau_days])


def write_price_table(rows, path):
    """Price rows: (strike, tau, model, price)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strike", "tau", "model", "price"])
        for strike, tau, model, price in rows:
            writer.writerow([f"{strike:.10g}", f"{tau:.10g}", model,
                             f"{price:.12g}"])
