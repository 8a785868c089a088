"""Table analogues and file emission.

The ``*_table`` / ``*_summary`` / ``*_profile`` functions turn fit and
validation results into tidy frames. ``emit_reports`` only writes what it is
handed; it does no arithmetic beyond the rounding of the display copies.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from cipbench.errors import BenchError
from cipbench.hac import coefficient_pvalues

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "cipbench.manifest/1"
DISPLAY_DECIMALS = 3


def sign_significance_summary(fits: dict, alpha: float = 0.05, variables=None) -> pd.DataFrame:
    """Per variable: mean/median coefficient, positive share, significant share and split.

    Exact zeros count as non-positive.
    """
    fits = [fits[k] for k in sorted(fits)]
    variables = list(variables or fits[0].spec.names)
    rows = []
    for var in variables:
        coefs = np.array([f.coefficients[var] for f in fits])
        pvals = np.array([coefficient_pvalues(f)[var] for f in fits])
        sig = pvals < alpha
        rows.append({
            "variable": var,
            "panels": len(fits),
            "mean_coef": coefs.mean(),
            "median_coef": float(np.median(coefs)),
            "positive_share": float((coefs > 0).mean()),
            "significant_share": float(sig.mean()),
            "sig_positive": int((sig & (coefs > 0)).sum()),
            "sig_negative": int((sig & (coefs < 0)).sum()),
        })
    return pd.DataFrame(rows)


def state_moments(values: np.ndarray, variables) -> pd.DataFrame:
    q75, q25 = np.percentile(values, [75, 25], axis=0)
    return pd.DataFrame({"sd": values.std(axis=0, ddof=1), "iqr": q75 - q25}, index=list(variables))


def magnitude_table(fits: dict, moments: pd.DataFrame) -> pd.DataFrame:
    """Median and quartiles across panels of coefficient x SD and coefficient x IQR."""
    fits = [fits[k] for k in sorted(fits)]
    rows = []
    for var in moments.index:
        coefs = np.array([f.coefficients[var] for f in fits])
        sd, iqr = float(moments.loc[var, "sd"]), float(moments.loc[var, "iqr"])
        sd_eff = np.percentile(coefs * sd, [25, 50, 75])
        iqr_eff = np.percentile(coefs * iqr, [25, 50, 75])
        rows.append({
            "variable": var,
            "state_sd": sd,
            "state_iqr": iqr,
            "median_coef": float(np.median(coefs)),
            "sd_effect_median": sd_eff[1],
            "sd_effect_q25": sd_eff[0],
            "sd_effect_q75": sd_eff[2],
            "iqr_effect_median": iqr_eff[1],
            "iqr_effect_q25": iqr_eff[0],
            "iqr_effect_q75": iqr_eff[2],
        })
    return pd.DataFrame(rows)


def tenor_profile(fits: dict) -> pd.DataFrame:
    """Per tenor: currency count, total observations and the spread of panel R^2."""
    frame = pd.DataFrame([{"tenor": k[1], "currency": k[0], "nobs": f.nobs, "r2": f.r2} for k, f in sorted(fits.items())])
    out = frame.groupby("tenor", sort=True).agg(
        currencies=("currency", "size"), observations=("nobs", "sum"),
        mean_r2=("r2", "mean"), median_r2=("r2", "median"), min_r2=("r2", "min"), max_r2=("r2", "max"),
    )
    return out.reset_index()


def panel_fit_table(fits: dict) -> pd.DataFrame:
    rows = []
    for (cur, ten), f in sorted(fits.items()):
        row = {"currency": cur, "tenor": ten, "nobs": f.nobs, "r2": f.r2, "intercept": f.fe_estimates["intercept"], "hac_lag": f.hac_lag}
        pv = coefficient_pvalues(f)
        for name in f.spec.names:
            row[f"coef_{name}"] = f.coefficients[name]
            row[f"se_{name}"] = float(np.sqrt(f.hac_cov.loc[name, name]))
            row[f"p_{name}"] = pv[name]
        rows.append(row)
    return pd.DataFrame(rows)


def currency_performance(fits: dict, loyo) -> pd.DataFrame:
    pred = loyo.predictions
    err = ((pred["actual"] - pred["predicted"]) ** 2).groupby(pred["currency"]).sum()
    bench = ((pred["actual"] - pred["benchmark"]) ** 2).groupby(pred["currency"]).sum()
    return pd.DataFrame([
        {"currency": cur, "observations": f.nobs, "in_sample_r2": f.r2,
         "loyo_pooled_r2": float(1 - err.get(cur, np.nan) / bench.get(cur, np.nan))}
        for cur, f in sorted(fits.items())
    ])


def expanding_table(report) -> pd.DataFrame:
    per = report.per_year[["year", "nobs", "panels", "pooled_r2", "median_panel_r2"]].copy()
    per["year"] = per["year"].astype(str)
    tail = pd.DataFrame([
        {"year": "All years", "nobs": per["nobs"].sum(), "panels": per["panels"].sum(),
         "pooled_r2": report.overall_pooled_r2, "median_panel_r2": np.nan},
        {"year": "Mean year", "nobs": np.nan, "panels": np.nan,
         "pooled_r2": report.mean_year_r2, "median_panel_r2": per["median_panel_r2"].mean()},
    ])
    out = pd.concat([per, tail], ignore_index=True)
    return out.astype({"nobs": "Int64", "panels": "Int64"})


def fit_row(label, in_sample, loyo=None, within=None, expanding=None, **extra) -> dict:
    row = {"specification": label, "in_sample_r2": in_sample}
    if within is not None:
        row["within_panel_r2"] = within
    row["loyo_pooled_r2"] = loyo.overall_pooled_r2 if loyo is not None else np.nan
    row["loyo_mean_year_r2"] = loyo.mean_year_r2 if loyo is not None else np.nan
    if expanding is not None:
        row["expanding_pooled_r2"] = expanding.overall_pooled_r2
        row["expanding_mean_year_r2"] = expanding.mean_year_r2
    row.update(extra)
    return row


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_csv(frame: pd.DataFrame, path: Path):
    frame.to_csv(path, index=False, lineterminator="\n")


def _display(frame: pd.DataFrame) -> pd.DataFrame:
    out = frame.copy()
    for col in out.columns:
        if pd.api.types.is_float_dtype(out[col]):
            out[col] = out[col].round(DISPLAY_DECIMALS)
    return out


def emit_reports(tables: dict, outdir, manifest: dict, plots: dict | None = None) -> list:
    """Write ``<name>.csv`` per table, ``display/<name>.csv``, plot data, and ``manifest.json``."""
    outdir = Path(outdir)
    written = []
    try:
        (outdir / "display").mkdir(parents=True, exist_ok=True)
        for name, frame in tables.items():
            _write_csv(frame, outdir / f"{name}.csv")
            _write_csv(_display(frame), outdir / "display" / f"{name}.csv")
            written.append(outdir / f"{name}.csv")
        if plots:
            (outdir / "plots").mkdir(exist_ok=True)
            for name, frame in plots.items():
                _write_csv(frame, outdir / "plots" / f"{name}.csv")
                written.append(outdir / "plots" / f"{name}.csv")
        body = {"schema": MANIFEST_SCHEMA, **manifest, "outputs": sorted(str(p.relative_to(outdir)) for p in written)}
        path = outdir / "manifest.json"
        path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_json_default) + "\n")
        written.append(path)
    except OSError as exc:
        raise BenchError(f"cannot write reports under {outdir}: {exc}") from exc
    log.info("wrote %d report files to %s", len(written), outdir)
    return written


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (tuple, set)):
        return list(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
