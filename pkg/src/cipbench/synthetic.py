"""Synthetic FRED-style inputs and a CIP panel with known coefficients.

Used by the test suite and by ``scripts/make_synthetic_inputs.py`` so the
pipeline can run end to end without downloading anything.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import yaml

TRUE_SLOPES = {"NFCI_lag": -8.0, "Dollar_lag": -0.6, "Slope_lag": 4.0}


def _ar1(rng, n, rho, scale, start=0.0):
    out = np.empty(n)
    x = start
    for i in range(n):
        x = rho * x + scale * rng.standard_normal()
        out[i] = x
    return out


def _fred_frame(dates, values, name, missing=None):
    text = np.char.mod("%.4f", values).astype(object)
    if missing is not None:
        text[missing] = "."
    return pd.DataFrame({"observation_date": pd.DatetimeIndex(dates).strftime("%Y-%m-%d"), name: text})


def make_synthetic(
    outdir,
    seed: int = 0,
    currencies=("AUD", "CAD", "EUR"),
    tenors=(0.25, 2.0, 10.0),
    start: str = "2012-01-01",
    end: str = "2019-12-31",
    noise_rho: float = 0.97,
    noise_scale: float = 2.0,
    late_start: bool = True,
) -> dict:
    """Write ``nfci.csv dollar.csv dgs10.csv dgs2.csv vix.csv cip_panel.csv config.yaml``.

    The CIP response is built from the one-row-lagged states, so the
    baseline slopes are close to ``TRUE_SLOPES`` (currency loadings add
    cross-sectional dispersion). With ``late_start`` the last panel begins
    four years after the others, so early expanding-window years skip it.
    """
    rng = np.random.default_rng(seed)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    days = pd.bdate_range(start, end)
    n = len(days)
    dollar = 110 + _ar1(rng, n, 0.998, 0.4)
    dgs2 = 1.5 + _ar1(rng, n, 0.999, 0.03)
    dgs10 = dgs2 + 1.2 + _ar1(rng, n, 0.997, 0.03)
    vix = 18 + _ar1(rng, n, 0.98, 1.0)
    fridays = pd.date_range(start, end, freq="W-FRI")
    nfci_weekly = -0.4 + _ar1(rng, len(fridays), 0.97, 0.06)

    # FRED holidays: missing values on about 2% of days
    holes = rng.random(n) < 0.02
    _fred_frame(days, dollar, "DTWEXBGS", holes).to_csv(out / "dollar.csv", index=False)
    _fred_frame(days, dgs10, "DGS10", holes).to_csv(out / "dgs10.csv", index=False)
    _fred_frame(days, dgs2, "DGS2", holes).to_csv(out / "dgs2.csv", index=False)
    _fred_frame(days, vix, "VIXCLS", holes).to_csv(out / "vix.csv", index=False)
    _fred_frame(fridays, nfci_weekly, "NFCI").to_csv(out / "nfci.csv", index=False)

    # lagged states as the pipeline will build them
    ff = lambda v: pd.Series(np.where(holes, np.nan, v), index=days).ffill()
    dollar_l = ff(dollar).shift(1)
    slope_l = (ff(dgs10) - ff(dgs2)).shift(1)
    nfci_s = pd.Series(nfci_weekly, index=fridays)
    pos = np.searchsorted(fridays.values, days.values, side="left") - 1
    nfci_l = pd.Series(np.where(pos >= 0, nfci_s.to_numpy()[np.maximum(pos, 0)], np.nan), index=days)

    rows = []
    for ci, cur in enumerate(currencies):
        load = 1.0 + 0.15 * rng.standard_normal(3)
        for ti, ten in enumerate(tenors):
            mean = -20 + 3 * ti - 5 * ci
            noise = _ar1(rng, n, noise_rho, noise_scale)
            y = (mean + load[0] * TRUE_SLOPES["NFCI_lag"] * nfci_l + load[1] * TRUE_SLOPES["Dollar_lag"] * (dollar_l - 110)
                 + load[2] * TRUE_SLOPES["Slope_lag"] * slope_l + noise)
            mask = rng.random(n) > 0.03
            if late_start and ci == len(currencies) - 1 and ti == len(tenors) - 1:
                mask &= days >= days[0] + pd.DateOffset(years=4)
            frame = pd.DataFrame({"date": days[mask].strftime("%Y-%m-%d"), "currency": cur,
                                  "tenor_years": f"{ten:g}", "cip_govt_bps": np.round(y[mask].to_numpy(), 6)})
            frame["cip_govt_bps"] = frame["cip_govt_bps"].map(lambda v: "" if np.isnan(v) else repr(float(v)))
            rows.append(frame)
    pd.concat(rows, ignore_index=True).to_csv(out / "cip_panel.csv", index=False)

    config = {
        "inputs": {"nfci": "nfci.csv", "dollar": "dollar.csv", "dgs10": "dgs10.csv", "dgs2": "dgs2.csv",
                   "vix": "vix.csv", "cip_panel": "cip_panel.csv"},
        "aggdiff": {"n_grid": [1, 5, 21]},
    }
    (out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False))
    return {k: out / v for k, v in config["inputs"].items()} | {"config": out / "config.yaml"}
