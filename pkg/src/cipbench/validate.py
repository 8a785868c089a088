"""Out-of-sample protocols: leave-one-year-out and expanding window.

Both protocols share one training extractor (``training_mask``) and one
per-year fitting routine, so the information-barrier check exercises the
exact code path the evaluation uses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from cipbench.errors import BenchError, DataError
from cipbench.ingest import RegressionSample, fmt_tenor
from cipbench.regress import (
    MIN_LEVEL_NOBS,
    FixedEffects,
    RegressorSet,
    _pmap,
    estimate,
    predict,
)

log = logging.getLogger(__name__)

LOYO = "loyo"
EXPANDING = "expanding"
MIN_EXPANDING_TRAIN = 100
PERTURBATION_BPS = 1000.0


class LeakageError(BenchError):
    exit_code = 4


@dataclass
class CvReport:
    protocol: str
    spec_label: str
    scope: str
    per_year: pd.DataFrame
    overall_pooled_r2: float
    mean_year_r2: float
    panel_year: pd.DataFrame = field(repr=False)
    predictions: pd.DataFrame = field(repr=False)
    warnings: list = field(default_factory=list, repr=False)

    @property
    def total_nobs(self) -> int:
        return int(self.per_year["nobs"].sum())

    def tidy(self) -> pd.DataFrame:
        out = self.per_year.copy()
        out.insert(0, "scope", self.scope)
        out.insert(0, "spec", self.spec_label)
        out.insert(0, "protocol", self.protocol)
        return out


def observation_years(frame: pd.DataFrame) -> np.ndarray:
    return pd.DatetimeIndex(frame["date"]).year.to_numpy()


def training_mask(years: np.ndarray, protocol: str, year: int) -> np.ndarray:
    if protocol == LOYO:
        return years != year
    if protocol == EXPANDING:
        return years < year
    raise ValueError(f"unknown protocol {protocol!r}")


def holdout_years(years, protocol: str, initial_years: int = 3) -> list:
    distinct = sorted(set(int(y) for y in years))
    if protocol == LOYO:
        if len(distinct) < 3:
            raise DataError(f"LOYO needs at least 3 calendar years, found {len(distinct)}")
        return distinct
    if len(distinct) < initial_years + 1:
        raise DataError(f"expanding window needs {initial_years + 1} calendar years, found {len(distinct)}")
    first = distinct[0] + initial_years
    return [y for y in distinct if y >= first]


def _unit_column(scope: str):
    if scope == "separate":
        return ["currency", "tenor"]
    if scope == "currency":
        return ["currency"]
    raise ValueError(f"unknown validation scope {scope!r}")


def _unit_key(scope, key):
    if scope == "separate":
        return (key[0], float(key[1]))
    return key[0] if isinstance(key, tuple) else key


def fit_training_units(train: pd.DataFrame, spec: RegressorSet, scope: str, min_train: int) -> dict:
    """Coefficients per unit (panel or currency) from training rows only."""
    names = list(spec.names)
    fits = {}
    for key, rows in train.groupby(_unit_column(scope), sort=True):
        key = _unit_key(scope, key)
        if len(rows) < max(min_train, len(names) + 2):
            continue
        rows = rows.sort_values(["date", "tenor"], kind="mergesort")
        fe = FixedEffects.from_columns(rows, ["tenor"]) if scope == "currency" and rows["tenor"].nunique() > 1 else None
        fits[key] = estimate(rows["cip_bps"].to_numpy(), rows[names].to_numpy(), names, fe=fe, spec=spec, scope=scope, key=key)
    return fits


def _evaluate_year(frame, years, year, protocol, spec, scope, min_train):
    train = frame.loc[training_mask(years, protocol, year)]
    test = frame.loc[years == year]
    fits = fit_training_units(train, spec, scope, min_train)
    parts, warnings = [], []
    for key, rows in test.groupby(_unit_column(scope), sort=True):
        key = _unit_key(scope, key)
        fit = fits.get(key)
        if fit is None:
            label = f"{key[0]} {fmt_tenor(key[1])}" if scope == "separate" else key
            warnings.append(f"{protocol} {year}: unit {label} lacks training rows, skipped")
            continue
        if scope == "currency":
            unseen = set(rows["tenor"]) - set(train.loc[train["currency"] == key, "tenor"])
            if unseen:
                warnings.append(f"{protocol} {year}: {key} tenors {sorted(unseen)} unseen in training, global intercept used")
        pred = predict(fit, rows)
        parts.append(pd.DataFrame({
            "currency": rows["currency"].to_numpy(),
            "tenor": rows["tenor"].to_numpy(),
            "date": rows["date"].to_numpy(),
            "year": year,
            "actual": rows["cip_bps"].to_numpy(),
            "predicted": pred,
            "benchmark": fit.y.mean(),
        }))
    return parts, warnings


def _summarize(parts: list, protocol: str, spec: RegressorSet, scope: str, warnings: list) -> CvReport:
    if not parts:
        raise DataError(f"{protocol}: no holdout predictions could be formed")
    pred = pd.concat(parts, ignore_index=True)
    pred["sq_err"] = (pred["actual"] - pred["predicted"]) ** 2
    pred["sq_bench"] = (pred["actual"] - pred["benchmark"]) ** 2
    panel_year = pred.groupby(["year", "currency", "tenor"], sort=True).agg(
        nobs=("sq_err", "size"), sse=("sq_err", "sum"), sbe=("sq_bench", "sum")
    ).reset_index()
    panel_year["r2"] = 1.0 - panel_year["sse"] / panel_year["sbe"]
    per_year = panel_year.groupby("year", sort=True).agg(
        nobs=("nobs", "sum"), panels=("nobs", "size"), sse=("sse", "sum"), sbe=("sbe", "sum"),
        median_panel_r2=("r2", "median"),
    ).reset_index()
    per_year["pooled_r2"] = 1.0 - per_year["sse"] / per_year["sbe"]
    per_year = per_year[["year", "nobs", "panels", "pooled_r2", "median_panel_r2", "sse", "sbe"]]
    overall = 1.0 - per_year["sse"].sum() / per_year["sbe"].sum()
    for msg in warnings:
        log.warning(msg)
    return CvReport(
        protocol=protocol,
        spec_label=spec.label,
        scope=scope,
        per_year=per_year,
        overall_pooled_r2=float(overall),
        mean_year_r2=float(per_year["pooled_r2"].mean()),
        panel_year=panel_year,
        predictions=pred.drop(columns=["sq_err", "sq_bench"]),
        warnings=warnings,
    )


def _evaluate(sample, spec, scope, protocol, years_to_test, min_train, jobs):
    frame = sample.frame
    years = observation_years(frame)
    results = _pmap(lambda y: _evaluate_year(frame, years, y, protocol, spec, scope, min_train), years_to_test, jobs)
    parts, warnings = [], []
    for p, w in results:
        parts.extend(p)
        warnings.extend(w)
    return _summarize(parts, protocol, spec, scope, warnings)


def loyo_evaluate(
    sample: RegressionSample,
    spec: RegressorSet,
    scope: str = "separate",
    min_train: int = MIN_LEVEL_NOBS,
    jobs: int = 1,
) -> CvReport:
    """Leave one calendar year out; benchmark is the training-sample unit mean."""
    years = holdout_years(observation_years(sample.frame), LOYO)
    return _evaluate(sample, spec, scope, LOYO, years, min_train, jobs)


def expanding_evaluate(
    sample: RegressionSample,
    spec: RegressorSet,
    initial_years: int = 3,
    scope: str = "separate",
    min_train: int = MIN_EXPANDING_TRAIN,
    jobs: int = 1,
) -> CvReport:
    """Predict each year from all strictly earlier years, after an initial window."""
    years = holdout_years(observation_years(sample.frame), EXPANDING, initial_years)
    return _evaluate(sample, spec, scope, EXPANDING, years, min_train, jobs)


def _coef_table(fits: dict) -> dict:
    return {k: np.array([f.fe_estimates["intercept"], *f.slope_vector()]) for k, f in fits.items()}


def information_barrier_check(
    sample: RegressionSample,
    spec: RegressorSet,
    protocol: str,
    year: int,
    scope: str = "separate",
    min_train: int | None = None,
) -> dict:
    """Prove year-``year`` training fits ignore holdout responses.

    Shifts every response the protocol must not see (year == Y for LOYO,
    year >= Y for expanding) by +1000 bps, refits through the same training
    extractor, and requires bit-identical coefficients. Also confirms a
    training-year perturbation does move them.
    """
    if min_train is None:
        min_train = MIN_LEVEL_NOBS if protocol == LOYO else MIN_EXPANDING_TRAIN
    frame = sample.frame
    years = observation_years(frame)
    hidden = years == year if protocol == LOYO else years >= year

    def coefs(f):
        return _coef_table(fit_training_units(f.loc[training_mask(years, protocol, year)], spec, scope, min_train))

    base = coefs(frame)
    shifted = frame.copy()
    shifted.loc[hidden, "cip_bps"] += PERTURBATION_BPS
    after = coefs(shifted)
    leaks = sorted((str(k) for k in base if k not in after or not np.array_equal(base[k], after[k])))
    if leaks or set(base) != set(after):
        raise LeakageError(f"{protocol} {year}: training coefficients moved for {leaks}")

    train_years = sorted(set(years[training_mask(years, protocol, year)].tolist()))
    sensitive = None
    if train_years:
        poked = frame.copy()
        poked.loc[years == train_years[0], "cip_bps"] += PERTURBATION_BPS * (1 + np.arange((years == train_years[0]).sum()) % 7)
        moved = coefs(poked)
        sensitive = any(not np.array_equal(base[k], moved.get(k, base[k])) for k in base)
    return {
        "protocol": protocol,
        "year": int(year),
        "scope": scope,
        "units": len(base),
        "hidden_rows": int(hidden.sum()),
        "leaks": 0,
        "training_sensitive": sensitive,
    }


def barrier_grid(sample, spec, protocol, scope="separate", initial_years=3) -> pd.DataFrame:
    years = holdout_years(observation_years(sample.frame), protocol, initial_years)
    return pd.DataFrame([information_barrier_check(sample, spec, protocol, y, scope) for y in years])
