"""Engle-Granger residual cointegration diagnostics.

Critical values come from MacKinnon (2010), "Critical Values for
Cointegration Tests", Queen's Economics Department Working Paper 1227,
Table 2: tau response surfaces ``b_inf + b1/T + b2/T^2 + b3/T^3``. Rows are
indexed by the number of I(1) variables in the cointegrating regression
(N = 1 is the plain ADF test) and give the 1%, 5% and 10% quantiles.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from scipy import linalg

from cipbench.errors import DataError, NumericalError
from cipbench.ingest import RegressionSample
from cipbench.regress import ols

# fmt: off
MACKINNON_TAU = {
    "n": {
        1: [[-2.56574, -2.2358, -3.627, 0.0], [-1.941, -0.2686, -3.365, 31.223], [-1.61682, 0.2656, -2.714, 25.364]],
    },
    "c": {
        1: [[-3.43035, -6.5393, -16.786, -79.433], [-2.86154, -2.8903, -4.234, -40.04], [-2.56677, -1.5384, -2.809, 0.0]],
        2: [[-3.89644, -10.9519, -33.527, 0.0], [-3.33613, -6.1101, -6.823, 0.0], [-3.04445, -4.2412, -2.72, 0.0]],
        3: [[-4.29374, -14.4354, -33.195, 47.433], [-3.74066, -8.5632, -10.852, 27.982], [-3.45218, -6.2143, -3.718, 0.0]],
        4: [[-4.64332, -18.1031, -37.972, 0.0], [-4.096, -11.2349, -11.175, 0.0], [-3.8102, -8.3931, -4.137, 0.0]],
    },
    "ct": {
        1: [[-3.95877, -9.0531, -28.428, -134.155], [-3.41049, -4.3904, -9.036, -45.374], [-3.12705, -2.5856, -3.925, -22.38]],
        2: [[-4.32762, -15.4387, -35.679, 0.0], [-3.78057, -9.5106, -12.074, 0.0], [-3.49631, -7.0815, -7.538, 21.892]],
        3: [[-4.66305, -18.7688, -49.793, 104.244], [-4.1189, -11.8922, -19.031, 77.332], [-3.83511, -9.0723, -8.504, 35.403]],
        4: [[-4.9694, -22.4694, -52.599, 51.314], [-4.42871, -14.5876, -18.228, 39.647], [-4.14633, -11.25, -9.873, 54.109]],
    },
}
# fmt: on

DET_ALIASES = {
    "n": "n", "none": "n",
    "c": "c", "constant": "c",
    "ct": "ct", "constant+trend": "ct", "trend": "ct",
}
DET_LABELS = {"n": "none", "c": "constant", "ct": "constant+trend"}
RELATIONS = ("actual~regressors", "actual~fitted")


def _det(det: str) -> str:
    try:
        return DET_ALIASES[det]
    except KeyError:
        raise ValueError(f"unknown deterministic term {det!r}") from None


def mackinnon_crit(n_vars: int, det: str, nobs: float = math.inf) -> dict:
    """Critical tau values at 1%, 5%, 10% for ``n_vars`` I(1) variables."""
    det = _det(det)
    try:
        rows = MACKINNON_TAU[det][n_vars]
    except KeyError:
        raise ValueError(f"no critical values for N={n_vars}, det={det}") from None
    inv = 0.0 if math.isinf(nobs) else 1.0 / nobs
    vals = [b[0] + b[1] * inv + b[2] * inv**2 + b[3] * inv**3 for b in rows]
    return {"1%": vals[0], "5%": vals[1], "10%": vals[2]}


def schwert_lags(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _det_columns(n: int, det: str) -> list:
    det = _det(det)
    cols = []
    if det in ("c", "ct"):
        cols.append(np.ones(n))
    if det == "ct":
        cols.append(np.arange(1.0, n + 1.0))
    return cols


def adf_tau(series, det: str = "c", lags: int = 0) -> float:
    """Dickey-Fuller t-statistic on the lagged level.

    Regresses ``ds_t`` on ``s_{t-1}``, ``ds_{t-1} .. ds_{t-lags}`` and the
    deterministic terms, with classical OLS standard errors.
    """
    s = np.asarray(series, dtype=float)
    if lags < 0:
        raise ValueError("lags must be >= 0")
    if len(s) <= lags + 10:
        raise DataError(f"series of length {len(s)} too short for {lags} ADF lags")
    ds = np.diff(s)
    y = ds[lags:]
    cols = [s[lags:-1]]
    names = ["level_lag"]
    for j in range(1, lags + 1):
        cols.append(ds[lags - j : len(ds) - j])
        names.append(f"diff_lag{j}")
    det_cols = _det_columns(len(y), det)
    cols.extend(det_cols)
    names.extend(["const", "trend"][: len(det_cols)])
    X = np.column_stack(cols)
    coef, resid = ols(X, y, names)
    dof = len(y) - X.shape[1]
    sigma2 = float(resid @ resid) / dof
    r = linalg.qr(X, mode="r")[0][: X.shape[1]]
    rinv = linalg.solve_triangular(r, np.eye(X.shape[1]))
    var0 = sigma2 * float(rinv[0] @ rinv[0])
    if not var0 > 0:
        raise NumericalError("ADF regression fits exactly; tau undefined")
    return float(coef[0] / math.sqrt(var0))


@dataclass
class EgResult:
    unit: str
    key: str
    relation: str
    det: str
    tau: float
    cv5: float
    cv1: float
    reject5: bool
    reject1: bool
    adf_lags: int
    nobs: int

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise NumericalError(f"non-finite tau for {self.unit} {self.key}")


def eg_test(
    y,
    X,
    det: str = "c",
    lags: int | None = None,
    lag_rule=schwert_lags,
    trend_in: str = "first_stage",
    unit: str = "panel",
    key: str = "",
    relation: str = "",
) -> EgResult:
    """Two-step Engle-Granger test of ``y`` against the columns of ``X``.

    With ``trend_in="first_stage"`` (default) the deterministic terms enter
    the cointegrating regression and the residual ADF has none. With
    ``trend_in="adf"`` the first stage keeps only a constant and any trend
    moves into the residual ADF.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    k = X.shape[1]
    if k not in (1, 3):
        raise ValueError(f"Engle-Granger test supports 1 or 3 regressors, got {k}")
    det = _det(det)
    if trend_in == "first_stage":
        stage_det, adf_det = det, "n"
    elif trend_in == "adf":
        stage_det, adf_det = "c", ("ct" if det == "ct" else "n")
    else:
        raise ValueError(f"unknown trend placement {trend_in!r}")

    design = np.column_stack([X, *_det_columns(len(y), stage_det)])
    names = [f"x{j}" for j in range(k)] + ["const", "trend"][: design.shape[1] - k]
    _, resid = ols(design, y, names)
    scale = max(float(np.std(y)), np.finfo(float).tiny)
    if float(np.std(resid)) <= 1e-10 * scale:
        raise NumericalError(f"{unit} {key}: first-stage residuals are degenerate (y collinear with X)")
    nlags = lag_rule(len(resid)) if lags is None else lags
    tau = adf_tau(resid, adf_det, nlags)
    cv = mackinnon_crit(k + 1, det, len(resid) - 1)
    reject5 = tau < cv["5%"]
    reject1 = tau < cv["1%"]
    return EgResult(unit, str(key), relation, DET_LABELS[det], tau, cv["5%"], cv["1%"], bool(reject5), bool(reject1), int(nlags), len(resid))


def median_aggregate(sample: RegressionSample, level: str, fitted: np.ndarray | None = None) -> dict:
    """Daily cross-sectional medians of CIP (and fitted values) per unit.

    ``level`` is ``"currency"`` (one series per currency) or ``"global"``
    (one series, key ``"ALL"``). Regressors are common across panels at a
    date and pass through unchanged.
    """
    frame = sample.frame
    if frame.empty:
        raise DataError("cannot aggregate an empty sample")
    regs = list(sample.regressors)
    if fitted is not None:
        frame = frame.assign(fitted=np.asarray(fitted, dtype=float))
    if level == "currency":
        groups = frame.groupby("currency", sort=True)
    elif level == "global":
        groups = [("ALL", frame)]
    else:
        raise ValueError(f"unknown aggregation level {level!r}")
    out = {}
    for key, rows in groups:
        by_date = rows.groupby("date", sort=True)
        agg = by_date[regs].first()
        agg.insert(0, "cip_bps", by_date["cip_bps"].median())
        if fitted is not None:
            agg["fitted"] = by_date["fitted"].median()
        out[key] = agg.reset_index()
    return out


def fitted_in_sample_order(sample: RegressionSample, fits: dict) -> np.ndarray:
    """Per-row fitted values of per-panel fits, aligned to ``sample.frame``."""
    frame = sample.frame
    out = np.full(len(frame), np.nan)
    idx = frame.groupby(["currency", "tenor"], sort=True).indices
    for (cur, ten), rows in idx.items():
        fit = fits.get((cur, float(ten)))
        if fit is None:
            continue
        order = np.argsort(frame["date"].to_numpy()[rows], kind="mergesort")
        out[rows[order]] = fit.fitted
    return out


def eg_grid(
    sample: RegressionSample,
    fits: dict,
    dets=("c", "ct"),
    lags: int | None = None,
    trend_in: str = "first_stage",
) -> tuple:
    """Every (unit, relation, det) cell; returns ``(results, counts)``."""
    regs = list(sample.regressors)
    results = []
    for det in dets:
        for key, fit in fits.items():
            rows = sample.frame[(sample.frame["currency"] == key[0]) & (sample.frame["tenor"] == key[1])].sort_values("date")
            label = f"{key[0]}|{key[1]:g}"
            results.append(eg_test(fit.y, rows[regs].to_numpy(), det, lags, trend_in=trend_in, unit="panel", key=label, relation=RELATIONS[0]))
            results.append(eg_test(fit.y, fit.fitted, det, lags, trend_in=trend_in, unit="panel", key=label, relation=RELATIONS[1]))
    fitted = fitted_in_sample_order(sample, fits)
    for level in ("currency", "global"):
        for key, agg in median_aggregate(sample, level, fitted).items():
            agg = agg.dropna()
            for det in dets:
                results.append(eg_test(agg["cip_bps"], agg[regs].to_numpy(), det, lags, trend_in=trend_in, unit=level, key=key, relation=RELATIONS[0]))
                results.append(eg_test(agg["cip_bps"], agg["fitted"], det, lags, trend_in=trend_in, unit=level, key=key, relation=RELATIONS[1]))
    return results, eg_counts(results)


def eg_counts(results) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(r) for r in results])
    order = {"panel": 0, "currency": 1, "global": 2}
    counts = frame.groupby(["unit", "relation", "det"], sort=False).agg(
        reject5_count=("reject5", "sum"), reject1_count=("reject1", "sum"), denominator=("reject5", "size")
    ).reset_index()
    counts["_u"] = counts["unit"].map(order)
    counts["_r"] = counts["relation"].map(RELATIONS.index)
    counts = counts.sort_values(["_u", "_r", "det"], kind="mergesort").drop(columns=["_u", "_r"]).reset_index(drop=True)
    return counts
