"""Least squares with absorbed fixed effects and the benchmark fit families.

Three families share one estimator:

* ``fit_separate``: one regression per currency-tenor panel (panel intercept).
* ``fit_common_slope_currency``: all tenors of a currency stacked, tenor
  fixed effects, shared slopes.
* ``fit_pooled``: everything stacked, additive currency and tenor effects.

Fixed effects are absorbed by within-group demeaning (first grouping) and
by partialling out reference-coded dummies (any further grouping), so the
slope solve never sees the full dummy matrix.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

from cipbench import BASELINE
from cipbench.errors import DataError, NumericalError, RankDeficientError
from cipbench.hac import DIFF_HAC, HacConfig, hac_covariance
from cipbench.ingest import QEND, RegressionSample, fmt_tenor

log = logging.getLogger(__name__)

FE_PANEL = "panel-intercept"
FE_TENOR = "tenor-within-currency"
FE_TWOWAY = "currency-and-tenor"
FIXED_EFFECTS = (FE_PANEL, FE_TENOR, FE_TWOWAY)
MIN_LEVEL_NOBS = 30
MIN_DIFF_NOBS = 5
DROPPABLE = frozenset({QEND})


@dataclass(frozen=True)
class RegressorSet:
    names: tuple = BASELINE
    fixed_effects: str = FE_PANEL
    label: str = "baseline"

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        # an empty tuple is the intercept-only model
        if len(set(names)) != len(names):
            raise ValueError(f"regressor names must be unique: {names}")
        if self.fixed_effects not in FIXED_EFFECTS:
            raise ValueError(f"unknown fixed-effect structure {self.fixed_effects!r}")

    def with_fe(self, fixed_effects: str) -> "RegressorSet":
        return RegressorSet(self.names, fixed_effects, self.label)


# the regressor menu of the robustness tables
SPEC_MENU = {
    "baseline": RegressorSet(BASELINE, label="baseline"),
    "baseline_vix": RegressorSet((*BASELINE, "VIX_lag"), label="baseline_vix"),
    "vix_dollar_slope": RegressorSet(("VIX_lag", "Dollar_lag", "Slope_lag"), label="vix_dollar_slope"),
    "vix_only": RegressorSet(("VIX_lag",), label="vix_only"),
    "baseline_qend": RegressorSet((*BASELINE, QEND), label="baseline_qend"),
}


def _collinear_columns(X: np.ndarray, names, tol_scale: float) -> list:
    """Columns that add nothing to the span of the columns before them."""
    kept, offenders = [], []
    for j in range(X.shape[1]):
        trial = X[:, kept + [j]]
        r = linalg.qr(trial, mode="r", pivoting=True)[0]
        diag = np.abs(np.diag(r))
        if diag.size and (diag > tol_scale * max(diag[0], 1e-300)).sum() == len(kept) + 1:
            kept.append(j)
        else:
            offenders.append(names[j])
    return offenders


def ols(X, y, names=None):
    """Least squares via column-pivoted QR.

    Returns ``(coefficients, residuals)``. Raises ``RankDeficientError``
    naming the columns that are linear combinations of earlier ones.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if n <= p:
        raise NumericalError(f"{n} rows cannot identify {p} coefficients")
    if p == 0:
        return np.zeros(0), y.copy()
    q, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol_scale = np.finfo(float).eps * max(n, p)
    if diag[0] == 0 or (diag <= tol_scale * diag[0]).any():
        raise RankDeficientError(_collinear_columns(X, names, tol_scale) or names)
    coef = np.empty(p)
    coef[piv] = linalg.solve_triangular(r, q.T @ y)
    return coef, y - X @ coef


@dataclass
class FixedEffects:
    """Groupings to absorb; ``codes[j]`` indexes into ``labels[j]``."""

    names: tuple = ()
    codes: tuple = ()
    labels: tuple = ()

    @classmethod
    def from_columns(cls, frame: pd.DataFrame, columns) -> "FixedEffects":
        codes, labels = [], []
        for col in columns:
            c, uniq = pd.factorize(frame[col], sort=True)
            codes.append(c.astype(np.intp))
            labels.append(tuple(uniq.tolist()))
        return cls(tuple(columns), tuple(codes), tuple(labels))


@dataclass
class FitResult:
    spec: RegressorSet
    scope: str
    key: object
    coefficients: dict
    fe_estimates: dict
    hac_cov: pd.DataFrame
    nobs: int
    n_params: int
    y: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    resid: np.ndarray = field(repr=False)
    dates: np.ndarray = field(repr=False)
    panel_index: np.ndarray | None = field(default=None, repr=False)
    hac_lag: int = 0
    design: np.ndarray | None = field(default=None, repr=False)
    inactive: tuple = ()

    @property
    def rss(self) -> float:
        return float(self.resid @ self.resid)

    @property
    def tss(self) -> float:
        d = self.y - self.y.mean()
        return float(d @ d)

    @property
    def r2(self) -> float:
        """Centered R^2 about this fit's own mean."""
        return 1.0 - self.rss / self.tss

    def slope_vector(self) -> np.ndarray:
        return np.array([self.coefficients[n] for n in self.spec.names])


def _group_means(a: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    if a.ndim == 1:
        return np.bincount(codes, weights=a, minlength=n_groups) / counts
    if a.shape[1] == 0:
        return np.zeros((n_groups, 0))
    return np.column_stack([np.bincount(codes, weights=a[:, j], minlength=n_groups) for j in range(a.shape[1])]) / counts[:, None]


def _dummies(codes: np.ndarray, n_groups: int) -> np.ndarray:
    """Reference-coded dummies (group 0 dropped)."""
    d = np.zeros((len(codes), max(n_groups - 1, 0)))
    hit = codes > 0
    d[np.flatnonzero(hit), codes[hit] - 1] = 1.0
    return d


def absorb(y: np.ndarray, X: np.ndarray, fe: FixedEffects):
    """Partial the fixed effects out of ``y`` and ``X``.

    Returns ``(y_tilde, X_tilde, n_absorbed)`` where ``n_absorbed`` counts
    the linearly independent fixed-effect dimensions.
    """
    if fe.codes:
        codes0 = fe.codes[0]
        g0 = len(fe.labels[0])
    else:
        codes0 = np.zeros(len(y), dtype=np.intp)
        g0 = 1
    yt = y - _group_means(y, codes0, g0)[codes0]
    Xt = X - _group_means(X, codes0, g0)[codes0]
    n_absorbed = int((np.bincount(codes0, minlength=g0) > 0).sum())
    if len(fe.codes) > 1:
        D = np.column_stack([_dummies(c, len(lab)) for c, lab in zip(fe.codes[1:], fe.labels[1:])])
        if D.shape[1]:
            Dt = D - _group_means(D, codes0, g0)[codes0]
            coef, _, rank, _ = linalg.lstsq(Dt, np.column_stack([yt, Xt]), lapack_driver="gelsy")
            resid = np.column_stack([yt, Xt]) - Dt @ coef
            yt, Xt = resid[:, 0], resid[:, 1:]
            n_absorbed += int(rank)
    return yt, Xt, n_absorbed


def _recover_effects(contrib: np.ndarray, fe: FixedEffects) -> dict:
    """Solve row-level fixed-effect contributions for reference-normalized effects."""
    if not fe.codes:
        return {"intercept": float(contrib.mean())}
    cells = np.column_stack(fe.codes)
    uniq, first = np.unique(cells, axis=0, return_index=True)
    values = contrib[first]
    D = np.column_stack([np.ones(len(uniq))] + [_dummies(uniq[:, j], len(lab)) for j, lab in enumerate(fe.labels)])
    coef = linalg.lstsq(D, values, lapack_driver="gelsy")[0]
    out = {"intercept": float(coef[0])}
    pos = 1
    for name, labels in zip(fe.names, fe.labels):
        effects = {labels[0]: 0.0}
        for lab in labels[1:]:
            effects[lab] = float(coef[pos])
            pos += 1
        out[name] = effects
    return out


def estimate(
    y,
    X,
    names,
    fe: FixedEffects | None = None,
    dates=None,
    hac: HacConfig | None = None,
    cluster: bool = False,
    spec: RegressorSet | None = None,
    scope: str = "panel",
    key=None,
    panel_index=None,
    keep_design: bool = False,
) -> FitResult:
    """Fit ``y`` on ``X`` with absorbed fixed effects; optional HAC covariance.

    ``hac=None`` skips the covariance (used by the out-of-sample loops).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    fe = fe or FixedEffects()
    all_names = list(names)
    # an indicator that never fires carries no information; drop it instead of failing
    inactive = tuple(n for j, n in enumerate(all_names) if n in DROPPABLE and not X[:, j].any())
    if inactive:
        keep = [j for j, n in enumerate(all_names) if n not in inactive]
        X = X[:, keep]
    names = [n for n in all_names if n not in inactive]
    yt, Xt, n_absorbed = absorb(y, X, fe)
    n_params = len(names) + n_absorbed
    if len(y) <= n_params:
        raise NumericalError(f"{key}: {len(y)} rows cannot identify {n_params} parameters")
    beta, resid = ols(Xt, yt, names)
    fitted = y - resid
    effects = _recover_effects(fitted - X @ beta, fe)

    if hac is not None:
        lag = hac.lag_for(len(np.unique(dates)) if cluster else len(y))
        cov = hac_covariance(Xt, resid, lag, n_params, dates=dates if cluster else None)
    else:
        lag = 0
        cov = np.full((len(names), len(names)), np.nan)
    coefficients = dict(zip(names, beta.tolist()))
    hac_cov = pd.DataFrame(cov, index=names, columns=names)
    if inactive:
        coefficients = {n: coefficients.get(n, 0.0) for n in all_names}
        hac_cov = hac_cov.reindex(index=all_names, columns=all_names)
    return FitResult(
        spec=spec or RegressorSet(tuple(all_names)),
        scope=scope,
        key=key,
        coefficients=coefficients,
        fe_estimates=effects,
        hac_cov=hac_cov,
        nobs=len(y),
        n_params=n_params,
        y=y,
        fitted=fitted,
        resid=resid,
        dates=np.asarray(dates) if dates is not None else np.arange(len(y)),
        panel_index=panel_index,
        hac_lag=lag,
        design=Xt if keep_design else None,
        inactive=inactive,
    )


def predict(fit: FitResult, rows: pd.DataFrame) -> np.ndarray:
    """Out-of-sample prediction. Unseen fixed-effect groups get effect 0 (the global intercept)."""
    X = rows[list(fit.spec.names)].to_numpy(dtype=float)
    pred = fit.fe_estimates["intercept"] + X @ fit.slope_vector()
    for name, effects in fit.fe_estimates.items():
        if name == "intercept":
            continue
        pred = pred + rows[name].map(effects).fillna(0.0).to_numpy(dtype=float)
    return pred


def _pmap(func, items, jobs: int):
    if jobs <= 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def _panel_codes(frame: pd.DataFrame) -> np.ndarray:
    return frame.groupby(["currency", "tenor"], sort=True).ngroup().to_numpy()


def fit_separate(
    sample: RegressionSample,
    spec: RegressorSet = SPEC_MENU["baseline"],
    hac: HacConfig | None = HacConfig(),
    min_nobs: int = MIN_LEVEL_NOBS,
    jobs: int = 1,
    warnings: list | None = None,
) -> dict:
    """One regression per currency-tenor panel, keyed by ``(currency, tenor)``."""
    names = list(spec.names)
    spec = spec.with_fe(FE_PANEL)
    panels = list(sample.panels())
    warnings = sample.warnings if warnings is None else warnings

    def one(item):
        key, rows = item
        if len(rows) < max(min_nobs, len(names) + 2):
            return key, None
        rows = rows.sort_values("date", kind="mergesort")
        return key, estimate(
            rows["cip_bps"].to_numpy(), rows[names].to_numpy(), names,
            dates=rows["date"].to_numpy(), hac=hac, spec=spec, scope="panel", key=key,
        )

    fits = {}
    for key, fit in _pmap(one, panels, jobs):
        if fit is None:
            msg = f"panel {key[0]} {fmt_tenor(key[1])}: too few rows for {spec.label}, skipped"
            log.warning(msg)
            warnings.append(msg)
        else:
            fits[key] = fit
    if not fits:
        raise DataError("every panel was skipped; nothing to estimate")
    return dict(sorted(fits.items()))


def _fit_stack(rows: pd.DataFrame, spec: RegressorSet, fe_columns, hac, scope, key) -> FitResult:
    names = list(spec.names)
    rows = rows.sort_values(["date", "currency", "tenor"], kind="mergesort")
    fe = FixedEffects.from_columns(rows, fe_columns)
    return estimate(
        rows["cip_bps"].to_numpy(), rows[names].to_numpy(), names, fe=fe,
        dates=rows["date"].to_numpy(), hac=hac, cluster=hac.cluster_by_date if hac else False,
        spec=spec, scope=scope, key=key, panel_index=_panel_codes(rows),
    )


def fit_common_slope_currency(
    sample: RegressionSample,
    spec: RegressorSet = SPEC_MENU["baseline"],
    hac: HacConfig | None = HacConfig(),
    jobs: int = 1,
    warnings: list | None = None,
) -> dict:
    """Per currency: tenors stacked, tenor fixed effects, common slopes."""
    spec = spec.with_fe(FE_TENOR)
    warnings = sample.warnings if warnings is None else warnings
    groups = list(sample.frame.groupby("currency", sort=True))

    def one(item):
        cur, rows = item
        fe_cols = ["tenor"]
        if rows["tenor"].nunique() < 2:
            msg = f"currency {cur}: single tenor, falling back to a panel intercept"
            log.warning(msg)
            warnings.append(msg)
            fe_cols = []
        return cur, _fit_stack(rows, spec, fe_cols, hac, "currency", cur)

    return dict(_pmap(one, groups, jobs))


def fit_pooled(
    sample: RegressionSample,
    spec: RegressorSet = SPEC_MENU["baseline"],
    hac: HacConfig | None = HacConfig(),
) -> FitResult:
    """All panels stacked with additive currency and tenor fixed effects."""
    frame = sample.frame
    if frame["currency"].nunique() < 2 or frame["tenor"].nunique() < 2:
        raise DataError("pooled fit needs at least two currencies and two tenors")
    return _fit_stack(frame, spec.with_fe(FE_TWOWAY), ["currency", "tenor"], hac, "pooled", "ALL")


def fit_diff(
    diff_sample: RegressionSample,
    spec: RegressorSet = SPEC_MENU["baseline"],
    hac: HacConfig | None = DIFF_HAC,
    min_rows: int = MIN_DIFF_NOBS,
    jobs: int = 1,
) -> dict:
    """Per-panel fits of block-mean differences (HAC lag from the automatic rule)."""
    return fit_separate(diff_sample, spec, hac=hac, min_nobs=min_rows, jobs=jobs)


def fit_scope(sample, spec, scope: str, hac=HacConfig(), jobs: int = 1):
    if scope == "separate":
        return fit_separate(sample, spec, hac=hac, jobs=jobs)
    if scope == "currency":
        return fit_common_slope_currency(sample, spec, hac=hac, jobs=jobs)
    if scope == "pooled":
        return {"ALL": fit_pooled(sample, spec, hac=hac)}
    raise ValueError(f"unknown scope {scope!r}")


def _as_list(fits):
    if isinstance(fits, FitResult):
        return [fits]
    if isinstance(fits, dict):
        return [fits[k] for k in sorted(fits, key=str)]
    return list(fits)


def within_r2(fits) -> float:
    """1 - sum RSS / sum TSS, each TSS taken about its own panel's mean."""
    rss = tss = 0.0
    for fit in _as_list(fits):
        rss += fit.rss
        if fit.panel_index is None:
            tss += fit.tss
        else:
            g = int(fit.panel_index.max()) + 1
            dev = fit.y - _group_means(fit.y, fit.panel_index, g)[fit.panel_index]
            tss += float(dev @ dev)
    if tss <= 0:
        raise NumericalError("total sum of squares is zero; R^2 undefined")
    return 1.0 - rss / tss


def stack_r2(fits) -> float:
    """1 - sum RSS / sum TSS, each TSS taken about its own fit's mean.

    For per-panel fits this equals ``within_r2``; for stacked fits the
    benchmark is the stack mean (currency mean, or grand mean when pooled).
    """
    rss = tss = 0.0
    for fit in _as_list(fits):
        rss += fit.rss
        tss += fit.tss
    if tss <= 0:
        raise NumericalError("total sum of squares is zero; R^2 undefined")
    return 1.0 - rss / tss
