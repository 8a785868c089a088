"""Newey-West (Bartlett kernel) covariance for slope coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from cipbench.errors import NumericalError


@dataclass(frozen=True)
class HacConfig:
    """``mode`` is ``"fixed"`` (use ``fixed_lag``) or ``"auto"`` (multiplier x NW rule)."""

    mode: str = "fixed"
    fixed_lag: int = 21
    auto_multiplier: float = 3.0
    cluster_by_date: bool = True

    def __post_init__(self):
        if self.mode not in ("fixed", "auto"):
            raise ValueError(f"unknown HAC mode {self.mode!r}")
        if self.fixed_lag < 0:
            raise ValueError("fixed_lag must be >= 0")
        if self.auto_multiplier < 1:
            raise ValueError("auto_multiplier must be >= 1")

    def lag_for(self, n: int) -> int:
        if self.mode == "fixed":
            return min(self.fixed_lag, max(n - 1, 0))
        return auto_lag(n, self.auto_multiplier)


DIFF_HAC = HacConfig(mode="auto")


def bartlett_weights(lag: int) -> np.ndarray:
    return 1.0 - np.arange(lag + 1) / (lag + 1.0)


def newey_west(scores, bread, lag: int, nobs: int | None = None, n_params: int | None = None) -> np.ndarray:
    """Sandwich ``bread @ S @ bread`` with a Bartlett-weighted long-run score covariance.

    ``scores`` holds one score vector per time period (rows in time order).
    ``bread`` is the inverse Gram matrix of the (partialled) design. When
    ``n_params`` is given the result is scaled by ``nobs / (nobs - n_params)``,
    where ``nobs`` defaults to the number of score rows.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    t = s.shape[0]
    if lag < 0 or lag >= t:
        raise NumericalError(f"HAC lag {lag} must be in [0, {t - 1}] for {t} periods")
    w = bartlett_weights(lag)
    meat = s.T @ s
    for ell in range(1, lag + 1):
        gamma = s[ell:].T @ s[:-ell]
        meat += w[ell] * (gamma + gamma.T)
    bread = np.asarray(bread, dtype=float)
    cov = bread @ meat @ bread
    if n_params is not None:
        n = t if nobs is None else nobs
        if n <= n_params:
            raise NumericalError(f"{n} observations cannot support {n_params} parameters")
        cov *= n / (n - n_params)
    return 0.5 * (cov + cov.T)


def clustered_scores(dates, design, resid):
    """Sum per-row scores ``x_i * e_i`` within each distinct date.

    Returns ``(unique_dates, scores)`` with dates ascending.
    """
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design[:, None]
    row_scores = design * np.asarray(resid, dtype=float)[:, None]
    uniq, inverse = np.unique(np.asarray(dates), return_inverse=True)
    out = np.zeros((len(uniq), design.shape[1]))
    np.add.at(out, inverse.ravel(), row_scores)
    return uniq, out


def auto_lag(n: int, multiplier: float = 3.0) -> int:
    """``floor(multiplier * floor(4 (n/100)^(2/9)))``, capped at ``n - 2``."""
    base = math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0))
    return max(0, min(math.floor(multiplier * base), n - 2))


def hac_covariance(design, resid, lag: int, n_params: int, dates=None) -> np.ndarray:
    """HAC covariance for the columns of an already-partialled design.

    With ``dates`` the scores are summed by date first and the kernel runs
    over the sequence of distinct dates.
    """
    design = np.asarray(design, dtype=float)
    nobs = design.shape[0]
    bread = np.linalg.inv(design.T @ design)
    if dates is None:
        scores = design * np.asarray(resid, dtype=float)[:, None]
    else:
        _, scores = clustered_scores(dates, design, resid)
    lag = min(lag, scores.shape[0] - 1)
    return newey_west(scores, bread, lag, nobs=nobs, n_params=n_params)


def coefficient_pvalues(fit) -> dict:
    """Two-sided normal p-values of coefficient / HAC standard error."""
    out = {}
    names = list(fit.hac_cov.index)
    inactive = getattr(fit, "inactive", ())
    for i, name in enumerate(names):
        if name in inactive:
            out[name] = float("nan")
            continue
        var = float(fit.hac_cov.iloc[i, i])
        if not var > 0:
            raise NumericalError(f"p-value undefined for {name}: HAC variance {var}")
        z = fit.coefficients[name] / math.sqrt(var)
        out[name] = float(2.0 * stats.norm.sf(abs(z)))
    return out


def standard_errors(fit) -> dict:
    return {n: float(math.sqrt(max(fit.hac_cov.loc[n, n], 0.0))) for n in fit.hac_cov.index}
