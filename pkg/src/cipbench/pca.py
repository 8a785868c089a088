"""Principal-component rotation of the standardized baseline state variables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from cipbench import BASELINE
from cipbench.errors import DataError
from cipbench.ingest import RegressionSample
from cipbench.regress import RegressorSet


@dataclass
class PcaDecomposition:
    variables: tuple
    means: np.ndarray
    sds: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray
    n_dates: int

    @property
    def components(self) -> list:
        return [f"PC{j + 1}" for j in range(len(self.variables))]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.explained_variance_ratio)

    def scores(self, values) -> np.ndarray:
        z = (np.asarray(values, dtype=float) - self.means) / self.sds
        return z @ self.loadings

    def loadings_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.loadings, index=list(self.variables), columns=self.components)


def state_matrix(sample: RegressionSample, variables=BASELINE, weighting: str = "dates") -> np.ndarray:
    """State values on the regression sample: one row per distinct date, or per sample row."""
    cols = list(variables)
    if weighting == "dates":
        return sample.frame.groupby("date", sort=True)[cols].first().to_numpy(dtype=float)
    if weighting == "rows":
        return sample.frame[cols].to_numpy(dtype=float)
    raise ValueError(f"unknown weighting {weighting!r}")


def pca_fit(values, variables=BASELINE) -> PcaDecomposition:
    """Eigen-decomposition of the correlation matrix of ``values`` (rows = dates).

    Components are ordered by explained variance; each column's
    largest-magnitude loading is made positive.
    """
    x = np.asarray(values, dtype=float)
    variables = tuple(variables)
    if x.shape[0] < 3:
        raise DataError("PCA needs at least 3 dates")
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    flat = [v for v, s in zip(variables, sds) if not s > 0]
    if flat:
        raise DataError(f"zero variance in {flat}")
    z = (x - means) / sds
    corr = (z.T @ z) / (len(z) - 1)
    evals, evecs = np.linalg.eigh(corr)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    pivots = np.abs(evecs).argmax(axis=0)
    signs = np.sign(evecs[pivots, np.arange(evecs.shape[1])])
    evecs = evecs * signs
    evals = np.clip(evals, 0.0, None)
    return PcaDecomposition(variables, means, sds, evecs, evals, evals / evals.sum(), x.shape[0])


def with_pc_scores(sample: RegressionSample, decomposition: PcaDecomposition, k: int) -> tuple:
    """Sample whose regressors are the first ``k`` component scores."""
    if not 1 <= k <= len(decomposition.variables):
        raise ValueError(f"k must be in 1..{len(decomposition.variables)}")
    scores = decomposition.scores(sample.frame[list(decomposition.variables)].to_numpy())
    names = tuple(decomposition.components[:k])
    frame = sample.frame.assign(**{n: scores[:, j] for j, n in enumerate(names)})
    label = "PC1" if k == 1 else f"PC1-PC{k}"
    return sample.with_frame(frame, names), RegressorSet(names, label=label)


def pc_regression(sample: RegressionSample, decomposition: PcaDecomposition, k: int, **fit_kwargs) -> dict:
    """Per-panel fits on the first ``k`` component scores."""
    from cipbench.regress import fit_separate

    pc_sample, spec = with_pc_scores(sample, decomposition, k)
    return fit_separate(pc_sample, spec, **fit_kwargs)
