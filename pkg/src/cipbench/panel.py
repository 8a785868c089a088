"""Per-panel derived structures: quarter-end flags and block-mean differences."""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd

from cipbench.ingest import RegressionSample, fmt_tenor

log = logging.getLogger(__name__)

SHORT_TENOR_MAX = 1.0
DEFAULT_N_GRID = (1, 5, 21, 32, 50, 63)


def quarter_end_flags(panel_dates, window: int, tenor: float) -> np.ndarray:
    """1.0 on the last ``window`` observed dates of each calendar quarter, short tenors only."""
    if window < 1:
        raise ValueError("window must be >= 1")
    dates = pd.DatetimeIndex(np.asarray(panel_dates, dtype="datetime64[ns]"))
    flags = np.zeros(len(dates))
    if tenor > SHORT_TENOR_MAX or len(dates) == 0:
        return flags
    quarter = dates.year.to_numpy() * 4 + dates.quarter.to_numpy()
    # rank from the end of each quarter: 0 = last observed day
    from_end = pd.Series(np.arange(len(dates))).groupby(quarter).cumcount(ascending=False).to_numpy()
    flags[from_end < window] = 1.0
    return flags


def block_aggregate_diff(rows: pd.DataFrame, n: int, columns) -> pd.DataFrame:
    """Difference adjacent non-overlapping ``n``-row block means.

    Blocks start at the first row; a trailing partial block is dropped.
    Returns one row per block pair, with ``block`` = index of the later block
    and ``date`` = last date of the later block.
    """
    if n < 1:
        raise ValueError("block size must be >= 1")
    columns = list(columns)
    n_blocks = len(rows) // n
    if n_blocks < 2:
        log.warning("panel with %d rows too short for N=%d blocks", len(rows), n)
        return pd.DataFrame(columns=["block", "date", *columns])
    used = rows.iloc[: n_blocks * n]
    values = used[columns].to_numpy(dtype=float).reshape(n_blocks, n, len(columns))
    means = values.mean(axis=1)
    diffs = np.diff(means, axis=0)
    last_dates = used["date"].to_numpy()[n - 1 :: n]
    out = pd.DataFrame(diffs, columns=columns)
    out.insert(0, "date", last_dates[1:])
    out.insert(0, "block", np.arange(1, n_blocks))
    return out


def aggregate_differences(sample: RegressionSample, n: int) -> RegressionSample:
    """Block-mean differences for every panel of ``sample``, keeping panel keys."""
    columns = ["cip_bps", *sample.regressors]
    parts, counts, warnings = [], {}, []
    for (cur, ten), rows in sample.panels():
        diff = block_aggregate_diff(rows, n, columns)
        if diff.empty:
            warnings.append(f"panel {cur} {fmt_tenor(ten)}: fewer than {2 * n} rows at N={n}")
            continue
        diff.insert(0, "tenor", ten)
        diff.insert(0, "currency", cur)
        parts.append(diff)
        counts[(cur, ten)] = len(diff)
    frame = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=["currency", "tenor", "block", "date", *columns])
    return RegressionSample(frame, tuple(sample.regressors), counts, list(sample.warnings) + warnings)
