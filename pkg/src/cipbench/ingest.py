"""Input parsing and lag alignment of the state variables on the CIP calendar.

State series arrive as FRED-style two-column CSV files. The CIP panel is a
long table keyed by (date, currency, tenor). All state variables are lagged
so that a row dated ``t`` only ever sees information dated strictly before
``t``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal, InvalidOperation
from typing import Iterator, NamedTuple

import numpy as np
import pandas as pd

from cipbench.errors import DataError

log = logging.getLogger(__name__)

CURRENCIES = ("AUD", "CAD", "CHF", "DKK", "EUR", "GBP", "JPY", "KRW", "NOK", "NZD", "SEK")
TENORS = (0.25, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0, 30.0)
_TENOR_LOOKUP = {Decimal(str(t)).normalize(): t for t in TENORS}
SAMPLE_START = date(2008, 1, 1)
SAMPLE_END = date(2025, 6, 30)

STATE_COLUMNS = ("NFCI_lag", "Dollar_lag", "Slope_lag", "VIX_lag")
QEND = "QEndShort"
MISSING_TOKENS = frozenset({"", "."})

_COLUMN_ALIASES = {
    "date": ("date", "observation_date", "DATE"),
    "currency": ("currency", "ccy"),
    "tenor": ("tenor_years", "tenor"),
    "cip_bps": ("cip_govt_bps", "cip_govt", "cip_bps"),
}


def fmt_tenor(tenor: float) -> str:
    return f"{tenor:g}"


@dataclass(frozen=True)
class DailySeries:
    name: str
    dates: np.ndarray
    values: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise DataError(f"{self.name}: dates and values must be 1-d and equally long")
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise DataError(f"{self.name}: dates are not strictly increasing")
        if np.isnan(values).any():
            raise DataError(f"{self.name}: stored values may not be missing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.dates)

    def to_series(self) -> pd.Series:
        return pd.Series(self.values, index=pd.DatetimeIndex(self.dates, name="date"), name=self.name)


class CipObservation(NamedTuple):
    currency: str
    tenor: float
    date: date
    cip_bps: float


def _read_text(text) -> str:
    if hasattr(text, "read"):
        return text.read()
    return text


def parse_fred_csv(text, series_name: str) -> DailySeries:
    """Parse a FRED-style CSV (header row, then ``date,value`` rows).

    Rows whose value is ``.`` or empty are dropped; the count is kept on the
    returned series. The value column is the one named ``series_name`` when
    present, otherwise the second column.
    """
    rows = list(csv.reader(io.StringIO(_read_text(text))))
    if not rows or len(rows[0]) < 2:
        raise DataError(f"{series_name}: header must name a date column and a value column")
    header = [h.strip() for h in rows[0]]
    lowered = [h.lower() for h in header]
    vcol = lowered.index(series_name.lower()) if series_name.lower() in lowered[1:] else 1

    dates, values = [], []
    dropped = 0
    prev = None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            d = date.fromisoformat(row[0].strip())
        except ValueError:
            raise DataError(f"{series_name}: malformed date {row[0]!r} on line {lineno}") from None
        if prev is not None and d <= prev:
            raise DataError(f"{series_name}: non-monotone date {d} on line {lineno} (previous {prev})")
        prev = d
        raw = row[vcol].strip() if vcol < len(row) else ""
        if raw in MISSING_TOKENS:
            dropped += 1
            continue
        try:
            v = float(raw)
        except ValueError:
            raise DataError(f"{series_name}: malformed value {raw!r} on line {lineno}") from None
        dates.append(d)
        values.append(v)
    if not dates:
        raise DataError(f"{series_name}: no valid observations")
    return DailySeries(series_name, np.array(dates, dtype="datetime64[D]"), np.array(values), dropped)


def _pick_column(columns, key):
    for alias in _COLUMN_ALIASES[key]:
        if alias in columns:
            return alias
    raise DataError(f"CIP panel: missing column for {key!r} (accepted names: {_COLUMN_ALIASES[key]})")


def parse_tenor(raw: str) -> float:
    try:
        key = Decimal(raw.strip()).normalize()
    except InvalidOperation:
        raise DataError(f"CIP panel: tenor {raw!r} is not a number") from None
    if key not in _TENOR_LOOKUP:
        raise DataError(f"CIP panel: tenor {raw!r} is not one of {[fmt_tenor(t) for t in TENORS]}")
    return _TENOR_LOOKUP[key]


def parse_cip_panel(
    text,
    currencies=CURRENCIES,
    start: date = SAMPLE_START,
    end: date = SAMPLE_END,
) -> pd.DataFrame:
    """Parse the long CIP panel into a frame sorted by (currency, tenor, date).

    Columns of the result: ``currency, tenor, date, cip_bps``. Rows with a
    missing CIP value or a date outside ``[start, end]`` are dropped and
    counted in ``frame.attrs``.
    """
    raw = pd.read_csv(io.StringIO(_read_text(text)), dtype=str, keep_default_na=False)
    raw.columns = [c.strip() for c in raw.columns]
    cols = {k: _pick_column(raw.columns, k) for k in _COLUMN_ALIASES}
    lines = np.arange(len(raw)) + 2

    dates = pd.to_datetime(raw[cols["date"]].str.strip(), format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        bad = lines[dates.isna().to_numpy()][:5].tolist()
        raise DataError(f"CIP panel: malformed dates on lines {bad}")

    ccy = raw[cols["currency"]].str.strip().str.upper()
    unknown = sorted(set(ccy) - set(currencies))
    if unknown:
        raise DataError(f"CIP panel: unknown currency codes {unknown}")

    tenor_cache = {s: parse_tenor(s) for s in raw[cols["tenor"]].unique()}
    tenor = raw[cols["tenor"]].map(tenor_cache).astype(float)

    cip_raw = raw[cols["cip_bps"]].str.strip()
    missing = cip_raw.isin(MISSING_TOKENS).to_numpy()
    cip = pd.to_numeric(cip_raw.where(~missing), errors="coerce")
    bad = cip.isna().to_numpy() & ~missing
    if bad.any():
        raise DataError(f"CIP panel: malformed cip values on lines {lines[bad][:5].tolist()}")

    frame = pd.DataFrame({"currency": ccy, "tenor": tenor, "date": dates, "cip_bps": cip})
    in_window = (frame["date"] >= pd.Timestamp(start)) & (frame["date"] <= pd.Timestamp(end))
    keep = ~missing & in_window.to_numpy()
    n_out_of_window = int((~in_window.to_numpy() & ~missing).sum())
    frame = frame.loc[keep]

    dup = frame.duplicated(["currency", "tenor", "date"], keep=False)
    if dup.any():
        first = frame.loc[dup].iloc[0]
        key = (first["currency"], fmt_tenor(first["tenor"]), first["date"].date().isoformat())
        raise DataError(f"CIP panel: duplicate (currency, tenor, date) key {key}")

    frame = frame.sort_values(["currency", "tenor", "date"], kind="mergesort").reset_index(drop=True)
    frame.attrs["n_missing"] = int(missing.sum())
    frame.attrs["n_out_of_window"] = n_out_of_window
    return frame


def iter_observations(panel: pd.DataFrame) -> Iterator[CipObservation]:
    for cur, ten, d, v in panel[["currency", "tenor", "date", "cip_bps"]].itertuples(index=False):
        yield CipObservation(cur, float(ten), d.date(), float(v))


def master_calendar(panel: pd.DataFrame) -> np.ndarray:
    """Sorted union of all CIP panel dates."""
    return np.unique(panel["date"].to_numpy().astype("datetime64[D]"))


@dataclass
class AlignedStates:
    """Lagged state variables on the master calendar.

    ``frame`` is indexed by date and carries one column per lagged regressor;
    ``sources`` holds, for every cell, the date of the raw observation it was
    taken from.
    """

    frame: pd.DataFrame
    sources: pd.DataFrame
    n_calendar: int
    max_staleness_days: dict = field(default_factory=dict)

    @property
    def columns(self):
        return tuple(self.frame.columns)


def _asof(series: DailySeries, targets: np.ndarray, strict: bool):
    """Latest observation dated before (strict) or at each target date."""
    idx = np.searchsorted(series.dates, targets, side="left" if strict else "right") - 1
    ok = idx >= 0
    vals = np.full(len(targets), np.nan)
    src = np.full(len(targets), np.datetime64("NaT"), dtype="datetime64[D]")
    vals[ok] = series.values[idx[ok]]
    src[ok] = series.dates[idx[ok]]
    return vals, src


def _fill_then_lag(series: DailySeries, calendar: np.ndarray):
    vals, src = _asof(series, calendar, strict=False)
    lag_vals = np.full(len(calendar), np.nan)
    lag_src = np.full(len(calendar), np.datetime64("NaT"), dtype="datetime64[D]")
    lag_vals[1:] = vals[:-1]
    lag_src[1:] = src[:-1]
    return lag_vals, lag_src


def slope_series(dgs10: DailySeries, dgs2: DailySeries) -> DailySeries:
    common, i10, i2 = np.intersect1d(dgs10.dates, dgs2.dates, assume_unique=True, return_indices=True)
    if len(common) == 0:
        raise DataError("DGS10 and DGS2 share no observation dates")
    return DailySeries("Slope", common, dgs10.values[i10] - dgs2.values[i2])


def build_aligned_states(
    nfci: DailySeries,
    dollar: DailySeries,
    dgs10: DailySeries,
    dgs2: DailySeries,
    vix: DailySeries | None = None,
    calendar=None,
) -> AlignedStates:
    """Align the state variables to ``calendar`` with no look-ahead.

    NFCI at ``t`` is the latest weekly print dated strictly before ``t``.
    Daily series are forward-filled onto the calendar and then moved back one
    calendar row. The slope is differenced at common source dates before
    filling. Calendar dates where any supplied series is still undefined are
    dropped.
    """
    if calendar is None:
        raise DataError("a master calendar is required")
    cal = np.asarray(calendar, dtype="datetime64[D]")
    if len(cal) > 1 and not np.all(cal[1:] > cal[:-1]):
        raise DataError("master calendar must be strictly increasing")

    cols, srcs = {}, {}
    cols["NFCI_lag"], srcs["NFCI_lag"] = _asof(nfci, cal, strict=True)
    cols["Dollar_lag"], srcs["Dollar_lag"] = _fill_then_lag(dollar, cal)
    cols["Slope_lag"], srcs["Slope_lag"] = _fill_then_lag(slope_series(dgs10, dgs2), cal)
    if vix is not None:
        cols["VIX_lag"], srcs["VIX_lag"] = _fill_then_lag(vix, cal)

    names = {"NFCI_lag": nfci.name, "Dollar_lag": dollar.name, "Slope_lag": "DGS10-DGS2", "VIX_lag": "VIX"}
    for col, vals in cols.items():
        if np.isnan(vals).all():
            raise DataError(f"series {names[col]} has no observation before any calendar date")

    index = pd.DatetimeIndex(cal, name="date")
    frame = pd.DataFrame(cols, index=index)
    sources = pd.DataFrame(srcs, index=index)
    keep = frame.notna().all(axis=1).to_numpy()
    frame, sources = frame.loc[keep], sources.loc[keep]
    staleness = {
        col: int((frame.index.to_numpy().astype("datetime64[D]") - sources[col].to_numpy().astype("datetime64[D]")).max().astype(int))
        for col in frame.columns
    } if len(frame) else {}
    log.info("aligned states: %d of %d calendar dates kept", keep.sum(), len(cal))
    return AlignedStates(frame, sources, len(cal), staleness)


@dataclass
class RegressionSample:
    """Merged rows ready for estimation, sorted by (currency, tenor, date)."""

    frame: pd.DataFrame
    regressors: tuple
    panel_counts: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def panels(self):
        for key, sub in self.frame.groupby(["currency", "tenor"], sort=True):
            yield (key[0], float(key[1])), sub

    @property
    def keys(self):
        return sorted(self.panel_counts)

    def __len__(self):
        return len(self.frame)

    def with_frame(self, frame: pd.DataFrame, regressors=None) -> "RegressionSample":
        return RegressionSample(frame, tuple(regressors or self.regressors), dict(self.panel_counts), list(self.warnings))


def merge_panel_states(panel: pd.DataFrame, states: AlignedStates, regressors, qend_window: int = 5) -> RegressionSample:
    """Inner-join each panel with the lagged states on date.

    ``regressors`` is a subset of the state columns plus ``QEndShort``. Rows
    lacking any requested regressor are dropped. Panels left empty are
    excluded with a warning.
    """
    from cipbench.panel import quarter_end_flags

    regressors = tuple(regressors)
    if not regressors or len(set(regressors)) != len(regressors):
        raise DataError(f"regressor list must be non-empty and unique: {regressors}")
    allowed = set(STATE_COLUMNS) | {QEND}
    unknown = [r for r in regressors if r not in allowed]
    if unknown:
        raise DataError(f"unknown regressors {unknown}")
    state_cols = [r for r in regressors if r != QEND]
    missing_cols = [r for r in state_cols if r not in states.frame.columns]
    if missing_cols:
        raise DataError(f"aligned states lack {missing_cols}")

    base = panel[["currency", "tenor", "date", "cip_bps"]]
    if QEND in regressors:
        flags = np.zeros(len(base), dtype=float)
        for (cur, ten), idx in base.groupby(["currency", "tenor"], sort=False).indices.items():
            flags[idx] = quarter_end_flags(base["date"].to_numpy()[idx], qend_window, ten)
        base = base.assign(**{QEND: flags})

    merged = base.merge(states.frame[state_cols], left_on="date", right_index=True, how="inner")
    merged = merged.dropna(subset=list(regressors))
    merged = merged.sort_values(["currency", "tenor", "date"], kind="mergesort").reset_index(drop=True)

    counts = {(c, float(t)): int(n) for (c, t), n in merged.groupby(["currency", "tenor"]).size().items()}
    warnings = []
    for c, t in base.groupby(["currency", "tenor"]).size().index:
        if (c, float(t)) not in counts:
            msg = f"panel {c} {fmt_tenor(t)}: no rows after merge, excluded"
            log.warning(msg)
            warnings.append(msg)
    return RegressionSample(merged, regressors, counts, warnings)
