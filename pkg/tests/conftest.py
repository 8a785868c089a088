import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from cipbench import BASELINE
from cipbench.ingest import RegressionSample

DATA_ENV = "CIPBENCH_DATA_DIR"


def make_sample(
    n_dates=400,
    currencies=("AUD", "CAD"),
    tenors=(1.0, 5.0),
    slopes=(2.0, -0.5, 1.0),
    noise=1.0,
    seed=0,
    start="2010-01-01",
    names=BASELINE,
    common_noise=0.0,
) -> RegressionSample:
    """Stacked panels sharing one set of state regressors per date."""
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range(start, periods=n_dates)
    states = {n: np.cumsum(rng.standard_normal(n_dates)) * 0.1 + rng.standard_normal(n_dates) for n in names}
    shock = rng.standard_normal(n_dates) * common_noise
    parts = []
    for ci, cur in enumerate(currencies):
        for ti, ten in enumerate(tenors):
            y = 3.0 * ci - 2.0 * ti + sum(b * states[n] for b, n in zip(slopes, names))
            y = y + noise * rng.standard_normal(n_dates) + shock
            parts.append(pd.DataFrame({"currency": cur, "tenor": float(ten), "date": dates, "cip_bps": y, **states}))
    frame = pd.concat(parts, ignore_index=True).sort_values(["currency", "tenor", "date"]).reset_index(drop=True)
    counts = {(c, float(t)): int(n) for (c, t), n in frame.groupby(["currency", "tenor"]).size().items()}
    return RegressionSample(frame, tuple(names), counts, [])


@pytest.fixture
def sample():
    return make_sample()


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    from cipbench.synthetic import make_synthetic

    d = tmp_path_factory.mktemp("synthetic")
    make_synthetic(d, seed=7)
    return d


@pytest.fixture(scope="session")
def data_dir():
    raw = os.environ.get(DATA_ENV)
    if not raw:
        pytest.skip(f"NOT RUN: set {DATA_ENV} to a directory holding config.yaml and the real inputs")
    path = Path(raw)
    if not (path / "config.yaml").is_file():
        pytest.skip(f"NOT RUN: {path}/config.yaml missing")
    return path


# one line per acceptance criterion in the terminal summary
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    num, text = marker
    prev = _CRITERIA.get(num, (text, "PASS", ""))
    if report.failed:
        _CRITERIA[num] = (text, "FAIL", report.when)
    elif report.skipped and prev[1] != "FAIL":
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        _CRITERIA[num] = (text, "NOT RUN", reason.removeprefix("Skipped: "))
    elif num not in _CRITERIA:
        _CRITERIA[num] = (text, "PASS", "")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        text, status, note = _CRITERIA[num]
        line = f"criterion {num:>2} {status:<7} {text}"
        if note and status != "PASS":
            line += f"  [{note}]"
        terminalreporter.write_line(line)
