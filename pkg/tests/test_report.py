import json

import numpy as np
import pandas as pd
import pytest

from cipbench.errors import BenchError
from cipbench.regress import SPEC_MENU, fit_separate
from cipbench.report import (
    MANIFEST_SCHEMA,
    emit_reports,
    file_digest,
    magnitude_table,
    sign_significance_summary,
    state_moments,
    tenor_profile,
)

from conftest import make_sample


@pytest.fixture
def fits():
    return fit_separate(make_sample(currencies=("AUD", "CAD", "EUR"), tenors=(1.0, 5.0), seed=3), SPEC_MENU["baseline"])


def test_sign_significance_bounds(fits):
    t = sign_significance_summary(fits)
    assert t.variable.tolist() == ["NFCI_lag", "Dollar_lag", "Slope_lag"]
    assert (t.sig_positive + t.sig_negative <= t.panels).all()
    assert t.loc[0, "positive_share"] == 1.0  # true NFCI slope is +2


def test_zero_coefficient_counts_as_non_positive(fits):
    k = next(iter(fits))
    fits[k].coefficients["NFCI_lag"] = 0.0
    t = sign_significance_summary(fits, variables=["NFCI_lag"])
    assert t.positive_share.iloc[0] == pytest.approx(5 / 6)


def test_magnitudes_monotone(fits):
    s = make_sample()
    vals = s.frame.groupby("date")[["NFCI_lag", "Dollar_lag", "Slope_lag"]].first().to_numpy()
    mom = state_moments(vals, ["NFCI_lag", "Dollar_lag", "Slope_lag"])
    assert mom.loc["NFCI_lag", "sd"] == pytest.approx(np.std(vals[:, 0], ddof=1))
    t = magnitude_table(fits, mom)
    assert (t.sd_effect_q25 <= t.sd_effect_median).all() and (t.sd_effect_median <= t.sd_effect_q75).all()
    assert (t.iqr_effect_q25 <= t.iqr_effect_q75).all()


def test_tenor_profile_single_panel():
    fits = fit_separate(make_sample(currencies=("AUD",), tenors=(5.0,)), SPEC_MENU["baseline"])
    row = tenor_profile(fits).iloc[0]
    assert row.mean_r2 == row.median_r2 == row.min_r2 == row.max_r2


def test_emit_layout_and_precision(tmp_path):
    x = 1 / 3
    written = emit_reports({"table1_fit": pd.DataFrame({"a": [x]})}, tmp_path, {"config": {}}, {"fig1": pd.DataFrame({"b": [1]})})
    assert float((tmp_path / "table1_fit.csv").read_text().splitlines()[1]) == x
    assert (tmp_path / "display" / "table1_fit.csv").read_text().splitlines()[1] == "0.333"
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["schema"] == MANIFEST_SCHEMA
    assert man["outputs"] == ["plots/fig1.csv", "table1_fit.csv"]
    assert len(written) == 3


def test_emit_is_deterministic(tmp_path):
    t = {"t": pd.DataFrame({"a": np.random.default_rng(0).standard_normal(20)})}
    emit_reports(t, tmp_path / "a", {"x": 1})
    emit_reports(t, tmp_path / "b", {"x": 1})
    for name in ("t.csv", "manifest.json", "display/t.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_emit_io_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(BenchError, match="file"):
        emit_reports({"t": pd.DataFrame({"a": [1]})}, blocker / "sub", {})


def test_digest_changes_with_one_byte(tmp_path):
    p = tmp_path / "x.csv"
    p.write_bytes(b"DATE,V\n2020-01-01,1\n")
    a = file_digest(p)
    p.write_bytes(b"DATE,V\n2020-01-01,2\n")
    assert file_digest(p) != a
