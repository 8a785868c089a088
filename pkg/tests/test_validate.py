import numpy as np
import pandas as pd
import pytest

from cipbench.errors import DataError
from cipbench.regress import SPEC_MENU, RegressorSet
from cipbench.validate import (
    EXPANDING,
    LOYO,
    LeakageError,
    expanding_evaluate,
    holdout_years,
    information_barrier_check,
    loyo_evaluate,
    training_mask,
)

from conftest import make_sample

BASE = SPEC_MENU["baseline"]


def test_holdout_years_rules():
    years = [2010] * 3 + [2011, 2012, 2013, 2014]
    assert holdout_years(years, LOYO) == [2010, 2011, 2012, 2013, 2014]
    assert holdout_years(years, EXPANDING, 3) == [2013, 2014]
    with pytest.raises(DataError):
        holdout_years([2010, 2011], LOYO)
    with pytest.raises(DataError):
        holdout_years([2010, 2011, 2012], EXPANDING, 3)


def test_training_mask():
    y = np.array([2010, 2011, 2012])
    assert training_mask(y, LOYO, 2011).tolist() == [True, False, True]
    assert training_mask(y, EXPANDING, 2011).tolist() == [True, False, False]
    with pytest.raises(ValueError):
        training_mask(y, "kfold", 2011)


def test_loyo_pooled_identity_and_partition():
    s = make_sample(n_dates=1300, seed=3)
    r = loyo_evaluate(s, BASE)
    pred = r.predictions
    assert len(pred) == len(s.frame)
    assert not pred.duplicated(["currency", "tenor", "date"]).any()
    sse = ((pred.actual - pred.predicted) ** 2).sum()
    sbe = ((pred.actual - pred.benchmark) ** 2).sum()
    assert r.overall_pooled_r2 == pytest.approx(1 - sse / sbe, rel=1e-12)
    assert r.mean_year_r2 == pytest.approx(r.per_year.pooled_r2.mean())
    assert r.total_nobs == len(s.frame)


def test_loyo_null_model_near_zero():
    s = make_sample(n_dates=2600, currencies=("AUD", "CAD"), tenors=(1.0, 5.0), slopes=(0, 0, 0), seed=4)
    r = loyo_evaluate(s, BASE)
    assert r.total_nobs >= 10_000
    assert abs(r.overall_pooled_r2) < 0.05


def test_intercept_only_single_panel_not_positive():
    s = make_sample(n_dates=2600, currencies=("AUD",), tenors=(1.0,), slopes=(0, 0, 0), seed=5)
    r = loyo_evaluate(s, RegressorSet((), label="mean"))
    assert r.overall_pooled_r2 <= 0.05


def test_expanding_close_to_loyo_when_stationary():
    s = make_sample(n_dates=2600, slopes=(1.0, -1.0, 0.5), noise=1.0, seed=6)
    loyo = loyo_evaluate(s, BASE)
    exp = expanding_evaluate(s, BASE, initial_years=3)
    assert abs(exp.overall_pooled_r2 - loyo.overall_pooled_r2) < 0.05
    assert exp.per_year.year.min() == 2013


def test_expanding_min_train_skips_late_panel():
    s = make_sample(n_dates=1300, seed=7)
    late = (s.frame.currency == "CAD") & (s.frame.tenor == 5.0) & (s.frame.date < "2013-11-01")
    s2 = s.with_frame(s.frame.loc[~late].reset_index(drop=True))
    r = expanding_evaluate(s2, BASE, initial_years=3, min_train=100)
    first = r.per_year.iloc[0]
    assert first.year == 2013 and first.panels == 3
    assert any("CAD 5" in w for w in r.warnings)


def test_currency_scope_unseen_tenor_uses_intercept():
    s = make_sample(n_dates=1300, seed=8)
    only_late = (s.frame.currency == "AUD") & (s.frame.tenor == 5.0) & (s.frame.date.dt.year < 2014)
    s2 = s.with_frame(s.frame.loc[~only_late].reset_index(drop=True))
    r = expanding_evaluate(s2, BASE, initial_years=3, scope="currency")
    assert any("unseen" in w for w in r.warnings)


def test_jobs_invariance():
    s = make_sample(n_dates=1300, seed=9)
    a, b = loyo_evaluate(s, BASE, jobs=1), loyo_evaluate(s, BASE, jobs=5)
    pd.testing.assert_frame_equal(a.predictions, b.predictions)
    assert a.overall_pooled_r2 == b.overall_pooled_r2


@pytest.mark.parametrize("protocol", [LOYO, EXPANDING])
@pytest.mark.parametrize("scope", ["separate", "currency"])
def test_barrier_holds_and_training_moves(protocol, scope):
    s = make_sample(n_dates=1300, seed=10)
    rec = information_barrier_check(s, BASE, protocol, 2013, scope=scope)
    assert rec["leaks"] == 0 and rec["hidden_rows"] > 0
    assert rec["training_sensitive"] is True


def test_barrier_detects_leak(monkeypatch):
    import cipbench.validate as v

    s = make_sample(n_dates=1300, seed=11)
    # a broken extractor that trains on everything
    monkeypatch.setattr(v, "training_mask", lambda years, protocol, year: np.ones(len(years), bool))
    with pytest.raises(LeakageError):
        information_barrier_check(s, BASE, LOYO, 2012)
