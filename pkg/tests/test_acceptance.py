"""Acceptance suite: one or more tests per numbered criterion.

The terminal summary (see conftest) prints one PASS / FAIL / NOT RUN line
per criterion. Criteria 1-9 need the real inputs: point CIPBENCH_DATA_DIR
at a directory holding ``config.yaml`` (see scripts/fetch_fred.py).
"""

import math

import numpy as np
import pytest

from cipbench import BASELINE
from cipbench.cli import main
from cipbench.config import PROTOCOLS, RunConfig
from cipbench.diagnostics import adf_tau, eg_test, schwert_lags
from cipbench.hac import HacConfig, coefficient_pvalues, hac_covariance, newey_west
from cipbench.panel import DEFAULT_N_GRID
from cipbench.pipeline import Pipeline
from cipbench.regress import SPEC_MENU, estimate, fit_common_slope_currency, fit_pooled, ols
from cipbench.validate import EXPANDING, LOYO, barrier_grid

from conftest import make_sample

crit = pytest.mark.criterion


# -- real-data pipeline -------------------------------------------------------


@pytest.fixture(scope="module")
def real(data_dir, tmp_path_factory):
    cfg = RunConfig.load(data_dir / "config.yaml")
    cfg.specs = tuple(SPEC_MENU)
    cfg.protocols = PROTOCOLS
    cfg.aggdiff.n_grid = DEFAULT_N_GRID
    cfg.validate()
    return Pipeline(cfg, jobs=cfg.jobs, cache_dir=tmp_path_factory.mktemp("real-cache"))


@pytest.fixture(scope="module")
def real_tables(real):
    tables, _ = real.tables()
    return tables


@crit(1, "separate panels: in-sample 0.637, LOYO pooled 0.499, LOYO mean-year 0.347")
def test_c01_separate(real_tables):
    row = real_tables["table1_fit"].set_index("specification").loc["separate"]
    assert len(real_tables["panel_fits"]) == 98
    assert row.in_sample_r2 == pytest.approx(0.637, abs=0.01)
    assert row.loyo_pooled_r2 == pytest.approx(0.499, abs=0.02)
    assert row.loyo_mean_year_r2 == pytest.approx(0.347, abs=0.03)


@crit(2, "common slopes: currency 0.645 / LOYO 0.607; pooled 0.658")
def test_c02_common(real_tables):
    t = real_tables["table1_fit"].set_index("specification")
    assert t.loc["currency_common", "in_sample_r2"] == pytest.approx(0.645, abs=0.01)
    assert t.loc["currency_common", "loyo_pooled_r2"] == pytest.approx(0.607, abs=0.02)
    assert t.loc["pooled_common", "in_sample_r2"] == pytest.approx(0.658, abs=0.01)


@crit(3, "expanding window: all-years 0.503, every one of 15 years positive")
def test_c03_expanding(real):
    rep = real.expanding()["baseline"]
    assert rep.overall_pooled_r2 == pytest.approx(0.503, abs=0.02)
    assert len(rep.per_year) == 15
    assert (rep.per_year.pooled_r2 > 0).all()


@crit(4, "tenor profile: tenor-5 mean 0.615, hump shape")
def test_c04_tenor(real_tables):
    t = real_tables["table2_tenor_profile"].set_index("tenor")["mean_r2"]
    assert t.loc[5.0] == pytest.approx(0.615, abs=0.02)
    interior = t.iloc[1:-1]
    assert interior.max() > t.iloc[0] and interior.max() > t.iloc[-1]


@crit(5, "EG panel rejections at 5% with constant: >= 96/98 both relations")
def test_c05_eg(real_tables):
    t = real_tables["table7_eg"]
    panel = t[(t.unit == "panel") & (t.det == "constant")].set_index("relation")
    assert (panel.denominator == 98).all()
    assert panel.loc["actual~regressors", "reject5_count"] >= 96
    assert panel.loc["actual~fitted", "reject5_count"] >= 96


@crit(6, "aggregation curve within 0.03 of (0.007 0.047 0.218 0.313 0.369 0.412)")
def test_c06_aggdiff(real_tables):
    t = real_tables["table8_aggdiff"].set_index("N")
    published = dict(zip(DEFAULT_N_GRID, (0.007, 0.047, 0.218, 0.313, 0.369, 0.412)))
    for n, v in published.items():
        assert t.loc[n, "in_sample_r2"] == pytest.approx(v, abs=0.03), n


@crit(7, "PCA: variance shares, full-rank fit equals baseline, loadings")
def test_c07_pca(real, real_tables):
    dec = real.pca()["decomposition"]
    assert dec.explained_variance_ratio * 100 == pytest.approx([64.1, 31.0, 4.9], abs=1.0)
    t9 = real_tables["table9_pca_fit"].set_index("model")
    assert abs(t9.loc["PC1-PC3", "in_sample_r2"] - t9.loc["Baseline", "in_sample_r2"]) < 1e-6
    published = np.array([[-0.263, 0.965, 0.018], [0.684, 0.174, 0.709], [-0.681, -0.199, 0.705]])
    for j in range(3):
        col = dec.loadings[:, j]
        assert min(np.abs(col - published[:, j]).max(), np.abs(col + published[:, j]).max()) <= 0.02


@crit(8, "quarter-end dummy moves in-sample R^2 by < 0.001")
def test_c08_quarter_end(real_tables):
    t = real_tables["table_quarter_end"]
    assert set(t.window) == {5, 1}
    assert (t.delta_in_sample_r2.abs() < 1e-3).all()


@crit(9, "VIX menu in-sample 0.648 / 0.515 / 0.271")
def test_c09_vix(real_tables):
    t = real_tables["table5_vix"].set_index("specification")["in_sample_r2"]
    assert t.loc["baseline_vix"] == pytest.approx(0.648, abs=0.02)
    assert t.loc["vix_dollar_slope"] == pytest.approx(0.515, abs=0.02)
    assert t.loc["vix_only"] == pytest.approx(0.271, abs=0.02)


# -- properties on synthetic data ----------------------------------------------


@crit(10, "OLS equals the normal-equations oracle on 1000 systems (1e-9)")
def test_c10_ols_oracle():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(1000):
        p = int(rng.integers(1, 7))
        n = int(rng.integers(p + 3, 60))
        X = rng.standard_normal((n, p)) * rng.uniform(0.5, 2, p) + rng.uniform(-1, 1, p)
        y = rng.standard_normal(n) * 10
        ref = np.linalg.solve(X.T @ X, X.T @ y)
        got = ols(X, y)[0]
        worst = max(worst, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    assert worst <= 1e-9


def _dummy_slopes(frame, names, fe_cols):
    cols = [np.ones(len(frame))]
    for c in fe_cols:
        lv = sorted(frame[c].unique())
        cols += [(frame[c] == v).to_numpy(float) for v in lv[1:]]
    X = np.column_stack(cols + [frame[n].to_numpy() for n in names])
    return np.linalg.solve(X.T @ X, X.T @ frame["cip_bps"].to_numpy())[-len(names):]


@crit(11, "Frisch-Waugh: demeaned vs dummy slopes on 100 stacked panels (1e-8)")
def test_c11_frisch_waugh():
    rng = np.random.default_rng(11)
    spec = SPEC_MENU["baseline"]
    for i in range(100):
        ncur, nten = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        s = make_sample(n_dates=int(rng.integers(40, 120)), currencies=("AUD", "CAD", "EUR", "GBP")[:ncur],
                        tenors=(0.25, 1.0, 5.0, 10.0)[:nten], slopes=tuple(rng.normal(size=3)), seed=1000 + i)
        keep = rng.random(len(s.frame)) > 0.2
        s = s.with_frame(s.frame.loc[keep].reset_index(drop=True))
        pooled = fit_pooled(s, spec, hac=None)
        ref = _dummy_slopes(s.frame, BASELINE, ["currency", "tenor"])
        assert np.allclose(pooled.slope_vector(), ref, rtol=1e-8, atol=1e-10)
        cur = s.frame.currency.iloc[0]
        rows = s.frame[s.frame.currency == cur]
        common = fit_common_slope_currency(s, spec, hac=None)[cur]
        assert np.allclose(common.slope_vector(), _dummy_slopes(rows, BASELINE, ["tenor"]), rtol=1e-8, atol=1e-10)


@crit(12, "HAC: lag 0 equals the robust sandwich; PSD at every lag")
def test_c12_hac_algebra():
    rng = np.random.default_rng(12)
    for _ in range(200):
        n, lag = int(rng.integers(10, 200)), int(rng.integers(0, 40))
        lag = min(lag, n - 1)
        X = rng.standard_normal((n, 3))
        e = rng.standard_normal(n) * rng.uniform(0.2, 3, n)
        bread = np.linalg.inv(X.T @ X)
        white = bread @ (X.T * e**2) @ X @ bread
        assert np.allclose(newey_west(X * e[:, None], bread, 0), white, rtol=1e-12, atol=0)
        cov = hac_covariance(X, e, lag, 3)
        assert np.linalg.eigvalsh(cov).min() >= -1e-10 * np.trace(cov)


def _ar1(rng, n, rho):
    e = rng.standard_normal(n)
    out = np.empty(n)
    out[0] = e[0] / math.sqrt(1 - rho**2)
    for t in range(1, n):
        out[t] = rho * out[t - 1] + e[t]
    return out


def _slope_se(X, e, lag):
    return math.sqrt(hac_covariance(X, e, lag, X.shape[1])[1, 1])


@crit(12, "HAC simulations: iid ratio, AR(0.9) inflation, null size")
def test_c12_hac_simulations():
    rng = np.random.default_rng(1212)
    ratios, wins = [], 0
    for _ in range(200):
        X = np.column_stack([np.ones(1000), rng.standard_normal(1000)])
        y = 0.5 * X[:, 1] + rng.standard_normal(1000)
        e = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
        ratios.append(_slope_se(X, e, 21) / _slope_se(X, e, 0))

        x = _ar1(rng, 1000, 0.9)
        X = np.column_stack([np.ones(1000), x])
        y = 0.5 * x + _ar1(rng, 1000, 0.9)
        e = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
        wins += _slope_se(X, e, 21) > _slope_se(X, e, 0)
    assert abs(np.mean(ratios) - 1) < 0.15
    assert wins >= 190

    rejections = 0
    for _ in range(1000):
        fit = estimate(rng.standard_normal(1000), rng.standard_normal((1000, 1)), ["x"], dates=np.arange(1000), hac=HacConfig())
        rejections += coefficient_pvalues(fit)["x"] < 0.05
    assert abs(rejections / 1000 - 0.05) <= 0.02


@pytest.fixture(scope="module")
def synthetic_pipeline(synthetic_dir):
    return Pipeline(RunConfig.load(synthetic_dir / "config.yaml").validate())


@crit(13, "information barrier holds on the full year grid, both protocols")
@pytest.mark.parametrize("protocol", [LOYO, EXPANDING])
@pytest.mark.parametrize("scope", ["separate", "currency"])
def test_c13_barrier(synthetic_pipeline, protocol, scope):
    sample, spec = synthetic_pipeline.sample("baseline")
    grid = barrier_grid(sample, spec, protocol, scope=scope)
    n_years = sample.frame.date.dt.year.nunique()
    assert len(grid) == (n_years if protocol == LOYO else n_years - 3)
    assert (grid.leaks == 0).all()
    assert grid.training_sensitive.fillna(True).all()


@crit(14, "Engle-Granger and ADF simulations inside their bands")
def test_c14_eg_simulations():
    rng = np.random.default_rng(14)
    inside = sum(-2.57 <= adf_tau(np.cumsum(rng.standard_normal(2000)), "c", 0) <= -0.44 for _ in range(500))
    assert inside >= 375
    strong = sum(adf_tau(_ar1(rng, 2000, 0.5), "c", schwert_lags(2000)) < -5 for _ in range(500))
    assert strong >= 475
    power = 0
    for _ in range(200):
        x = np.cumsum(rng.standard_normal(3000))
        power += eg_test(x + _ar1(rng, 3000, 0.3), x).reject5
    assert power >= 190
    size = 0
    for _ in range(500):
        w = np.cumsum(rng.standard_normal((1000, 2)), axis=0)
        size += eg_test(w[:, 0], w[:, 1]).reject5
    assert abs(size / 500 - 0.05) <= 0.03


@crit(15, "reports byte-identical under --jobs 1 and --jobs 8")
def test_c15_determinism(synthetic_dir, tmp_path):
    cfg = str(synthetic_dir / "config.yaml")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "j1"), "--jobs", "1", "--no-cache"]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "j8"), "--jobs", "8", "--no-cache"]) == 0
    files = sorted(p.relative_to(tmp_path / "j1") for p in (tmp_path / "j1").rglob("*.*") if ".cache" not in p.parts)
    assert len(files) >= 15
    assert files == sorted(p.relative_to(tmp_path / "j8") for p in (tmp_path / "j8").rglob("*.*") if ".cache" not in p.parts)
    for rel in files:
        assert (tmp_path / "j1" / rel).read_bytes() == (tmp_path / "j8" / rel).read_bytes(), rel
