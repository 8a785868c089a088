"""Stage orchestration with content-addressed caching.

Each stage result is pickled under ``<cache>/<stage>-<key>.pkl`` where the
key hashes the input file digests, the config sections the stage reads, and
the package version. A changed input byte or config value misses the cache.
"""

from __future__ import annotations

import hashlib
import json
import logging
import pickle
from pathlib import Path

import numpy as np
import pandas as pd

from cipbench import BASELINE, __version__
from cipbench.config import RunConfig
from cipbench.diagnostics import eg_grid
from cipbench.hac import HacConfig
from cipbench.ingest import QEND, build_aligned_states, master_calendar, merge_panel_states, parse_cip_panel, parse_fred_csv
from cipbench.panel import aggregate_differences
from cipbench.pca import pca_fit, state_matrix, with_pc_scores
from cipbench.regress import (
    SPEC_MENU,
    RegressorSet,
    fit_common_slope_currency,
    fit_diff,
    fit_pooled,
    fit_separate,
    stack_r2,
    within_r2,
)
from cipbench import report as rep
from cipbench.validate import expanding_evaluate, loyo_evaluate

log = logging.getLogger(__name__)

STAGES = ("ingest", "fit", "loyo", "expanding", "eg", "aggdiff", "pca", "report")
STAGE_SECTIONS = {
    "ingest": ("inputs", "specs", "quarter_end_windows"),
    "fit": ("inputs", "specs", "quarter_end_windows", "hac", "min_panel_rows"),
    "loyo": ("inputs", "specs", "quarter_end_windows", "validation"),
    "expanding": ("inputs", "specs", "quarter_end_windows", "validation"),
    "eg": ("inputs", "hac", "min_panel_rows", "eg"),
    "aggdiff": ("inputs", "aggdiff", "validation"),
    "pca": ("inputs", "pca", "validation", "protocols"),
}
FRED_NAMES = {"nfci": "NFCI", "dollar": "DTWEXBGS", "dgs10": "DGS10", "dgs2": "DGS2", "vix": "VIXCLS"}

# modelling conventions in force; echoed into every manifest
DECISIONS = (
    "master calendar = sorted union of CIP panel dates; one-observation lag = one calendar row back after forward fill",
    "NFCI_lag(t) = latest weekly print dated strictly before t; forward fill has no staleness cap",
    "slope differenced at common DGS10/DGS2 source dates before fill and lag",
    "missing FRED values: '.' and empty string",
    "fixed effects absorbed by within-demeaning; reported effects use first-group reference normalization",
    "OLS via column-pivoted QR; rank tolerance eps * max(n, p) * largest pivot",
    "minimum rows per level panel fit = 30; per difference panel fit = 5",
    "HAC: Bartlett kernel, lag 21 for levels; by-date score sums for stacked fits; dof factor n/(n-k), k = slopes + absorbed effects",
    "HAC lag for difference fits = floor(3 * floor(4 (n/100)^(2/9))), capped at n-2",
    "p-values from the standard normal",
    "table 1 in-sample R^2 for stacked fits is centered on the stack mean (currency mean, grand mean); within-panel R^2 reported alongside",
    "LOYO / expanding benchmark = training mean of the estimation unit; years = calendar years",
    "expanding window: 3 initial years, >= 100 training rows per panel",
    "unseen fixed-effect groups in holdout predicted with the training global intercept",
    "aggregation blocks anchored at each panel's first row; trailing partial block dropped",
    "quarter-end flags on each panel's own observed dates; active for tenor <= 1",
    "Engle-Granger: deterministic terms in the first stage, residual ADF without; Schwert lags floor(12 (n/100)^(1/4)); MacKinnon (2010) critical values",
    "aggregate EG series: daily cross-panel medians of actual and of baseline fitted values",
    "PCA on the correlation matrix of distinct in-sample dates; largest |loading| positive",
    "positive share counts strictly positive coefficients",
)


def _digest_file(path: Path) -> str:
    return rep.file_digest(path)


def _dedupe(items):
    seen, out = set(), []
    for i in items:
        if i not in seen:
            seen.add(i)
            out.append(i)
    return out


class Pipeline:
    def __init__(self, config: RunConfig, jobs: int | None = None, cache_dir=None, use_cache: bool = True):
        self.config = config
        self.jobs = jobs or config.jobs
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.use_cache = use_cache and self.cache_dir is not None
        self._memo = {}
        self._digests = None

    # -- plumbing -----------------------------------------------------------
    @property
    def digests(self) -> dict:
        if self._digests is None:
            self._digests = {k: _digest_file(p) for k, p in sorted(self.config.input_paths().items())}
        return self._digests

    def cache_key(self, stage: str) -> str:
        body = {
            "stage": stage,
            "version": __version__,
            "digests": self.digests,
            "config": {s: self.config.section(s) if s != "inputs" else sorted(self.config.section(s)) for s in STAGE_SECTIONS[stage]},
        }
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def _stage(self, stage: str, compute):
        if stage in self._memo:
            return self._memo[stage]
        path = None
        if self.use_cache:
            path = self.cache_dir / f"{stage}-{self.cache_key(stage)[:24]}.pkl"
            if path.is_file():
                log.info("stage %s: cache hit %s", stage, path.name)
                with open(path, "rb") as fh:
                    self._memo[stage] = pickle.load(fh)
                return self._memo[stage]
        log.info("stage %s: computing", stage)
        result = compute()
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as fh:
                pickle.dump(result, fh, protocol=pickle.HIGHEST_PROTOCOL)
        self._memo[stage] = result
        return result

    # -- stages -------------------------------------------------------------
    def ingest(self) -> dict:
        return self._stage("ingest", self._ingest)

    def _ingest(self) -> dict:
        paths = self.config.input_paths()
        series = {k: parse_fred_csv(paths[k].read_text(), FRED_NAMES[k]) for k in FRED_NAMES if k in paths}
        panel = parse_cip_panel(paths["cip_panel"].read_text())
        calendar = master_calendar(panel)
        states = build_aligned_states(series["nfci"], series["dollar"], series["dgs10"], series["dgs2"], series.get("vix"), calendar)
        samples = {}
        for label in self.config.specs:
            spec = SPEC_MENU[label]
            if QEND in spec.names:
                for w in self.config.quarter_end_windows:
                    qspec = RegressorSet(spec.names, label=f"{label}{w}")
                    samples[qspec.label] = (merge_panel_states(panel, states, spec.names, qend_window=w), qspec)
            else:
                samples[label] = (merge_panel_states(panel, states, spec.names), spec)
        meta = {
            "series": {k: {"name": s.name, "observations": len(s), "dropped_missing": s.n_dropped} for k, s in series.items()},
            "cip_panel": {"rows": len(panel), "dropped_missing": panel.attrs.get("n_missing", 0),
                          "dropped_out_of_window": panel.attrs.get("n_out_of_window", 0),
                          "panels": int(panel.groupby(["currency", "tenor"]).ngroups),
                          "currencies": int(panel["currency"].nunique())},
            "calendar": {"dates": int(len(calendar)), "aligned_dates": int(len(states.frame))},
            "max_staleness_days": states.max_staleness_days,
        }
        return {"panel": panel, "states": states, "samples": samples, "meta": meta}

    def sample(self, label="baseline"):
        return self.ingest()["samples"][label]

    def fit(self) -> dict:
        return self._stage("fit", self._fit)

    def _fit(self) -> dict:
        hac = self.config.hac
        separate = {}
        for label, (sample, spec) in self.ingest()["samples"].items():
            separate[label] = fit_separate(sample, spec, hac=hac, min_nobs=self.config.min_panel_rows, jobs=self.jobs, warnings=[])
        base, spec = self.sample("baseline")
        return {
            "separate": separate,
            "currency": fit_common_slope_currency(base, spec, hac=hac, jobs=self.jobs, warnings=[]),
            "pooled": fit_pooled(base, spec, hac=hac),
        }

    def loyo(self) -> dict:
        return self._stage("loyo", self._loyo)

    def _loyo(self) -> dict:
        v = self.config.validation
        out = {}
        for label, (sample, spec) in self.ingest()["samples"].items():
            out[label] = loyo_evaluate(sample, spec, "separate", min_train=v.min_train_rows_loyo, jobs=self.jobs)
        base, spec = self.sample("baseline")
        out["baseline/currency"] = loyo_evaluate(base, spec, "currency", min_train=v.min_train_rows_loyo, jobs=self.jobs)
        return out

    def expanding(self) -> dict:
        return self._stage("expanding", self._expanding)

    def _expanding(self) -> dict:
        v = self.config.validation
        return {
            label: expanding_evaluate(sample, spec, v.initial_years, min_train=v.min_train_rows_expanding, jobs=self.jobs)
            for label, (sample, spec) in self.ingest()["samples"].items()
            if not label.startswith("baseline_qend")
        }

    def eg(self) -> dict:
        return self._stage("eg", self._eg)

    def _eg(self) -> dict:
        base, _ = self.sample("baseline")
        e = self.config.eg
        results, counts = eg_grid(base, self.fit()["separate"]["baseline"], dets=e.dets, lags=e.lags, trend_in=e.trend_in)
        return {"results": pd.DataFrame([r.__dict__ for r in results]), "counts": counts}

    def aggdiff(self) -> dict:
        return self._stage("aggdiff", self._aggdiff)

    def _aggdiff(self) -> dict:
        base, spec = self.sample("baseline")
        a = self.config.aggdiff
        hac = HacConfig(mode="auto", auto_multiplier=a.auto_multiplier, cluster_by_date=False)
        rows, warnings = [], []
        for n in a.n_grid:
            diff = aggregate_differences(base, int(n))
            fits = fit_diff(diff, spec, hac=hac, min_rows=a.min_rows, jobs=self.jobs)
            loyo = loyo_evaluate(diff, spec, "separate", min_train=a.min_rows, jobs=self.jobs)
            warnings.extend(diff.warnings[len(base.warnings):])
            rows.append({
                "N": int(n),
                "in_sample_r2": within_r2(fits),
                "loyo_pooled_r2": loyo.overall_pooled_r2,
                "loyo_mean_year_r2": loyo.mean_year_r2,
                "observations": int(len(diff)),
                "panels": len(fits),
            })
        return {"table": pd.DataFrame(rows), "warnings": warnings}

    def pca(self) -> dict:
        return self._stage("pca", self._pca)

    def _pca(self) -> dict:
        base, _ = self.sample("baseline")
        dec = pca_fit(state_matrix(base, BASELINE, self.config.pca.weighting), BASELINE)
        v = self.config.validation
        rows = []
        for k in range(1, len(BASELINE) + 1):
            pc_sample, pc_spec = with_pc_scores(base, dec, k)
            fits = fit_separate(pc_sample, pc_spec, hac=None, min_nobs=self.config.min_panel_rows, jobs=self.jobs, warnings=[])
            row = {"model": pc_spec.label, "cumulative_variance": float(dec.cumulative[k - 1]), "in_sample_r2": within_r2(fits)}
            if "expanding" in self.config.protocols:
                ex = expanding_evaluate(pc_sample, pc_spec, v.initial_years, min_train=v.min_train_rows_expanding, jobs=self.jobs)
                row.update(expanding_pooled_r2=ex.overall_pooled_r2, mean_yearly_pooled_r2=ex.mean_year_r2)
            rows.append(row)
        return {"decomposition": dec, "table": pd.DataFrame(rows)}

    # -- reporting ----------------------------------------------------------
    def tables(self) -> tuple:
        cfg = self.config
        fits = self.fit()
        loyo = self.loyo() if "loyo" in cfg.protocols else {}
        expanding = self.expanding() if "expanding" in cfg.protocols else {}
        base_fits = fits["separate"]["baseline"]
        base, _ = self.sample("baseline")

        t1 = pd.DataFrame([
            rep.fit_row("separate", within_r2(base_fits), loyo.get("baseline"), within=within_r2(base_fits)),
            rep.fit_row("currency_common", stack_r2(fits["currency"]), loyo.get("baseline/currency"), within=within_r2(fits["currency"])),
            rep.fit_row("pooled_common", stack_r2(fits["pooled"]), None, within=within_r2(fits["pooled"])),
        ])
        tables = {
            "table1_fit": t1,
            "table2_tenor_profile": rep.tenor_profile(base_fits),
        }
        if "baseline/currency" in loyo:
            tables["table3_currency_common"] = rep.currency_performance(fits["currency"], loyo["baseline/currency"])
        tables["table4_coef_significance"] = rep.sign_significance_summary(base_fits)

        vix_rows, vix_coef = [], []
        for label in ("baseline", "baseline_vix", "vix_dollar_slope", "vix_only"):
            if label not in fits["separate"]:
                continue
            f = fits["separate"][label]
            vix_rows.append(rep.fit_row(label, within_r2(f), loyo.get(label), expanding=expanding.get(label)))
            if "VIX_lag" in SPEC_MENU[label].names:
                vix_coef.append(rep.sign_significance_summary(f, variables=["VIX_lag"]).assign(specification=label))
        tables["table5_vix"] = pd.DataFrame(vix_rows)
        if vix_coef:
            tables["table5b_vix_coefficients"] = pd.concat(vix_coef, ignore_index=True)

        moments = rep.state_moments(state_matrix(base, BASELINE, cfg.pca.weighting), BASELINE)
        tables["table6_magnitudes"] = rep.magnitude_table(base_fits, moments)
        tables["table7_eg"] = self.eg()["counts"]
        tables["table8_aggdiff"] = self.aggdiff()["table"]

        pca = self.pca()
        t9 = pca["table"].copy()
        base_row = {"model": "Baseline", "cumulative_variance": np.nan, "in_sample_r2": within_r2(base_fits)}
        if "baseline" in expanding:
            base_row.update(expanding_pooled_r2=expanding["baseline"].overall_pooled_r2, mean_yearly_pooled_r2=expanding["baseline"].mean_year_r2)
        tables["table9_pca_fit"] = pd.concat([t9, pd.DataFrame([base_row])], ignore_index=True)
        tables["table10_loadings"] = pca["decomposition"].loadings_frame().rename_axis("variable").reset_index().assign(
            explained_variance_ratio=np.nan
        )
        tables["table10_loadings"] = pd.concat([
            tables["table10_loadings"].drop(columns="explained_variance_ratio"),
            pd.DataFrame([{"variable": "explained_variance_ratio", **dict(zip(pca["decomposition"].components, pca["decomposition"].explained_variance_ratio))}]),
        ], ignore_index=True)

        if "baseline" in expanding:
            tables["table_expanding"] = rep.expanding_table(expanding["baseline"])

        qrows = []
        for label, f in fits["separate"].items():
            if not label.startswith("baseline_qend"):
                continue
            active = {k: v for k, v in f.items() if QEND not in v.inactive}
            sig = rep.sign_significance_summary(active, variables=[QEND]).iloc[0] if active else None
            qrows.append({
                "specification": label,
                "window": int(label.removeprefix("baseline_qend")),
                "in_sample_r2": within_r2(f),
                "delta_in_sample_r2": within_r2(f) - within_r2(base_fits),
                "loyo_pooled_r2": loyo[label].overall_pooled_r2 if label in loyo else np.nan,
                "delta_loyo_pooled_r2": (loyo[label].overall_pooled_r2 - loyo["baseline"].overall_pooled_r2) if label in loyo else np.nan,
                "dummy_panels": len(active),
                "dummy_significant_share": sig["significant_share"] if sig is not None else np.nan,
            })
        if qrows:
            tables["table_quarter_end"] = pd.DataFrame(qrows)
        tables["panel_fits"] = rep.panel_fit_table(base_fits)
        return tables, self.plots(loyo, expanding)

    def plots(self, loyo: dict, expanding: dict) -> dict:
        base, _ = self.sample("baseline")
        fits = self.fit()["separate"]["baseline"]
        parts = []
        for (cur, ten), f in fits.items():
            parts.append(pd.DataFrame({"currency": cur, "tenor": ten, "date": f.dates, "actual": f.y, "fitted": f.fitted}))
        fig1 = pd.concat(parts, ignore_index=True)
        if "baseline" in loyo:
            pred = loyo["baseline"].predictions[["currency", "tenor", "date", "predicted"]].rename(columns={"predicted": "loyo_fitted"})
            fig1 = fig1.merge(pred, on=["currency", "tenor", "date"], how="left")
        plots = {"fig1_actual_fitted": fig1}
        if loyo:
            plots["fig2_loyo_by_year"] = pd.concat([r.tidy() for k, r in loyo.items() if k in ("baseline", "baseline/currency")], ignore_index=True)
        if "baseline" in expanding:
            plots["fig3_expanding_by_year"] = expanding["baseline"].tidy()
        plots["fig4_aggdiff_curve"] = self.aggdiff()["table"][["N", "in_sample_r2", "loyo_pooled_r2"]]
        return plots

    def manifest(self) -> dict:
        ing = self.ingest()
        base, _ = self.sample("baseline")
        warnings = list(base.warnings)
        for label, (s, _) in ing["samples"].items():
            warnings.extend(s.warnings)
        for r in list(self.loyo().values()) if "loyo" in self.config.protocols else []:
            warnings.extend(r.warnings)
        for r in list(self.expanding().values()) if "expanding" in self.config.protocols else []:
            warnings.extend(r.warnings)
        warnings.extend(self.aggdiff()["warnings"])
        return {
            "package_version": __version__,
            "config": self.config.echo(),
            "input_digests": self.digests,
            "inputs": ing["meta"],
            "row_counts": {
                label: {"rows": len(s), "panels": len(s.panel_counts),
                        "per_panel": {f"{c}|{t:g}": n for (c, t), n in sorted(s.panel_counts.items())}}
                for label, (s, _) in ing["samples"].items()
            },
            "hac_rule": {"mode": self.config.hac.mode, "fixed_lag": self.config.hac.fixed_lag,
                         "difference_fits": f"auto x {self.config.aggdiff.auto_multiplier}"},
            "decisions": list(DECISIONS),
            "warnings": _dedupe(warnings),
        }

    def report(self, outdir=None) -> list:
        outdir = Path(outdir or self.config.output_dir)
        tables, plots = self.tables()
        return rep.emit_reports(tables, outdir, self.manifest(), plots)

    def run(self, stage: str = "run", outdir=None):
        if stage in ("run", "report"):
            return self.report(outdir)
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        return getattr(self, stage)()
