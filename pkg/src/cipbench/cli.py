"""Command-line entry point: ``cipbench <stage> --config PATH``.

Flags fall back to ``CIPBENCH_CONFIG``, ``CIPBENCH_OUT``, ``CIPBENCH_JOBS``,
``CIPBENCH_STAGE`` and ``CIPBENCH_SEED``. Exit codes: 0 ok, 1 other failure,
2 config error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from cipbench.config import RunConfig, env_default
from cipbench.errors import BenchError, ConfigError
from cipbench.pipeline import STAGES, Pipeline
from cipbench.regress import SPEC_MENU, within_r2

log = logging.getLogger("cipbench")
SUBCOMMANDS = ("run", *STAGES)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cipbench", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=SUBCOMMANDS, help="stage to execute (default: run)")
    p.add_argument("--config", default=env_default("config"), help="YAML run config")
    p.add_argument("--stage", default=env_default("stage"), choices=SUBCOMMANDS, help="alias for the positional command")
    p.add_argument("--out", default=env_default("out"), help="output directory (overrides config)")
    p.add_argument("--jobs", type=int, default=env_default("jobs"), help="worker threads")
    p.add_argument("--seed", type=int, default=env_default("seed"), help="seed for simulation helpers only")
    p.add_argument("--spec", choices=sorted(SPEC_MENU), help="with 'fit': summarise one regressor set")
    p.add_argument("--no-cache", action="store_true", help="recompute every stage")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _summary(pipe: Pipeline, stage: str, spec: str | None) -> dict:
    if stage == "ingest":
        return pipe.ingest()["meta"]
    if stage == "fit":
        fits = pipe.fit()["separate"]
        labels = [spec] if spec else list(fits)
        if spec and spec not in fits:
            raise ConfigError(f"spec {spec!r} is not in the config's spec list")
        return {label: {"panels": len(fits[label]), "in_sample_r2": within_r2(fits[label])} for label in labels}
    if stage in ("loyo", "expanding"):
        return {k: {"pooled_r2": r.overall_pooled_r2, "mean_year_r2": r.mean_year_r2, "nobs": r.total_nobs}
                for k, r in getattr(pipe, stage)().items()}
    if stage == "eg":
        return pipe.eg()["counts"].to_dict(orient="records")
    if stage in ("aggdiff", "pca"):
        return getattr(pipe, stage)()["table"].to_dict(orient="records")
    raise ValueError(stage)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    stage = args.command or args.stage or "run"
    try:
        if not args.config:
            raise ConfigError("no config given (use --config or CIPBENCH_CONFIG)")
        cfg = RunConfig.load(args.config)
        if args.out:
            cfg.output_dir = str(args.out)
        if args.jobs is not None:
            cfg.jobs = int(args.jobs)
        cfg.validate()
        out = Path(cfg.output_dir)
        if not out.is_absolute():
            out = cfg.base_dir / out if not args.out else Path.cwd() / out
        pipe = Pipeline(cfg, jobs=cfg.jobs, cache_dir=out / ".cache", use_cache=not args.no_cache)
        if stage in ("run", "report"):
            written = pipe.report(out)
            print(f"wrote {len(written)} files to {out}")
        else:
            print(json.dumps(_summary(pipe, stage, args.spec), indent=2, default=float))
        return 0
    except BenchError as exc:
        print(f"cipbench {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
