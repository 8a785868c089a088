"""Download the FRED state series into a data directory and write a config.

Needs network access. The CIP deviation panel is not on FRED: place it in
the same directory as ``cip_panel.csv`` (columns date, currency, tenor,
CIP deviation in bps) before running the pipeline.

    python3 scripts/fetch_fred.py data/
    CIPBENCH_DATA_DIR=data pytest tests/test_acceptance.py
"""

import argparse
import urllib.request
from pathlib import Path

import yaml

from cipbench.pipeline import FRED_NAMES

URL = "https://fred.stlouisfed.org/graph/fredgraph.csv?id={series}&cosd={start}&coed={end}"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    ap.add_argument("--start", default="2007-01-01")
    ap.add_argument("--end", default="2025-06-30")
    ap.add_argument("--panel", default="cip_panel.csv", help="CIP panel file name inside outdir")
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)

    inputs = {}
    for key, series in FRED_NAMES.items():
        dest = args.outdir / f"{key}.csv"
        with urllib.request.urlopen(URL.format(series=series, start=args.start, end=args.end), timeout=60) as r:
            dest.write_bytes(r.read())
        print(f"{series:9s} -> {dest}")
        inputs[key] = dest.name
    inputs["cip_panel"] = args.panel

    cfg = args.outdir / "config.yaml"
    if cfg.exists():
        print(f"kept existing {cfg}")
    else:
        cfg.write_text(yaml.safe_dump({"inputs": inputs}, sort_keys=False))
        print(f"wrote {cfg}")
    if not (args.outdir / args.panel).exists():
        print(f"missing {args.outdir / args.panel}: supply the CIP panel before running")


if __name__ == "__main__":
    main()
