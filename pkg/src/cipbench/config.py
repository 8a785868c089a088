"""Run configuration: one YAML file, one section per pipeline stage."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from cipbench.errors import ConfigError
from cipbench.hac import HacConfig
from cipbench.panel import DEFAULT_N_GRID
from cipbench.regress import SPEC_MENU

ENV_PREFIX = "CIPBENCH_"
PROTOCOLS = ("loyo", "expanding")


@dataclass
class InputPaths:
    nfci: str
    dollar: str
    dgs10: str
    dgs2: str
    cip_panel: str
    vix: str | None = None

    def resolved(self, base: Path) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is not None:
                p = Path(value)
                out[f.name] = p if p.is_absolute() else base / p
        return out


@dataclass
class ValidationConfig:
    initial_years: int = 3
    min_train_rows_loyo: int = 30
    min_train_rows_expanding: int = 100


@dataclass
class AggDiffConfig:
    n_grid: tuple = DEFAULT_N_GRID
    min_rows: int = 5
    auto_multiplier: float = 3.0


@dataclass
class EgConfig:
    dets: tuple = ("c", "ct")
    lags: int | None = None
    trend_in: str = "first_stage"


@dataclass
class PcaConfig:
    weighting: str = "dates"


@dataclass
class RunConfig:
    inputs: InputPaths
    specs: tuple = tuple(SPEC_MENU)
    protocols: tuple = PROTOCOLS
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    hac: HacConfig = field(default_factory=HacConfig)
    min_panel_rows: int = 30
    quarter_end_windows: tuple = (5, 1)
    aggdiff: AggDiffConfig = field(default_factory=AggDiffConfig)
    eg: EgConfig = field(default_factory=EgConfig)
    pca: PcaConfig = field(default_factory=PcaConfig)
    output_dir: str = "out"
    jobs: int = 1
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "RunConfig":
        raw = dict(raw or {})
        try:
            inputs = InputPaths(**raw.pop("inputs"))
        except KeyError:
            raise ConfigError("config needs an 'inputs' section") from None
        except TypeError as exc:
            raise ConfigError(f"bad 'inputs' section: {exc}") from None
        kwargs = {"inputs": inputs, "base_dir": Path(base_dir or Path.cwd())}
        sections = {"validation": ValidationConfig, "hac": HacConfig, "aggdiff": AggDiffConfig, "eg": EgConfig, "pca": PcaConfig}
        try:
            for name, kind in sections.items():
                if name in raw:
                    body = {k: tuple(v) if isinstance(v, list) else v for k, v in (raw.pop(name) or {}).items()}
                    kwargs[name] = kind(**body)
            for name in ("specs", "protocols", "quarter_end_windows"):
                if name in raw:
                    kwargs[name] = tuple(raw.pop(name))
            for name in ("min_panel_rows", "output_dir", "jobs"):
                if name in raw:
                    kwargs[name] = raw.pop(name)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from None
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        return cls.from_dict(raw, base_dir=path.resolve().parent)

    def input_paths(self) -> dict:
        return self.inputs.resolved(self.base_dir)

    def validate(self) -> "RunConfig":
        missing = [f"{k}={p}" for k, p in self.input_paths().items() if not p.is_file()]
        if missing:
            raise ConfigError(f"input files not found: {missing}")
        if not self.specs or not self.protocols:
            raise ConfigError("select at least one spec and one protocol")
        unknown = [s for s in self.specs if s not in SPEC_MENU]
        if unknown:
            raise ConfigError(f"unknown specs {unknown}; choose from {sorted(SPEC_MENU)}")
        bad = [p for p in self.protocols if p not in PROTOCOLS]
        if bad:
            raise ConfigError(f"unknown protocols {bad}")
        needs_vix = any("VIX_lag" in SPEC_MENU[s].names for s in self.specs)
        if needs_vix and self.inputs.vix is None:
            raise ConfigError("VIX specs selected but inputs.vix is not set")
        if "baseline" not in self.specs:
            raise ConfigError("the baseline spec is required (other tables are built on it)")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    def section(self, name: str):
        """Plain-data view of one section, used in cache keys and the manifest."""
        value = getattr(self, name)
        if dataclasses.is_dataclass(value):
            return _plain(dataclasses.asdict(value))
        return _plain(value)

    def echo(self) -> dict:
        """Config as plain data, without run-local settings (output dir, jobs)."""
        names = [f.name for f in dataclasses.fields(self) if f.name not in ("base_dir", "output_dir", "jobs")]
        return {n: self.section(n) for n in names}


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def env_default(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)
