"""Run configuration: one JSON document, every field overridable from the CLI.

Schema (all keys optional; defaults shown by ``scintclass config``)::

    seed          master seed (int); component seeds derive from it
    ismr, solar   input paths for raw observations and solar indices
    data          input path of a preprocessed dataset CSV
    model_file    input path of a saved model
    out_dir       output directory
    columns       observation column map (see ColumnMap)
    solar_format  solar listing layout (see SolarFormat)
    pipeline      elevation_cutoff_deg, s4_floor, balance, use_file_ipp,
                  receiver_lat_deg, receiver_lon_deg, shell_height_km,
                  earth_radius_km
    model         kind plus hyperparameters (see ModelParams)
    split         kind ("kfold" | "holdout"), k, holdout_train_fraction, stratify
    tuner         iterations, initial, candidates, bounds {name: [lo, hi, "log"?]}

A saved ``manifest.json`` is also accepted wherever a config file is: its
``config`` entry is used.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .geo import GeometryError
from .ingest import ColumnMap, FormatError, SolarFormat
from .learners import ModelError, ModelParams
from .pipeline import PipelineConfig, PipelineError, SplitPlan
from .seeding import derive_seed
from .tuner import SearchSpace


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class TunerConfig:
    iterations: int = 50
    initial: int = 10
    candidates: int = 512
    bounds: dict = field(default_factory=lambda: {"splits": [1, 500], "learners": [10, 300, "log"]})

    def space(self) -> SearchSpace:
        return SearchSpace.of(**{k: tuple(v) for k, v in self.bounds.items()})

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "initial": self.initial,
                "candidates": self.candidates, "bounds": {k: list(v) for k, v in self.bounds.items()}}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    ismr: str | None = None
    solar: str | None = None
    data: str | None = None
    model_file: str | None = None
    out_dir: str = "out"
    columns: ColumnMap = ColumnMap()
    solar_format: SolarFormat = SolarFormat()
    pipeline: PipelineConfig = PipelineConfig()
    model: ModelParams = ModelParams.defaults("bagged")
    split: SplitPlan = SplitPlan()
    tuner: TunerConfig = TunerConfig()

    def seeds(self) -> dict[str, int]:
        return {name: derive_seed(self.seed, name) for name in ("balance", "split", "model", "tune", "synth")}

    def pipeline_config(self) -> PipelineConfig:
        return replace(self.pipeline, seed=self.seeds()["balance"])

    def split_plan(self) -> SplitPlan:
        return replace(self.split, seed=self.seeds()["split"])

    def to_dict(self) -> dict:
        split = self.split.to_dict()
        split.pop("seed")
        pipe = self.pipeline.to_dict()
        pipe.pop("seed")
        return {
            "seed": self.seed,
            "ismr": self.ismr,
            "solar": self.solar,
            "data": self.data,
            "model_file": self.model_file,
            "out_dir": self.out_dir,
            "columns": self.columns.to_dict(),
            "solar_format": self.solar_format.to_dict(),
            "pipeline": pipe,
            "model": self.model.to_dict(),
            "split": split,
            "tuner": self.tuner.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "config" in d and "command" in d:
            d = d["config"]
        problems: list[str] = []
        known = {f.name for f in fields(cls)}
        for k in sorted(set(d) - known):
            problems.append(f"{k}: unknown key")
        kw: dict = {}
        for k in ("ismr", "solar", "data", "model_file", "out_dir"):
            if k in d:
                kw[k] = d[k]
        if "seed" in d:
            if isinstance(d["seed"], bool) or not isinstance(d["seed"], int) or d["seed"] < 0:
                problems.append(f"seed: must be a non-negative integer, got {d['seed']!r}")
            else:
                kw["seed"] = d["seed"]

        def section(name, build):
            if name not in d:
                return
            try:
                kw[name] = build(d[name])
            except (TypeError, ValueError, FormatError, PipelineError, ModelError, GeometryError) as exc:
                problems.append(f"{name}: {exc}")

        section("columns", ColumnMap.from_dict)
        section("solar_format", SolarFormat.from_dict)
        section("pipeline", PipelineConfig.from_dict)
        section("model", lambda m: ModelParams.from_dict(m))
        section("split", lambda s: SplitPlan(**{k: v for k, v in s.items() if k != "seed"}))
        section("tuner", _tuner_from_dict)
        if problems:
            raise ConfigError(problems)
        return cls(**kw)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
        if not isinstance(d, dict):
            raise ConfigError([f"{path}: top level must be an object"])
        return cls.from_dict(d)


def _tuner_from_dict(d: dict) -> TunerConfig:
    unknown = set(d) - {"iterations", "initial", "candidates", "bounds"}
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    cfg = TunerConfig(**d)
    if not 1 <= cfg.initial <= cfg.iterations:
        raise ValueError("need 1 <= initial <= iterations")
    if cfg.candidates < 1:
        raise ValueError("candidates must be >= 1")
    bad = set(cfg.bounds) - {"splits", "learners"}
    if bad:
        raise ValueError(f"bounds may name only 'splits' and 'learners', got {sorted(bad)}")
    cfg.space()
    return cfg


def parse_bounds(text: str) -> dict:
    """``"splits=1:500,learners=10:300:log"`` -> bounds mapping."""
    out = {}
    for part in text.split(","):
        name, _, rng = part.partition("=")
        bits = rng.split(":")
        if not name or len(bits) not in (2, 3):
            raise ValueError(f"bad bounds entry {part!r}; expected name=lo:hi[:log]")
        entry: list = [int(bits[0]), int(bits[1])]
        if len(bits) == 3:
            if bits[2] != "log":
                raise ValueError(f"bad bounds scale {bits[2]!r}; only 'log' is allowed")
            entry.append("log")
        out[name.strip()] = entry
    return out
