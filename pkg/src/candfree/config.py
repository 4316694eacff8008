"""Run configuration, experiment files and seed derivation.

An experiment file is a YAML (or JSON) mapping. Every key is optional except
where noted; unknown keys are rejected and defaults are written back into
the parsed config so a report's echo fully describes the run::

    dataset:
      kind: synth            # synth | synth_dir | cifar10 | idx
      classes: 10
      n_per_class: 2500
      dim: 32
      separation: 3.5
      noise: 1.0
      seed: null             # null -> derived from the master seed
      imbalance: {majority: 0, minority: 9, ratio: 10}   # optional
    network: mlp-small
    strategy: LC             # or {kind: HLH, initial: HIGH, subsequent: [LOW, HIGH]}
    strategies: [LC, HC]     # optional sweep list, used by `ablate`
    budget: {initial: 2000, batch: 1000, total: 10000}
    train: {epochs: 5, batch_size: 64, lr: 0.01, momentum: 0.9,
            weight_decay: 0.001, warm_start: true}
    mode: candidate_free     # or candidate
    candidate_scoring: latest
    seed: 0
    replicates: 3
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .acquisition import ALL_STRATEGIES, AcquisitionStrategy, StrategyKind
from .datasets import ImbalanceSpec
from .nn import PRESETS, TrainConfig
from .pool import BudgetSchedule


class ConfigError(ValueError):
    pass


class RunMode(str, enum.Enum):
    CANDIDATE_FREE = "candidate_free"
    CANDIDATE = "candidate"


# Seed streams. A stream seed is SeedSequence([master, stream, *extra]) -> 63-bit int.
SEED_STREAMS = {"init": 0, "shuffle": 1, "select": 2, "data": 3, "imbalance": 4}


def derive_seed(master: int, stream: str, *extra: int) -> int:
    if master < 0:
        raise ConfigError("master seed must be non-negative")
    ss = np.random.SeedSequence([int(master), SEED_STREAMS[stream], *(int(e) for e in extra)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synth"
    classes: int = 10
    n_per_class: int = 2500
    dim: int = 32
    separation: float = 3.5
    noise: float = 1.0
    seed: int | None = None
    path: str | None = None
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    imbalance: ImbalanceSpec | None = None

    def __post_init__(self):
        if self.kind not in ("synth", "synth_dir", "cifar10", "idx"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind in ("cifar10", "synth_dir") and not self.path:
            raise ConfigError(f"dataset kind {self.kind!r} needs 'path'")
        if self.kind == "idx" and not all(
            (self.train_images, self.train_labels, self.test_images, self.test_labels)
        ):
            raise ConfigError("idx datasets need train_images, train_labels, test_images, test_labels")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["imbalance"] = None if self.imbalance is None else self.imbalance.to_dict()
        return d


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    network: str = "mlp-small"
    strategy: AcquisitionStrategy = field(default_factory=lambda: AcquisitionStrategy(StrategyKind.LC))
    budget: BudgetSchedule = field(default_factory=lambda: BudgetSchedule(2000, 1000, 10000))
    train: TrainConfig = field(default_factory=TrainConfig)
    mode: RunMode = RunMode.CANDIDATE_FREE
    candidate_scoring: str = "latest"
    seed: int = 0
    replicates: int = 3
    strategies: tuple[AcquisitionStrategy, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", RunMode(self.mode))
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.network not in PRESETS:
            raise ConfigError(f"unknown network preset {self.network!r}; choose from {sorted(PRESETS)}")
        if self.candidate_scoring not in ("latest", "candidate"):
            raise ConfigError("candidate_scoring must be 'latest' or 'candidate'")

    def to_dict(self) -> dict:
        train = self.train.to_dict()
        train.pop("shuffle_seed")
        return {
            "dataset": self.dataset.to_dict(),
            "network": self.network,
            "strategy": self.strategy.to_dict(),
            "strategies": None if self.strategies is None else [s.to_dict() for s in self.strategies],
            "budget": self.budget.to_dict(),
            "train": train,
            "mode": self.mode.value,
            "candidate_scoring": self.candidate_scoring,
            "seed": self.seed,
            "replicates": self.replicates,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        return parse_config(raw)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "strategy" in kw:
            kw["strategy"] = AcquisitionStrategy.from_value(kw["strategy"])
        if "mode" in kw:
            kw["mode"] = RunMode(kw["mode"])
        return replace(self, **kw)

    def sweep(self) -> tuple[AcquisitionStrategy, ...]:
        if self.strategies is not None:
            return self.strategies
        return tuple(AcquisitionStrategy(k) for k in ALL_STRATEGIES)


def _check_keys(section: str, raw: dict, allowed) -> None:
    if not isinstance(raw, dict):
        raise ConfigError(f"{section or 'config'} must be a mapping")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        where = f" in '{section}'" if section else ""
        raise ConfigError(f"unknown key{'s' if len(unknown) > 1 else ''}{where}: {', '.join(unknown)}")


def _build(section: str, cls, raw: dict, **extra):
    allowed = [f.name for f in fields(cls)]
    _check_keys(section, raw, allowed)
    try:
        return cls(**{**raw, **extra})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def parse_config(raw: Any) -> RunConfig:
    """Validate a plain mapping into a :class:`RunConfig`."""
    raw = dict(raw or {})
    _check_keys("", raw, [f.name for f in fields(RunConfig)])
    kw: dict[str, Any] = {}
    if "dataset" in raw:
        ds = dict(raw["dataset"] or {})
        imb = ds.pop("imbalance", None)
        extra = {}
        if imb is not None:
            extra["imbalance"] = _build("dataset.imbalance", ImbalanceSpec, dict(imb))
        kw["dataset"] = _build("dataset", DatasetConfig, ds, **extra)
    if "budget" in raw:
        kw["budget"] = _build("budget", BudgetSchedule, dict(raw["budget"] or {}))
    if "train" in raw:
        tr = dict(raw["train"] or {})
        _check_keys("train", tr, [f.name for f in fields(TrainConfig) if f.name != "shuffle_seed"])
        kw["train"] = _build("train", TrainConfig, tr)
    try:
        if raw.get("strategy") is not None:
            kw["strategy"] = AcquisitionStrategy.from_value(raw["strategy"])
        if raw.get("strategies") is not None:
            kw["strategies"] = tuple(AcquisitionStrategy.from_value(s) for s in raw["strategies"])
        if "mode" in raw:
            kw["mode"] = RunMode(str(raw["mode"]).lower())
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad strategy or mode: {exc}") from exc
    for key in ("network", "candidate_scoring", "seed", "replicates"):
        if key in raw:
            kw[key] = raw[key]
    try:
        return RunConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    return parse_config(raw)


def dump_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    return path
