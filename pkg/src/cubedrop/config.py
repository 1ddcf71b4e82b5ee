"""Experiment configuration, read from YAML."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .cubing import CubeSearchConfig, HyperGrid
from .mc_dropout import VARIANTS
from .spatial_sim import SimConfig

STANDARD_SETTINGS = {1: (0.5, 0.3), 2: (1.5, 0.3), 3: (0.5, 0.6), 4: (1.5, 0.6)}


@dataclass(frozen=True)
class Setting:
    id: int
    nu: float
    effective_range: float

    @property
    def name(self) -> str:
        return f"setting{self.id}"


@dataclass(frozen=True)
class BaselineConfig:
    n_iter: int = 10_000
    n_burn: int = 1_000
    prior_cov_scale: float = 100.0
    tau2_shape: float = 2.0


@dataclass(frozen=True)
class TrainDefaults:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 256
    epochs: int = 100


@dataclass(frozen=True)
class ExperimentConfig:
    settings: tuple = tuple(Setting(i, *STANDARD_SETTINGS[i]) for i in (1, 4))
    basis_dims: tuple = (25, 135)
    replicates: int = 5
    variants: tuple = VARIANTS
    grid: HyperGrid = field(default_factory=HyperGrid.regular)
    cube: CubeSearchConfig = field(default_factory=CubeSearchConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    train: TrainDefaults = field(default_factory=TrainDefaults)
    passes: int = 500
    fa_length_scale: float = 1.0
    alpha: float = 0.05
    gamma: float = 1.0
    metric: str = "mmis"
    top_n: int = 10
    keep: int = 5
    seed_root: int = 20240601
    output_dir: str = "runs/desk"
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        for m in self.basis_dims:
            if not 0 <= m < self.sim.n_total:
                raise ValueError(f"basis dimension {m} must be below n_total={self.sim.n_total}")
        bad = set(self.variants) - set(VARIANTS)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}")
        if self.metric not in ("mmis", "crps"):
            raise ValueError("metric must be 'mmis' or 'crps'")

    def setting(self, sid: int) -> Setting:
        for s in self.settings:
            if s.id == sid:
                return s
        raise KeyError(f"no setting with id {sid}")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


def _build(cls, data: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**data)


def _grid(data: dict) -> HyperGrid:
    if {"lambda_values", "dropout_values", "k_values"} <= set(data):
        return HyperGrid(tuple(data["lambda_values"]), tuple(data["dropout_values"]),
                         tuple(data["k_values"]))
    return HyperGrid.regular(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    kw = {}
    if "settings" in data:
        out = []
        for i, s in enumerate(data.pop("settings")):
            if isinstance(s, int):
                out.append(Setting(s, *STANDARD_SETTINGS[s]))
            else:
                out.append(Setting(int(s.get("id", i + 1)), float(s["nu"]),
                                   float(s["effective_range"])))
        kw["settings"] = tuple(out)
    if "grid" in data:
        kw["grid"] = _grid(data.pop("grid"))
    for key, cls in (("cube", CubeSearchConfig), ("sim", SimConfig),
                     ("baseline", BaselineConfig), ("train", TrainDefaults)):
        if key in data:
            kw[key] = _build(cls, data.pop(key))
    for key in ("basis_dims", "variants"):
        if key in data:
            kw[key] = tuple(data.pop(key))
    kw.update(data)
    return _build(ExperimentConfig, kw)


def load_config(path) -> ExperimentConfig:
    return config_from_dict(yaml.safe_load(Path(path).read_text()))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["grid"] = {k: list(v) for k, v in d["grid"].items()}
    d["settings"] = [dict(s) for s in d["settings"]]
    d["sim"]["beta"] = list(d["sim"]["beta"])
    for k in ("basis_dims", "variants"):
        d[k] = list(d[k])
    return d
