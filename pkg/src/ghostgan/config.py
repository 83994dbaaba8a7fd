"""Run configuration: one YAML file with per-command sections.

Profiles ship inside the package (smoke for quick end-to-end checks, paper
for the full protocol). A user config file overrides profile values section
by section; CLI flags override both. Unknown keys anywhere are rejected so
typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import yaml

from .errors import ConfigurationError

PROFILES = ("smoke", "paper")


@dataclass
class DataConfig:
    path: str = "data/mnist"
    seed: int = 1234


@dataclass
class SimulateConfig:
    m_values: list[int] = field(default_factory=lambda: [196, 392, 784])
    bank_seed: int = 99
    master_m: int = 784
    max_train_ghosts: Optional[int] = None
    max_test_ghosts: Optional[int] = None


@dataclass
class TrainSection:
    m: int = 392
    lambda1: float = 10.0
    lambda2: float = 10.0
    alpha: float = 0.1
    gp_weight: float = 10.0
    critic_iters: int = 5
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 200
    seed: int = 7
    checkpoint_interval: int = 10
    eval_subset_size: int = 2048
    n_splits: int = 10
    log_macro_f1: bool = False
    sample_grid_size: int = 8
    max_train_images: Optional[int] = None
    run_name: Optional[str] = None


@dataclass
class EvalSection:
    checkpoints: dict = field(default_factory=dict)  # str(test beta) -> checkpoint path
    test_betas: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0])
    n_splits: int = 10
    max_images: Optional[int] = None
    classifier_epochs: int = 8
    classifier_seed: int = 5
    classifier_max_images: Optional[int] = None
    min_accuracy: Optional[float] = 0.98
    min_inception: Optional[float] = 9.5


@dataclass
class AblateSection:
    lambda_pairs: list[list[float]] = field(
        default_factory=lambda: [[10.0, 10.0], [20.0, 0.0], [0.0, 20.0], [0.0, 0.0]]
    )
    m: int = 392
    epochs: Optional[int] = None
    max_train_images: Optional[int] = None


@dataclass
class PlotSection:
    run_dir: Optional[str] = None
    out: Optional[str] = None


@dataclass
class RunConfig:
    workspace: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    ablate: AblateSection = field(default_factory=AblateSection)
    plot: PlotSection = field(default_factory=PlotSection)

    def to_yaml(self) -> str:
        return yaml.safe_dump(dataclasses.asdict(self), sort_keys=False)

    def override_seed(self, seed: int) -> None:
        """Funnel every named seed through one base value."""
        self.data.seed = seed
        self.simulate.bank_seed = seed + 1
        self.train.seed = seed + 2
        self.eval.classifier_seed = seed + 3


_SECTION_TYPES = {
    "data": DataConfig,
    "simulate": SimulateConfig,
    "train": TrainSection,
    "eval": EvalSection,
    "ablate": AblateSection,
    "plot": PlotSection,
}


def _build_section(cls, mapping, context: str):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigurationError(f"section {context} must be a mapping, got {type(mapping).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in {context}: {sorted(unknown)}")
    return cls(**mapping)


def parse_run_config(payload: dict) -> RunConfig:
    if not isinstance(payload, dict):
        raise ConfigurationError("run config must be a mapping")
    unknown = set(payload) - set(_SECTION_TYPES) - {"workspace"}
    if unknown:
        raise ConfigurationError(f"unknown top-level keys: {sorted(unknown)}")
    sections = {
        name: _build_section(cls, payload.get(name), name)
        for name, cls in _SECTION_TYPES.items()
    }
    return RunConfig(workspace=payload.get("workspace", RunConfig.workspace), **sections)


def _merge(base: dict, override: dict, context: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value, f"{context}{key}.")
        else:
            out[key] = value
    return out


def load_profile(name: str) -> dict:
    if name not in PROFILES:
        raise ConfigurationError(f"unknown profile {name!r}, expected one of {PROFILES}")
    text = resources.files("ghostgan").joinpath(f"profiles/{name}.yaml").read_text()
    return yaml.safe_load(text)


def load_run_config(
    profile: str = "smoke",
    config_path: Optional[Union[str, Path]] = None,
    seed: Optional[int] = None,
    workspace: Optional[Union[str, Path]] = None,
) -> RunConfig:
    """Profile defaults, then config-file overrides, then flag overrides."""
    payload = load_profile(profile)
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigurationError(f"config file {config_path} does not exist")
        overrides = yaml.safe_load(config_path.read_text()) or {}
        payload = _merge(payload, overrides)
    config = parse_run_config(payload)
    if seed is not None:
        config.override_seed(seed)
    if workspace is not None:
        config.workspace = str(workspace)
    return config


def load_config_snapshot(path: Union[str, Path]) -> RunConfig:
    """Reload a snapshot written with RunConfig.to_yaml."""
    return parse_run_config(yaml.safe_load(Path(path).read_text()))
