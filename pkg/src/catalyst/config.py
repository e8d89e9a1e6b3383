"""Flat key/value experiment configuration (YAML mapping, unknown keys rejected)."""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import yaml

from .data import GENERATORS
from .nn import Activation
from .pipeline import LRSchedule, TrainConfig

_T = TrainConfig()


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # dataset: a builtin generator, or a CSV file when csv_path is set
    dataset: str = "gaussian-blobs"
    n_classes: int = 3
    dim: int = 2
    n_train: int = 3000
    n_test: int = 1000
    noise: float = 1.0
    data_seed: int = 0
    csv_path: Optional[str] = None
    label_column: str = "label"

    # model: widths of the hidden layers; target indexes them
    hidden_widths: List[int] = field(default_factory=lambda: [64, 64])
    sigma: str = "relu"
    target: int = 1
    pretrain_epochs: int = 20
    pretrain_lr: float = 0.05
    pretrain_decay: float = 5e-4

    # catalyst pruning
    lr_opt1: float = _T.lr_opt1.base
    lr_opt1_decay_epochs: List[int] = field(default_factory=lambda: list(_T.lr_opt1.decay_epochs))
    lr_opt1_decay_ratio: float = _T.lr_opt1.ratio
    lr_opt2: float = _T.lr_opt2.base
    lr_opt2_decay_epochs: List[int] = field(default_factory=lambda: list(_T.lr_opt2.decay_epochs))
    lr_opt2_decay_ratio: float = _T.lr_opt2.ratio
    lr_finetune: float = _T.lr_finetune.base
    lr_finetune_decay_epochs: List[int] = field(default_factory=lambda: list(_T.lr_finetune.decay_epochs))
    lr_finetune_decay_ratio: float = _T.lr_finetune.ratio
    alpha_theta: float = _T.alpha_theta
    alpha_D: float = _T.alpha_D
    gamma0: float = _T.gamma0
    gamma0_prime: float = _T.gamma0_prime
    epsilon: float = _T.epsilon
    epsilon_prime: float = _T.epsilon_prime
    kappa: float = _T.kappa
    T: int = _T.T
    T_prime: int = _T.T_prime
    c_init: float = _T.c_init
    seed: int = _T.seed
    batch_size: int = _T.batch_size
    finetune_epochs: int = _T.finetune_epochs
    momentum: float = _T.momentum

    # output
    output_dir: str = "runs/latest"
    figures: bool = True
    hist_bins: int = 30

    def __post_init__(self):
        try:
            self.kappa = float(self.kappa)
            Activation(self.sigma)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.csv_path is None and self.dataset not in GENERATORS:
            raise ConfigError(f"unknown dataset generator {self.dataset!r}; choose from {GENERATORS}")
        if self.csv_path is not None and not os.path.exists(self.csv_path):
            raise ConfigError(f"csv_path does not exist: {self.csv_path}")
        if not self.hidden_widths or any(int(w) < 1 for w in self.hidden_widths):
            raise ConfigError(f"hidden_widths must be positive integers, got {self.hidden_widths}")
        if not 0 <= self.target < len(self.hidden_widths):
            raise ConfigError(f"target {self.target} out of range for {len(self.hidden_widths)} hidden layers")
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        def sched(name):
            return LRSchedule(getattr(self, name), tuple(getattr(self, name + "_decay_epochs")),
                              getattr(self, name + "_decay_ratio"))

        plain = {f.name: getattr(self, f.name) for f in fields(TrainConfig)
                 if not f.name.startswith("lr_")}
        return TrainConfig(lr_opt1=sched("lr_opt1"), lr_opt2=sched("lr_opt2"),
                           lr_finetune=sched("lr_finetune"), **plain)

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["kappa"]):
            d["kappa"] = "inf"
        return d

    @classmethod
    def from_mapping(cls, mapping: dict, base_dir: Optional[str] = None) -> "ExperimentConfig":
        if not isinstance(mapping, dict):
            raise ConfigError("config must be a flat key/value mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in mapping.items():
            if isinstance(value, dict):
                raise ConfigError(f"config must be flat; {key!r} holds a nested mapping")
        mapping = dict(mapping)
        if base_dir and mapping.get("csv_path") and not os.path.isabs(mapping["csv_path"]):
            mapping["csv_path"] = os.path.join(base_dir, mapping["csv_path"])
        try:
            return cls(**mapping)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                mapping = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(mapping, base_dir=os.path.dirname(os.path.abspath(path)))


@dataclass
class SweepConfig:
    """Phase-diagram grid for the ``sweep`` subcommand."""

    c0: List[float] = field(default_factory=lambda: [0.25, 0.5, 0.8, 0.95, 1.0, 1.05, 1.25, 2.0, 4.0])
    lam: List[float] = field(default_factory=lambda: [1e-3, 3e-3, 1e-2])
    alpha: List[float] = field(default_factory=lambda: [0.0, 1e-4])
    steps: int = 100_000
    n: int = 8
    seed: int = 0
    output_dir: str = "runs/sweep"
    figures: bool = True

    @classmethod
    def load(cls, path) -> "SweepConfig":
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            mapping = yaml.safe_load(fh) or {}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unknown sweep keys: {', '.join(unknown)}")
        return cls(**mapping)
