"""Experiment configuration: YAML documents mapped onto dataclasses.

Every section is a dataclass; unknown keys anywhere are rejected so a typo
never silently falls back to a default.  The only environment variable
consulted is ``RWM_OUTPUT_DIR``, which overrides ``output_dir``.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..loop import MODES
from ..perturb import KINDS

OUTPUT_DIR_ENV = "RWM_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class EnvConfig:
    kind: str = "pointmass"  # pointmass | linear
    goal: list = field(default_factory=lambda: [0.5, 0.5])
    start: list = field(default_factory=lambda: [0.0, 0.0])
    randomize_goal: bool = False
    randomize_start: bool = False
    episode_length: int = 200
    # linear plant
    A: list | None = None
    B: list | None = None
    noise_std: float = 0.0
    z_ref: list | None = None
    z0: list | None = None

    def validate(self):
        if self.kind not in ("pointmass", "linear"):
            raise ConfigError(f"env.kind must be pointmass or linear, got {self.kind!r}")
        if self.episode_length < 0:
            raise ConfigError("env.episode_length must be >= 0 (0 means never reset)")
        if self.kind == "linear" and (self.A is None or self.B is None or self.z_ref is None):
            raise ConfigError("a linear env needs A, B and z_ref")


@dataclass
class CostConfig:
    c: float = 0.5
    lam: float = 0.2


@dataclass
class BaselineConfig:
    kind: str = "pd"  # pd | learned | linear_feedback
    pd_gains: list = field(default_factory=lambda: [4.0, 1.0])
    # learned (cross-entropy pre-training)
    cost: CostConfig = field(default_factory=CostConfig)
    budget: int = 40000
    hidden: list = field(default_factory=lambda: [16])
    # linear_feedback: a0 = u_ff + K (z_ref - z)
    K: list | None = None

    def validate(self):
        if self.kind not in ("pd", "learned", "linear_feedback"):
            raise ConfigError(f"baseline.kind must be pd, learned or linear_feedback, "
                              f"got {self.kind!r}")


@dataclass
class WorldModelConfig:
    kind: str = "learned"  # learned | perfect (linear env only)
    transitions: int = 10000
    exploration_std: float = 0.9
    exploration_smoothing: float = 0.8
    hidden: list = field(default_factory=lambda: [64, 64])
    activation: str = "tanh"
    residual: bool = True
    epochs: int = 100
    batch_size: int = 64
    lr: float = 3e-3
    lr_final: float | None = 1e-5
    condition_on: str = "base"  # base | total

    def validate(self):
        if self.kind not in ("learned", "perfect"):
            raise ConfigError("world_model.kind must be learned or perfect")
        if self.condition_on not in ("base", "total"):
            raise ConfigError("world_model.condition_on must be base or total")
        if self.transitions < self.batch_size:
            raise ConfigError("world_model.transitions must be >= batch_size")


@dataclass
class ReflexConfig:
    hidden: list = field(default_factory=lambda: [32, 32])
    activation: str = "relu"
    lr: float = 3e-4
    horizon: int = 3
    eta: float = 0.05  # analytic reflex step size

    def validate(self):
        if self.horizon < 1:
            raise ConfigError("reflex.horizon must be >= 1")
        if self.lr <= 0 or self.eta <= 0:
            raise ConfigError("reflex.lr and reflex.eta must be positive")


@dataclass
class PerturbationConfig:
    kind: str = "step_cycle"
    magnitude_range: list = field(default_factory=lambda: [-0.5, 0.5])
    magnitude: list = field(default_factory=lambda: [0.4, 0.4])  # alternating
    on_steps: int = 2000
    off_steps: int = 2000
    resample_each_cycle: bool = True
    amplitude: float = 0.4  # drift
    period: int = 16000
    noise_std: float = 0.5
    filter_coef: float = 0.01
    noise_envelope: float | None = None
    seed_offset: int = 0

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"perturbation.kind must be one of {KINDS}")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    mode: str = "rwm"
    seeds: list = field(default_factory=lambda: [0])
    total_steps: int | None = None
    cycles: int | None = 20
    output_dir: str = "runs/experiment"
    pretrain_with_perturbations: bool = False
    env: EnvConfig = field(default_factory=EnvConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    world_model: WorldModelConfig = field(default_factory=WorldModelConfig)
    reflex: ReflexConfig = field(default_factory=ReflexConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        for section in (self.env, self.baseline, self.world_model, self.reflex,
                        self.perturbation):
            section.validate()
        if self.env.kind == "linear":
            if self.baseline.kind != "linear_feedback":
                raise ConfigError("a linear env needs baseline.kind linear_feedback")
        elif self.baseline.kind == "linear_feedback":
            raise ConfigError("baseline.kind linear_feedback needs a linear env")
        if self.world_model.kind == "perfect" and self.env.kind != "linear":
            raise ConfigError("world_model.kind perfect is only available for a linear env")
        if self.pretrain_with_perturbations and self.perturbation.kind != "step_cycle":
            raise ConfigError("pretrain_with_perturbations needs a step_cycle perturbation")
        self.steps()
        return self

    def steps(self) -> int:
        """Total phase-2 steps, from ``total_steps`` or ``cycles`` full cycles."""
        if self.total_steps is not None:
            if self.total_steps < 1:
                raise ConfigError("total_steps must be >= 1")
            return int(self.total_steps)
        if self.cycles is None or self.cycles < 1:
            raise ConfigError("set total_steps or a positive cycles count")
        if self.perturbation.kind not in ("step_cycle", "alternating"):
            raise ConfigError("cycles only applies to cyclic perturbations; set total_steps")
        return int(self.cycles * (self.perturbation.on_steps + self.perturbation.off_steps))

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory \
            is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "").validate()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return config_from_dict(data or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
