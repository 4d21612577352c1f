"""Run configuration: flat key=value files with block prefixes.

Example::

    task.name=zdt1
    task.n=10000
    reweight.tau=0.05
    sampler.steps=128

Unknown keys are rejected so typos fail fast. Defaults follow the
framework's standard hyperparameters; the sampler block defaults to the
desk-scale 128 steps (the library-level SamplerConfig default stays at
1024, one override away).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

__all__ = ["ConfigError", "RunConfig", "parse_config_text",
           "load_config", "apply_overrides"]


class ConfigError(ValueError):
    """Raised for unparseable or unknown configuration input."""


@dataclass
class TaskBlock:
    name: str = "zdt1"
    d: Optional[int] = None
    m: Optional[int] = None
    n: int = 10000
    strategy: str = "ea-collected"
    seed: int = 7
    dataset: Optional[str] = None


@dataclass
class ReweightBlock:
    mode: str = "reweight"  # none | prune | reweight
    bins: int = 30
    k: float = 10.0
    tau: float = 0.05
    keep_fraction: float = 0.5


@dataclass
class CondBlock:
    strategy: str = "refdir"  # refdir | dbest | ideal | dataset-fronts
    l: int = 32
    j: int = 32
    q: int = 256
    distance: float = 0.1
    noise_sigma: float = 0.05
    refdir_method: str = "riesz"  # riesz | das-dennis
    refdir_iterations: int = 1000


@dataclass
class ModelBlock:
    width: int = 512
    depth: int = 4
    rff_dim: int = 16
    cond_embed_dim: int = 32
    cfg_dropout: float = 0.25
    sigma_data: float = 1.0
    p_mean: float = -1.2
    p_std: float = 1.2


@dataclass
class TrainBlock:
    batch_size: int = 512
    max_steps: int = 12000
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    ema_decay: float = 0.999
    holdout_fraction: float = 0.1
    patience: int = 10
    eval_interval: int = 100
    min_rel_improvement: float = 1e-3


@dataclass
class SamplerBlock:
    steps: int = 128
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    s_churn: float = 80.0
    s_tmin: float = 0.05
    s_tmax: float = 50.0
    s_noise: float = 1.003
    gamma: float = 2.5
    mode: str = "stochastic"


@dataclass
class EvalBlock:
    ref_multiplier: float = 1.1
    seeds: int = 3


@dataclass
class RunConfig:
    task: TaskBlock = field(default_factory=TaskBlock)
    reweight: ReweightBlock = field(default_factory=ReweightBlock)
    cond: CondBlock = field(default_factory=CondBlock)
    model: ModelBlock = field(default_factory=ModelBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    sampler: SamplerBlock = field(default_factory=SamplerBlock)
    eval: EvalBlock = field(default_factory=EvalBlock)

    def to_flat_dict(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for blk in fields(self):
            block = getattr(self, blk.name)
            for f in fields(block):
                out[f"{blk.name}.{f.name}"] = getattr(block, f.name)
        return out

    def copy(self) -> "RunConfig":
        return RunConfig(**{
            blk.name: dataclasses.replace(getattr(self, blk.name))
            for blk in fields(self)
        })


def _coerce(raw: str, annotation, key: str):
    raw = raw.strip()
    if annotation in (Optional[int], Optional[str]) and raw.lower() in ("", "none"):
        return None
    if annotation in (int, Optional[int]):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if annotation is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    if annotation is bool:
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    return raw


def _set_key(config: RunConfig, key: str, value: str) -> None:
    block_name, _, field_name = key.partition(".")
    if not field_name:
        raise ConfigError(f"key {key!r} must look like block.field")
    try:
        block = getattr(config, block_name)
    except AttributeError as exc:
        raise ConfigError(f"unknown config block {block_name!r}") from exc
    for f in fields(block):
        if f.name == field_name:
            setattr(block, field_name, _coerce(value, _resolve(block, f), key))
            return
    raise ConfigError(f"unknown key {key!r}")


def _resolve(block, f):
    hints = getattr(type(block), "__annotations__", {})
    ann = hints.get(f.name, str)
    mapping = {"int": int, "float": float, "str": str, "bool": bool,
               "Optional[int]": Optional[int], "Optional[str]": Optional[str]}
    if isinstance(ann, str):
        return mapping.get(ann, str)
    return ann


def parse_config_text(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    config = base.copy() if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        _set_key(config, key.strip(), value)
    return config


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply --set key=value pairs on top of a parsed config."""
    out = config.copy()
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like key=value")
        _set_key(out, key.strip(), value)
    return out
