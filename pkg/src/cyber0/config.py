"""Experiment configuration: typed JSON documents with dot-path overrides.

Defaults follow the MNIST logistic-regression setup (40 clients, 10 of them
Byzantine, K=64, mu=1e-3, eta=0.01, batch 64, 400 global epochs).
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from .aggregation import AggregationRule, trim_count
from .attacks import ATTACK_KINDS, AttackSpec, default_omega_grid
from .core_math import DirectionKind
from .fedsim import Strategy
from .model import Dataset


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid config:\n  " + "\n  ".join(errors))


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "mnist"             # "mnist" or "synthetic"
    path: str | None = None         # MNIST directory; falls back to $CYBER0_DATA_DIR
    scaling: str = "standard"       # "standard" (train mean/std) or "unit" ([0, 1])
    bias: bool = False
    seed: int = 0                   # synthetic only
    samples: int = 2000
    test_samples: int = 500
    features: int = 20
    classes: int = 10
    margin: float = 4.0


@dataclass(frozen=True)
class PartitionConfig:
    kind: str = "iid"
    alpha: float = 1.0


@dataclass(frozen=True)
class RuleConfig:
    base: str = "cwtm"
    beta: float | None = None       # None -> f / n
    nnm: bool = False
    krum_squared: bool = False


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "none"
    omega_grid: tuple[float, ...] | None = None  # None -> 0.0, 0.1, ..., 5.0
    target_nnm: bool = False
    beta: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    rule: RuleConfig = field(default_factory=RuleConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    strategy: Strategy = Strategy.UNBIASED
    direction: DirectionKind = DirectionKind.SPHERE
    n: int = 40
    f: int = 10
    K: int = 64
    L: int = 1
    T: int = 400
    mu: float = 0.001
    eta: float = 0.01
    batch_size: int = 64
    seeds: tuple[int, ...] = (0,)
    eval_every: int = 10
    workers: int = 1
    timing: bool = False

    def aggregation_rule(self) -> AggregationRule:
        beta = self.rule.beta if self.rule.beta is not None else self.f / self.n
        return AggregationRule(self.rule.base, beta if self.rule.base == "cwtm" else 0.0,
                               self.f, self.rule.nnm, None, self.rule.krum_squared)

    def attack_spec(self) -> AttackSpec:
        grid = self.attack.omega_grid if self.attack.omega_grid is not None else default_omega_grid()
        return AttackSpec(self.attack.kind, tuple(grid), self.attack.target_nnm, self.attack.beta)

    def uplink_per_epoch(self, d: int) -> int:
        from .fedsim import uplink_per_epoch
        return uplink_per_epoch(self.strategy, self.K, self.L, d)


_SECTIONS = {"dataset": DatasetConfig, "partition": PartitionConfig, "rule": RuleConfig, "attack": AttackConfig}


def _coerce(cls, key: str, value, errors: list[str]):
    """Convert a JSON value to the declared field type of ``cls.key``."""
    default = getattr(cls(), key)
    try:
        if key == "strategy":
            return Strategy(value)
        if key == "direction":
            return DirectionKind(value)
        if key in ("seeds", "omega_grid"):
            if value is None and key == "omega_grid":
                return None
            seq = value if isinstance(value, (list, tuple)) else [value]
            return tuple(int(v) if key == "seeds" else float(v) for v in seq)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError("expected an integer")
            return int(value)
        if isinstance(default, float) or (default is None and key in ("beta", "alpha")):
            return None if value is None else float(value)
        if default is None or isinstance(default, str):
            return None if value is None else str(value)
    except (TypeError, ValueError) as exc:
        errors.append(f"{key}: {exc}")
        return default
    return value


def _build(cls, raw: dict, prefix: str, errors: list[str]):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        path = f"{prefix}{key}"
        if key not in names:
            errors.append(f"{path}: unknown key")
            continue
        if key in _SECTIONS and cls is ExperimentConfig:
            if not isinstance(value, dict):
                errors.append(f"{path}: expected an object")
                continue
            kwargs[key] = _build(_SECTIONS[key], value, path + ".", errors)
            continue
        local: list[str] = []
        kwargs[key] = _coerce(cls, key, value, local)
        errors.extend(f"{prefix}{e}" for e in local)
    return cls(**kwargs)


def validate(config: ExperimentConfig) -> list[str]:
    errors = []
    c = config
    if c.n < 1:
        errors.append("n: must be >= 1")
    if c.f < 0 or 2 * c.f >= c.n:
        errors.append(f"f: need 0 <= f < n/2 (f={c.f}, n={c.n})")
    for key in ("K", "L", "T", "batch_size", "eval_every", "workers"):
        if getattr(c, key) < 1:
            errors.append(f"{key}: must be >= 1")
    if c.mu < 0:
        errors.append("mu: must be >= 0")
    if not c.eta > 0:
        errors.append("eta: must be > 0")
    if not c.seeds:
        errors.append("seeds: at least one seed required")
    if any(s < 0 for s in c.seeds):
        errors.append("seeds: must be non-negative")
    if c.dataset.name not in ("mnist", "synthetic"):
        errors.append(f"dataset.name: unknown dataset {c.dataset.name!r}")
    if c.dataset.scaling not in ("standard", "unit"):
        errors.append(f"dataset.scaling: expected 'standard' or 'unit', got {c.dataset.scaling!r}")
    if c.partition.kind not in ("iid", "dirichlet"):
        errors.append(f"partition.kind: unknown partition {c.partition.kind!r}")
    elif c.partition.kind == "dirichlet" and not c.partition.alpha > 0:
        errors.append("partition.alpha: must be > 0")
    if c.rule.base not in ("mean", "cwtm", "krum"):
        errors.append(f"rule.base: unknown rule {c.rule.base!r}")
    elif not errors:
        rule = c.aggregation_rule()
        if rule.base == "cwtm" and not (0 <= rule.beta < 0.5 and c.n - 2 * trim_count(c.n, rule.beta) >= 1):
            errors.append(f"rule.beta: CWTM({rule.beta}) invalid for n={c.n}")
        if rule.base == "krum" and c.n - c.f - 2 < 1:
            errors.append(f"rule.base: Krum needs n - f - 2 >= 1 (n={c.n}, f={c.f})")
    if c.attack.kind not in ATTACK_KINDS:
        errors.append(f"attack.kind: unknown attack {c.attack.kind!r}")
    elif c.attack.kind in ("alie", "foe") and c.attack.omega_grid is not None and not c.attack.omega_grid:
        errors.append("attack.omega_grid: must be non-empty for ALIE/FOE")
    if c.attack.kind == "tma" and not errors:
        beta = c.attack.beta
        if beta is None:
            beta = c.aggregation_rule().beta if c.rule.base == "cwtm" else c.f / c.n
        if trim_count(c.n, beta) < 1:
            errors.append(f"attack.beta: TMA needs floor(beta*n) >= 1 (beta={beta}, n={c.n})")
    if c.attack.kind in ("alie", "foe") and c.f > 0 and c.n - c.f < 2:
        errors.append("attack.kind: ALIE/FOE need at least two honest clients")
    return errors


def set_path(raw: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError([f"{dotted}: {key} is not a section"])
    node[keys[-1]] = value


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError([f"{item}: overrides take the form key.path=value"])
    key, text = item.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    return key.strip(), value


def parse_config(source=None, overrides=()) -> ExperimentConfig:
    """Build a validated config from a JSON file path or dict plus ``key.path=value`` overrides."""
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = json.loads(json.dumps(source))
    else:
        try:
            raw = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"{source}: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    for item in overrides:
        key, value = parse_override(item)
        set_path(raw, key, value)
    errors: list[str] = []
    config = _build(ExperimentConfig, raw, "", errors)
    if not errors:
        errors = validate(config)
    if errors:
        raise ConfigError(errors)
    return config


def to_dict(config: ExperimentConfig) -> dict:
    out = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            value = {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(value).items()}
        elif isinstance(value, tuple):
            value = list(value)
        elif hasattr(value, "value"):
            value = value.value
        out[f.name] = value
    return out


def dumps(config: ExperimentConfig) -> str:
    return json.dumps(to_dict(config), indent=2, sort_keys=True) + "\n"


@lru_cache(maxsize=4)
def _mnist(path, scaling: str) -> tuple[Dataset, Dataset]:
    from .data import load_mnist, standardize

    train, test = load_mnist(path)
    if scaling == "standard":
        train, test = standardize(train, test)
    return train, test


def load_datasets(cfg: DatasetConfig, seed: int = 0) -> tuple[Dataset, Dataset]:
    if cfg.name == "mnist":
        return _mnist(cfg.path, cfg.scaling)
    from .data import standardize, synthetic_classification

    full = synthetic_classification(cfg.seed, cfg.samples + cfg.test_samples, cfg.features,
                                    cfg.classes, cfg.margin)
    train, test = full.subset(range(cfg.samples)), full.subset(range(cfg.samples, len(full)))
    if cfg.scaling == "standard":
        train, test = standardize(train, test)
    return train, test
