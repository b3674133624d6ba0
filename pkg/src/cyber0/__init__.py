"""Byzantine-resilient zero-order federated learning simulator."""
from .aggregation import AggregationRule, aggregate
from .attacks import AttackSpec
from .config import ExperimentConfig, parse_config
from .core_math import DirectionKind, derive_seed, sample_direction
from .fedsim import Strategy, run_experiment, run_seed

__version__ = "0.1.0"

__all__ = [
    "AggregationRule", "AttackSpec", "DirectionKind", "ExperimentConfig", "Strategy",
    "aggregate", "derive_seed", "parse_config", "run_experiment", "run_seed", "sample_direction",
]
