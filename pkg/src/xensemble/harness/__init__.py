"""Config-driven experiment pipeline and CLI."""

from .config import (CONFIG_VERSION, THREAT_MODES, AttackEntry, AttackStage, ConfigError, DataError, DataSpec,
                     DefenseSpec, ExperimentConfig, KappaSpec, ModelSpec, PoolSpec, ThreatSpec, TrainSpec,
                     config_from_dict, config_to_dict, derive_seed, dump_config, load_config)
from .pipeline import COMMANDS, PIPELINE_ORDER, Run

__all__ = [
    "CONFIG_VERSION", "THREAT_MODES", "AttackEntry", "AttackStage", "COMMANDS", "ConfigError", "DataError",
    "DataSpec", "DefenseSpec", "ExperimentConfig", "KappaSpec", "ModelSpec", "PIPELINE_ORDER", "PoolSpec", "Run",
    "ThreatSpec", "TrainSpec", "config_from_dict", "config_to_dict", "derive_seed", "dump_config", "load_config",
]
