"""Run configuration"""
from .config import DataConfig, TrainConfig, EvalConfig, AblateConfig, RunConfig, load_run_config

__all__ = [
    'DataConfig',
    'TrainConfig',
    'EvalConfig',
    'AblateConfig',
    'RunConfig',
    'load_run_config',
]
