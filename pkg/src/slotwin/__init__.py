"""Sliding-window SLAM that optimizes the ego trajectory jointly with tracked objects."""

from .config import ConfigError, PipelineConfig, load_config
from .geometry import Pose
from .io import DatasetBundle, load_bundle, save_bundle
from .pipeline import PipelineResult, run_pipeline
from .simulator import ScenarioSpec, build_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DatasetBundle",
    "PipelineConfig",
    "PipelineResult",
    "Pose",
    "ScenarioSpec",
    "build_scenario",
    "load_bundle",
    "load_config",
    "run_pipeline",
    "save_bundle",
]
