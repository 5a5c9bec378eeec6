# src/core/__init__.py
"""
Core modules - Configuration, physics, data and numerics infrastructure.
"""

from .catalog import evaluation_catalog, load_catalog, sample_object_catalog, save_catalog
from .checkpoint import CheckpointError, load_tensors, save_tensors
from .config import ConfigError, get_settings, load_config_file
from .dataset import (
    Episode,
    EpisodeFormatError,
    NormStats,
    Step,
    compute_norm_stats,
    embed_instruction,
    grasp_only,
    read_episodes,
    split,
    write_episodes,
)
from .logger import get_logger
from .nn import MLP, AdamState, NonFiniteError, ShapeError, adam_step, gradient_check
from .outcome import GraspOutcome, OutcomeLabel, classify
from .physics import (
    CatalogError,
    GripperCommand,
    GripperObservation,
    GripperState,
    LiftResult,
    ObjectSpec,
    ObjectState,
    SimConfig,
    lift_test,
    step,
    true_contact_force,
)
from .rng import derive_seed, make_rng

__all__ = [
    # Configuration and logging
    "ConfigError", "get_settings", "load_config_file", "get_logger",

    # Physics and catalog
    "CatalogError", "GripperCommand", "GripperObservation", "GripperState", "LiftResult",
    "ObjectSpec", "ObjectState", "SimConfig", "lift_test", "step", "true_contact_force",
    "evaluation_catalog", "load_catalog", "sample_object_catalog", "save_catalog",

    # Outcomes
    "GraspOutcome", "OutcomeLabel", "classify",

    # Dataset
    "Episode", "EpisodeFormatError", "NormStats", "Step", "compute_norm_stats",
    "embed_instruction", "grasp_only", "read_episodes", "split", "write_episodes",

    # Numerics
    "MLP", "AdamState", "NonFiniteError", "ShapeError", "adam_step", "gradient_check",
    "CheckpointError", "load_tensors", "save_tensors", "derive_seed", "make_rng",
]
