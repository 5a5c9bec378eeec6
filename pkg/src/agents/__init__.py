# src/agents/__init__.py
"""
Grasp agents - Expert controller and diffusion policies.
"""

from .agent_base import GraspAgent
from .diffusion import NoiseSchedule, timestep_embedding
from .diffusion_agent import (
    FORCEFUL,
    POSITION_ONLY,
    DenoiserNet,
    DiffusionPolicy,
    DiffusionPolicyAgent,
    PolicyConfig,
    TrainingDivergedError,
    TrainingPairs,
    Variant,
    build_training_pairs,
    get_variant,
    train,
)
from .expert_agent import (
    ControllerGains,
    ExpertAgent,
    ExpertConfig,
    ExpertParams,
    GenerationConfig,
    GenerationManifest,
    MissedObjectError,
    expert_step,
    generate_demonstrations,
    target_force,
)

__all__ = [
    "GraspAgent",

    # Expert
    "ControllerGains", "ExpertAgent", "ExpertConfig", "ExpertParams", "GenerationConfig",
    "GenerationManifest", "MissedObjectError", "expert_step", "generate_demonstrations", "target_force",

    # Diffusion policy
    "NoiseSchedule", "timestep_embedding", "FORCEFUL", "POSITION_ONLY", "DenoiserNet",
    "DiffusionPolicy", "DiffusionPolicyAgent", "PolicyConfig", "TrainingDivergedError",
    "TrainingPairs", "Variant", "build_training_pairs", "get_variant", "train",
]
