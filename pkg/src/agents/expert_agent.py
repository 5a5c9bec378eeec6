# expert_agent.py
"""
Expert Agent - Adaptive force-feedback grasp controller.
Closes until contact, then ramps the force limit proportionally toward a
slip-safe target derived from estimated mass and friction. Also records
expert demonstrations for policy training.
"""

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import dataclass_to_dict
from ..core.dataset import Episode, embed_instruction, instruction_for, make_step, stamp_flags
from ..core.logger import get_logger
from ..core.outcome import GraspOutcome, OutcomeLabel, classify
from ..core.physics import (
    GripperCommand,
    GripperObservation,
    GripperState,
    ObjectSpec,
    ObjectState,
    SimConfig,
    is_feasible,
    lift_test,
    observe,
    step,
    true_contact_force,
)
from ..core.rng import make_rng
from ..core.workers import fan_out
from .agent_base import GraspAgent

log = get_logger("Expert")

CLOSING = "closing"
SQUEEZING = "squeezing"
HOLDING = "holding"

# Reference band of final applied force in the real demonstration set
OBSERVED_FORCE_BAND = (1.1, 2.3)
# Mean wall-clock time of one LLM-driven expert grasp on hardware
OBSERVED_EXPERT_LATENCY_S = 14.11


class MissedObjectError(RuntimeError):
    """Raised when the fingers close fully without ever touching the object."""


@dataclass(frozen=True)
class ExpertParams:
    """Estimated object parameters the controller plans with."""

    est_mass: float     # kg
    est_mu: float
    est_k: float        # N/mm
    slip_margin: float = 1.2

    def __post_init__(self):
        for name in ("est_mass", "est_mu", "est_k", "slip_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    @classmethod
    def estimate(
        cls,
        spec: ObjectSpec,
        noise_std: float,
        rng: np.random.Generator,
        slip_margin: float = 1.2
    ) -> "ExpertParams":
        """
        Log-normally perturbed estimates of an object's parameters.

        Three normal draws are consumed even when noise_std is 0.

        Args:
            spec: Ground-truth object
            noise_std: Log-space standard deviation (0 for exact estimates)
            rng: Estimation stream
            slip_margin: Safety factor on the holding force

        Returns:
            ExpertParams
        """
        z = rng.normal(0.0, 1.0, size=3)
        factors = np.exp(noise_std * z)
        return cls(
            est_mass=spec.mass * float(factors[0]),
            est_mu=spec.friction_mu * float(factors[1]),
            est_k=spec.stiffness_k * float(factors[2]),
            slip_margin=slip_margin,
        )


@dataclass(frozen=True)
class ControllerGains:
    """Gains and limits of the proportional force controller."""

    contact_threshold: float = 0.15   # N, 3x the default sensor noise
    aperture_step: float = 3.0        # mm per tick
    kp_force: float = 0.5
    initial_force: float = 0.15       # N
    min_force: float = 0.15           # N
    max_force: float = 10.0           # N
    min_force_step: float = 0.05      # N, torque-limit quantum
    stall_tolerance: float = 0.5      # mm

    def __post_init__(self):
        if not 0 < self.kp_force <= 1:
            raise ValueError(f"kp_force must be in (0, 1], got {self.kp_force}")
        if not self.contact_threshold > 0:
            raise ValueError(f"contact_threshold must be > 0, got {self.contact_threshold}")
        if not self.aperture_step > 0:
            raise ValueError(f"aperture_step must be > 0, got {self.aperture_step}")
        if not 0 < self.min_force <= self.initial_force <= self.max_force:
            raise ValueError(
                f"need 0 < min_force <= initial_force <= max_force, got "
                f"{self.min_force}, {self.initial_force}, {self.max_force}"
            )
        if self.min_force_step < 0 or self.stall_tolerance < 0:
            raise ValueError("min_force_step and stall_tolerance must be >= 0")

    def check_noise_floor(self, cfg: SimConfig):
        """Contact threshold must sit above the sensor noise floor."""
        if self.contact_threshold <= cfg.sensor_noise_std:
            raise ValueError(
                f"contact_threshold {self.contact_threshold} N is inside the sensor noise "
                f"floor ({cfg.sensor_noise_std} N)"
            )


@dataclass(frozen=True)
class ExpertConfig:
    """Demonstration expert settings."""

    param_noise_std: float = 0.2
    slip_margin: float = 1.2
    max_ticks: int = 40
    start_offset_min: float = 2.0   # mm above rest width
    start_offset_max: float = 8.0

    def __post_init__(self):
        if self.param_noise_std < 0:
            raise ValueError(f"param_noise_std must be >= 0, got {self.param_noise_std}")
        if not 0 <= self.start_offset_min <= self.start_offset_max:
            raise ValueError("need 0 <= start_offset_min <= start_offset_max")
        if self.max_ticks < 1:
            raise ValueError(f"max_ticks must be >= 1, got {self.max_ticks}")


@dataclass(frozen=True)
class GenerationConfig:
    """Demonstration corpus settings."""

    n_objects: int = 30
    per_object_min: int = 5
    per_object_max: int = 7
    keep_per_object_min: int = 4
    keep_per_object_max: int = 5
    approach_steps: int = 2
    home_steps: int = 2
    max_skip_rate: float = 0.2

    def __post_init__(self):
        if self.n_objects < 1:
            raise ValueError(f"n_objects must be >= 1, got {self.n_objects}")
        if not 1 <= self.per_object_min <= self.per_object_max:
            raise ValueError("need 1 <= per_object_min <= per_object_max")
        if not 1 <= self.keep_per_object_min <= self.keep_per_object_max:
            raise ValueError("need 1 <= keep_per_object_min <= keep_per_object_max")
        if self.approach_steps < 0 or self.home_steps < 0:
            raise ValueError("stub step counts must be >= 0")
        if not 0.0 <= self.max_skip_rate <= 1.0:
            raise ValueError(f"max_skip_rate must be in [0, 1], got {self.max_skip_rate}")


@dataclass(frozen=True)
class ExpertState:
    """Phase state of the controller within one grasp."""

    phase: str
    force_limit: float
    last_target: Optional[float] = None

    @classmethod
    def initial(cls, gains: ControllerGains) -> "ExpertState":
        return cls(phase=CLOSING, force_limit=gains.initial_force)


def target_force(
    params: ExpertParams,
    gravity: float = 9.81,
    gains: Optional[ControllerGains] = None,
    pads: int = 2
) -> float:
    """
    Slip-safe holding force from estimated parameters.

    Args:
        params: Parameter estimates
        gravity: m/s^2
        gains: Supplies the force clamp (defaults if omitted)
        pads: Friction pads sharing the load

    Returns:
        clamp(margin * m * g / (pads * mu), min_force, max_force) in N
    """
    gains = gains or ControllerGains()
    force = params.slip_margin * params.est_mass * gravity / (pads * params.est_mu)
    return min(max(force, gains.min_force), gains.max_force)


def expert_step(
    obs: GripperObservation,
    params: ExpertParams,
    gains: ControllerGains,
    state: ExpertState,
    gravity: float = 9.81,
    pads: int = 2
) -> Tuple[GripperCommand, ExpertState]:
    """
    One tick of the adaptive grasp controller.

    Before contact the fingers close by aperture_step at the initial force.
    Contact is declared when the sensed force reaches contact_threshold or
    the fingers stall above their last target. After contact the force limit
    rises by kp_force times the remaining force error (at least
    min_force_step), but only while the fingers are held off by the torque
    limit. Once the sensed force reaches the target the controller holds.

    Args:
        obs: Latest observation
        params: Parameter estimates
        gains: Controller gains
        state: Phase state from the previous tick
        gravity: m/s^2
        pads: Friction pads

    Returns:
        Tuple of (command, next state)
    """
    goal = target_force(params, gravity, gains, pads)
    squeeze = max(0.0, obs.aperture - gains.aperture_step)

    if state.phase == HOLDING:
        return GripperCommand(squeeze, state.force_limit), replace(state, last_target=squeeze)

    stalled = state.last_target is not None and obs.aperture > state.last_target + gains.stall_tolerance

    if state.phase == CLOSING:
        if obs.contact_force < gains.contact_threshold and not stalled:
            if obs.aperture <= 0.0:
                raise MissedObjectError("Fingers closed fully without contact")
            return GripperCommand(squeeze, state.force_limit), replace(state, last_target=squeeze)
        state = replace(state, phase=SQUEEZING)

    if obs.contact_force >= goal:
        return GripperCommand(squeeze, state.force_limit), replace(state, phase=HOLDING, last_target=squeeze)

    force_limit = state.force_limit
    torque_limited = state.last_target is None or obs.aperture > state.last_target + 1e-6
    if torque_limited:
        increment = max(gains.kp_force * (goal - obs.contact_force), gains.min_force_step)
        force_limit = min(force_limit + increment, gains.max_force)

    return GripperCommand(squeeze, force_limit), replace(state, force_limit=force_limit, last_target=squeeze)


class ExpertAgent(GraspAgent):
    """Adaptive grasp controller behind the common agent interface."""

    def __init__(
        self,
        gains: Optional[ControllerGains] = None,
        params: Optional[ExpertParams] = None,
        param_noise_std: float = 0.0,
        slip_margin: float = 1.2,
        gravity: float = 9.81,
        pads: int = 2
    ):
        super().__init__(name="Expert", role="Adaptive force-feedback grasp controller")
        self.gains = gains or ControllerGains()
        self.params = params
        self.param_noise_std = param_noise_std
        self.slip_margin = slip_margin
        self.gravity = gravity
        self.pads = pads
        self.state = ExpertState.initial(self.gains)

    def estimate_object(self, spec: ObjectSpec, rng: np.random.Generator):
        self.params = ExpertParams.estimate(spec, self.param_noise_std, rng, self.slip_margin)

    def _reset(self):
        self.state = ExpertState.initial(self.gains)

    def act(self, observation: Optional[GripperObservation]) -> Optional[GripperCommand]:
        if self.params is None:
            raise RuntimeError("Expert has no parameter estimates; call estimate_object first")
        if observation is None:
            return None
        self.ticks += 1
        try:
            command, self.state = expert_step(
                observation, self.params, self.gains, self.state, self.gravity, self.pads
            )
        except MissedObjectError:
            # Nothing to grasp: keep the fingers where they are
            return GripperCommand(observation.aperture, self.state.force_limit)
        return command


# ---------------------------------------------------------------------------
# Demonstrations

@dataclass
class ExpertRollout:
    """Recorded expert grasp at the collection rate."""

    observations: List[GripperObservation]
    commands: List[GripperCommand]
    final_observation: GripperObservation
    outcome: Optional[GraspOutcome]
    failure: Optional[str] = None

    @property
    def grasp_ticks(self) -> int:
        return len(self.commands)

    @property
    def succeeded(self) -> bool:
        return self.failure is None and self.outcome is not None and self.outcome.label == OutcomeLabel.SUCCESS


def run_expert_grasp(
    spec: ObjectSpec,
    params: ExpertParams,
    gains: ControllerGains,
    cfg: SimConfig,
    rng: np.random.Generator,
    start_aperture: float,
    max_ticks: int = 40
) -> ExpertRollout:
    """
    Run the controller from an open start until it holds, then lift.

    Args:
        spec: Object to grasp
        params: Parameter estimates
        gains: Controller gains
        cfg: Simulation constants (collection rate)
        rng: Sensor noise stream
        start_aperture: Initial finger separation in mm
        max_ticks: Tick budget before the grasp counts as timed out

    Returns:
        ExpertRollout with the recorded (observation, command) pairs
    """
    state = ObjectState.fresh(spec)
    gripper = GripperState(aperture=min(start_aperture, cfg.max_aperture))
    controller = ExpertState.initial(gains)
    obs = observe(spec, state, gripper, controller.force_limit, cfg, rng)

    observations: List[GripperObservation] = []
    commands: List[GripperCommand] = []
    failure = None

    for _ in range(max_ticks):
        try:
            command, controller = expert_step(obs, params, gains, controller, cfg.gravity, cfg.friction_pads)
        except MissedObjectError:
            failure = "missed"
            break
        observations.append(obs)
        commands.append(command)
        state, gripper, obs = step(spec, state, gripper, command, cfg, rng)
        if controller.phase == HOLDING:
            break
    else:
        failure = "timeout"

    applied = commands[-1].force_limit if commands else controller.force_limit
    contact = true_contact_force(spec, state, gripper.aperture)
    lift = lift_test(spec, state, contact, cfg)
    outcome = classify(spec, state, gripper.aperture, applied, contact, lift, len(commands), spec.rest_width)
    if failure is None and outcome.label != OutcomeLabel.SUCCESS:
        failure = outcome.label.value

    return ExpertRollout(observations, commands, obs, outcome, failure)


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def rollout_to_episode(
    rollout: ExpertRollout,
    spec: ObjectSpec,
    gen: GenerationConfig,
    cfg: SimConfig,
    file_path: str
) -> Episode:
    """
    Wrap a successful expert grasp in approach and home stubs.

    Args:
        rollout: Recorded grasp
        spec: Grasped object
        gen: Stub lengths
        cfg: Simulation constants
        file_path: Episode identifier

    Returns:
        Episode with approach -> grasp -> home subtasks
    """
    instruction = instruction_for(spec.name)
    embedding = embed_instruction(instruction)
    first_obs = rollout.observations[0]
    last_command = rollout.commands[-1]
    final = rollout.final_observation

    steps = []
    for _ in range(gen.approach_steps):
        steps.append(make_step(
            cfg.max_aperture, first_obs.applied_force, 0.0,
            first_obs.aperture, first_obs.applied_force,
            instruction, embedding, "approach",
        ))
    for obs, command in zip(rollout.observations, rollout.commands):
        steps.append(make_step(
            obs.aperture, obs.applied_force, obs.contact_force,
            command.target_aperture, command.force_limit,
            instruction, embedding, "grasp",
        ))
    for _ in range(gen.home_steps):
        steps.append(make_step(
            final.aperture, final.applied_force, final.contact_force,
            final.aperture, last_command.force_limit,
            instruction, embedding, "home",
        ))

    return Episode(
        file_path=file_path,
        object_name=spec.name,
        seen=spec.seen,
        steps=stamp_flags(steps, success=rollout.succeeded),
    )


@dataclass
class GenerationManifest:
    """What a demonstration run attempted, kept and skipped."""

    seed: int
    gains: Dict[str, Any]
    expert: Dict[str, Any]
    generation: Dict[str, Any]
    objects: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    episodes: int = 0
    median_grasp_ticks: float = 0.0
    final_force_band: Tuple[float, float] = (0.0, 0.0)
    observed_force_band: Tuple[float, float] = OBSERVED_FORCE_BAND
    mean_grasp_duration_s: float = 0.0
    observed_expert_latency_s: float = OBSERVED_EXPERT_LATENCY_S

    @property
    def infeasible_count(self) -> int:
        return sum(1 for record in self.objects if record["infeasible"])

    @property
    def skip_rate(self) -> float:
        return self.infeasible_count / len(self.objects) if self.objects else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "gains": self.gains,
            "expert": self.expert,
            "generation": self.generation,
            "objects": self.objects,
            "failures": self.failures,
            "episodes": self.episodes,
            "skip_rate": self.skip_rate,
            "median_grasp_ticks": self.median_grasp_ticks,
            "final_force_band": list(self.final_force_band),
            "observed_force_band": list(self.observed_force_band),
            "mean_grasp_duration_s": self.mean_grasp_duration_s,
            "observed_expert_latency_s": self.observed_expert_latency_s,
        }

    def save(self, path: Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _demonstrate_object(task: Tuple) -> Tuple[List[Episode], Dict[str, Any], List[Dict[str, Any]], List[int], List[float]]:
    """Worker: every attempt on one object."""
    spec, seed, gains, expert_cfg, gen, cfg = task
    record = {"name": spec.name, "seen": spec.seen, "mass": spec.mass, "crush_force": spec.crush_force,
              "attempted": 0, "kept": 0, "failed": 0, "surplus": 0, "infeasible": False}

    if not is_feasible(spec, cfg):
        record["infeasible"] = True
        return [], record, [], [], []

    attempts = int(make_rng(seed, "attempts", spec.name).integers(gen.per_object_min, gen.per_object_max + 1))
    quota = int(make_rng(seed, "quota", spec.name).integers(gen.keep_per_object_min, gen.keep_per_object_max + 1))
    episodes, failures, ticks, forces = [], [], [], []
    for rep in range(attempts):
        rng = make_rng(seed, "demo", spec.name, rep)
        params = ExpertParams.estimate(spec, expert_cfg.param_noise_std, rng, expert_cfg.slip_margin)
        start = spec.rest_width + float(rng.uniform(expert_cfg.start_offset_min, expert_cfg.start_offset_max))
        rollout = run_expert_grasp(spec, params, gains, cfg, rng, start, expert_cfg.max_ticks)

        record["attempted"] += 1
        if not rollout.succeeded:
            record["failed"] += 1
            failures.append({"name": spec.name, "attempt": rep, "reason": rollout.failure})
            continue

        if record["kept"] >= quota:
            record["surplus"] += 1
            continue

        file_path = f"sim://{seed}/{_slug(spec.name)}/{rep}"
        episodes.append(rollout_to_episode(rollout, spec, gen, cfg, file_path))
        ticks.append(rollout.grasp_ticks)
        forces.append(rollout.commands[-1].force_limit)
        record["kept"] += 1
    return episodes, record, failures, ticks, forces


def generate_demonstrations(
    catalog: Sequence[ObjectSpec],
    cfg: SimConfig,
    seed: int,
    gains: Optional[ControllerGains] = None,
    expert_cfg: Optional[ExpertConfig] = None,
    gen: Optional[GenerationConfig] = None,
    jobs: int = 1
) -> Tuple[List[Episode], GenerationManifest]:
    """
    Record successful expert grasps for every object.

    Each object gets per_object_min..per_object_max attempts, each with its
    own stream (parameter estimates, start aperture, sensor noise). Only
    grasps that hold without deformation are kept, up to a per-object quota
    drawn from keep_per_object_min..keep_per_object_max; further successes
    count as surplus. Objects that cannot be
    held without crushing are skipped.

    Args:
        catalog: Objects to demonstrate on
        cfg: Simulation constants (collection rate)
        seed: Base seed
        gains: Controller gains
        expert_cfg: Expert settings
        gen: Corpus settings
        jobs: Worker processes

    Returns:
        Tuple of (episodes, manifest)
    """
    if not catalog:
        raise ValueError("Cannot generate demonstrations for an empty catalog")
    gains = gains or ControllerGains()
    expert_cfg = expert_cfg or ExpertConfig()
    gen = gen or GenerationConfig()
    gains.check_noise_floor(cfg)

    tasks = [(spec, seed, gains, expert_cfg, gen, cfg) for spec in catalog]
    results = fan_out(_demonstrate_object, tasks, jobs, desc="demonstrations")

    manifest = GenerationManifest(
        seed=seed,
        gains=dataclass_to_dict(gains),
        expert=dataclass_to_dict(expert_cfg),
        generation=dataclass_to_dict(gen),
    )
    episodes: List[Episode] = []
    all_ticks: List[int] = []
    all_forces: List[float] = []
    for object_episodes, record, failures, ticks, forces in results:
        if record["infeasible"]:
            log.warning(f"Skipping infeasible object {record['name']} (crushes below its holding force)")
        episodes.extend(object_episodes)
        manifest.objects.append(record)
        manifest.failures.extend(failures)
        all_ticks.extend(ticks)
        all_forces.extend(forces)

    manifest.episodes = len(episodes)
    if all_ticks:
        manifest.median_grasp_ticks = float(median(all_ticks))
        manifest.mean_grasp_duration_s = float(np.mean(all_ticks)) * cfg.dt
        manifest.final_force_band = (float(min(all_forces)), float(max(all_forces)))

    log.info(
        f"Kept {len(episodes)} episodes over {len(catalog)} objects "
        f"({len(manifest.failures)} failed attempts, {manifest.infeasible_count} infeasible)"
    )
    if all_ticks:
        log.info(
            f"Median grasp {manifest.median_grasp_ticks:.1f} ticks, final force "
            f"{manifest.final_force_band[0]:.2f}-{manifest.final_force_band[1]:.2f} N "
            f"(demonstration set: {OBSERVED_FORCE_BAND[0]}-{OBSERVED_FORCE_BAND[1]} N)"
        )
    return episodes, manifest
