"""
Gripper Physics - Two-finger gripper squeezing a deformable object.

Low-dimensional, deterministic model: torque-limited position actuation,
a linear spring contact with plastic yield and crushing, noisy quantized
force sensing (a stand-in for motor current draw), and a quasi-static
lift check for slip.

All functions are pure: state goes in, new state comes out.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np

MASS_RANGE_KG = (0.001, 0.5)
MAX_FRICTION_MU = 1.5


class CatalogError(ValueError):
    """Raised when an object spec or catalog violates its invariants."""


class LiftResult(str, Enum):
    """Outcome of the vertical lift check."""

    HELD = "held"
    SLIPPED = "slipped"


@dataclass(frozen=True)
class ObjectSpec:
    """Ground-truth physical parameters of one graspable object."""

    name: str
    rest_width: float       # mm
    mass: float             # kg
    friction_mu: float
    stiffness_k: float      # N/mm
    crush_force: float      # N, irreversible failure
    yield_force: float      # N, onset of plastic flow
    plasticity: float       # fraction of over-yield compression made permanent
    seen: bool = False

    def __post_init__(self):
        if not self.name:
            raise CatalogError("Object name must not be empty")
        if not self.rest_width > 0:
            raise CatalogError(f"{self.name}: rest_width must be > 0, got {self.rest_width}")
        if not MASS_RANGE_KG[0] <= self.mass <= MASS_RANGE_KG[1]:
            raise CatalogError(f"{self.name}: mass must be in [0.001, 0.5] kg, got {self.mass}")
        if not 0 < self.friction_mu <= MAX_FRICTION_MU:
            raise CatalogError(f"{self.name}: friction_mu must be in (0, 1.5], got {self.friction_mu}")
        if not self.stiffness_k > 0:
            raise CatalogError(f"{self.name}: stiffness_k must be > 0, got {self.stiffness_k}")
        if not 0 < self.yield_force <= self.crush_force:
            raise CatalogError(
                f"{self.name}: need 0 < yield_force <= crush_force, "
                f"got yield {self.yield_force}, crush {self.crush_force}"
            )
        if not 0.0 <= self.plasticity <= 1.0:
            raise CatalogError(f"{self.name}: plasticity must be in [0, 1], got {self.plasticity}")

    @property
    def delicate(self) -> bool:
        """Objects that crush below 3 N."""
        return self.crush_force < 3.0


@dataclass(frozen=True)
class ObjectState:
    """Evolving deformation of an object within one scenario."""

    current_rest_width: float   # mm
    compression: float = 0.0    # mm, current elastic squeeze
    crushed: bool = False
    cumulative_plastic: float = 0.0  # mm

    @classmethod
    def fresh(cls, spec: ObjectSpec) -> "ObjectState":
        """Undeformed state of an object."""
        return cls(current_rest_width=spec.rest_width)


@dataclass(frozen=True)
class GripperCommand:
    """Torque-limited position command."""

    target_aperture: float  # mm
    force_limit: float      # N, torque-limit proxy

    def clamped(self, max_aperture: float) -> Tuple["GripperCommand", bool]:
        """
        Clamp the command into its valid range.

        Args:
            max_aperture: Gripper's widest opening in mm

        Returns:
            Tuple of (valid command, whether anything was clamped)
        """
        target = min(max(self.target_aperture, 0.0), max_aperture)
        force = max(self.force_limit, 0.0)
        changed = target != self.target_aperture or force != self.force_limit
        return GripperCommand(target, force), changed


@dataclass(frozen=True)
class GripperState:
    """Gripper half of the simulation state."""

    aperture: float     # mm
    time: float = 0.0   # s


@dataclass(frozen=True)
class GripperObservation:
    """Sensed gripper state after a tick."""

    aperture: float         # mm
    applied_force: float    # N, realized force limit
    contact_force: float    # N, noisy current-draw proxy
    timestamp: float        # s
    clamped: bool = False   # command had to be clamped into range


@dataclass(frozen=True)
class SimConfig:
    """Simulation constants."""

    dt: float = 0.2                 # s, 5 Hz collection
    max_aperture: float = 85.0      # mm
    closing_speed: float = 20.0     # mm/s
    gravity: float = 9.81           # m/s^2
    sensor_noise_std: float = 0.05  # N
    sensor_quantum: float = 0.01    # N
    rng_seed: int = 0
    friction_pads: int = 2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.closing_speed > 0:
            raise ValueError(f"closing_speed must be > 0, got {self.closing_speed}")
        if not self.sensor_noise_std >= 0:
            raise ValueError(f"sensor_noise_std must be >= 0, got {self.sensor_noise_std}")
        if not self.sensor_quantum >= 0:
            raise ValueError(f"sensor_quantum must be >= 0, got {self.sensor_quantum}")
        if not self.max_aperture > 0:
            raise ValueError(f"max_aperture must be > 0, got {self.max_aperture}")
        if self.friction_pads < 1:
            raise ValueError(f"friction_pads must be >= 1, got {self.friction_pads}")

    def for_evaluation(self) -> "SimConfig":
        """Same physics at the 4 Hz evaluation rate."""
        return replace(self, dt=0.25)


def true_contact_force(spec: ObjectSpec, state: ObjectState, aperture: float) -> float:
    """
    Spring contact force at a given aperture.

    Args:
        spec: Object parameters
        state: Current deformation state
        aperture: Finger separation in mm

    Returns:
        Normal force in N (0 without contact)
    """
    if aperture >= state.current_rest_width:
        return 0.0
    return spec.stiffness_k * (state.current_rest_width - aperture)


def equilibrium_aperture(spec: ObjectSpec, state: ObjectState, force_limit: float) -> float:
    """Aperture at which the spring force equals the force limit (not below 0)."""
    return max(0.0, state.current_rest_width - force_limit / spec.stiffness_k)


def minimal_holding_force(spec: ObjectSpec, cfg: SimConfig) -> float:
    """Smallest normal force that keeps the object from slipping when lifted."""
    return spec.mass * cfg.gravity / (cfg.friction_pads * spec.friction_mu)


def is_feasible(spec: ObjectSpec, cfg: SimConfig) -> bool:
    """Whether the object can be held without crushing it."""
    return spec.crush_force >= minimal_holding_force(spec, cfg)


def sense_force(true_force: float, cfg: SimConfig, rng: np.random.Generator) -> float:
    """
    Noisy, clipped, quantized reading of a true contact force.

    One normal draw is consumed per call regardless of the noise level so
    streams stay aligned across configurations.
    """
    reading = true_force + float(rng.normal(0.0, cfg.sensor_noise_std))
    reading = max(0.0, reading)
    if cfg.sensor_quantum > 0:
        reading = round(reading / cfg.sensor_quantum) * cfg.sensor_quantum
    return max(0.0, reading)


def observe(
    spec: ObjectSpec,
    state: ObjectState,
    gripper: GripperState,
    force_limit: float,
    cfg: SimConfig,
    rng: np.random.Generator
) -> GripperObservation:
    """
    Sense the current state without moving the gripper.

    Args:
        spec: Object parameters
        state: Current deformation state
        gripper: Current gripper state
        force_limit: Force limit currently applied by the actuator
        cfg: Simulation constants
        rng: Sensor noise stream

    Returns:
        Observation at the gripper's current time
    """
    force = true_contact_force(spec, state, gripper.aperture)
    return GripperObservation(
        aperture=gripper.aperture,
        applied_force=max(0.0, force_limit),
        contact_force=sense_force(force, cfg, rng),
        timestamp=gripper.time,
    )


def step(
    spec: ObjectSpec,
    state: ObjectState,
    gripper: GripperState,
    command: GripperCommand,
    cfg: SimConfig,
    rng: np.random.Generator
) -> Tuple[ObjectState, GripperState, GripperObservation]:
    """
    Advance the gripper/object pair by one tick.

    The fingers move toward the target by at most closing_speed * dt. If
    that would push the contact force past the force limit, the fingers stop
    at the equilibrium aperture instead. Force above yield makes part of the
    over-yield compression permanent; force at or above crush sets the
    crushed flag.

    Args:
        spec: Object parameters
        state: Current deformation state
        gripper: Current gripper state
        command: Command for this tick (clamped into range if needed)
        cfg: Simulation constants
        rng: Sensor noise stream

    Returns:
        Tuple of (new object state, new gripper state, observation)
    """
    command, clamped = command.clamped(cfg.max_aperture)

    max_travel = cfg.closing_speed * cfg.dt
    delta = min(max(command.target_aperture - gripper.aperture, -max_travel), max_travel)
    aperture = gripper.aperture + delta

    if true_contact_force(spec, state, aperture) > command.force_limit:
        aperture = min(equilibrium_aperture(spec, state, command.force_limit), cfg.max_aperture)

    force = true_contact_force(spec, state, aperture)

    rest_width = state.current_rest_width
    cumulative_plastic = state.cumulative_plastic
    if force > spec.yield_force and spec.plasticity > 0:
        flow = spec.plasticity * (force - spec.yield_force) / spec.stiffness_k
        flow = min(flow, rest_width)
        rest_width -= flow
        cumulative_plastic += flow

    new_state = ObjectState(
        current_rest_width=rest_width,
        compression=max(0.0, rest_width - aperture),
        crushed=state.crushed or force >= spec.crush_force,
        cumulative_plastic=cumulative_plastic,
    )
    new_gripper = GripperState(aperture=aperture, time=gripper.time + cfg.dt)
    observation = GripperObservation(
        aperture=aperture,
        applied_force=command.force_limit,
        contact_force=sense_force(force, cfg, rng),
        timestamp=new_gripper.time,
        clamped=clamped,
    )
    return new_state, new_gripper, observation


def lift_test(
    spec: ObjectSpec,
    state: ObjectState,
    applied_contact_force: float,
    cfg: SimConfig
) -> LiftResult:
    """
    Quasi-static slip check for a vertical lift.

    Args:
        spec: Object parameters
        state: Object state at the end of the grasp
        applied_contact_force: True (noise-free) normal force in N
        cfg: Simulation constants

    Returns:
        LiftResult.HELD if pad friction supports the weight, else SLIPPED
    """
    if applied_contact_force <= 0:
        return LiftResult.SLIPPED
    friction = cfg.friction_pads * spec.friction_mu * applied_contact_force
    weight = spec.mass * cfg.gravity
    return LiftResult.HELD if friction >= weight else LiftResult.SLIPPED


def log_uniform(rng: np.random.Generator, low: float, high: float) -> float:
    """Draw from a log-uniform distribution on [low, high]."""
    return float(math.exp(rng.uniform(math.log(low), math.log(high))))
