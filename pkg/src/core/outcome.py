"""
Grasp Outcomes - Success / failure taxonomy for a finished grasp.
Shared by demonstration filtering and the evaluation harness.
"""

from dataclasses import dataclass
from enum import Enum

from .physics import LiftResult, ObjectSpec, ObjectState

NULL_GAP_MM = 2.0
DEFORMATION_FRACTION = 0.10


class OutcomeLabel(str, Enum):
    SUCCESS = "success"
    DEFORMATION = "deformation_failure"
    SLIP = "slip_failure"
    NULL = "null_grasp"


OUTCOME_LABELS = tuple(label.value for label in OutcomeLabel)


@dataclass(frozen=True)
class GraspOutcome:
    """Classified end state of one grasp."""

    label: OutcomeLabel
    final_aperture: float       # mm
    final_applied_force: float  # N
    final_true_contact: float   # N
    ticks_used: int
    plastic_incurred: float     # mm, during this grasp
    skipped_ticks: int = 0

    @property
    def is_failure(self) -> bool:
        return self.label in (OutcomeLabel.DEFORMATION, OutcomeLabel.SLIP)


def classify(
    spec: ObjectSpec,
    state: ObjectState,
    final_aperture: float,
    final_applied_force: float,
    final_true_contact: float,
    lift: LiftResult,
    ticks_used: int,
    start_rest_width: float,
    null_gap: float = NULL_GAP_MM,
    deformation_fraction: float = DEFORMATION_FRACTION,
    skipped_ticks: int = 0
) -> GraspOutcome:
    """
    Classify a completed grasp.

    Precedence: deformation, then null grasp, then slip, then success. A
    grasp that stops short of the object by less than null_gap makes no
    contact and fails the lift, so it counts as a slip.

    Args:
        spec: Object parameters
        state: Object state after the grasp
        final_aperture: Gripper aperture at the end of the grasp (mm)
        final_applied_force: Last commanded force limit (N)
        final_true_contact: Noise-free contact force at the end (N)
        lift: Result of the lift check
        ticks_used: Ticks executed
        start_rest_width: Object rest width when this grasp began (mm)
        null_gap: Aperture clearance that marks a null grasp (mm)
        deformation_fraction: Permanent compression, as a share of the
            nominal rest width, that counts as deformation
        skipped_ticks: Ticks with no observation

    Returns:
        GraspOutcome
    """
    plastic = max(0.0, start_rest_width - state.current_rest_width)

    if state.crushed or plastic > deformation_fraction * spec.rest_width:
        label = OutcomeLabel.DEFORMATION
    elif final_aperture - state.current_rest_width >= null_gap:
        label = OutcomeLabel.NULL
    elif lift == LiftResult.SLIPPED:
        label = OutcomeLabel.SLIP
    else:
        label = OutcomeLabel.SUCCESS

    return GraspOutcome(
        label=label,
        final_aperture=final_aperture,
        final_applied_force=final_applied_force,
        final_true_contact=final_true_contact,
        ticks_used=ticks_used,
        plastic_incurred=plastic,
        skipped_ticks=skipped_ticks,
    )
