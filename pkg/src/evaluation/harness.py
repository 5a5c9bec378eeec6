"""
Evaluation Harness - Closed-loop rollouts and the trial report.

Every grasp runs exactly `ticks` ticks at the evaluation rate. Each
(object, trial, attempt) owns its streams (start aperture, sensor noise,
policy sampling, dropout, parameter estimates), so two agents evaluated
with the same seed see identical object streams.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from scipy.stats import binomtest

from ..agents.agent_base import GraspAgent
from ..core.dataset import instruction_for
from ..core.logger import get_logger
from ..core.outcome import OUTCOME_LABELS, GraspOutcome, OutcomeLabel, classify
from ..core.physics import (
    GripperCommand,
    GripperState,
    ObjectSpec,
    ObjectState,
    SimConfig,
    lift_test,
    observe,
    step,
    true_contact_force,
)
from ..core.rng import make_rng
from ..core.workers import fan_out

log = get_logger("Harness")

REPORT_FORMAT = "forcegrasp-eval"


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol."""

    trials_per_object: int = 10
    ticks: int = 15
    dt: float = 0.25
    start_offset_min: float = 2.0   # mm above rest width
    start_offset_max: float = 8.0
    initial_force: float = 0.15     # N, force limit before the first command
    max_attempts: int = 3           # null grasps are retried up to this many attempts
    null_gap: float = 2.0           # mm
    deformation_fraction: float = 0.10
    mushiness_trials: int = 10
    observation_dropout: float = 0.0
    expert_param_noise: float = 0.0

    def __post_init__(self):
        if self.trials_per_object < 1 or self.ticks < 1 or self.max_attempts < 1:
            raise ValueError("trials_per_object, ticks and max_attempts must be >= 1")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not 0 <= self.start_offset_min <= self.start_offset_max:
            raise ValueError("need 0 <= start_offset_min <= start_offset_max")
        if not 0.0 <= self.observation_dropout < 1.0:
            raise ValueError(f"observation_dropout must be in [0, 1), got {self.observation_dropout}")
        if self.mushiness_trials < 1:
            raise ValueError(f"mushiness_trials must be >= 1, got {self.mushiness_trials}")


@dataclass
class TrialRecord:
    """Final outcome of one trial plus the trace of its last attempt."""

    object_name: str
    seen: bool
    delicate: bool
    trial: int
    attempts: int
    nulls: int
    outcome: GraspOutcome
    trace: List[Dict[str, float]] = field(default_factory=list)

    def row(self) -> Dict[str, Any]:
        return {
            "object": self.object_name,
            "seen": self.seen,
            "delicate": self.delicate,
            "trial": self.trial,
            "attempts": self.attempts,
            "nulls": self.nulls,
            "label": self.outcome.label.value,
            "final_aperture": self.outcome.final_aperture,
            "final_applied_force": self.outcome.final_applied_force,
            "final_true_contact": self.outcome.final_true_contact,
            "ticks_used": self.outcome.ticks_used,
            "plastic_incurred": self.outcome.plastic_incurred,
            "skipped_ticks": self.outcome.skipped_ticks,
        }


@dataclass
class RolloutResult:
    outcome: GraspOutcome
    state: ObjectState
    trace: List[Dict[str, float]]


def rollout(
    agent: GraspAgent,
    spec: ObjectSpec,
    state: ObjectState,
    sim_cfg: SimConfig,
    eval_cfg: EvalConfig,
    seed: int,
    *keys
) -> RolloutResult:
    """
    One closed-loop grasp followed by the lift check.

    Args:
        agent: Agent to evaluate
        spec: Object parameters
        state: Object state at the start (fresh or carried over)
        sim_cfg: Simulation constants at the evaluation rate
        eval_cfg: Protocol
        seed: Base seed
        *keys: Stream keys identifying this attempt

    Returns:
        RolloutResult with outcome, final object state and per-tick trace
    """
    start_rng = make_rng(seed, *keys, "start")
    sensor_rng = make_rng(seed, *keys, "sensor")
    dropout_rng = make_rng(seed, *keys, "dropout")

    start_rest = state.current_rest_width
    aperture = start_rest + float(start_rng.uniform(eval_cfg.start_offset_min, eval_cfg.start_offset_max))
    gripper = GripperState(aperture=min(aperture, sim_cfg.max_aperture))

    agent.estimate_object(spec, make_rng(seed, *keys, "estimate"))
    agent.reset(instruction_for(spec.name), make_rng(seed, *keys, "policy"))

    command = GripperCommand(gripper.aperture, eval_cfg.initial_force)
    obs = observe(spec, state, gripper, command.force_limit, sim_cfg, sensor_rng)
    skipped = 0
    trace: List[Dict[str, float]] = []

    for tick in range(eval_cfg.ticks):
        dropped = dropout_rng.random() < eval_cfg.observation_dropout
        new_command = agent.act(None if dropped else obs)
        if new_command is None:
            skipped += 1
        else:
            command = new_command
        state, gripper, obs = step(spec, state, gripper, command, sim_cfg, sensor_rng)
        trace.append({
            "tick": tick,
            "time": gripper.time,
            "gripper_position": obs.aperture,
            "applied_force": obs.applied_force,
            "contact_force": obs.contact_force,
        })

    if skipped:
        log.info(f"{spec.name}: {skipped} tick(s) without an observation")

    contact = true_contact_force(spec, state, gripper.aperture)
    lift = lift_test(spec, state, contact, sim_cfg)
    outcome = classify(
        spec, state, gripper.aperture, command.force_limit, contact, lift,
        ticks_used=eval_cfg.ticks,
        start_rest_width=start_rest,
        null_gap=eval_cfg.null_gap,
        deformation_fraction=eval_cfg.deformation_fraction,
        skipped_ticks=skipped,
    )
    return RolloutResult(outcome=outcome, state=state, trace=trace)


def _run_trial(task: Tuple) -> TrialRecord:
    """Worker: one trial with null-grasp retries on a fresh object."""
    agent, spec, sim_cfg, eval_cfg, seed, trial = task
    nulls = 0
    result = None
    attempt = 0
    for attempt in range(1, eval_cfg.max_attempts + 1):
        result = rollout(agent, spec, ObjectState.fresh(spec), sim_cfg, eval_cfg, seed, "trial", spec.name, trial, attempt)
        if result.outcome.label != OutcomeLabel.NULL:
            break
        nulls += 1
    return TrialRecord(
        object_name=spec.name,
        seen=spec.seen,
        delicate=spec.delicate,
        trial=trial,
        attempts=attempt,
        nulls=nulls,
        outcome=result.outcome,
        trace=result.trace,
    )


@dataclass
class MushinessTrace:
    """Rest width after each of several grasps on one persistent object."""

    object_name: str
    initial_rest_width: float
    rest_widths: List[float]
    labels: List[str]

    @property
    def total_degradation(self) -> float:
        return 0.0 if not self.rest_widths else self.initial_rest_width - self.rest_widths[-1]


def mushiness_trace(
    agent: GraspAgent,
    spec: ObjectSpec,
    sim_cfg: SimConfig,
    eval_cfg: EvalConfig,
    seed: int,
    trials: Optional[int] = None
) -> MushinessTrace:
    """
    Grasp the same object repeatedly, keeping its deformation.

    Args:
        agent: Agent to evaluate
        spec: Object (plasticity > 0 to see any change)
        sim_cfg: Simulation constants at the evaluation rate
        eval_cfg: Protocol
        seed: Base seed
        trials: Number of grasps (eval_cfg.mushiness_trials by default)

    Returns:
        MushinessTrace with one rest width per grasp
    """
    trials = trials or eval_cfg.mushiness_trials
    state = ObjectState.fresh(spec)
    widths = []
    labels = []
    for trial in range(trials):
        result = rollout(agent, spec, state, sim_cfg, eval_cfg, seed, "mushiness", spec.name, trial)
        # Fingers open between grasps
        state = ObjectState(
            current_rest_width=result.state.current_rest_width,
            crushed=result.state.crushed,
            cumulative_plastic=result.state.cumulative_plastic,
        )
        widths.append(state.current_rest_width)
        labels.append(result.outcome.label.value)
    return MushinessTrace(object_name=spec.name, initial_rest_width=spec.rest_width, rest_widths=widths, labels=labels)


def wilson_interval(successes: int, total: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion ((0, 1) when total is 0)."""
    if total == 0:
        return 0.0, 1.0
    ci = binomtest(successes, total).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class EvalReport:
    """Per-trial outcomes of one agent on a catalog, with aggregates."""

    variant: str
    seed: int
    config: Dict[str, Any]
    objects: List[Dict[str, Any]]
    trials: List[TrialRecord]
    mushiness: List[MushinessTrace] = field(default_factory=list)

    def table(self) -> pd.DataFrame:
        """One row per trial."""
        columns = ["object", "seen", "delicate", "trial", "attempts", "nulls", "label", "final_aperture",
                   "final_applied_force", "final_true_contact", "ticks_used", "plastic_incurred", "skipped_ticks"]
        return pd.DataFrame([t.row() for t in self.trials], columns=columns)

    def traces(self) -> pd.DataFrame:
        """Per-tick time series of every trial's final attempt."""
        rows = []
        for t in self.trials:
            for sample in t.trace:
                rows.append({"policy": self.variant, "object": t.object_name, "trial": t.trial, **sample})
        return pd.DataFrame(rows)

    def _rate(self, frame: pd.DataFrame) -> Dict[str, Any]:
        completed = frame[frame["label"] != OutcomeLabel.NULL.value]
        successes = int((completed["label"] == OutcomeLabel.SUCCESS.value).sum())
        low, high = wilson_interval(successes, len(completed))
        rate = successes / len(completed) if len(completed) else 0.0
        return {"rate": rate, "successes": successes, "completed": int(len(completed)), "ci95": [low, high]}

    def summary(self) -> Dict[str, Any]:
        """
        Aggregate rates, counts and per-object means.

        Success rates are over trials whose final outcome is not a null
        grasp; the null rate is null attempts over all attempts.

        Returns:
            JSON-ready summary dict
        """
        frame = self.table()
        counts = {label: int((frame["label"] == label).sum()) for label in OUTCOME_LABELS}
        failures = counts[OutcomeLabel.SLIP.value] + counts[OutcomeLabel.DEFORMATION.value]
        attempts = int(frame["attempts"].sum())
        nulls = int(frame["nulls"].sum())

        per_object = (
            frame.groupby("object", sort=True)
            .agg(mean_final_aperture=("final_aperture", "mean"),
                 mean_final_applied_force=("final_applied_force", "mean"),
                 successes=("label", lambda s: int((s == OutcomeLabel.SUCCESS.value).sum())),
                 trials=("label", "size"))
            .reset_index()
        )

        return {
            "trials": int(len(frame)),
            "counts": counts,
            "success": {
                "overall": self._rate(frame),
                "seen": self._rate(frame[frame["seen"]]),
                "unseen": self._rate(frame[~frame["seen"]]),
                "delicate": self._rate(frame[frame["delicate"]]),
                "robust": self._rate(frame[~frame["delicate"]]),
            },
            "null_rate": nulls / attempts if attempts else 0.0,
            "null_attempts": nulls,
            "attempts": attempts,
            "failure_share": {
                "slip": counts[OutcomeLabel.SLIP.value] / failures if failures else 0.0,
                "deformation": counts[OutcomeLabel.DEFORMATION.value] / failures if failures else 0.0,
            },
            "grasp_duration_s": float(self.config.get("ticks", 0) * self.config.get("dt", 0.0)),
            "skipped_ticks": int(frame["skipped_ticks"].sum()),
            "per_object": json.loads(per_object.to_json(orient="records")),
            "mushiness": {
                m.object_name: {"rest_widths": m.rest_widths, "total_degradation": m.total_degradation}
                for m in self.mushiness
            },
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": REPORT_FORMAT,
            "variant": self.variant,
            "seed": self.seed,
            "config": self.config,
            "objects": self.objects,
            "summary": self.summary(),
            "trials": [
                {**t.row(), "trace": t.trace} for t in self.trials
            ],
            "mushiness": [asdict(m) for m in self.mushiness],
        }

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "EvalReport":
        if raw.get("format") != REPORT_FORMAT:
            raise ValueError(f"Not a {REPORT_FORMAT} report")
        trials = []
        for row in raw["trials"]:
            outcome = GraspOutcome(
                label=OutcomeLabel(row["label"]),
                final_aperture=row["final_aperture"],
                final_applied_force=row["final_applied_force"],
                final_true_contact=row["final_true_contact"],
                ticks_used=row["ticks_used"],
                plastic_incurred=row["plastic_incurred"],
                skipped_ticks=row["skipped_ticks"],
            )
            trials.append(TrialRecord(
                object_name=row["object"], seen=row["seen"], delicate=row["delicate"], trial=row["trial"],
                attempts=row["attempts"], nulls=row["nulls"], outcome=outcome, trace=row.get("trace", []),
            ))
        mushiness = [MushinessTrace(**m) for m in raw.get("mushiness", [])]
        return cls(raw["variant"], raw["seed"], raw["config"], raw["objects"], trials, mushiness)

    @classmethod
    def load(cls, path: Path) -> "EvalReport":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Report not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def run_trials(
    agent: GraspAgent,
    catalog: Sequence[ObjectSpec],
    sim_cfg: SimConfig,
    eval_cfg: EvalConfig,
    seed: int,
    jobs: int = 1,
    with_mushiness: bool = True
) -> EvalReport:
    """
    Evaluate an agent on every object of a catalog.

    Args:
        agent: Agent to evaluate
        catalog: Evaluation objects (seen/unseen tagged)
        sim_cfg: Simulation constants (dt is replaced by the protocol's)
        eval_cfg: Protocol
        seed: Base seed (use the same seed to pair agents)
        jobs: Worker processes
        with_mushiness: Also run the persistent-object sub-experiment on
            objects with plasticity > 0

    Returns:
        EvalReport
    """
    if not catalog:
        raise ValueError("Cannot evaluate on an empty catalog")
    sim_cfg = replace(sim_cfg, dt=eval_cfg.dt)

    tasks = [
        (agent, spec, sim_cfg, eval_cfg, seed, trial)
        for spec in catalog
        for trial in range(eval_cfg.trials_per_object)
    ]
    log.info(f"Evaluating {agent} on {len(catalog)} objects x {eval_cfg.trials_per_object} trials")
    trials = fan_out(_run_trial, tasks, jobs, desc=f"eval {agent.variant}")

    mushiness = []
    if with_mushiness:
        for spec in catalog:
            if spec.plasticity > 0:
                mushiness.append(mushiness_trace(agent, spec, sim_cfg, eval_cfg, seed))

    report = EvalReport(
        variant=agent.variant,
        seed=seed,
        config={**asdict(eval_cfg), "sim": asdict(sim_cfg)},
        objects=[{"name": s.name, "seen": s.seen, "delicate": s.delicate, "plasticity": s.plasticity}
                 for s in catalog],
        trials=trials,
        mushiness=mushiness,
    )
    overall = report.summary()["success"]["overall"]
    log.info(f"{agent.variant}: success {overall['rate']:.1%} over {overall['completed']} completed trials")
    return report
