"""
Episode Dataset - Step-structured grasp trajectories and their file format.

The schema mirrors the DROID-style feature layout (action, action_dict,
observation, language fields, subtask label, first/last/terminal flags).
Episodes are stored as JSON lines: one header line, then one step per
line; episode boundaries come from the is_first / is_last flags.

Vector layouts (a convention; the source schema only gives sizes):
    observation.state (16) = cartesian_position(6) + joint_position(6)
                             + gripper_position + applied_force
                             + contact_force + reserved
    action (9)             = cartesian deltas(6, zero here)
                             + gripper_position + gripper_force + reserved
"""

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .logger import get_logger
from .rng import make_rng

log = get_logger("Dataset")

FORMAT_NAME = "forcegrasp-episodes"
SCHEMA_VERSION = 1

SUBTASKS = ("approach", "grasp", "home")
EMBEDDING_DIM = 512
STATE_DIM = 16
ACTION_DIM = 9
STD_FLOOR = 1e-6

# Arm pose is not simulated; every step carries the same grasp pose
GRASP_POSE = (0.45, 0.0, 0.12, 3.14159, 0.0, 0.0)
JOINT_POSITION = (0.0, -1.2, 1.6, -1.97, -1.57, 0.0)

OBSERVATION_CHANNELS = ("gripper_position", "applied_force", "contact_force")
ACTION_CHANNELS = ("gripper_position", "gripper_force")

_STOPWORDS = frozenset({"the", "a", "an", "with", "of", "to", "and", "up", "pick", "grasp"})

_VECTOR_LENGTHS = {
    "action": ACTION_DIM,
    "language_embedding": EMBEDDING_DIM,
    "action_dict.cartesian_position": 6,
    "action_dict.rotation": 3,
    "action_dict.translation": 3,
    "observation.state": STATE_DIM,
    "observation.cartesian_position": 6,
    "observation.joint_position": 6,
}


class EpisodeFormatError(ValueError):
    """Raised when an episode file or episode violates the schema."""

    def __init__(self, rule: str, message: str, line_number: Optional[int] = None):
        self.rule = rule
        self.line_number = line_number
        where = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{where}[{rule}] {message}")


@dataclass(frozen=True)
class ActionDict:
    cartesian_position: Tuple[float, ...]
    gripper_force: float
    gripper_position: float
    rotation: Tuple[float, ...]
    translation: Tuple[float, ...]


@dataclass(frozen=True)
class StepObservation:
    state: Tuple[float, ...]
    applied_force: float
    cartesian_position: Tuple[float, ...]
    contact_force: float
    gripper_position: float
    joint_position: Tuple[float, ...]
    image_ref: str = ""
    wrist_image_ref: str = ""


@dataclass(frozen=True)
class Step:
    action: Tuple[float, ...]
    action_dict: ActionDict
    observation: StepObservation
    language_instruction: str
    language_embedding: Tuple[float, ...]
    subtask: str
    is_first: bool = False
    is_last: bool = False
    is_terminal: bool = False
    discount: float = 1.0
    reward: float = 0.0


@dataclass(frozen=True)
class Episode:
    file_path: str
    object_name: str
    seen: bool
    steps: Tuple[Step, ...] = field(default_factory=tuple)

    @property
    def metadata(self) -> Dict[str, str]:
        return {"file_path": self.file_path}

    def __len__(self) -> int:
        return len(self.steps)


def embed_instruction(text: str) -> Tuple[float, ...]:
    """
    Deterministic hashed bag-of-words embedding.

    Args:
        text: Task instruction, e.g. "grasp the raspberry"

    Returns:
        L2-normalized 512-vector
    """
    if not text or not text.strip():
        raise ValueError("Instruction text must not be empty")

    tokens = re.findall(r"[a-z0-9]+", text.lower())
    content = [t for t in tokens if t not in _STOPWORDS] or tokens
    if not content:
        raise ValueError(f"Instruction has no words: {text!r}")

    vector = np.zeros(EMBEDDING_DIM)
    for token in content:
        digest = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
        sign = 1.0 if (digest >> 32) & 1 else -1.0
        vector[digest % EMBEDDING_DIM] += sign

    norm = np.linalg.norm(vector)
    if norm == 0:
        # Opposite-signed collisions cancelled out
        vector = np.abs(vector) + 0.0
        for token in content:
            digest = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
            vector[digest % EMBEDDING_DIM] += 1.0
        norm = np.linalg.norm(vector)
    return tuple(float(v) for v in vector / norm)


def instruction_for(object_name: str) -> str:
    """Task instruction used for an object."""
    return f"grasp the {object_name}"


def make_step(
    gripper_position: float,
    applied_force: float,
    contact_force: float,
    action_position: float,
    action_force: float,
    instruction: str,
    embedding: Sequence[float],
    subtask: str
) -> Step:
    """
    Build a step from low-dimensional gripper values.

    Args:
        gripper_position: Observed aperture in mm
        applied_force: Observed force limit in N
        contact_force: Sensed contact force in N
        action_position: Commanded target aperture in mm
        action_force: Commanded force limit in N
        instruction: Task instruction
        embedding: Instruction embedding
        subtask: One of approach, grasp, home

    Returns:
        Step with flags unset (stamped when the episode is assembled)
    """
    gripper_position = float(gripper_position)
    applied_force = float(applied_force)
    contact_force = float(contact_force)
    state = GRASP_POSE + JOINT_POSITION + (gripper_position, applied_force, contact_force, 0.0)
    return Step(
        action=(0.0,) * 6 + (float(action_position), float(action_force), 0.0),
        action_dict=ActionDict(
            cartesian_position=GRASP_POSE,
            gripper_force=float(action_force),
            gripper_position=float(action_position),
            rotation=(0.0, 0.0, 0.0),
            translation=(0.0, 0.0, 0.0),
        ),
        observation=StepObservation(
            state=tuple(float(v) for v in state),
            applied_force=applied_force,
            cartesian_position=GRASP_POSE,
            contact_force=contact_force,
            gripper_position=gripper_position,
            joint_position=JOINT_POSITION,
        ),
        language_instruction=instruction,
        language_embedding=tuple(float(v) for v in embedding),
        subtask=subtask,
    )


def stamp_flags(steps: Sequence[Step], success: bool) -> Tuple[Step, ...]:
    """
    Set first/last/terminal flags and the success reward on a step sequence.

    Args:
        steps: Steps in order
        success: Whether the episode ended in a successful grasp

    Returns:
        Re-stamped steps
    """
    last = len(steps) - 1
    return tuple(
        replace(
            s,
            is_first=(i == 0),
            is_last=(i == last),
            is_terminal=(i == last and success),
            reward=1.0 if (i == last and success) else 0.0,
        )
        for i, s in enumerate(steps)
    )


# ---------------------------------------------------------------------------
# Validation

def _check_vectors(step: Step, line_number: Optional[int]):
    values = {
        "action": step.action,
        "language_embedding": step.language_embedding,
        "action_dict.cartesian_position": step.action_dict.cartesian_position,
        "action_dict.rotation": step.action_dict.rotation,
        "action_dict.translation": step.action_dict.translation,
        "observation.state": step.observation.state,
        "observation.cartesian_position": step.observation.cartesian_position,
        "observation.joint_position": step.observation.joint_position,
    }
    for name, vector in values.items():
        if len(vector) != _VECTOR_LENGTHS[name]:
            raise EpisodeFormatError(
                "vector_length",
                f"{name} must have length {_VECTOR_LENGTHS[name]}, got {len(vector)}",
                line_number,
            )


def _check_step(step: Step, line_number: Optional[int]):
    _check_vectors(step, line_number)
    if step.subtask not in SUBTASKS:
        raise EpisodeFormatError("subtask", f"unknown subtask {step.subtask!r}", line_number)
    if step.observation.applied_force < 0 or step.observation.contact_force < 0:
        raise EpisodeFormatError("force", "applied_force and contact_force must be >= 0", line_number)


def validate_episode(episode: Episode, line_number: Optional[int] = None):
    """
    Check every episode-level invariant.

    Args:
        episode: Episode to check
        line_number: First line of the episode in its file, for messages

    Raises:
        EpisodeFormatError naming the violated rule
    """
    steps = episode.steps
    if len(steps) < 2:
        raise EpisodeFormatError("episode_length", f"episode has {len(steps)} step(s), need >= 2", line_number)

    for i, s in enumerate(steps):
        _check_step(s, None if line_number is None else line_number + i)

    firsts = [i for i, s in enumerate(steps) if s.is_first]
    if firsts != [0]:
        raise EpisodeFormatError("is_first", f"is_first must be set on exactly the first step, found at {firsts}", line_number)
    lasts = [i for i, s in enumerate(steps) if s.is_last]
    if lasts != [len(steps) - 1]:
        raise EpisodeFormatError("is_last", f"is_last must be set on exactly the last step, found at {lasts}", line_number)
    if steps[-1].reward > 0 and not steps[-1].is_terminal:
        raise EpisodeFormatError("is_terminal", "last step of a successful episode must be terminal", line_number)

    order = [SUBTASKS.index(s.subtask) for s in steps]
    if any(b < a for a, b in zip(order, order[1:])):
        raise EpisodeFormatError("subtask", "subtasks must follow approach -> grasp -> home", line_number)


# ---------------------------------------------------------------------------
# Serialization

def _step_to_dict(step: Step) -> Dict[str, Any]:
    return asdict(step)


def _tuple(value: Any, name: str, line_number: int) -> Tuple[float, ...]:
    if not isinstance(value, list):
        raise EpisodeFormatError("missing_field", f"{name} must be a list", line_number)
    return tuple(float(v) for v in value)


def _step_from_dict(raw: Dict[str, Any], line_number: int) -> Step:
    try:
        ad = raw["action_dict"]
        ob = raw["observation"]
        step = Step(
            action=_tuple(raw["action"], "action", line_number),
            action_dict=ActionDict(
                cartesian_position=_tuple(ad["cartesian_position"], "action_dict.cartesian_position", line_number),
                gripper_force=float(ad["gripper_force"]),
                gripper_position=float(ad["gripper_position"]),
                rotation=_tuple(ad["rotation"], "action_dict.rotation", line_number),
                translation=_tuple(ad["translation"], "action_dict.translation", line_number),
            ),
            observation=StepObservation(
                state=_tuple(ob["state"], "observation.state", line_number),
                applied_force=float(ob["applied_force"]),
                cartesian_position=_tuple(ob["cartesian_position"], "observation.cartesian_position", line_number),
                contact_force=float(ob["contact_force"]),
                gripper_position=float(ob["gripper_position"]),
                joint_position=_tuple(ob["joint_position"], "observation.joint_position", line_number),
                image_ref=str(ob.get("image_ref", "")),
                wrist_image_ref=str(ob.get("wrist_image_ref", "")),
            ),
            language_instruction=str(raw["language_instruction"]),
            language_embedding=_tuple(raw["language_embedding"], "language_embedding", line_number),
            subtask=str(raw["subtask"]),
            is_first=bool(raw["is_first"]),
            is_last=bool(raw["is_last"]),
            is_terminal=bool(raw["is_terminal"]),
            discount=float(raw["discount"]),
            reward=float(raw["reward"]),
        )
    except KeyError as e:
        raise EpisodeFormatError("missing_field", f"missing field {e.args[0]!r}", line_number)
    except (TypeError, ValueError) as e:
        raise EpisodeFormatError("missing_field", f"bad field value: {e}", line_number)
    _check_step(step, line_number)
    return step


def write_episodes(episodes: Sequence[Episode], path: Path) -> Path:
    """
    Write episodes to a JSON-lines file (atomically replaced).

    Args:
        episodes: Valid episodes
        path: Output .jsonl file

    Returns:
        Path written
    """
    path = Path(path)
    for episode in episodes:
        validate_episode(episode)

    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps({"format": FORMAT_NAME, "schema_version": SCHEMA_VERSION}) + "\n")
        for episode in episodes:
            meta = {"file_path": episode.file_path, "object_name": episode.object_name, "seen": episode.seen}
            for step in episode.steps:
                f.write(json.dumps({"episode": meta, "step": _step_to_dict(step)}) + "\n")
    os.replace(tmp_path, path)
    log.info(f"Wrote {len(episodes)} episodes to {path}")
    return path


def read_episodes(path: Path) -> List[Episode]:
    """
    Read and validate a JSON-lines episode file.

    Args:
        path: Episode file

    Returns:
        Episodes in file order
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Episode file not found: {path}")

    episodes: List[Episode] = []
    current_meta: Optional[Dict[str, Any]] = None
    current_steps: List[Step] = []
    start_line = 0

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise EpisodeFormatError("json", f"malformed JSON: {e.msg}", line_number)

            if line_number == 1:
                if not isinstance(record, dict) or record.get("format") != FORMAT_NAME:
                    raise EpisodeFormatError("header", f"first line must be a {FORMAT_NAME} header", line_number)
                if record.get("schema_version") != SCHEMA_VERSION:
                    raise EpisodeFormatError(
                        "header", f"unsupported schema_version {record.get('schema_version')}", line_number
                    )
                continue

            if not isinstance(record, dict) or "episode" not in record or "step" not in record:
                raise EpisodeFormatError("missing_field", "record needs 'episode' and 'step'", line_number)
            meta = record["episode"]
            if not isinstance(meta, dict) or not {"file_path", "object_name", "seen"} <= set(meta):
                raise EpisodeFormatError("metadata", "episode needs file_path, object_name and seen", line_number)
            step = _step_from_dict(record["step"], line_number)

            if step.is_first:
                if current_meta is not None:
                    raise EpisodeFormatError("is_first", "second is_first before the episode's is_last", line_number)
                current_meta, current_steps, start_line = meta, [step], line_number
            else:
                if current_meta is None:
                    raise EpisodeFormatError("is_first", "step outside an episode (no preceding is_first)", line_number)
                if meta != current_meta:
                    raise EpisodeFormatError("metadata", "episode metadata changed mid-episode", line_number)
                current_steps.append(step)

            if step.is_last:
                episode = Episode(
                    file_path=str(current_meta["file_path"]),
                    object_name=str(current_meta["object_name"]),
                    seen=bool(current_meta["seen"]),
                    steps=tuple(current_steps),
                )
                validate_episode(episode, start_line)
                episodes.append(episode)
                current_meta, current_steps = None, []

    if current_meta is not None:
        raise EpisodeFormatError("is_last", "file ended inside an episode (no is_last)", start_line)
    if not episodes and path.stat().st_size == 0:
        raise EpisodeFormatError("header", "empty file", 1)
    return episodes


# ---------------------------------------------------------------------------
# Transforms

def grasp_only(episodes: Sequence[Episode]) -> List[Episode]:
    """
    Keep only the grasp-subtask steps of each episode.

    Args:
        episodes: Full episodes

    Returns:
        Grasp-only episodes with flags re-stamped; episodes with fewer than
        two grasp steps are dropped
    """
    result = []
    for episode in episodes:
        grasp_steps = [s for s in episode.steps if s.subtask == "grasp"]
        if len(grasp_steps) < 2:
            log.warning(f"Dropping {episode.file_path}: {len(grasp_steps)} grasp step(s)")
            continue
        success = episode.steps[-1].reward > 0
        result.append(replace(episode, steps=stamp_flags(grasp_steps, success)))
    return result


def episodes_frame(episodes: Sequence[Episode]) -> pd.DataFrame:
    """
    Flatten episodes into one row per step.

    Args:
        episodes: Episodes to flatten

    Returns:
        DataFrame with episode/object identifiers, subtask and gripper channels
    """
    rows = []
    for episode in episodes:
        for index, s in enumerate(episode.steps):
            rows.append({
                "episode": episode.file_path,
                "object_name": episode.object_name,
                "seen": episode.seen,
                "index": index,
                "subtask": s.subtask,
                "observation.gripper_position": s.observation.gripper_position,
                "observation.applied_force": s.observation.applied_force,
                "observation.contact_force": s.observation.contact_force,
                "action.gripper_position": s.action_dict.gripper_position,
                "action.gripper_force": s.action_dict.gripper_force,
            })
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean and std, keyed "observation.<name>" / "action.<name>"."""

    mean: Dict[str, float]
    std: Dict[str, float]

    def _arrays(self, names: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        missing = [n for n in names if n not in self.mean]
        if missing:
            raise KeyError(f"No normalization stats for {missing}")
        return np.array([self.mean[n] for n in names]), np.array([self.std[n] for n in names])

    def normalize(self, names: Sequence[str], values: np.ndarray) -> np.ndarray:
        """Z-score values whose last axis follows names."""
        mean, std = self._arrays(names)
        return (np.asarray(values, dtype=np.float64) - mean) / std

    def denormalize(self, names: Sequence[str], values: np.ndarray) -> np.ndarray:
        """Inverse of normalize."""
        mean, std = self._arrays(names)
        return np.asarray(values, dtype=np.float64) * std + mean

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": dict(self.mean), "std": dict(self.std)}

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "NormStats":
        return cls(mean={k: float(v) for k, v in raw["mean"].items()},
                   std={k: float(v) for k, v in raw["std"].items()})

    def save(self, path: Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "NormStats":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def compute_norm_stats(train_episodes: Sequence[Episode]) -> NormStats:
    """
    Mean/std of every policy channel over grasp-subtask steps.

    Args:
        train_episodes: Training-split episodes only

    Returns:
        NormStats with std floored at 1e-6
    """
    if not train_episodes:
        raise ValueError("Cannot compute normalization stats on an empty corpus")

    frame = episodes_frame(train_episodes)
    frame = frame[frame["subtask"] == "grasp"]
    if frame.empty:
        raise ValueError("Corpus has no grasp-subtask steps")

    columns = [f"observation.{c}" for c in OBSERVATION_CHANNELS] + [f"action.{c}" for c in ACTION_CHANNELS]
    values = frame[columns].to_numpy(dtype=np.float64)
    mean = values.mean(axis=0)
    std = np.maximum(values.std(axis=0, ddof=0), STD_FLOOR)
    return NormStats(
        mean={c: float(m) for c, m in zip(columns, mean)},
        std={c: float(s) for c, s in zip(columns, std)},
    )


def split(episodes: Sequence[Episode], ratio: float, seed: int) -> Tuple[List[Episode], List[Episode]]:
    """
    Per-episode train/validation split, stratified by object.

    The validation count is round((1 - ratio) * N), spread over objects by
    largest remainder; every object keeps at least one training episode.

    Args:
        episodes: Corpus
        ratio: Training fraction in (0, 1]
        seed: Split seed

    Returns:
        Tuple of (train, validation) in corpus order
    """
    if not episodes:
        raise ValueError("Cannot split an empty corpus")
    if not 0 < ratio <= 1:
        raise ValueError(f"Split ratio must be in (0, 1], got {ratio}")

    groups: Dict[str, List[int]] = {}
    for i, episode in enumerate(episodes):
        groups.setdefault(episode.object_name, []).append(i)
    names = sorted(groups)

    val_total = int(round((1.0 - ratio) * len(episodes)))
    capacity = {name: len(groups[name]) - 1 for name in names}
    ideal = {name: (1.0 - ratio) * len(groups[name]) for name in names}
    quota = {name: min(int(np.floor(ideal[name])), capacity[name]) for name in names}

    remaining = val_total - sum(quota.values())
    by_remainder = sorted(names, key=lambda n: (-(ideal[n] - np.floor(ideal[n])), n))
    while remaining > 0:
        progressed = False
        for name in by_remainder:
            if remaining == 0:
                break
            if quota[name] < capacity[name]:
                quota[name] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            break

    val_indices = set()
    for name in names:
        if quota[name] == 0:
            continue
        order = make_rng(seed, "split", name).permutation(len(groups[name]))
        val_indices.update(groups[name][j] for j in order[:quota[name]])

    train = [e for i, e in enumerate(episodes) if i not in val_indices]
    val = [e for i, e in enumerate(episodes) if i in val_indices]
    return train, val
