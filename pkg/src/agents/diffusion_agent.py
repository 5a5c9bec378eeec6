# diffusion_agent.py
"""
Diffusion Policy Agent - DDPM policy over gripper action sequences.
Conditions on a short observation history and the instruction embedding,
predicts T_p future actions and executes them with receding-horizon
control. Two variants: forceful (force in observations and actions) and
position-only (constant 2 N at execution).
"""

import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.checkpoint import CheckpointError, load_tensors, save_tensors
from ..core.dataset import Episode, NormStats, embed_instruction
from ..core.logger import get_logger
from ..core.nn import MLP, AdamState, NonFiniteError, ShapeError, adam_step, check_finite
from ..core.physics import GripperCommand, GripperObservation
from ..core.rng import make_rng
from .agent_base import GraspAgent
from .diffusion import BETA_SCHEDULES, NoiseSchedule, timestep_embedding

log = get_logger("Trainer")

SIDECAR_FORMAT = "forcegrasp-policy"


class TrainingDivergedError(RuntimeError):
    """Raised when the loss or a gradient stops being finite."""

    def __init__(self, step: int, loss: float, detail: str = ""):
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at step {step} (loss {loss}){': ' + detail if detail else ''}")


@dataclass(frozen=True)
class Variant:
    """Which channels a policy reads and writes."""

    tag: str
    observation_channels: Tuple[str, ...]
    action_channels: Tuple[str, ...]
    constant_force: Optional[float] = None

    @property
    def obs_dim(self) -> int:
        return len(self.observation_channels)

    @property
    def act_dim(self) -> int:
        return len(self.action_channels)

    @property
    def observation_keys(self) -> List[str]:
        return [f"observation.{c}" for c in self.observation_channels]

    @property
    def action_keys(self) -> List[str]:
        return [f"action.{c}" for c in self.action_channels]


FORCEFUL = Variant(
    tag="forceful",
    observation_channels=("gripper_position", "applied_force", "contact_force"),
    action_channels=("gripper_position", "gripper_force"),
)
POSITION_ONLY = Variant(
    tag="position_only",
    observation_channels=("gripper_position",),
    action_channels=("gripper_position",),
    constant_force=2.0,
)
VARIANTS = {FORCEFUL.tag: FORCEFUL, POSITION_ONLY.tag: POSITION_ONLY}


def get_variant(tag: str) -> Variant:
    """Look up a variant; "position-only" and "position_only" both work."""
    key = tag.replace("-", "_")
    if key not in VARIANTS:
        raise ValueError(f"Unknown policy variant {tag!r} (use forceful or position-only)")
    return VARIANTS[key]


@dataclass(frozen=True)
class PolicyConfig:
    """Horizons, diffusion schedule, network and optimizer settings."""

    obs_horizon: int = 2          # T_o
    pred_horizon: int = 16        # T_p
    action_horizon: int = 8       # T_a during training
    execute_horizon: int = 1      # actions executed per replan
    diffusion_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    beta_schedule: str = "linear"
    instruction_dim: int = 512
    instruction_proj_dim: int = 32
    time_embed_dim: int = 32
    hidden: Tuple[int, ...] = (256, 256)
    train_steps: int = 3000
    batch_size: int = 16
    learning_rate: float = 1e-3
    split_ratio: float = 0.9
    log_every: int = 250
    min_force: float = 0.15       # N, execution floor
    max_force: float = 10.0       # N

    def __post_init__(self):
        if self.obs_horizon < 1:
            raise ValueError(f"obs_horizon must be >= 1, got {self.obs_horizon}")
        if not 1 <= self.execute_horizon <= self.action_horizon <= self.pred_horizon:
            raise ValueError(
                "need 1 <= execute_horizon <= action_horizon <= pred_horizon, got "
                f"{self.execute_horizon}, {self.action_horizon}, {self.pred_horizon}"
            )
        if self.beta_schedule not in BETA_SCHEDULES:
            raise ValueError(f"beta_schedule must be one of {BETA_SCHEDULES}, got {self.beta_schedule!r}")
        if self.beta_schedule == "linear" and not 0 < self.beta_start < self.beta_end < 1:
            raise ValueError("linear betas need 0 < beta_start < beta_end < 1")
        if self.diffusion_steps < 1 or self.train_steps < 1 or self.batch_size < 1:
            raise ValueError("diffusion_steps, train_steps and batch_size must be >= 1")
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ValueError(f"hidden widths must be positive, got {self.hidden}")
        if not 0 < self.min_force <= self.max_force:
            raise ValueError("need 0 < min_force <= max_force")

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.create(self.diffusion_steps, self.beta_start, self.beta_end, self.beta_schedule)


# ---------------------------------------------------------------------------
# Training pairs

@dataclass
class TrainingPairs:
    """Normalized (observation window, action window) pairs."""

    observations: np.ndarray   # (N, T_o, obs_dim)
    actions: np.ndarray        # (N, T_p, act_dim)
    embeddings: np.ndarray     # (N, instruction_dim)
    episode_ids: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.observations.shape[0])


def _episode_arrays(episode: Episode, variant: Variant) -> Tuple[np.ndarray, np.ndarray]:
    obs = np.array([[getattr(s.observation, c) for c in variant.observation_channels] for s in episode.steps])
    act = np.array([[getattr(s.action_dict, c) for c in variant.action_channels] for s in episode.steps])
    return obs, act


def build_training_pairs(
    episodes: Sequence[Episode],
    cfg: PolicyConfig,
    variant: Variant,
    norm_stats: NormStats
) -> TrainingPairs:
    """
    One pair per step of every episode.

    The observation window covers steps t-T_o+1..t, front-padded by
    repeating the first step; the action window covers t..t+T_p-1,
    back-padded by repeating the last action.

    Args:
        episodes: Grasp-only episodes
        cfg: Horizons
        variant: Channels to read
        norm_stats: Training-split statistics

    Returns:
        TrainingPairs (normalized)
    """
    obs_windows, act_windows, embeddings, ids = [], [], [], []
    for episode in episodes:
        n = len(episode.steps)
        if n < 2:
            log.warning(f"Skipping {episode.file_path}: {n} step(s)")
            continue
        obs, act = _episode_arrays(episode, variant)
        obs = norm_stats.normalize(variant.observation_keys, obs)
        act = norm_stats.normalize(variant.action_keys, act)
        embedding = np.array(episode.steps[0].language_embedding)
        for t in range(n):
            obs_idx = np.clip(np.arange(t - cfg.obs_horizon + 1, t + 1), 0, n - 1)
            act_idx = np.clip(np.arange(t, t + cfg.pred_horizon), 0, n - 1)
            obs_windows.append(obs[obs_idx])
            act_windows.append(act[act_idx])
            embeddings.append(embedding)
            ids.append(episode.file_path)

    if not obs_windows:
        raise ValueError("No training pairs: every episode was too short")
    return TrainingPairs(
        observations=np.stack(obs_windows),
        actions=np.stack(act_windows),
        embeddings=np.stack(embeddings),
        episode_ids=ids,
    )


# ---------------------------------------------------------------------------
# Denoiser

class DenoiserNet:
    """
    Noise predictor: MLP over [observation window, projected instruction,
    timestep embedding, noisy action window].
    """

    def __init__(self, cfg: PolicyConfig, variant: Variant, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.variant = variant
        self.obs_width = cfg.obs_horizon * variant.obs_dim
        self.action_width = cfg.pred_horizon * variant.act_dim
        self.input_width = self.obs_width + cfg.instruction_proj_dim + cfg.time_embed_dim + self.action_width
        self.projection = MLP([cfg.instruction_dim, cfg.instruction_proj_dim], rng)
        self.network = MLP([self.input_width, *cfg.hidden, self.action_width], rng)

    @property
    def parameter_count(self) -> int:
        return self.projection.parameter_count + self.network.parameter_count

    def parameters(self) -> List[np.ndarray]:
        return self.projection.parameters() + self.network.parameters()

    def parameter_names(self) -> List[str]:
        names = []
        for prefix, mlp in (("projection", self.projection), ("network", self.network)):
            for i in range(mlp.n_layers):
                names.extend([f"{prefix}.W{i}", f"{prefix}.b{i}"])
        return names

    def set_parameters(self, params: Sequence[np.ndarray]):
        split = 2 * self.projection.n_layers
        self.projection.set_parameters(params[:split])
        self.network.set_parameters(params[split:])

    def _inputs(self, obs_flat, embedding, t, x_t):
        obs_flat = np.asarray(obs_flat, dtype=np.float64)
        x_t = np.asarray(x_t, dtype=np.float64)
        if obs_flat.ndim != 2 or obs_flat.shape[1] != self.obs_width:
            raise ShapeError(f"Observation window must be (batch, {self.obs_width}), got {obs_flat.shape}")
        if x_t.ndim != 2 or x_t.shape[1] != self.action_width:
            raise ShapeError(f"Action window must be (batch, {self.action_width}), got {x_t.shape}")
        projected, proj_cache = self.projection.forward_with_cache(embedding)
        temb = timestep_embedding(t, self.cfg.time_embed_dim)
        return np.concatenate([obs_flat, projected, temb, x_t], axis=1), proj_cache

    def forward(self, obs_flat, embedding, t, x_t) -> np.ndarray:
        inputs, _ = self._inputs(obs_flat, embedding, t, x_t)
        return self.network.forward(inputs)

    def loss_and_grads(self, obs_flat, embedding, t, x_t, noise) -> Tuple[float, List[np.ndarray]]:
        """
        Mean squared noise-prediction error and its parameter gradients.

        Returns:
            Tuple of (loss, gradients in parameters() order)
        """
        inputs, proj_cache = self._inputs(obs_flat, embedding, t, x_t)
        predicted, cache = self.network.forward_with_cache(inputs)
        residual = predicted - noise
        loss = float(np.mean(residual * residual))

        grad_out = 2.0 * residual / residual.size
        network_grads, grad_inputs = self.network.backward(inputs, grad_out, cache)
        start = self.obs_width
        grad_projected = grad_inputs[:, start:start + self.cfg.instruction_proj_dim]
        projection_grads, _ = self.projection.backward(embedding, grad_projected, proj_cache)
        return loss, projection_grads + network_grads


# ---------------------------------------------------------------------------
# Policy

class DiffusionPolicy:
    """Trained denoiser plus everything needed to sample from it."""

    def __init__(
        self,
        cfg: PolicyConfig,
        variant: Variant,
        norm_stats: NormStats,
        net: Optional[DenoiserNet] = None,
        seed: int = 0,
        step: int = 0
    ):
        missing = [k for k in variant.observation_keys + variant.action_keys if k not in norm_stats.mean]
        if missing:
            raise ValueError(f"Normalization stats lack channels {missing}")
        self.cfg = cfg
        self.variant = variant
        self.norm_stats = norm_stats
        self.net = net or DenoiserNet(cfg, variant)
        self.schedule = cfg.schedule()
        self.seed = seed
        self.step = step

    def sample_actions(
        self,
        obs_window: np.ndarray,
        embedding: np.ndarray,
        rng: np.random.Generator,
        max_aperture: float = 85.0
    ) -> np.ndarray:
        """
        Run the reverse diffusion and return executable actions.

        Args:
            obs_window: Raw observations, shape (T_o, obs_dim)
            embedding: Instruction embedding, shape (instruction_dim,)
            rng: Sampling stream
            max_aperture: Gripper's widest opening in mm

        Returns:
            Denormalized, clamped actions of shape (T_p, act_dim)
        """
        obs_window = np.asarray(obs_window, dtype=np.float64)
        expected = (self.cfg.obs_horizon, self.variant.obs_dim)
        if obs_window.shape != expected:
            raise ShapeError(f"Observation window must be {expected}, got {obs_window.shape}")
        embedding = np.asarray(embedding, dtype=np.float64).reshape(1, -1)
        if embedding.shape[1] != self.cfg.instruction_dim:
            raise ShapeError(f"Instruction embedding must have {self.cfg.instruction_dim} dims, got {embedding.shape[1]}")

        obs_flat = self.norm_stats.normalize(self.variant.observation_keys, obs_window).reshape(1, -1)

        def predict_noise(x_t: np.ndarray, t: np.ndarray) -> np.ndarray:
            return self.net.forward(obs_flat, embedding, t, x_t)

        x0 = self.schedule.sample(predict_noise, (1, self.net.action_width), rng)
        actions = x0.reshape(self.cfg.pred_horizon, self.variant.act_dim)
        actions = self.norm_stats.denormalize(self.variant.action_keys, actions)
        return self.clamp_actions(actions, max_aperture)

    def clamp_actions(self, actions: np.ndarray, max_aperture: float) -> np.ndarray:
        """Clamp positions to [0, max_aperture] and forces to [min_force, max_force]."""
        actions = np.nan_to_num(np.array(actions, dtype=np.float64), nan=0.0, posinf=max_aperture, neginf=0.0)
        for j, channel in enumerate(self.variant.action_channels):
            if channel == "gripper_position":
                actions[:, j] = np.clip(actions[:, j], 0.0, max_aperture)
            elif channel == "gripper_force":
                actions[:, j] = np.clip(actions[:, j], self.cfg.min_force, self.cfg.max_force)
        return actions

    def sidecar(self, checkpoint_path: Path) -> Dict[str, Any]:
        cfg = asdict(self.cfg)
        cfg["hidden"] = list(self.cfg.hidden)
        return {
            "format": SIDECAR_FORMAT,
            "variant": self.variant.tag,
            "obs_dim": self.variant.obs_dim,
            "act_dim": self.variant.act_dim,
            "input_width": self.net.input_width,
            "policy": cfg,
            "norm_stats": Path(checkpoint_path).name + ".norm.json",
            "checkpoint": Path(checkpoint_path).name,
        }

    def save(self, path: Path) -> Path:
        """
        Write checkpoint, policy sidecar and normalization stats.

        Args:
            path: Checkpoint file (sidecars go next to it)

        Returns:
            Checkpoint path
        """
        path = Path(path)
        sidecar = self.sidecar(path)
        tensors = list(zip(self.net.parameter_names(), self.net.parameters()))
        extra = {"variant": self.variant.tag, "obs_dim": self.variant.obs_dim, "act_dim": self.variant.act_dim}
        save_tensors(path, tensors, seed=self.seed, step=self.step, extra=extra)
        self.norm_stats.save(path.parent / sidecar["norm_stats"])
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Path, expected_variant: Optional[str] = None) -> "DiffusionPolicy":
        """
        Load a policy, refusing any disagreement between its files.

        Args:
            path: Checkpoint file
            expected_variant: Refuse unless the policy has this variant

        Returns:
            DiffusionPolicy
        """
        path = Path(path)
        side = sidecar_path(path)
        if not side.exists():
            raise CheckpointError(f"Policy sidecar not found: {side}")
        meta = json.loads(side.read_text(encoding="utf-8"))
        if meta.get("format") != SIDECAR_FORMAT:
            raise CheckpointError(f"{side}: not a {SIDECAR_FORMAT} sidecar")

        try:
            variant = get_variant(meta["variant"])
            policy_values = dict(meta["policy"])
            policy_values["hidden"] = tuple(policy_values["hidden"])
            cfg = PolicyConfig(**policy_values)
            input_width = int(meta["input_width"])
            norm_file = meta["norm_stats"]
        except (KeyError, TypeError) as e:
            raise CheckpointError(f"{side}: malformed sidecar ({type(e).__name__}: {e})")
        if expected_variant is not None and variant.tag != get_variant(expected_variant).tag:
            raise CheckpointError(f"Checkpoint holds a {variant.tag} policy, expected {expected_variant}")

        header, tensors = load_tensors(path)
        extra = header.get("extra", {})
        for key in ("variant", "obs_dim", "act_dim"):
            if extra.get(key) != meta.get(key):
                raise CheckpointError(f"Sidecar and checkpoint disagree on {key}: {meta.get(key)} vs {extra.get(key)}")

        net = DenoiserNet(cfg, variant)
        if net.input_width != input_width:
            raise CheckpointError(f"Sidecar input width {input_width} does not match the architecture ({net.input_width})")
        names = [name for name, _ in tensors]
        if names != net.parameter_names():
            raise CheckpointError(f"Checkpoint tensors {names} do not match the architecture")
        try:
            net.set_parameters([array for _, array in tensors])
        except ShapeError as e:
            raise CheckpointError(f"Checkpoint shapes do not match the sidecar: {e}")

        norm_stats = NormStats.load(path.parent / norm_file)
        return cls(cfg, variant, norm_stats, net, seed=header.get("seed", 0), step=header.get("step", 0))


def sidecar_path(checkpoint: Path) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.name + ".policy.json")


@dataclass
class TrainResult:
    policy: DiffusionPolicy
    losses: List[float]


def train(
    pairs: TrainingPairs,
    cfg: PolicyConfig,
    variant: Variant,
    norm_stats: NormStats,
    seed: int
) -> TrainResult:
    """
    Fit the denoiser with the epsilon-prediction objective.

    Each step draws a batch of pairs, a timestep in [1, T] and Gaussian
    noise per sample, corrupts the action windows and regresses the noise.

    Args:
        pairs: Training pairs
        cfg: Policy settings
        variant: Policy variant (must match the pairs)
        norm_stats: Statistics used to build the pairs
        seed: Training seed

    Returns:
        TrainResult with the policy and the per-step loss trace
    """
    if len(pairs) == 0:
        raise ValueError("Cannot train on an empty pair set")
    if pairs.observations.shape[1:] != (cfg.obs_horizon, variant.obs_dim):
        raise ShapeError(f"Pairs have observation windows {pairs.observations.shape[1:]}, "
                         f"{variant.tag} needs {(cfg.obs_horizon, variant.obs_dim)}")
    if pairs.actions.shape[1:] != (cfg.pred_horizon, variant.act_dim):
        raise ShapeError(f"Pairs have action windows {pairs.actions.shape[1:]}, "
                         f"{variant.tag} needs {(cfg.pred_horizon, variant.act_dim)}")

    net = DenoiserNet(cfg, variant, make_rng(seed, "init"))
    schedule = cfg.schedule()
    batch_rng = make_rng(seed, "batch")
    noise_rng = make_rng(seed, "noise")
    optimizer = AdamState.for_parameters(net.parameters(), lr=cfg.learning_rate)

    obs_flat = pairs.observations.reshape(len(pairs), -1)
    actions_flat = pairs.actions.reshape(len(pairs), -1)

    log.info(f"Training {variant.tag} policy: {len(pairs)} pairs, {net.parameter_count} parameters, "
             f"{cfg.train_steps} steps x batch {cfg.batch_size}")

    losses: List[float] = []
    for step in range(1, cfg.train_steps + 1):
        idx = batch_rng.integers(0, len(pairs), size=cfg.batch_size)
        t = noise_rng.integers(1, schedule.num_steps + 1, size=cfg.batch_size)
        noise = noise_rng.standard_normal((cfg.batch_size, net.action_width))
        x_t = schedule.add_noise(actions_flat[idx], noise, t)

        loss, grads = net.loss_and_grads(obs_flat[idx], pairs.embeddings[idx], t, x_t, noise)
        if not np.isfinite(loss):
            raise TrainingDivergedError(step, loss, "non-finite loss")
        try:
            net.set_parameters(adam_step(optimizer, net.parameters(), grads))
        except NonFiniteError as e:
            raise TrainingDivergedError(step, loss, str(e))
        losses.append(loss)

        if step % cfg.log_every == 0 or step == cfg.train_steps:
            window = losses[-cfg.log_every:]
            log.info(f"step {step}/{cfg.train_steps} loss {np.mean(window):.4f}")

    policy = DiffusionPolicy(cfg, variant, norm_stats, net, seed=seed, step=cfg.train_steps)
    return TrainResult(policy=policy, losses=losses)


def validation_loss(policy: DiffusionPolicy, pairs: TrainingPairs, seed: int, draws: int = 4) -> float:
    """
    Mean noise-prediction loss on held-out pairs with fixed noise draws.

    Args:
        policy: Trained policy
        pairs: Validation pairs
        seed: Stream seed
        draws: Noise draws per pair

    Returns:
        Mean squared error
    """
    if len(pairs) == 0:
        return float("nan")
    rng = make_rng(seed, "validation")
    obs_flat = np.repeat(pairs.observations.reshape(len(pairs), -1), draws, axis=0)
    actions = np.repeat(pairs.actions.reshape(len(pairs), -1), draws, axis=0)
    embeddings = np.repeat(pairs.embeddings, draws, axis=0)
    t = rng.integers(1, policy.schedule.num_steps + 1, size=obs_flat.shape[0])
    noise = rng.standard_normal(actions.shape)
    x_t = policy.schedule.add_noise(actions, noise, t)
    predicted = policy.net.forward(obs_flat, embeddings, t, x_t)
    check_finite("validation prediction", predicted, force=True)
    return float(np.mean((predicted - noise) ** 2))


# ---------------------------------------------------------------------------
# Agent

def observation_vector(observation: GripperObservation, variant: Variant) -> np.ndarray:
    """Channels of a live observation in the variant's order."""
    values = {
        "gripper_position": observation.aperture,
        "applied_force": observation.applied_force,
        "contact_force": observation.contact_force,
    }
    return np.array([values[c] for c in variant.observation_channels], dtype=np.float64)


class DiffusionPolicyAgent(GraspAgent):
    """Receding-horizon executor of a diffusion policy."""

    def __init__(self, policy: DiffusionPolicy, max_aperture: float = 85.0):
        label = "Forceful" if policy.variant.tag == "forceful" else "Position-only"
        super().__init__(name=label, role="Diffusion policy over gripper actions")
        self.policy = policy
        self.max_aperture = max_aperture
        self.embedding = np.zeros(policy.cfg.instruction_dim)
        self.obs_queue: Deque[np.ndarray] = deque(maxlen=policy.cfg.obs_horizon)
        self.action_queue: Deque[np.ndarray] = deque(maxlen=policy.cfg.pred_horizon)
        self.skipped_ticks = 0
        self.replans = 0

    @property
    def variant(self) -> str:
        return self.policy.variant.tag

    def _reset(self):
        self.embedding = np.array(embed_instruction(self.instruction)) if self.instruction else np.zeros(
            self.policy.cfg.instruction_dim
        )
        self.obs_queue = deque(maxlen=self.policy.cfg.obs_horizon)
        self.action_queue = deque(maxlen=self.policy.cfg.pred_horizon)
        self.skipped_ticks = 0
        self.replans = 0
        if self.rng is None:
            self.rng = make_rng(self.policy.seed, "rollout")

    def act(self, observation: Optional[GripperObservation]) -> Optional[GripperCommand]:
        if observation is None:
            self.skipped_ticks += 1
            return None
        self.ticks += 1

        current = observation_vector(observation, self.policy.variant)
        if not self.obs_queue:
            # Front-pad the history with the first observation
            self.obs_queue.extend([current] * self.policy.cfg.obs_horizon)
        else:
            self.obs_queue.append(current)

        if not self.action_queue:
            actions = self.policy.sample_actions(np.stack(self.obs_queue), self.embedding, self.rng, self.max_aperture)
            self.action_queue.extend(actions[:self.policy.cfg.execute_horizon])
            self.replans += 1

        action = self.action_queue.popleft()
        if self.policy.variant.constant_force is not None:
            return GripperCommand(float(action[0]), self.policy.variant.constant_force)
        return GripperCommand(float(action[0]), float(action[1]))
