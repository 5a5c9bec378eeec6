"""
DDPM bookkeeping - noise schedules, forward corruption and the reverse sampler.

Timesteps are 1-based: t = 1 is the last denoising step and t = T the
first. The sampler takes any noise predictor, so the same loop serves the
trained denoiser and an exact-noise oracle.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

NoisePredictor = Callable[[np.ndarray, np.ndarray], np.ndarray]

BETA_SCHEDULES = ("linear", "squaredcos_cap_v2")


@dataclass(frozen=True)
class NoiseSchedule:
    """Betas, alphas and cumulative alpha products for T steps."""

    betas: np.ndarray
    alphas: np.ndarray
    alphas_cumprod: np.ndarray

    @classmethod
    def create(
        cls,
        num_steps: int = 100,
        beta_start: float = 1e-4,
        beta_end: float = 0.02,
        schedule: str = "linear"
    ) -> "NoiseSchedule":
        """
        Build a schedule.

        Args:
            num_steps: Diffusion steps T
            beta_start: First beta (linear only)
            beta_end: Last beta (linear only)
            schedule: "linear" or "squaredcos_cap_v2"

        Returns:
            NoiseSchedule
        """
        if num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {num_steps}")
        if schedule == "linear":
            if num_steps > 1 and not beta_start < beta_end:
                raise ValueError(f"linear schedule needs beta_start < beta_end, got {beta_start}, {beta_end}")
            betas = np.linspace(beta_start, beta_end, num_steps, dtype=np.float64)
        elif schedule == "squaredcos_cap_v2":
            betas = _cosine_betas(num_steps)
        else:
            raise ValueError(f"Unknown beta schedule {schedule!r} (use one of {BETA_SCHEDULES})")

        if not np.all((betas > 0) & (betas < 1)):
            raise ValueError("betas must lie in (0, 1)")
        alphas = 1.0 - betas
        return cls(betas=betas, alphas=alphas, alphas_cumprod=np.cumprod(alphas))

    @property
    def num_steps(self) -> int:
        return int(self.betas.shape[0])

    def alpha_bar(self, t: np.ndarray) -> np.ndarray:
        """Cumulative product at 1-based t; alpha_bar(0) is 1."""
        t = np.asarray(t)
        padded = np.concatenate([[1.0], self.alphas_cumprod])
        return padded[t]

    def add_noise(self, x0: np.ndarray, noise: np.ndarray, t: np.ndarray) -> np.ndarray:
        """
        Forward corruption sqrt(a_t) x0 + sqrt(1 - a_t) noise.

        Args:
            x0: Clean samples, batch first
            noise: Standard normal noise, same shape
            t: 1-based timesteps, one per sample

        Returns:
            Noisy samples x_t
        """
        a = self.alpha_bar(t).reshape((-1,) + (1,) * (x0.ndim - 1))
        return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * noise

    def posterior_mean(self, x0: np.ndarray, x_t: np.ndarray, t: int) -> np.ndarray:
        """Mean of q(x_{t-1} | x_t, x0)."""
        a_t = self.alpha_bar(t)
        a_prev = self.alpha_bar(t - 1)
        beta = self.betas[t - 1]
        coef_x0 = math.sqrt(a_prev) * beta / (1.0 - a_t)
        coef_xt = math.sqrt(self.alphas[t - 1]) * (1.0 - a_prev) / (1.0 - a_t)
        return coef_x0 * x0 + coef_xt * x_t

    def posterior_variance(self, t: int) -> float:
        return float(self.betas[t - 1] * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)))

    def step_mean(self, x_t: np.ndarray, eps: np.ndarray, t: int) -> np.ndarray:
        """Reverse-step mean from predicted noise."""
        beta = self.betas[t - 1]
        return (x_t - beta / math.sqrt(1.0 - self.alpha_bar(t)) * eps) / math.sqrt(self.alphas[t - 1])

    def sample(
        self,
        predict_noise: NoisePredictor,
        shape: tuple,
        rng: np.random.Generator
    ) -> np.ndarray:
        """
        Full reverse pass from Gaussian noise.

        Args:
            predict_noise: f(x_t, t_batch) -> predicted noise
            shape: Output shape, batch first
            rng: Sampling stream

        Returns:
            Denoised samples x_0
        """
        x = rng.standard_normal(shape)
        batch = shape[0]
        for t in range(self.num_steps, 0, -1):
            eps = predict_noise(x, np.full(batch, t, dtype=np.int64))
            mean = self.step_mean(x, eps, t)
            if t > 1:
                x = mean + math.sqrt(self.posterior_variance(t)) * rng.standard_normal(shape)
            else:
                x = mean
        return x


def _cosine_betas(num_steps: int, max_beta: float = 0.999) -> np.ndarray:
    def alpha_bar(u: float) -> float:
        return math.cos((u + 0.008) / 1.008 * math.pi / 2) ** 2

    return np.array([
        min(1.0 - alpha_bar((i + 1) / num_steps) / alpha_bar(i / num_steps), max_beta)
        for i in range(num_steps)
    ])


def timestep_embedding(t: np.ndarray, dim: int = 32, max_period: float = 10000.0) -> np.ndarray:
    """
    Sinusoidal embedding of diffusion timesteps.

    Args:
        t: Timesteps, shape (batch,)
        dim: Embedding width (even)
        max_period: Lowest frequency period

    Returns:
        Array of shape (batch, dim): sines then cosines
    """
    if dim % 2:
        raise ValueError(f"Embedding width must be even, got {dim}")
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / max(half - 1, 1))
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)
