"""
Neural Network Core - Dense MLP with exact reverse-mode gradients and Adam.

Tensors are float64 numpy arrays. The network is a fixed stack of affine
layers with ReLU between them and an identity output; backward is written
out by hand for that stack.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import get_settings

Tensor = np.ndarray


class ShapeError(ValueError):
    """Raised when an input does not fit a layer."""


class NonFiniteError(RuntimeError):
    """Raised when a NaN or Inf shows up in a tensor."""


def check_finite(name: str, tensor: Tensor, force: bool = False):
    """
    Fail fast on NaN/Inf (only in debug mode unless forced).

    Args:
        name: Label used in the error message
        tensor: Array to check
        force: Check even when debug mode is off
    """
    if (force or get_settings().debug) and not np.all(np.isfinite(tensor)):
        raise NonFiniteError(f"Non-finite values in {name}")


def he_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> Tensor:
    """He-uniform weights of shape (fan_in, fan_out)."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class MLP:
    """Affine layers with ReLU hidden activations and an identity output."""

    def __init__(self, widths: Sequence[int], rng: Optional[np.random.Generator] = None):
        """
        Initialize the network.

        Args:
            widths: Layer widths from input to output, e.g. [8, 16, 4]
            rng: Init stream; weights are zero when omitted
        """
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ShapeError(f"MLP needs at least two positive widths, got {widths}")
        self.widths = widths
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            if rng is None:
                self.weights.append(np.zeros((fan_in, fan_out)))
            else:
                self.weights.append(he_uniform(fan_in, fan_out, rng))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> List[Tensor]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def set_parameters(self, params: Sequence[Tensor]):
        """Replace parameters (same order as parameters())."""
        if len(params) != 2 * self.n_layers:
            raise ShapeError(f"Expected {2 * self.n_layers} parameter tensors, got {len(params)}")
        for i in range(self.n_layers):
            w, b = np.asarray(params[2 * i], dtype=np.float64), np.asarray(params[2 * i + 1], dtype=np.float64)
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeError(
                    f"Layer {i}: expected W{self.weights[i].shape}, b{self.biases[i].shape}, "
                    f"got W{w.shape}, b{b.shape}"
                )
            self.weights[i] = w
            self.biases[i] = b

    def _check_input(self, x: Tensor) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ShapeError(
                f"Layer 0 expects input width {self.widths[0]}, got shape {x.shape}"
            )
        return x

    def forward(self, x: Tensor) -> Tensor:
        """
        Run the network on a batch.

        Args:
            x: Input of shape (batch, widths[0]) or (widths[0],)

        Returns:
            Output of shape (batch, widths[-1])
        """
        output, _ = self.forward_with_cache(x)
        return output

    def forward_with_cache(self, x: Tensor) -> Tuple[Tensor, List[Tensor]]:
        """Forward pass that also returns per-layer inputs for backward."""
        h = self._check_input(x)
        cache = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            cache.append(h)
            z = h @ w + b
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
        check_finite("MLP output", h)
        return h, cache

    def backward(
        self,
        x: Tensor,
        grad_output: Tensor,
        cache: Optional[List[Tensor]] = None
    ) -> Tuple[List[Tensor], Tensor]:
        """
        Reverse-mode gradients of a scalar loss through the network.

        ReLU at exactly zero takes subgradient 0.

        Args:
            x: Input batch used in the forward pass
            grad_output: dLoss/dOutput, shape (batch, widths[-1])
            cache: Layer inputs from forward_with_cache (recomputed if omitted)

        Returns:
            Tuple of (parameter gradients in parameters() order, dLoss/dInput)
        """
        if cache is None:
            _, cache = self.forward_with_cache(x)
        grad = np.asarray(grad_output, dtype=np.float64)
        if grad.ndim == 1:
            grad = grad[None, :]
        if grad.shape != (cache[0].shape[0], self.widths[-1]):
            raise ShapeError(
                f"Layer {self.n_layers - 1} output gradient must be "
                f"{(cache[0].shape[0], self.widths[-1])}, got {grad.shape}"
            )

        grads: List[Tensor] = [None] * (2 * self.n_layers)
        for i in reversed(range(self.n_layers)):
            h_in = cache[i]
            grads[2 * i] = h_in.T @ grad
            grads[2 * i + 1] = grad.sum(axis=0)
            grad = grad @ self.weights[i].T
            if i > 0:
                # h_in is the ReLU output of layer i-1
                grad = grad * (h_in > 0.0)
        check_finite("MLP input gradient", grad)
        return grads, grad


@dataclass
class AdamState:
    """Optimizer moments and hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[Tensor] = field(default_factory=list)
    v: List[Tensor] = field(default_factory=list)

    @classmethod
    def for_parameters(cls, params: Sequence[Tensor], lr: float = 1e-3, **kwargs) -> "AdamState":
        """Fresh state with zero moments shaped like params."""
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Sequence[Tensor]) -> List[Tensor]:
    """
    One bias-corrected Adam update.

    Args:
        state: Optimizer state (moments and step count are advanced in place)
        params: Current parameters
        grads: Gradients in the same order

    Returns:
        New parameter tensors
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"Adam got {len(params)} params, {len(grads)} grads, {len(state.m)} moment slots"
        )
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ShapeError(f"Adam slot {i}: param {p.shape}, grad {g.shape}, moment {state.m[i].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"Non-finite gradient in slot {i} at optimizer step {state.step + 1}")

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated


def gradient_check(
    net: MLP,
    x: Tensor,
    h: float = 1e-5,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None
) -> float:
    """
    Compare analytic and central-difference gradients of 0.5 * ||net(x)||^2.

    Args:
        net: Network to check
        x: Input batch
        h: Finite-difference step
        max_entries: Check at most this many entries per tensor (all if None)
        rng: Stream used to pick entries when max_entries is set

    Returns:
        Largest relative error over parameter tensors and the input
    """
    def loss() -> float:
        out = net.forward(x)
        return 0.5 * float(np.sum(out * out))

    out, cache = net.forward_with_cache(x)
    grads, grad_input = net.backward(x, out, cache)

    def compare(tensor: Tensor, analytic: Tensor, objective) -> float:
        flat = tensor.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        numeric = np.empty(indices.size)
        for j, idx in enumerate(indices):
            original = flat[idx]
            flat[idx] = original + h
            plus = objective()
            flat[idx] = original - h
            minus = objective()
            flat[idx] = original
            numeric[j] = (plus - minus) / (2 * h)
        picked = analytic.reshape(-1)[indices]
        scale = np.linalg.norm(picked) + np.linalg.norm(numeric)
        if scale == 0:
            return 0.0
        return float(np.linalg.norm(picked - numeric) / scale)

    errors = [compare(p, g, loss) for p, g in zip(net.parameters(), grads)]

    x_var = np.array(x, dtype=np.float64, copy=True)
    if x_var.ndim == 1:
        x_var = x_var[None, :]

    def input_loss() -> float:
        out_ = net.forward(x_var)
        return 0.5 * float(np.sum(out_ * out_))

    errors.append(compare(x_var, grad_input, input_loss))
    return max(errors)
