"""Two-layer MLP with manual backprop and an in-place Adam optimizer.

The network maps 3-D inputs through Linear(3, H) -> ReLU -> Linear(H, 3)
and predicts points on the unit sphere: the raw head output is row
normalized, and the backward pass chains through that normalization. The
ReLU subgradient at exactly 0 is taken to be 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroNormRow
from .numerics import EPSILON_NORM, row_norms

DEFAULT_HIDDEN = 512

_FIELDS = ("w1", "b1", "w2", "b2")


@dataclass
class MlpParams:
    """Weights, biases and Adam moment state."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step_count: int = 0

    def __post_init__(self):
        for name in _FIELDS:
            arr = getattr(self, name)
            self.adam_m.setdefault(name, np.zeros_like(arr))
            self.adam_v.setdefault(name, np.zeros_like(arr))

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]


@dataclass
class MlpGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class ForwardCache:
    """Activations stashed by the forward pass for the backward pass."""

    x: np.ndarray
    pre_act: np.ndarray
    hidden: np.ndarray
    pre_norm: np.ndarray
    norms: np.ndarray
    predictions: np.ndarray
    w2: np.ndarray


def init_params(rng: np.random.Generator, hidden: int = DEFAULT_HIDDEN) -> MlpParams:
    """Uniform +-1/sqrt(fan_in) init per layer; keeps initial outputs
    comfortably away from zero norm."""
    b = 1.0 / np.sqrt(3.0)
    w1 = rng.uniform(-b, b, size=(3, hidden))
    b1 = rng.uniform(-b, b, size=hidden)
    b = 1.0 / np.sqrt(hidden)
    w2 = rng.uniform(-b, b, size=(hidden, 3))
    b2 = rng.uniform(-b, b, size=3)
    return MlpParams(w1, b1, w2, b2)


def forward(params: MlpParams, x: np.ndarray) -> ForwardCache:
    """ReLU(x W1 + b1) W2 + b2, then row normalization.

    Raises :class:`ZeroNormRow` if any raw output row collapses below the
    normalization epsilon (e.g. the all-zero-weights degenerate case).
    """
    pre_act = x @ params.w1
    pre_act += params.b1
    hidden = np.maximum(pre_act, 0.0)
    pre_norm = hidden @ params.w2
    pre_norm += params.b2
    norms = row_norms(pre_norm)
    bad = np.flatnonzero(norms < EPSILON_NORM)
    if bad.size:
        raise ZeroNormRow(int(bad[0]), float(norms[bad[0]]))
    predictions = pre_norm / norms[:, None]
    return ForwardCache(x, pre_act, hidden, pre_norm, norms, predictions, params.w2)


def backward(cache: ForwardCache, grad_predictions: np.ndarray) -> MlpGrads:
    """Reverse-mode gradients through normalization, affine, ReLU, affine."""
    radial = np.einsum("ij,ij->i", grad_predictions, cache.predictions)
    g_pre_norm = grad_predictions - radial[:, None] * cache.predictions
    g_pre_norm /= cache.norms[:, None]
    g_w2 = cache.hidden.T @ g_pre_norm
    g_b2 = g_pre_norm.sum(axis=0)
    g_hidden = g_pre_norm @ cache.w2.T
    g_hidden *= cache.pre_act > 0.0
    g_w1 = cache.x.T @ g_hidden
    g_b1 = g_hidden.sum(axis=0)
    return MlpGrads(g_w1, g_b1, g_w2, g_b2)


def adam_step(params: MlpParams, grads: MlpGrads, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> MlpParams:
    """Standard bias-corrected Adam update, applied in place."""
    params.step_count += 1
    t = params.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name in _FIELDS:
        p = getattr(params, name)
        g = getattr(grads, name)
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params
