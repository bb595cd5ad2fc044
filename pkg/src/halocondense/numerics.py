"""Dense float64 kernels, loss and SGD shared by the model and the trainer.

Matrices are plain 2-D ``numpy.float64`` arrays; :func:`as_matrix` is the
validation gate for data entering from outside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, RangeError, ShapeError

BYTES_PER_WIRE_ELEMENT = 4  # features travel as float32 on the wire


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.array(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {a.ndim}-D")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contains NaN or Inf")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of relu at ``x``; zero where ``x <= 0``."""
    return np.where(x > 0, upstream, 0.0)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels, mask, normalizer=None):
    """Mean negative log-likelihood over the masked rows.

    ``normalizer`` overrides the divisor (default: number of masked rows), which
    lets several workers each contribute their share of one global mean.

    Returns ``(loss, grad_logits)``; gradient rows outside the mask are zero.
    """
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    n, c = logits.shape
    if labels.shape[0] != n or mask.shape[0] != n:
        raise ShapeError("labels and mask must have one entry per logits row")
    idx = np.flatnonzero(mask)
    if len(idx) and (labels[idx].max() >= c or labels[idx].min() < 0):
        raise RangeError(f"label outside [0, {c})")
    denom = len(idx) if normalizer is None else normalizer
    grad = np.zeros_like(logits)
    if len(idx) == 0:
        return 0.0, grad
    sub = logits[idx]
    z = sub - sub.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    nll = logsum - z[np.arange(len(idx)), labels[idx]]
    p = softmax_rows(sub)
    p[np.arange(len(idx)), labels[idx]] -= 1.0
    grad[idx] = p / denom
    return float(nll.sum() / denom), grad


@dataclass
class SgdState:
    learning_rate: float
    momentum: float = 0.0
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must be in [0, 1)")


def sgd_step(params: dict, grads: dict, state: SgdState) -> dict:
    """Return updated parameters; momentum buffers in ``state`` are advanced in place."""
    out = {}
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ShapeError(f"gradient for {name} has shape {np.shape(g)}, expected {np.shape(p)}")
        if state.momentum:
            buf = state.buffers.get(name)
            buf = g.copy() if buf is None else state.momentum * buf + g
            state.buffers[name] = buf
            g = buf
        out[name] = p - state.learning_rate * g
    return out


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
