"""Per-worker error feedback for condensed boundary messages.

Before condensing, each outgoing row gets the residual left over from its
previous transmission added back (``h_hat = h + E``); after the receiver-side
reconstruction ``h_tilde`` is known, the residual becomes ``h_hat - h_tilde``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, UndefinedMetricError


@dataclass
class ErrorAccumulator:
    """Residual store keyed by ``(node, layer, stream)``.

    ``stream`` separates message streams that carry the same node, e.g. one per
    destination worker, since each destination sees a different reconstruction.
    """

    enabled: bool = True
    store: dict = field(default_factory=dict)

    def residual(self, v: int, layer: int, dim: int, stream=None) -> np.ndarray:
        if not self.enabled:
            return np.zeros(dim)
        return self.store.get((v, layer, stream), np.zeros(dim))

    def compensate(self, v: int, layer: int, h_v, stream=None) -> np.ndarray:
        h_v = np.asarray(h_v, dtype=np.float64)
        return h_v + self.residual(v, layer, h_v.shape[-1], stream)

    def record_error(self, v: int, layer: int, h_hat, h_tilde, stream=None) -> None:
        h_hat = np.asarray(h_hat, dtype=np.float64)
        h_tilde = np.asarray(h_tilde, dtype=np.float64)
        if h_hat.shape != h_tilde.shape:
            raise ShapeError(f"residual shapes differ: {h_hat.shape} vs {h_tilde.shape}")
        if self.enabled:
            self.store[(v, layer, stream)] = h_hat - h_tilde

    def compensate_rows(self, nodes, layer: int, h: np.ndarray, stream=None) -> np.ndarray:
        if not self.enabled or not self.store:
            return np.array(h, dtype=np.float64)
        zero = np.zeros(h.shape[1])
        res = np.stack([self.store.get((int(v), layer, stream), zero) for v in nodes]) if len(nodes) else zero[:0]
        return h + res

    def record_rows(self, nodes, layer: int, h_hat: np.ndarray, h_tilde: np.ndarray, stream=None) -> None:
        if h_hat.shape != h_tilde.shape:
            raise ShapeError(f"residual shapes differ: {h_hat.shape} vs {h_tilde.shape}")
        if not self.enabled:
            return
        diff = h_hat - h_tilde
        for v, row in zip(nodes, diff):
            self.store[(int(v), layer, stream)] = row

    def retain(self, nodes) -> None:
        """Drop residuals of nodes outside ``nodes`` (e.g. after repartitioning)."""
        keep = set(int(v) for v in nodes)
        self.store = {key: val for key, val in self.store.items() if key[0] in keep}

    def max_norm(self) -> float:
        if not self.store:
            return 0.0
        return math.sqrt(max(float(np.dot(v, v)) for v in self.store.values()))

    def num_elements(self) -> int:
        return sum(v.size for v in self.store.values())


def measure_delta(h, e) -> float:
    """Empirical compression-error bound: max_v ||e_v|| / ||h_v||.

    Pairs with both norms zero are skipped; a zero ``h_v`` with nonzero error
    makes the bound infinite.
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    e = np.atleast_2d(np.asarray(e, dtype=np.float64))
    if h.size == 0 or len(h) == 0:
        raise UndefinedMetricError("no (h, e) pairs logged")
    if h.shape != e.shape:
        raise ShapeError("h and e must have the same shape")
    hn = np.linalg.norm(h, axis=1)
    en = np.linalg.norm(e, axis=1)
    if np.any((hn == 0) & (en > 0)):
        return math.inf
    ok = hn > 0
    if not ok.any():
        raise UndefinedMetricError("every logged feature vector is zero")
    return float((en[ok] / hn[ok]).max())


class DeltaLog:
    """Running max of ||e_v|| / ||h_v|| over an epoch's transmissions."""

    def __init__(self):
        self.value = None

    def add(self, h: np.ndarray, e: np.ndarray) -> None:
        if len(h) == 0:
            return
        try:
            d = measure_delta(h, e)
        except UndefinedMetricError:
            return
        self.value = d if self.value is None else max(self.value, d)

    def merge(self, other: "DeltaLog") -> None:
        if other.value is not None:
            self.value = other.value if self.value is None else max(self.value, other.value)
