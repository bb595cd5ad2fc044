"""GraphSAGE-mean layers with hand-written backward passes.

A layer computes, for every local node v::

    out[v] = act(h[v] @ w_self + mean_{u in N(v)} h[u] @ w_neigh + bias)

where neighbor rows come either from the worker's own nodes or from the halo
buffer of remote features. Nodes without neighbors get a zero neighbor term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import AggregationError, ContractError, ShapeError, UndefinedMetricError
from .graph import Graph, Partition
from .numerics import glorot_uniform, relu, relu_backward


@dataclass(frozen=True, eq=False)
class LocalView:
    """Adjacency of one worker's nodes, indexing neighbors in [local | halo] order."""

    local_ids: np.ndarray
    halo_ids: np.ndarray
    mean_op: sp.csr_matrix = field(repr=False)

    @property
    def num_local(self) -> int:
        return len(self.local_ids)

    @property
    def num_halo(self) -> int:
        return len(self.halo_ids)

    @classmethod
    def build(cls, g: Graph, local_ids, halo_ids) -> "LocalView":
        local_ids = np.asarray(local_ids, dtype=np.int64)
        halo_ids = np.asarray(halo_ids, dtype=np.int64)
        pos = np.full(g.num_nodes, -1, dtype=np.int64)
        pos[local_ids] = np.arange(len(local_ids))
        pos[halo_ids] = len(local_ids) + np.arange(len(halo_ids))
        deg = g.degrees[local_ids]
        indptr = np.concatenate([[0], np.cumsum(deg)])
        if len(local_ids):
            cols = np.concatenate([g.neighbors(v) for v in local_ids])
        else:
            cols = np.empty(0, dtype=np.int64)
        indices = pos[cols]
        if np.any(indices < 0):
            missing = int(cols[np.flatnonzero(indices < 0)[0]])
            raise AggregationError(missing)
        data = np.repeat(1.0 / np.maximum(deg, 1), deg)
        op = sp.csr_matrix((data, indices, indptr), shape=(len(local_ids), len(local_ids) + len(halo_ids)))
        return cls(local_ids, halo_ids, op)

    @classmethod
    def full(cls, g: Graph) -> "LocalView":
        return cls.build(g, np.arange(g.num_nodes), np.empty(0, dtype=np.int64))

    @classmethod
    def for_worker(cls, g: Graph, part: Partition, k: int) -> "LocalView":
        return cls.build(g, part.local_nodes[k], part.halo_nodes[k])


@dataclass
class SageLayer:
    w_self: np.ndarray
    w_neigh: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.w_self.shape != self.w_neigh.shape or self.bias.shape != (self.w_self.shape[1],):
            raise ShapeError("inconsistent SageLayer parameter shapes")

    @property
    def in_dim(self) -> int:
        return self.w_self.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w_self.shape[1]


@dataclass
class SageCache:
    layer: SageLayer
    view: LocalView
    h_local: np.ndarray
    agg: np.ndarray
    pre: np.ndarray
    activation: bool
    consumed: bool = False


def sage_forward(layer: SageLayer, h_local: np.ndarray, h_halo: np.ndarray,
                 view: LocalView, apply_activation: bool):
    """Run one layer on a worker's nodes. Returns ``(h_out, cache)``."""
    if h_local.shape[0] != view.num_local:
        raise ShapeError(f"expected {view.num_local} local rows, got {h_local.shape[0]}")
    if h_halo.shape[0] < view.num_halo:
        raise AggregationError(int(view.halo_ids[h_halo.shape[0]]))
    h_all = np.vstack([h_local, h_halo[:view.num_halo]]) if view.num_halo else h_local
    agg = view.mean_op @ h_all
    pre = h_local @ layer.w_self + agg @ layer.w_neigh + layer.bias
    out = relu(pre) if apply_activation else pre
    return out, SageCache(layer, view, h_local, agg, pre, apply_activation)


def sage_backward(cache: SageCache, upstream: np.ndarray):
    """Backward pass of :func:`sage_forward`.

    Returns ``(grads, grad_h_local, grad_h_halo)`` where ``grads`` holds
    ``w_self``, ``w_neigh`` and ``bias``. A cache may be consumed once.
    """
    if cache.consumed:
        raise ContractError("SageCache already consumed by a backward pass")
    if upstream.shape != cache.pre.shape:
        raise ContractError(f"upstream shape {upstream.shape} does not match forward output {cache.pre.shape}")
    cache.consumed = True
    layer = cache.layer
    d = relu_backward(cache.pre, upstream) if cache.activation else upstream
    grads = {
        "w_self": cache.h_local.T @ d,
        "w_neigh": cache.agg.T @ d,
        "bias": d.sum(axis=0),
    }
    grad_all = cache.view.mean_op.T @ (d @ layer.w_neigh.T)
    n = cache.view.num_local
    grad_local = d @ layer.w_self.T + grad_all[:n]
    return grads, grad_local, grad_all[n:]


@dataclass
class Model:
    layers: list

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError("layer output/input dims do not chain")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def params(self) -> dict:
        return {f"{i}.{name}": getattr(layer, name)
                for i, layer in enumerate(self.layers)
                for name in ("w_self", "w_neigh", "bias")}

    def with_params(self, params: dict) -> "Model":
        return Model([SageLayer(params[f"{i}.w_self"], params[f"{i}.w_neigh"], params[f"{i}.bias"])
                      for i in range(self.num_layers)])


def init_model(in_dim: int, hidden_dim: int, out_dim: int, num_layers: int = 2, seed: int = 0) -> Model:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [in_dim] + [hidden_dim] * (num_layers - 1) + [out_dim]
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        layers.append(SageLayer(glorot_uniform(rng, d_in, d_out),
                                glorot_uniform(rng, d_in, d_out),
                                np.zeros(d_out)))
    return Model(layers)


def forward_full(model: Model, view: LocalView, x: np.ndarray):
    """Forward over a view with no halo (the whole graph, or one worker when K=1)."""
    h = x
    caches = []
    for i, layer in enumerate(model.layers):
        last = i == model.num_layers - 1
        h, cache = sage_forward(layer, h, np.empty((0, h.shape[1])), view, not last)
        caches.append(cache)
    return h, caches


def backward_full(model: Model, caches: list, grad_logits: np.ndarray) -> dict:
    grads = {}
    upstream = grad_logits
    for i in reversed(range(model.num_layers)):
        g, upstream, _ = sage_backward(caches[i], upstream)
        for name, val in g.items():
            grads[f"{i}.{name}"] = val
    return grads


def accuracy(logits: np.ndarray, labels, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise UndefinedMetricError("accuracy over an empty mask")
    pred = logits[mask].argmax(axis=1)
    return float(np.mean(pred == np.asarray(labels)[mask]))
