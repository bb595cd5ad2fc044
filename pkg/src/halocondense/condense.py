"""Boundary-node grouping and super-node condensation.

A worker sending boundary features to a peer splits those nodes into ``m``
groups and transmits one vector per group instead of one per node. The
receiver assigns each group's vector to all of its members.

Three condensers are provided, all convex combinations of the member rows:
plain mean, degree-weighted mean, and softmax attention with a learned
scoring vector. Groups of size one are always passed through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ParameterError, ShapeError
from .graph import Partition

METHODS = ("mean", "weighted", "attention")
STRATEGIES = ("chunk", "kmeans")
KMEANS_MAX_ITER = 20


def num_groups(n: int, r: float) -> int:
    """Groups for ``n`` nodes at volume reduction ``r``: max(1, round((1 - r) n))."""
    if not 0 < r < 1:
        raise ParameterError(f"compression ratio r must be in (0, 1), got {r}")
    return max(1, int(round((1.0 - r) * n)))


def _canonical(labels: np.ndarray) -> np.ndarray:
    # renumber groups by first appearance so group ids are independent of cluster numbering
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * x @ c.T
    return np.maximum(d, 0.0)


def _seed_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding."""
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        cum = np.cumsum(closest)
        if cum[-1] > 0:
            idx = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), n - 1)
        else:
            idx = int(rng.integers(n))
        centers[j] = x[idx]
        np.minimum(closest, ((x - centers[j]) ** 2).sum(axis=1), out=closest)
    return centers


def kmeans_labels(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = KMEANS_MAX_ITER,
                  init_labels=None) -> np.ndarray:
    """Lloyd's k-means; never returns an empty cluster.

    Starts from the centroids of ``init_labels`` when given (a warm start from a
    previous grouping of the same rows), otherwise from k-means++ seeds. After
    every assignment step each empty cluster takes the point farthest from its
    current centroid (drawn from clusters that can spare a member).
    """
    n = len(x)
    if k >= n:
        return np.arange(n)
    counts = np.bincount(init_labels, minlength=k) if init_labels is not None and len(init_labels) == n else None
    if counts is not None and len(counts) == k and counts.min() > 0:
        centers = np.zeros((k, x.shape[1]))
        np.add.at(centers, init_labels, x)
        centers /= counts[:, None]
    else:
        centers = _seed_centers(x, k, rng)

    labels = None
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        new = d.argmin(axis=1)
        far = d[np.arange(n), new]
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            spare = counts[new] > 1
            cand = np.where(spare, far, -1.0)
            p = int(np.argmax(cand))
            counts[new[p]] -= 1
            new[p] = j
            counts[j] = 1
            far[p] = -1.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        centers = sums / counts[:, None]
    return labels


def chunk_labels(node_ids: np.ndarray, x: np.ndarray, k: int) -> np.ndarray:
    """Sort by projection onto the mean feature direction, then cut into k runs."""
    direction = x.mean(axis=0)
    norm = np.linalg.norm(direction)
    proj = x @ (direction / norm) if norm > 0 else np.zeros(len(x))
    order = np.lexsort((node_ids, proj))
    labels = np.empty(len(x), dtype=np.int64)
    for g, run in enumerate(np.array_split(order, k)):
        labels[run] = g
    return labels


def group_nodes(node_ids, features, m: int, strategy: str = "kmeans", rng=None, init_labels=None) -> np.ndarray:
    """Assign each row to one of ``m`` nonempty groups; returns canonical labels.

    ``node_ids`` must be ascending. Group 0 holds the smallest node id, group 1
    the smallest id not in group 0, and so on. ``init_labels`` warm-starts
    k-means and is ignored by the chunk strategy.
    """
    node_ids = np.asarray(node_ids)
    n = len(node_ids)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if not 1 <= m <= n:
        raise ParameterError(f"need 1 <= m <= {n}, got {m}")
    if strategy == "kmeans":
        rng = rng if rng is not None else np.random.default_rng(0)
        labels = kmeans_labels(np.asarray(features, dtype=np.float64), m, rng, init_labels=init_labels)
    elif strategy == "chunk":
        labels = chunk_labels(node_ids, np.asarray(features, dtype=np.float64), m)
    else:
        raise ParameterError(f"unknown grouping strategy {strategy!r}")
    return _canonical(labels)


def grouping_rng(seed: int, source: int, dest: int, layer: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, source, dest, layer])


@dataclass
class GroupingPlan:
    """Groups of worker ``source``'s boundary nodes, per destination worker."""

    source: int
    ratio: float
    groups: dict = field(default_factory=dict)  # dest -> list of ascending global-id arrays

    @property
    def m_total(self) -> int:
        return sum(len(g) for g in self.groups.values())

    def covered(self, dest: int) -> np.ndarray:
        return np.sort(np.concatenate(self.groups[dest])) if self.groups.get(dest) else np.empty(0, dtype=np.int64)


def build_grouping(partition: Partition, k: int, features, r: float,
                   strategy: str = "kmeans", seed: int = 0) -> GroupingPlan:
    """Group worker ``k``'s boundary nodes separately for every destination.

    ``features`` has one row per entry of ``partition.local_nodes[k]``.
    """
    if not 0 < r < 1:
        raise ParameterError(f"compression ratio r must be in (0, 1), got {r}")
    features = np.asarray(features, dtype=np.float64)
    local = partition.local_nodes[k]
    if features.shape[0] != len(local):
        raise ShapeError(f"need {len(local)} feature rows for worker {k}, got {features.shape[0]}")
    plan = GroupingPlan(k, r)
    for j in range(partition.num_workers):
        if j == k:
            continue
        ids = partition.send_list(k, j)
        if len(ids) == 0:
            continue
        rows = features[np.searchsorted(local, ids)]
        labels = group_nodes(ids, rows, num_groups(len(ids), r), strategy, grouping_rng(seed, k, j))
        plan.groups[j] = [ids[labels == g] for g in range(labels.max() + 1)]
    return plan


# -- single-group condensers -------------------------------------------------

def _check_group(h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ContractError("condensation needs a nonempty 2-D group")
    return h


def condense_mean(h) -> np.ndarray:
    h = _check_group(h)
    if len(h) == 1:
        return h[0].copy()
    return h.sum(axis=0) / len(h)


def degree_weights(degrees) -> np.ndarray:
    d = np.asarray(degrees, dtype=np.float64)
    if np.any(d < 0):
        raise ContractError("negative degree")
    total = d.sum()
    if total == 0:
        return np.full(len(d), 1.0 / len(d))
    return d / total


def condense_weighted(h, degrees) -> np.ndarray:
    h = _check_group(h)
    if len(degrees) != len(h):
        raise ShapeError("one degree per group member required")
    w = degree_weights(degrees)
    if len(h) == 1:
        return h[0].copy()
    return w @ h


def condense_attention(h, a):
    """Softmax(h @ a)-weighted sum of the rows. Returns ``(s, alpha)``."""
    h = _check_group(h)
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (h.shape[1],):
        raise ShapeError(f"attention vector has shape {a.shape}, features have dim {h.shape[1]}")
    if len(h) == 1:
        return h[0].copy(), np.ones(1)
    z = h @ a
    e = np.exp(z - z.max())
    alpha = e / e.sum()
    return alpha @ h, alpha


def attention_objective(a, h) -> float:
    """Reconstruction error sum_v ||h_v - s||^2 of the attention super node."""
    s, _ = condense_attention(h, a)
    return float(((np.asarray(h) - s) ** 2).sum())


def attention_grad(h, s, alpha) -> np.ndarray:
    """d/da of sum_v ||h_v - s||^2 where s = sum_v alpha_v h_v, alpha = softmax(h @ a).

    With r_v = h_v - s: dJ/ds = -2 sum_v r_v and ds/da = sum_v alpha_v r_v r_v^T.
    """
    h = np.asarray(h, dtype=np.float64)
    r = h - s
    g = -2.0 * r.sum(axis=0)
    return (alpha * (r @ g)) @ r


def update_attention_param(a, h, s, alpha, aux_lr: float) -> np.ndarray:
    return np.asarray(a, dtype=np.float64) - aux_lr * attention_grad(h, s, alpha)


# -- vectorized path used by the trainer ---------------------------------------

def group_weights(h: np.ndarray, labels: np.ndarray, m: int, method: str,
                  degrees=None, a=None) -> np.ndarray:
    """Per-row convex weights; rows of each group sum to one, singletons get 1."""
    counts = np.bincount(labels, minlength=m)
    if method == "mean":
        w = 1.0 / counts[labels]
    elif method == "weighted":
        d = np.asarray(degrees, dtype=np.float64)
        if np.any(d < 0):
            raise ContractError("negative degree")
        tot = np.bincount(labels, weights=d, minlength=m)[labels]
        w = np.where(tot > 0, d / np.where(tot > 0, tot, 1.0), 1.0 / counts[labels])
    elif method == "attention":
        if a is None or np.shape(a) != (h.shape[1],):
            raise ShapeError("attention vector must match feature dim")
        z = h @ a
        zmax = np.full(m, -np.inf)
        np.maximum.at(zmax, labels, z)
        e = np.exp(z - zmax[labels])
        w = e / np.bincount(labels, weights=e, minlength=m)[labels]
    else:
        raise ParameterError(f"unknown condensation method {method!r}")
    return np.where(counts[labels] == 1, 1.0, w)


def condense_groups(h: np.ndarray, labels: np.ndarray, m: int, method: str,
                    degrees=None, a=None):
    """Condense every group at once. Returns ``(super_nodes [m x d], weights)``."""
    w = group_weights(h, labels, m, method, degrees, a)
    op = sp.csr_matrix((w, (labels, np.arange(len(labels)))), shape=(m, len(labels)))
    return op @ h, w


def attention_grad_groups(h: np.ndarray, labels: np.ndarray, s: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Sum of :func:`attention_grad` over all groups."""
    r = h - s[labels]
    g = np.zeros_like(s)
    np.add.at(g, labels, r)
    g *= -2.0
    coef = w * np.einsum("ij,ij->i", r, g[labels])
    return coef @ r


@dataclass
class SuperNodeBatch:
    """One condensed message: group members and one vector per group."""

    layer: int
    source: int
    dest: int
    members: list
    vectors: np.ndarray

    def __post_init__(self):
        if len(self.members) != len(self.vectors):
            raise ShapeError("one vector per group required")
        if not np.all(np.isfinite(self.vectors)):
            raise ContractError("super node vectors must be finite")

    @property
    def num_groups(self) -> int:
        return len(self.members)

    @property
    def num_members(self) -> int:
        return sum(len(g) for g in self.members)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def reconstruct(batch: SuperNodeBatch, expected_ids=None):
    """Expand a batch back to per-node rows. Returns ``(node_ids, rows)``.

    When ``expected_ids`` is given, every member must be one of them.
    """
    if batch.num_groups == 0:
        return np.empty(0, dtype=np.int64), np.empty((0, batch.vectors.shape[1] if batch.vectors.ndim == 2 else 0))
    sizes = np.array([len(g) for g in batch.members])
    ids = np.concatenate(batch.members).astype(np.int64)
    rows = np.repeat(batch.vectors, sizes, axis=0)
    if expected_ids is not None:
        unknown = np.setdiff1d(ids, expected_ids)
        if len(unknown):
            raise ContractError(f"batch names node {int(unknown[0])} which the receiver does not expect")
    return ids, rows
