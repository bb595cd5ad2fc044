"""Graph container, synthetic generation, text I/O and edge-cut partitioning."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, ParseError, RangeError, ShapeError

SPLITS = ("train", "val", "test")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph in CSR form with node features, labels and split masks."""

    csr_offsets: np.ndarray
    csr_targets: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        n = len(self.csr_offsets) - 1
        off = np.asarray(self.csr_offsets, dtype=np.int64)
        tgt = np.asarray(self.csr_targets, dtype=np.int64)
        if n < 0 or off[0] != 0 or np.any(np.diff(off) < 0) or off[-1] != len(tgt):
            raise ShapeError("csr_offsets must be nondecreasing from 0 to num_edges")
        if len(tgt) and (tgt.min() < 0 or tgt.max() >= n):
            raise RangeError("csr_targets entry out of range")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ShapeError(f"features must have {n} rows, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ParameterError("features contain NaN or Inf")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ShapeError(f"labels must have {n} entries, got {labels.shape[0]}")
        if n and labels.min() < 0:
            raise RangeError("negative class label")
        masks = [np.asarray(m, dtype=bool) for m in (self.train_mask, self.val_mask, self.test_mask)]
        for m in masks:
            if m.shape != (n,):
                raise ShapeError("mask length must equal num_nodes")
        if np.any(masks[0].astype(int) + masks[1] + masks[2] > 1):
            raise ParameterError("train/val/test masks overlap")
        object.__setattr__(self, "csr_offsets", _frozen(off))
        object.__setattr__(self, "csr_targets", _frozen(tgt))
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "labels", _frozen(labels))
        for name, m in zip(("train_mask", "val_mask", "test_mask"), masks):
            object.__setattr__(self, name, _frozen(m))

    @property
    def num_nodes(self) -> int:
        return len(self.csr_offsets) - 1

    @property
    def num_edges(self) -> int:
        """Number of directed edge slots (twice the undirected edge count)."""
        return len(self.csr_targets)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.num_nodes else 0

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[v]:self.csr_offsets[v + 1]]

    def edge_sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_nodes), self.degrees)

    def mask(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ParameterError(f"unknown split {split!r}")
        return getattr(self, f"{split}_mask")

    def is_symmetric(self) -> bool:
        src = self.edge_sources()
        fwd = set(zip(src.tolist(), self.csr_targets.tolist()))
        return all((v, u) in fwd for u, v in fwd)


def from_edges(num_nodes: int, src, dst, features, labels, masks=None, seed: int = 0) -> Graph:
    """Build a symmetric, deduplicated, self-loop-free CSR graph from an edge list."""
    src = np.asarray(src, dtype=np.int64).ravel()
    dst = np.asarray(dst, dtype=np.int64).ravel()
    keep = src != dst
    src, dst = src[keep], dst[keep]
    both = np.stack([np.concatenate([src, dst]), np.concatenate([dst, src])], axis=1)
    if len(both):
        both = np.unique(both, axis=0)  # sorted by (source, target)
    else:
        both = np.empty((0, 2), dtype=np.int64)
    counts = np.bincount(both[:, 0], minlength=num_nodes)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    if masks is None:
        masks = split_masks(num_nodes, seed)
    return Graph(offsets, both[:, 1], features, labels, *masks)


def split_masks(num_nodes: int, seed: int, fractions=(0.6, 0.2)):
    """Deterministic 60/20/20 train/val/test split."""
    perm = np.random.default_rng(seed).permutation(num_nodes)
    n_train = int(fractions[0] * num_nodes)
    n_val = int(fractions[1] * num_nodes)
    masks = [np.zeros(num_nodes, dtype=bool) for _ in range(3)]
    masks[0][perm[:n_train]] = True
    masks[1][perm[n_train:n_train + n_val]] = True
    masks[2][perm[n_train + n_val:]] = True
    return tuple(masks)


def generate_sbm(num_nodes: int, num_classes: int, p_in: float, p_out: float,
                 feature_dim: int, feature_noise: float, seed: int) -> Graph:
    """Sample a stochastic block model graph with class-centroid features.

    Nodes are split into ``num_classes`` contiguous blocks of near-equal size;
    block id is the label. Each pair (u, v) is connected independently with
    probability ``p_in`` inside a block and ``p_out`` across blocks. Features are
    a standard-normal centroid per class plus isotropic Gaussian noise.
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ParameterError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if num_classes < 1 or num_nodes < num_classes:
        raise ParameterError("num_nodes must be >= num_classes >= 1")
    if feature_dim < 1 or feature_noise < 0:
        raise ParameterError("feature_dim must be positive and feature_noise non-negative")
    rng = np.random.default_rng(seed)
    labels = np.arange(num_nodes) * num_classes // num_nodes
    iu, ju = np.triu_indices(num_nodes, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    hit = rng.random(len(iu)) < prob
    centroids = rng.standard_normal((num_classes, feature_dim))
    features = centroids[labels] + feature_noise * rng.standard_normal((num_nodes, feature_dim))
    masks = split_masks(num_nodes, seed)
    return from_edges(num_nodes, iu[hit], ju[hit], features, labels, masks)


def _read_rows(path: Path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            yield lineno, s.split()


def load_edge_list(edges_path, features_path, labels_path, masks_path=None, seed: int = 0) -> Graph:
    """Load a graph from whitespace-separated text files.

    Node count is the number of feature rows; an edge naming a node beyond it
    is a row-count mismatch. Edges are symmetrized and deduplicated.
    """
    feats = []
    width = None
    for lineno, tok in _read_rows(Path(features_path)):
        try:
            row = [float(t) for t in tok]
        except ValueError:
            raise ParseError(features_path, lineno, f"non-numeric feature value in {' '.join(tok)!r}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(features_path, lineno, f"expected {width} values, got {len(row)}")
        feats.append(row)
    n = len(feats)

    src, dst = [], []
    for lineno, tok in _read_rows(Path(edges_path)):
        if len(tok) != 2:
            raise ParseError(edges_path, lineno, "expected two node ids")
        try:
            u, v = int(tok[0]), int(tok[1])
        except ValueError:
            raise ParseError(edges_path, lineno, "node ids must be integers") from None
        if u < 0 or v < 0:
            raise RangeError(f"{edges_path}:{lineno}: negative node id")
        src.append(u)
        dst.append(v)
    max_id = max(max(src, default=-1), max(dst, default=-1))
    if max_id >= n:
        raise ShapeError(f"{features_path}: {n} feature rows but edge list references node {max_id}")

    labels = []
    for lineno, tok in _read_rows(Path(labels_path)):
        if len(tok) != 1:
            raise ParseError(labels_path, lineno, "expected one class id")
        try:
            labels.append(int(tok[0]))
        except ValueError:
            raise ParseError(labels_path, lineno, "class id must be an integer") from None
    if len(labels) != n:
        raise ShapeError(f"{labels_path}: {len(labels)} labels for {n} nodes")

    masks = None
    if masks_path is not None:
        names = []
        for lineno, tok in _read_rows(Path(masks_path)):
            if len(tok) != 1 or tok[0] not in SPLITS:
                raise ParseError(masks_path, lineno, "expected one of train|val|test")
            names.append(tok[0])
        if len(names) != n:
            raise ShapeError(f"{masks_path}: {len(names)} split entries for {n} nodes")
        arr = np.array(names)
        masks = tuple(arr == s for s in SPLITS)

    features = np.array(feats, dtype=np.float64).reshape(n, width or 0)
    return from_edges(n, src, dst, features, labels, masks, seed=seed)


def write_edge_list(g: Graph, edges_path, features_path, labels_path, masks_path=None) -> None:
    """Write ``g`` in the text formats read by :func:`load_edge_list`."""
    src = g.edge_sources()
    keep = src < g.csr_targets
    with open(edges_path, "w") as fh:
        fh.write("# u v\n")
        for u, v in zip(src[keep].tolist(), g.csr_targets[keep].tolist()):
            fh.write(f"{u} {v}\n")
    with open(features_path, "w") as fh:
        for row in g.features:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    with open(labels_path, "w") as fh:
        fh.writelines(f"{int(c)}\n" for c in g.labels)
    if masks_path is not None:
        with open(masks_path, "w") as fh:
            for v in range(g.num_nodes):
                split = next((s for s in SPLITS if g.mask(s)[v]), "test")
                fh.write(split + "\n")


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of nodes to workers plus the derived boundary and halo sets.

    ``halo_nodes[k]`` lists (ascending) every remote node a node of worker k is
    adjacent to; ``halo_owner[k]`` gives the owner of each of those nodes.
    """

    num_workers: int
    owner: np.ndarray
    local_nodes: list = field(repr=False)
    boundary_nodes: list = field(repr=False)
    halo_nodes: list = field(repr=False)
    halo_owner: list = field(repr=False)

    @classmethod
    def from_owner(cls, g: Graph, owner: Sequence[int], num_workers: int) -> "Partition":
        owner = np.asarray(owner, dtype=np.int64)
        if owner.shape != (g.num_nodes,) or (len(owner) and (owner.min() < 0 or owner.max() >= num_workers)):
            raise ParameterError("owner must assign every node to a worker in [0, K)")
        src = g.edge_sources()
        dst = g.csr_targets
        cut = owner[src] != owner[dst]
        local, boundary, halo, halo_own = [], [], [], []
        for k in range(num_workers):
            local.append(_frozen(np.flatnonzero(owner == k)))
            boundary.append(_frozen(np.unique(src[cut & (owner[src] == k)])))
            h = np.unique(dst[cut & (owner[src] == k)])
            halo.append(_frozen(h))
            halo_own.append(_frozen(owner[h]))
        return cls(num_workers, _frozen(owner), local, boundary, halo, halo_own)

    def send_list(self, k: int, j: int) -> np.ndarray:
        """Boundary nodes of worker ``k`` whose features worker ``j`` needs, ascending."""
        return self.halo_nodes[j][self.halo_owner[j] == k]

    def edge_cut(self, g: Graph) -> int:
        return edge_cut(g, self.owner)


def edge_cut(g: Graph, owner) -> int:
    """Number of undirected edges whose endpoints have different owners."""
    owner = np.asarray(owner)
    return int(np.count_nonzero(owner[g.edge_sources()] != owner[g.csr_targets]) // 2)


def _bfs_far_seeds(g: Graph, K: int, rng: np.random.Generator) -> list:
    order = rng.permutation(g.num_nodes)
    seeds = [int(order[0])]
    dist = np.full(g.num_nodes, np.inf)
    for _ in range(1, K):
        # multi-source BFS distance from the newest seed, merged into the running minimum
        d = np.full(g.num_nodes, np.inf)
        s = seeds[-1]
        d[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for w in g.neighbors(u):
                if d[w] == np.inf:
                    d[w] = d[u] + 1
                    q.append(w)
        dist = np.minimum(dist, d)
        cand = dist[order]
        cand[np.isin(order, seeds)] = -1
        seeds.append(int(order[int(np.argmax(cand))]))
    return seeds


def _bfs_greedy(g: Graph, K: int, seed: int) -> np.ndarray:
    n = g.num_nodes
    rng = np.random.default_rng(seed)
    seeds = _bfs_far_seeds(g, K, rng)
    cap = -(-n // K)
    owner = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(K, dtype=np.int64)
    frontiers = [deque([s]) for s in seeds]
    fallback = deque(rng.permutation(n).tolist())
    assigned = 0
    while assigned < n:
        for q in frontiers:
            while q and owner[q[0]] != -1:
                q.popleft()
        live = [k for k in range(K) if frontiers[k] and sizes[k] < cap]
        if live:
            k = min(live, key=lambda i: (sizes[i], i))
            v = frontiers[k].popleft()
        else:
            open_ = [i for i in range(K) if sizes[i] < cap]
            k = min(open_, key=lambda i: (sizes[i], i))
            while owner[fallback[0]] != -1:
                fallback.popleft()
            v = fallback.popleft()
        owner[v] = k
        sizes[k] += 1
        assigned += 1
        frontiers[k].extend(w for w in g.neighbors(v).tolist() if owner[w] == -1)
    return owner


def partition_graph(g: Graph, K: int, method: str = "bfs-greedy", seed: int = 0) -> Partition:
    """Partition ``g`` across ``K`` workers.

    ``hash`` assigns ``v mod K``. ``bfs-greedy`` picks K mutually distant seed
    nodes and grows regions breadth-first, always extending the smallest region
    that still has an unassigned frontier node, with regions capped at ceil(n/K).
    """
    if K < 1 or K > g.num_nodes:
        raise ParameterError(f"K must be in [1, {g.num_nodes}], got {K}")
    if method == "hash":
        owner = np.arange(g.num_nodes) % K
    elif method == "bfs-greedy":
        owner = _bfs_greedy(g, K, seed)
    else:
        raise ParameterError(f"unknown partition method {method!r}")
    return Partition.from_owner(g, owner, K)
