"""Simulated synchronous data-parallel training over K logical workers.

Each iteration runs, per layer: compensate -> group -> condense -> send ->
reconstruct -> record residual -> aggregate. The backward pass returns halo
gradients to feature owners uncompressed, parameter gradients are summed over
all workers in worker order, and every replica takes the same SGD step.

Wire sizes are computed from message contents: 4 bytes per feature element,
4 bytes per node id and 8 bytes of header per message.
"""

from __future__ import annotations

import csv
import json
import math
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .condense import (SuperNodeBatch, attention_grad_groups, condense_groups, group_nodes,
                       grouping_rng, num_groups, reconstruct)
from .config import ExperimentConfig, build_graph, validate_config
from .errors import AggregationError, ComparabilityError, ConsistencyError, ContractError, RoutingError
from .feedback import DeltaLog, ErrorAccumulator
from .gnn import LocalView, accuracy, backward_full, forward_full, init_model, sage_backward, sage_forward
from .graph import Graph, partition_graph
from .numerics import BYTES_PER_WIRE_ELEMENT, SgdState, cross_entropy, sgd_step

HEADER_BYTES = 8
ID_BYTES = 4
REPLICA_TOLERANCE = 1e-9

CSV_COLUMNS = ("epoch", "loss", "train_acc", "val_acc", "test_acc", "payload_bytes",
               "metadata_bytes", "baseline_bytes", "grad_bytes", "delta_emp", "max_residual_norm")


class Kind(str, Enum):
    SUPER_NODES = "SuperNodes"
    RAW_HALO = "RawHalo"
    GRAD_HALO = "GradHalo"
    PARAM_SYNC = "ParamSync"


_KIND_ORDER = {k: i for i, k in enumerate(Kind)}


@dataclass(frozen=True, eq=False)
class Message:
    kind: Kind
    source: int
    dest: int
    layer: int = 0
    node_ids: Optional[np.ndarray] = None
    vectors: Optional[np.ndarray] = None
    batch: Optional[SuperNodeBatch] = None
    shards: Optional[dict] = None

    @property
    def payload_bytes(self) -> int:
        if self.kind is Kind.SUPER_NODES:
            return self.batch.num_groups * self.batch.dim * BYTES_PER_WIRE_ELEMENT
        if self.kind is Kind.PARAM_SYNC:
            return sum(v.size for v in self.shards.values()) * BYTES_PER_WIRE_ELEMENT
        return self.vectors.size * BYTES_PER_WIRE_ELEMENT

    @property
    def metadata_bytes(self) -> int:
        if self.kind is Kind.SUPER_NODES:
            # per group: member count + member ids
            return HEADER_BYTES + ID_BYTES * (self.batch.num_groups + self.batch.num_members)
        if self.kind is Kind.PARAM_SYNC:
            return HEADER_BYTES
        return HEADER_BYTES + ID_BYTES * len(self.node_ids)

    @property
    def baseline_bytes(self) -> int:
        """Payload an uncompressed exchange of the same rows would carry."""
        if self.kind is Kind.SUPER_NODES:
            return self.batch.num_members * self.batch.dim * BYTES_PER_WIRE_ELEMENT
        return self.payload_bytes

    @property
    def nbytes(self) -> int:
        return self.payload_bytes + self.metadata_bytes


_FIELDS = ("messages", "payload", "metadata", "baseline")


class CommLedger:
    """Byte counters keyed by ``(epoch, source, dest, kind)``, kept for both ends."""

    def __init__(self):
        self._lock = threading.Lock()
        self.sent = defaultdict(lambda: np.zeros(4, dtype=np.int64))
        self.received = defaultdict(lambda: np.zeros(4, dtype=np.int64))

    @staticmethod
    def _row(msg: Message) -> np.ndarray:
        return np.array([1, msg.payload_bytes, msg.metadata_bytes, msg.baseline_bytes], dtype=np.int64)

    def record_send(self, epoch: int, msg: Message) -> None:
        with self._lock:
            self.sent[(epoch, msg.source, msg.dest, msg.kind)] += self._row(msg)

    def record_receive(self, epoch: int, msg: Message) -> None:
        with self._lock:
            self.received[(epoch, msg.source, msg.dest, msg.kind)] += self._row(msg)

    def totals(self, epoch=None, kinds=None, worker=None, direction: str = "sent") -> dict:
        table = self.sent if direction == "sent" else self.received
        acc = np.zeros(4, dtype=np.int64)
        for (ep, src, dst, kind), row in table.items():
            if epoch is not None and ep != epoch:
                continue
            if kinds is not None and kind not in kinds:
                continue
            if worker is not None and (src if direction == "sent" else dst) != worker:
                continue
            acc += row
        return dict(zip(_FIELDS, acc.tolist()))

    def epoch_summary(self, epoch: int) -> dict:
        fwd = self.totals(epoch, kinds=(Kind.SUPER_NODES, Kind.RAW_HALO))
        grad = self.totals(epoch, kinds=(Kind.GRAD_HALO,))
        param = self.totals(epoch, kinds=(Kind.PARAM_SYNC,))
        return {
            "payload_bytes": fwd["payload"],
            "metadata_bytes": fwd["metadata"],
            "baseline_bytes": fwd["baseline"],
            "grad_bytes": grad["payload"] + grad["metadata"],
            "param_bytes": param["payload"] + param["metadata"],
        }

    def is_conserved(self) -> bool:
        keys = set(self.sent) | set(self.received)
        return all(np.array_equal(self.sent.get(k, np.zeros(4)), self.received.get(k, np.zeros(4)))
                   for k in keys)


def _sort_key(msg: Message):
    return (msg.source, msg.dest, _KIND_ORDER[msg.kind], msg.layer)


def exchange(messages, num_workers: int, ledger: CommLedger, epoch: int = 0,
             mode: str = "serial", pool: Optional[ThreadPoolExecutor] = None) -> dict:
    """Deliver every message exactly once; returns ``{dest: [messages]}``.

    Inboxes are always returned in (source, kind, layer) order so receivers
    process them identically in both modes.
    """
    messages = list(messages)
    for msg in messages:
        if not 0 <= msg.dest < num_workers or msg.dest == msg.source:
            raise RoutingError(f"cannot route message from {msg.source} to {msg.dest}")
    inbox = {k: [] for k in range(num_workers)}
    if mode == "serial":
        for msg in sorted(messages, key=_sort_key):
            ledger.record_send(epoch, msg)
            inbox[msg.dest].append(msg)
            ledger.record_receive(epoch, msg)
        return inbox
    if mode != "concurrent":
        raise ValueError(f"unknown exchange mode {mode!r}")
    lock = threading.Lock()
    by_source = defaultdict(list)
    for msg in messages:
        by_source[msg.source].append(msg)

    def post(src):
        for msg in by_source[src]:
            ledger.record_send(epoch, msg)
            with lock:
                inbox[msg.dest].append(msg)

    own_pool = pool is None
    pool = pool or ThreadPoolExecutor(max_workers=max(1, num_workers))
    try:
        list(pool.map(post, list(by_source)))
    finally:
        if own_pool:
            pool.shutdown()
    for dest, box in inbox.items():
        box.sort(key=_sort_key)
        for msg in box:
            ledger.record_receive(epoch, msg)
    return inbox


class Worker:
    """One logical worker: local nodes, a model replica and its compression state."""

    def __init__(self, k: int, graph: Graph, part, model, cfg: ExperimentConfig):
        self.k = k
        self.cfg = cfg
        self.view = LocalView.for_worker(graph, part, k)
        local = self.view.local_ids
        self.x = np.array(graph.features[local])
        self.labels = graph.labels[local]
        self.degrees = graph.degrees[local].astype(np.float64)
        self.model = model
        self.sgd = SgdState(cfg.lr, cfg.momentum)
        self.acc = ErrorAccumulator(enabled=cfg.feedback)
        self.num_workers = part.num_workers
        self.send_ids, self.send_pos, self.halo_from = {}, {}, {}
        for j in range(part.num_workers):
            if j == k:
                continue
            ids = part.send_list(k, j)
            if len(ids):
                self.send_ids[j] = ids
                self.send_pos[j] = np.searchsorted(local, ids)
            pos = np.flatnonzero(part.halo_owner[k] == j)
            if len(pos):
                self.halo_from[j] = pos
        dims = [graph.feature_dim] + [layer.out_dim for layer in model.layers[:-1]]
        rng = np.random.default_rng([cfg.seed, 7919, k])
        self.attn = [cfg.attn_init * rng.standard_normal(d) for d in dims]
        self.attn_grad = [np.zeros(d) for d in dims]
        self.delta = DeltaLog()
        self.last_labels = {}  # (layer, dest) -> labels of the previous message, for warm starts
        self._reset_iteration()

    def _reset_iteration(self):
        self.h = [self.x]
        self.halo = []
        self.caches = []
        self.groups = {}
        self.upstream = None
        self.grad_halo = None
        self.param_grads = {}
        self.loss = 0.0

    # forward ---------------------------------------------------------------

    def outgoing(self, layer: int) -> list:
        cfg = self.cfg
        h = self.h[layer]
        out = []
        for j, ids in self.send_ids.items():
            rows = h[self.send_pos[j]]
            if cfg.phi == "none":
                self.delta.add(rows, np.zeros_like(rows))
                out.append(Message(Kind.RAW_HALO, self.k, j, layer, node_ids=ids, vectors=rows.copy()))
                continue
            h_hat = self.acc.compensate_rows(ids, layer, rows, stream=j)
            m = num_groups(len(ids), cfg.ratio)
            labels = group_nodes(ids, h_hat, m, cfg.grouping, grouping_rng(cfg.seed, self.k, j, layer),
                                 init_labels=self.last_labels.get((layer, j)))
            self.last_labels[(layer, j)] = labels
            a = self.attn[layer] if cfg.phi == "attention" else None
            s, w = condense_groups(h_hat, labels, m, cfg.phi, self.degrees[self.send_pos[j]], a)
            h_tilde = s[labels]
            self.acc.record_rows(ids, layer, h_hat, h_tilde, stream=j)
            self.delta.add(rows, rows - h_tilde)
            if cfg.phi == "attention" and cfg.aux_lr > 0:
                self.attn_grad[layer] += attention_grad_groups(h_hat, labels, s, w)
            self.groups[(layer, j)] = (labels, w, m)
            order = np.argsort(labels, kind="stable")
            members = np.split(ids[order], np.cumsum(np.bincount(labels, minlength=m))[:-1])
            batch = SuperNodeBatch(layer, self.k, j, members, s)
            out.append(Message(Kind.SUPER_NODES, self.k, j, layer, batch=batch))
        return out

    def receive_forward(self, layer: int, msgs: list) -> None:
        dim = self.h[layer].shape[1]
        halo = np.zeros((self.view.num_halo, dim))
        filled = np.zeros(self.view.num_halo, dtype=bool)
        for msg in msgs:
            expected = self.view.halo_ids[self.halo_from.get(msg.source, np.empty(0, dtype=np.int64))]
            if msg.kind is Kind.SUPER_NODES:
                ids, rows = reconstruct(msg.batch, expected_ids=expected)
            elif msg.kind is Kind.RAW_HALO:
                ids, rows = msg.node_ids, msg.vectors
                if len(np.setdiff1d(ids, expected)):
                    raise ContractError(f"worker {self.k} got unexpected halo rows from {msg.source}")
            else:
                raise ContractError(f"unexpected {msg.kind.value} message in forward phase")
            pos = np.searchsorted(self.view.halo_ids, ids)
            halo[pos] = rows
            filled[pos] = True
        if not filled.all():
            raise AggregationError(int(self.view.halo_ids[np.flatnonzero(~filled)[0]]))
        self.halo.append(halo)

    def forward_layer(self, layer: int) -> None:
        last = layer == self.model.num_layers - 1
        out, cache = sage_forward(self.model.layers[layer], self.h[layer], self.halo[layer], self.view, not last)
        self.caches.append(cache)
        self.h.append(out)

    def compute_loss(self, train_mask_global: np.ndarray, normalizer: int) -> None:
        mask = train_mask_global[self.view.local_ids]
        self.loss, self.upstream = cross_entropy(self.h[-1], self.labels, mask, normalizer)

    # backward --------------------------------------------------------------

    def backward_layer(self, layer: int) -> None:
        grads, grad_local, grad_halo = sage_backward(self.caches[layer], self.upstream)
        for name, val in grads.items():
            self.param_grads[f"{layer}.{name}"] = val
        self.upstream = grad_local
        self.grad_halo = grad_halo

    def grad_messages(self, layer: int) -> list:
        return [Message(Kind.GRAD_HALO, self.k, j, layer,
                        node_ids=self.view.halo_ids[pos], vectors=self.grad_halo[pos])
                for j, pos in self.halo_from.items()]

    def receive_grads(self, layer: int, msgs: list) -> None:
        """Route gradients of reconstructed rows back onto this worker's features."""
        grad = self.upstream
        for msg in msgs:
            ids = self.send_ids.get(msg.source)
            if ids is None or not np.array_equal(ids, msg.node_ids):
                raise ContractError(f"gradient rows from {msg.source} do not match what was sent")
            g = msg.vectors
            if self.cfg.phi != "none":
                labels, w, m = self.groups[(layer, msg.source)]
                gsum = np.zeros((m, g.shape[1]))
                np.add.at(gsum, labels, g)
                g = w[:, None] * gsum[labels]
            np.add.at(grad, self.send_pos[msg.source], g)

    # update ----------------------------------------------------------------

    def param_messages(self) -> list:
        return [Message(Kind.PARAM_SYNC, self.k, j, shards=self.param_grads)
                for j in range(self.num_workers) if j != self.k]

    def apply_update(self, msgs: list) -> None:
        contributions = {self.k: self.param_grads}
        for msg in msgs:
            contributions[msg.source] = msg.shards
        order = sorted(contributions)
        total = {name: g.copy() for name, g in contributions[order[0]].items()}
        for src in order[1:]:
            for name, g in contributions[src].items():
                total[name] += g
        params = sgd_step(self.model.params(), total, self.sgd)
        self.model = self.model.with_params(params)
        if self.cfg.phi == "attention" and self.cfg.aux_lr > 0:
            for layer, g in enumerate(self.attn_grad):
                self.attn[layer] = self.attn[layer] - self.cfg.aux_lr * g
                self.attn_grad[layer] = np.zeros_like(g)


@dataclass
class RunReport:
    config: dict
    loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    payload_bytes: list = field(default_factory=list)
    metadata_bytes: list = field(default_factory=list)
    baseline_bytes: list = field(default_factory=list)
    grad_bytes: list = field(default_factory=list)
    delta_emp: list = field(default_factory=list)
    max_residual_norm: list = field(default_factory=list)
    accumulator_elements: int = 0
    feature_elements: int = 0
    ledger: Optional[CommLedger] = field(default=None, repr=False, compare=False)

    @property
    def epochs(self) -> int:
        return len(self.loss)

    @property
    def final_test_acc(self) -> float:
        return self.test_acc[-1]

    @property
    def bytes_ratio(self) -> Optional[float]:
        base = sum(self.baseline_bytes)
        return sum(self.payload_bytes) / base if base else None

    def to_dict(self) -> dict:
        d = {"config": self.config}
        for col in CSV_COLUMNS[1:]:
            d[col] = [None if (isinstance(v, float) and not math.isfinite(v)) else v
                      for v in getattr(self, col)]
        d["accumulator_elements"] = self.accumulator_elements
        d["feature_elements"] = self.feature_elements
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "RunReport":
        with open(path) as fh:
            d = json.load(fh)
        return cls(**{k: v for k, v in d.items()})

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for e in range(self.epochs):
                row = [e + 1]
                for col in CSV_COLUMNS[1:]:
                    v = getattr(self, col)[e]
                    row.append("" if v is None else repr(v) if isinstance(v, float) else v)
                writer.writerow(row)


def _batch_masks(g: Graph, batches: int, seed: int) -> list:
    train = np.flatnonzero(g.train_mask)
    if batches == 1:
        return [g.train_mask]
    perm = np.random.default_rng([seed, 104729]).permutation(train)
    masks = []
    for chunk in np.array_split(perm, batches):
        m = np.zeros(g.num_nodes, dtype=bool)
        m[chunk] = True
        masks.append(m)
    return masks


def _record_accuracy(report: RunReport, logits: np.ndarray, g: Graph) -> None:
    report.train_acc.append(accuracy(logits, g.labels, g.train_mask))
    report.val_acc.append(accuracy(logits, g.labels, g.val_mask))
    report.test_acc.append(accuracy(logits, g.labels, g.test_mask))


def _replica_gap(workers) -> float:
    ref = workers[0].model.params()
    gap = 0.0
    for w in workers[1:]:
        for name, p in w.model.params().items():
            gap = max(gap, float(np.max(np.abs(p - ref[name]))))
    return gap


def run_training(config: ExperimentConfig, graph: Optional[Graph] = None,
                 mode: Optional[str] = None) -> RunReport:
    """Train with K simulated workers and condensed boundary exchange."""
    validate_config(config)
    mode = mode or config.mode
    g = graph if graph is not None else build_graph(config)
    part = partition_graph(g, config.workers, config.partition, config.partition_seed)
    model = init_model(g.feature_dim, config.hidden, g.num_classes, config.layers, config.seed)
    workers = [Worker(k, g, part, model, config) for k in range(config.workers)]
    ledger = CommLedger()
    # storage of every exchanged representation: node inputs of each layer
    stored = g.num_nodes * (g.feature_dim + config.hidden * (config.layers - 1))
    report = RunReport(config.to_dict(), ledger=ledger, feature_elements=stored)
    batch_masks = _batch_masks(g, config.batches, config.seed)
    L = model.num_layers
    K = config.workers
    pool = ThreadPoolExecutor(max_workers=K) if mode == "concurrent" else None

    def phase(fn):
        if pool is None:
            return [fn(w) for w in workers]
        return list(pool.map(fn, workers))

    def send(fn, epoch):
        msgs = [m for batch in phase(fn) for m in batch]
        return exchange(msgs, K, ledger, epoch, mode, pool)

    try:
        for epoch in range(config.epochs):
            for w in workers:
                w.delta = DeltaLog()
            losses = []
            for bmask in batch_masks:
                normalizer = int(bmask.sum())
                phase(lambda w: w._reset_iteration())
                for layer in range(L):
                    inbox = send(lambda w: w.outgoing(layer), epoch)
                    phase(lambda w: (w.receive_forward(layer, inbox[w.k]), w.forward_layer(layer)))
                phase(lambda w: w.compute_loss(bmask, normalizer))
                losses.append(sum(w.loss for w in workers))
                for layer in reversed(range(L)):
                    phase(lambda w: w.backward_layer(layer))
                    if layer >= 1 and K > 1:
                        inbox = send(lambda w: w.grad_messages(layer), epoch)
                        phase(lambda w: w.receive_grads(layer, inbox[w.k]))
                inbox = send(lambda w: w.param_messages(), epoch)
                phase(lambda w: w.apply_update(inbox[w.k]))
                gap = _replica_gap(workers)
                if gap > REPLICA_TOLERANCE:
                    raise ConsistencyError(f"replicas diverged by {gap:.3e} in epoch {epoch}")

            logits = np.zeros((g.num_nodes, g.num_classes))
            for w in workers:
                logits[w.view.local_ids] = w.h[-1]
            report.loss.append(float(np.mean(losses)) if len(losses) > 1 else losses[0])
            _record_accuracy(report, logits, g)
            summary = ledger.epoch_summary(epoch)
            for key in ("payload_bytes", "metadata_bytes", "baseline_bytes", "grad_bytes"):
                getattr(report, key).append(summary[key])
            delta = DeltaLog()
            for w in workers:
                delta.merge(w.delta)
            report.delta_emp.append(delta.value)
            report.max_residual_norm.append(max(w.acc.max_norm() for w in workers))
    finally:
        if pool is not None:
            pool.shutdown()
    report.accumulator_elements = sum(w.acc.num_elements() for w in workers)
    return report


def train_monolithic(config: ExperimentConfig, graph: Optional[Graph] = None) -> RunReport:
    """Single-process full-graph trainer; the reference for lossless runs."""
    validate_config(config)
    g = graph if graph is not None else build_graph(config)
    view = LocalView.full(g)
    model = init_model(g.feature_dim, config.hidden, g.num_classes, config.layers, config.seed)
    state = SgdState(config.lr, config.momentum)
    report = RunReport(config.to_dict(), feature_elements=g.features.size)
    x = np.array(g.features)
    for epoch in range(config.epochs):
        losses = []
        for bmask in _batch_masks(g, config.batches, config.seed):
            logits, caches = forward_full(model, view, x)
            loss, grad = cross_entropy(logits, g.labels, bmask, int(bmask.sum()))
            losses.append(loss)
            grads = backward_full(model, caches, grad)
            model = model.with_params(sgd_step(model.params(), grads, state))
        report.loss.append(float(np.mean(losses)) if len(losses) > 1 else losses[0])
        _record_accuracy(report, logits, g)
        for key in ("payload_bytes", "metadata_bytes", "baseline_bytes", "grad_bytes"):
            getattr(report, key).append(0)
        report.delta_emp.append(None)
        report.max_residual_norm.append(0.0)
    return report


def _identity(report: RunReport) -> dict:
    cfg = ExperimentConfig(**{k: (tuple(v) if k == "sweep_ratios" else v) for k, v in report.config.items()})
    return cfg.graph_identity()


def compare_runs(a: RunReport, b: RunReport) -> dict:
    """Differences of ``b`` relative to ``a`` (accuracy in fraction, bytes relative)."""
    if _identity(a) != _identity(b):
        raise ComparabilityError("reports come from different graphs or seeds")
    pay_a, pay_b = sum(a.payload_bytes), sum(b.payload_bytes)
    da = a.delta_emp[-1] if a.delta_emp else None
    db = b.delta_emp[-1] if b.delta_emp else None
    return {
        "delta_test_acc": b.final_test_acc - a.final_test_acc,
        "delta_val_acc": b.val_acc[-1] - a.val_acc[-1],
        "delta_payload_bytes": pay_b - pay_a,
        "delta_payload_rel": (pay_b - pay_a) / pay_a if pay_a else None,
        "delta_grad_bytes": sum(b.grad_bytes) - sum(a.grad_bytes),
        "delta_delta_emp": db - da if da is not None and db is not None else None,
    }
