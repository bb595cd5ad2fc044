"""Experiment configuration as a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored. Keys map 1:1 onto
:class:`ExperimentConfig` fields; unset optional keys are simply omitted.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .graph import Graph, generate_sbm, load_edge_list

PHI_CHOICES = ("none", "mean", "weighted", "attention")
DEFAULT_RATIO = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    # graph source
    graph: str = "sbm"
    sbm_nodes: int = 400
    sbm_classes: int = 4
    sbm_p_in: float = 0.1
    sbm_p_out: float = 0.01
    feature_dim: int = 16
    feature_noise: float = 1.0
    graph_seed: int = 0
    edges_path: Optional[str] = None
    features_path: Optional[str] = None
    labels_path: Optional[str] = None
    masks_path: Optional[str] = None
    # distribution
    workers: int = 4
    partition: str = "hash"
    partition_seed: int = 0
    # model
    layers: int = 2
    hidden: int = 32
    # compression
    phi: str = "mean"
    r: Optional[float] = None
    feedback: bool = True
    grouping: str = "kmeans"
    aux_lr: float = 1e-3
    attn_init: float = 0.1
    # optimization
    epochs: int = 100
    lr: float = 0.5
    momentum: float = 0.9
    batches: int = 1
    seed: int = 0
    mode: str = "serial"
    # sweeps
    sweep_ratios: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    out_dir: str = "runs"

    @property
    def ratio(self) -> Optional[float]:
        """Compression ratio in effect; ``None`` for uncompressed exchange."""
        if self.phi == "none":
            return None
        return DEFAULT_RATIO if self.r is None else self.r

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sweep_ratios"] = list(self.sweep_ratios)
        return d

    def graph_identity(self) -> dict:
        keys = ("graph", "sbm_nodes", "sbm_classes", "sbm_p_in", "sbm_p_out", "feature_dim",
                "feature_noise", "graph_seed", "edges_path", "features_path", "labels_path",
                "masks_path", "seed")
        return {k: getattr(self, k) for k in keys}


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_ratios(s: str) -> tuple:
    out = []
    for tok in s.split(","):
        tok = tok.strip()
        if not tok:
            continue
        out.append("none" if tok.lower() == "none" else float(tok))
    return tuple(out)


_PARSERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str,
    "Optional[str]": str,
    "Optional[float]": float,
    "tuple": _parse_ratios,
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(v if isinstance(v, str) else repr(float(v)) for v in value)
    return str(value)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value' in {source}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(key, "unknown configuration key")
        parser = _PARSERS[str(known[key].type)]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None
    cfg = ExperimentConfig(**values)
    validate_config(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def _need(cond: bool, field_name: str, message: str) -> None:
    if not cond:
        raise ConfigError(field_name, message)


def validate_config(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` naming the first offending field."""
    _need(cfg.graph in ("sbm", "files"), "graph", "must be 'sbm' or 'files'")
    if cfg.graph == "sbm":
        _need(cfg.sbm_nodes >= max(cfg.sbm_classes, 1), "sbm_nodes", "must be >= sbm_classes")
        _need(cfg.sbm_classes >= 1, "sbm_classes", "must be positive")
        _need(0 < cfg.sbm_p_in <= 1, "sbm_p_in", "must be in (0, 1]")
        _need(0 <= cfg.sbm_p_out < cfg.sbm_p_in, "sbm_p_out", "must be in [0, sbm_p_in)")
        _need(cfg.feature_dim >= 1, "feature_dim", "must be positive")
        _need(cfg.feature_noise >= 0, "feature_noise", "must be non-negative")
    else:
        for key in ("edges_path", "features_path", "labels_path"):
            _need(getattr(cfg, key) is not None, key, "required when graph = files")
    _need(cfg.workers >= 1, "workers", "must be positive")
    _need(cfg.partition in ("hash", "bfs-greedy"), "partition", "must be 'hash' or 'bfs-greedy'")
    _need(cfg.layers >= 1, "layers", "must be positive")
    _need(cfg.hidden >= 1, "hidden", "must be positive")
    _need(cfg.phi in PHI_CHOICES, "phi", f"must be one of {', '.join(PHI_CHOICES)}")
    if cfg.r is not None:
        _need(0 < cfg.r < 1, "r", f"must be in (0, 1), got {cfg.r}")
        _need(cfg.phi != "none", "r", "a compression ratio needs phi != none")
    _need(cfg.grouping in ("chunk", "kmeans"), "grouping", "must be 'chunk' or 'kmeans'")
    _need(cfg.aux_lr >= 0, "aux_lr", "must be non-negative")
    _need(cfg.attn_init >= 0, "attn_init", "must be non-negative")
    _need(cfg.epochs >= 1, "epochs", "must be positive")
    _need(cfg.lr > 0, "lr", "must be positive")
    _need(0 <= cfg.momentum < 1, "momentum", "must be in [0, 1)")
    _need(cfg.batches >= 1, "batches", "must be positive")
    _need(cfg.mode in ("serial", "concurrent"), "mode", "must be 'serial' or 'concurrent'")
    for r in cfg.sweep_ratios:
        _need(r == "none" or 0 < r < 1, "sweep_ratios", f"entries must be in (0, 1) or 'none', got {r}")


def build_graph(cfg: ExperimentConfig) -> Graph:
    if cfg.graph == "sbm":
        return generate_sbm(cfg.sbm_nodes, cfg.sbm_classes, cfg.sbm_p_in, cfg.sbm_p_out,
                            cfg.feature_dim, cfg.feature_noise, cfg.graph_seed)
    return load_edge_list(cfg.edges_path, cfg.features_path, cfg.labels_path,
                          cfg.masks_path, seed=cfg.graph_seed)
