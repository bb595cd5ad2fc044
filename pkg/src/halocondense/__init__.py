"""Data-parallel GraphSAGE training with condensed boundary-node exchange."""

from .config import ExperimentConfig, load_config, parse_config
from .graph import Graph, Partition, generate_sbm, load_edge_list, partition_graph
from .runtime import RunReport, compare_runs, run_training, train_monolithic

__all__ = [
    "ExperimentConfig", "Graph", "Partition", "RunReport", "compare_runs", "generate_sbm",
    "load_config", "load_edge_list", "parse_config", "partition_graph", "run_training", "train_monolithic",
]
