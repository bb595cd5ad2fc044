"""Command line entry point: single runs, ratio sweeps, ablations and data generation.

Every subcommand reads a flat ``key = value`` config file. Exit status is 0 on
success, 2 for configuration problems and 3 for failures during a run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional

from .config import ExperimentConfig, build_graph, dump_config, load_config
from .errors import ConfigError
from .graph import write_edge_list
from .runtime import RunReport, run_training

log = logging.getLogger("halocondense")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SWEEP_COLUMNS = ("r", "phi", "final_test_acc", "bytes_ratio")
ABLATION_COLUMNS = ("feedback", "phi", "final_test_acc", "payload_bytes", "baseline_bytes", "bytes_ratio")
ABLATION_PHIS = ("none", "mean", "weighted", "attention")


class RunFailure(RuntimeError):
    """A sub-run of a sweep or ablation failed; the message names it."""


def _fmt(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def _write_table(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def run_single(cfg: ExperimentConfig, out: Path, graph=None, mode: Optional[str] = None) -> RunReport:
    """Train once and write ``report.json``, ``metrics.csv`` and the echoed config."""
    out.mkdir(parents=True, exist_ok=True)
    report = run_training(cfg, graph, mode)
    report.to_json(out / "report.json")
    report.to_csv(out / "metrics.csv")
    (out / "config.txt").write_text(dump_config(cfg))
    return report


def _sweep_config(base: ExperimentConfig, r) -> ExperimentConfig:
    if r == "none":
        return base.replace(phi="none", r=None)
    phi = base.phi if base.phi != "none" else "mean"
    return base.replace(phi=phi, r=float(r))


def run_sweep(base: ExperimentConfig, out: Path, ratios=None, mode: Optional[str] = None) -> list:
    """One run per ratio on a shared graph and seed; ``"none"`` means uncompressed."""
    ratios = list(base.sweep_ratios if ratios is None else ratios)
    if not ratios:
        raise ConfigError("sweep_ratios", "sweep needs at least one ratio")
    graph = build_graph(base)
    rows = []
    for r in ratios:
        cfg = _sweep_config(base, r)
        name = "r_none" if r == "none" else f"r_{float(r):g}"
        try:
            rep = run_single(cfg, out / name, graph, mode)
        except (ConfigError, KeyboardInterrupt):
            raise
        except Exception as exc:
            raise RunFailure(f"sweep run r={r}: {exc}") from exc
        log.info("r=%s acc=%.4f bytes_ratio=%s", r, rep.final_test_acc, rep.bytes_ratio)
        rows.append({"r": None if r == "none" else float(r), "phi": cfg.phi,
                     "final_test_acc": rep.final_test_acc, "bytes_ratio": rep.bytes_ratio})
    _write_table(out / "sweep.csv", SWEEP_COLUMNS, rows)
    return rows


def run_ablation(base: ExperimentConfig, out: Path, mode: Optional[str] = None) -> list:
    """Feedback on/off crossed with every condenser at the base ratio."""
    r = base.ratio if base.ratio is not None else 0.5
    graph = build_graph(base)
    rows = []
    for feedback in (True, False):
        for phi in ABLATION_PHIS:
            cfg = base.replace(phi=phi, feedback=feedback, r=None if phi == "none" else r)
            name = f"{phi}_{'ef' if feedback else 'noef'}"
            try:
                rep = run_single(cfg, out / name, graph, mode)
            except (ConfigError, KeyboardInterrupt):
                raise
            except Exception as exc:
                raise RunFailure(f"ablation run {name}: {exc}") from exc
            rows.append({"feedback": feedback, "phi": phi, "final_test_acc": rep.final_test_acc,
                         "payload_bytes": sum(rep.payload_bytes), "baseline_bytes": sum(rep.baseline_bytes),
                         "bytes_ratio": rep.bytes_ratio})
    _write_table(out / "ablation.csv", ABLATION_COLUMNS, rows)
    return rows


def gen_data(cfg: ExperimentConfig, out: Path) -> dict:
    if cfg.graph != "sbm":
        raise ConfigError("graph", "gen-data needs graph = sbm")
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.txt" for name in ("edges", "features", "labels", "masks")}
    write_edge_list(build_graph(cfg), paths["edges"], paths["features"], paths["labels"], paths["masks"])
    return paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halocondense", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "train once"), ("sweep", "sweep the compression ratio"),
                            ("ablate", "feedback x condenser ablation"),
                            ("gen-data", "write an SBM graph as edge-list files"),
                            ("validate-config", "check a config file and print it normalized")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", choices=("serial", "concurrent"), default=None)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.mode is not None:
            cfg = cfg.replace(mode=args.mode)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(cfg.out_dir)
    try:
        if args.command == "validate-config":
            sys.stdout.write(dump_config(cfg))
        elif args.command == "run":
            rep = run_single(cfg, out)
            print(f"final test acc {rep.final_test_acc:.4f}  bytes ratio {rep.bytes_ratio}  -> {out}")
        elif args.command == "sweep":
            for row in run_sweep(cfg, out):
                print(f"r={row['r']}  acc={row['final_test_acc']:.4f}  bytes_ratio={row['bytes_ratio']}")
        elif args.command == "ablate":
            for row in run_ablation(cfg, out):
                print(f"feedback={row['feedback']!s:5}  phi={row['phi']:9}  acc={row['final_test_acc']:.4f}")
        elif args.command == "gen-data":
            for name, path in gen_data(cfg, out).items():
                print(f"{name}: {path}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
