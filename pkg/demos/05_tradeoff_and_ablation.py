"""Sweep the compression ratio and ablate error feedback on a noisy clustered graph.

Writes per-run reports and combined tables under ``runs/demo``. Takes about a
minute on one core.
"""

from pathlib import Path

from halocondense.cli import run_ablation, run_sweep
from halocondense.config import ExperimentConfig

base = ExperimentConfig(sbm_nodes=800, sbm_p_in=0.15, sbm_p_out=0.01, feature_noise=3.0,
                        epochs=60, seed=0)
out = Path("runs/demo")

print("ratio sweep (shared graph and seed):")
rows = run_sweep(base, out / "sweep", ["none", 0.1, 0.3, 0.5, 0.6])
ref = rows[0]["final_test_acc"]
for row in rows:
    label = "none" if row["r"] is None else f"{row['r']:.1f}"
    print(f"  r={label:4s}  bytes ratio {row['bytes_ratio']:.3f}  accuracy {row['final_test_acc']:.3f}"
          f"  drop {100 * (ref - row['final_test_acc']):+.2f} pt")

print("\nfeedback x condenser at r=0.5:")
for row in run_ablation(base.replace(r=0.5), out / "ablation"):
    print(f"  feedback={'on ' if row['feedback'] else 'off'}  {row['phi']:9s}  accuracy {row['final_test_acc']:.3f}"
          f"  payload {row['payload_bytes']} B")
