"""Distributed training without compression reproduces single-process training.

Four simulated workers exchange raw halo rows, return halo gradients and sum
parameter gradients before each step. The loss trace matches the monolithic
trainer to round-off, which is the reference point for everything that follows.
"""

import numpy as np

from halocondense import ExperimentConfig, run_training, train_monolithic
from halocondense.config import build_graph

cfg = ExperimentConfig(phi="none", workers=4, epochs=30)
g = build_graph(cfg)

dist = run_training(cfg, g)
mono = train_monolithic(cfg, g)

for epoch in (0, 9, 19, 29):
    print(f"epoch {epoch + 1:2d}  distributed {dist.loss[epoch]:.12f}  monolithic {mono.loss[epoch]:.12f}")
print(f"max gap {np.max(np.abs(np.array(dist.loss) - mono.loss)):.1e}")
print(f"test accuracy {dist.final_test_acc:.3f}")

# Per-epoch traffic: forward halo rows and backward halo gradients are counted separately.
print(f"forward payload per epoch {dist.payload_bytes[0]} B, gradient traffic {dist.grad_bytes[0]} B")
