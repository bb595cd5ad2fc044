"""Why residuals are fed back, and why groups are rebuilt from compensated rows.

A node's residual E is what the receiver failed to see last time. Adding it to
the next transmission makes the running total of what was sent track the
running total of the true features.

If the groups never change, a mean over a fixed group cannot move: the added
residuals themselves average out inside the group, so E grows without bound.
Regrouping on h + E lets a node with a large residual split away from its
partners, which keeps E bounded.
"""

import numpy as np

from halocondense.condense import condense_groups, group_nodes, num_groups
from halocondense.feedback import ErrorAccumulator

rng = np.random.default_rng(1)
h = rng.normal(size=(24, 4))
ids = np.arange(24)
m = num_groups(24, 0.5)
fixed = group_nodes(ids, h, m, "kmeans", np.random.default_rng(0))

for name, regroup in (("fixed groups", False), ("regrouped", True)):
    acc = ErrorAccumulator()
    total = np.zeros_like(h)
    for t in range(1, 301):
        h_hat = acc.compensate_rows(ids, 0, h)
        labels = group_nodes(ids, h_hat, m, "kmeans", np.random.default_rng(0)) if regroup else fixed
        s, _ = condense_groups(h_hat, labels, m, "mean")
        acc.record_rows(ids, 0, h_hat, s[labels])
        total += s[labels]
        if t in (10, 100, 300):
            drift = np.abs(total / t - h).max()
            print(f"{name:13s} t={t:3d}  max ||E|| {acc.max_norm():8.2f}  time-averaged error {drift:.4f}")

print(f"largest input norm {np.linalg.norm(h, axis=1).max():.2f}")
