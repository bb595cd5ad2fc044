"""Build a clustered graph, split it across workers and look at what must cross the wire."""

import numpy as np

from halocondense.graph import generate_sbm, partition_graph

g = generate_sbm(num_nodes=400, num_classes=4, p_in=0.1, p_out=0.01, feature_dim=16, feature_noise=1.0, seed=0)
print(f"{g.num_nodes} nodes, {g.num_edges // 2} undirected edges, mean degree {g.degrees.mean():.1f}")

src = g.edge_sources()
print(f"fraction of edges inside a class: {np.mean(g.labels[src] == g.labels[g.csr_targets]):.3f}")

# Hash partitioning ignores structure; bfs-greedy grows compact regions.
for method in ("hash", "bfs-greedy"):
    part = partition_graph(g, 4, method, seed=0)
    boundary = sum(len(b) for b in part.boundary_nodes)
    halo = sum(len(h) for h in part.halo_nodes)
    print(f"\n{method}: edge cut {part.edge_cut(g)}, boundary nodes {boundary}, halo rows needed {halo}")
    for k in range(part.num_workers):
        sends = {j: len(part.send_list(k, j)) for j in range(part.num_workers) if j != k}
        print(f"  worker {k}: {len(part.local_nodes[k])} local, sends {sends}")
