"""
The neighboring contrastive loss
================================

How connection strengths from the adjacency power become positive weights,
and how the loss responds when embeddings agree with the graph.
"""

# %%
import numpy as np

from graphmlp.graph import Graph, build_adjacency, dense, extract_submatrix, normalize_adjacency, sparse_power
from graphmlp.loss import cosine_sim_matrix, ncontrast_loss

# A path 0 - 1 - 2 - 3 plus an isolated node 4.
g = Graph(np.zeros((5, 1)), [-1] * 5, [[0, 1], [1, 2], [2, 3]], 1)
a_hat = normalize_adjacency(build_adjacency(g))
np.set_printoptions(precision=3, suppress=True)
print("normalized adjacency\n", dense(a_hat))

# %%
# With r = 2 node 0 also reaches node 2; node 4 has no neighbor at all and
# is skipped by the loss (it contributes no term and no gradient).
gamma = dense(sparse_power(a_hat, 2))
print("r = 2 strengths\n", gamma)

# %%
# Embeddings that follow the path give a lower loss than random ones.
rng = np.random.default_rng(0)
aligned = np.array([[1.0, 0.0], [0.9, 0.3], [0.3, 0.9], [0.0, 1.0], [-1.0, -0.2]])
scrambled = rng.normal(size=(5, 2))
for name, z in (("aligned", aligned), ("random", scrambled)):
    res = ncontrast_loss(z, gamma, tau=0.5)
    print(f"{name:8s} loss {res.loss:.3f}  skipped {res.skipped}")
print("cosine similarities of the aligned batch\n", cosine_sim_matrix(aligned))

# %%
# During training only the batch rows and columns are used.
ids = np.array([3, 0, 2])
print("batch sub-matrix for ids", ids, "\n", extract_submatrix(sparse_power(a_hat, 2), ids))

# %%
# Lower temperatures sharpen the softmax over similarities.
for tau in (0.5, 1.0, 2.0):
    print(f"tau {tau}: loss {ncontrast_loss(aligned, gamma, tau).loss:.3f}")
