"""
Inference cost with and without message passing
===============================================

Graph-MLP needs only the test nodes' features; GCN must propagate over the
whole graph. As the graph grows with a fixed test set, only GCN slows down.
"""

# %%
from graphmlp.experiments import time_inference
from graphmlp.graph import build_adjacency, normalize_adjacency
from graphmlp.nn import GcnModel, GraphMlpModel, init_params
from graphmlp.synthetic import citation_graph
from graphmlp.tensor import Rng

# %%
for n in (1000, 4000, 16000):
    g = citation_graph(n=n, num_classes=3, d=300, avg_degree=5, seed=0, splits=(20, 100, 500))
    mlp, gcn = GraphMlpModel(g.d, 256, 3), GcnModel(g.d, 256, 3)
    init_params(mlp, Rng(0))
    init_params(gcn, Rng(0))
    a_hat = normalize_adjacency(build_adjacency(g))
    t_mlp = time_inference(mlp, g, reps=20)
    t_gcn = time_inference(gcn, g, a_hat, reps=20)
    print(f"n={n:6d}  graphmlp {1e3 * t_mlp:7.3f} ms   gcn {1e3 * t_gcn:8.3f} ms   ratio {t_gcn / t_mlp:5.1f}")
