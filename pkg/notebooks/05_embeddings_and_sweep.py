"""
Embedding export and a small hyperparameter sweep
=================================================

Export the contrastive embeddings Z for external projection tools, then rank
a handful of configurations on validation accuracy.
"""

# %%
import tempfile
from pathlib import Path

from graphmlp import TrainConfig, train
from graphmlp.experiments import SweepGrid, export_embeddings, run_sweep
from graphmlp.synthetic import citation_graph

g = citation_graph(n=300, num_classes=3, d=80, seed=4, splits=(10, 60, 120))
base = TrainConfig(iterations=60, hidden=16, batch_size=150)
res = train(g, base.replace(alpha=10.0), "graphmlp")

out = Path(tempfile.mkdtemp()) / "z.tsv"
export_embeddings(res.model, g, out)
lines = out.read_text().splitlines()
print(len(lines) - 1, "rows;", lines[0][:40], "...")

# %%
# The reduced grid varies weight decay, temperature, r and alpha.
grid = SweepGrid(lr=[0.01], weight_decay=[5e-4], batch_size=[150], tau=[0.5, 2.0], r=[2, 3], alpha=[0.0, 10.0])
sweep = run_sweep(g, grid, n_seeds=2, base=base)
for row in sweep["ranked"]:
    c = row["config"]
    print(f"alpha {c['alpha']:>5} tau {c['tau']} r {c['r']}  val {row['val_mean']:.3f}")
print("test accuracy of the winner:", sweep["best_test"]["mean"])
print("full grid size:", len(SweepGrid()))
