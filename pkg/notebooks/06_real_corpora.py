"""
Working with the citation benchmarks
====================================

Point GRAPHMLP_DATA at a directory holding the raw Cora / Citeseer
(``*.content`` and ``*.cites``) or Pubmed-Diabetes (``*.tab``) files, one
subdirectory per corpus. This script converts each to the canonical format
with the 20-per-class / 500 / 1000 split and trains Graph-MLP once.
"""

# %%
import os
from pathlib import Path

from graphmlp import TrainConfig, train
from graphmlp.ingest import DATASETS, load_dataset, make_planetoid_splits, save_canonical, validate_counts
from graphmlp.tensor import Rng

root = os.environ.get("GRAPHMLP_DATA")
if not root:
    print("GRAPHMLP_DATA is not set; nothing to do")
    raise SystemExit(0)

# %%
for name in ("cora", "citeseer", "pubmed"):
    src = Path(root) / name
    if not src.is_dir():
        print(f"{name}: {src} missing, skipped")
        continue
    g = load_dataset(src, name)
    validate_counts(g, DATASETS[name])
    if g.splits is None:
        g = g.with_splits(make_planetoid_splits(g, rng=Rng(0)))
        save_canonical(g, Path(root) / f"{name}-canonical")
    res = train(g, TrainConfig(weight_decay=5e-3, alpha=10.0, row_normalize=True), "graphmlp")
    print(f"{name}: n={g.n} d={g.d} edges={len(g.edges)}  test {res.test_acc_at_best:.3f}")
