"""Accuracy tables, inference timing, corruption robustness, embedding export and sweeps."""

from __future__ import annotations

import csv
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import Graph, build_adjacency, corrupt_adjacency, normalize_adjacency, sparse_power
from .nn import GcnModel, build_model
from .tensor import Rng
from .train import TrainConfig, accuracy, node_features, predict, train

# settings of the efficiency comparison: shared lr / wd / width, Graph-MLP alpha=1, B=2000, r=2
TIMING_CONFIG = TrainConfig(lr=0.01, weight_decay=5e-4, hidden=256, alpha=1.0, batch_size=2000, r=2)


def _mean_std(values) -> dict:
    a = np.asarray(values, dtype=float)
    return {"mean": float(a.mean()), "std": float(a.std()), "runs": a.tolist()}


def run_accuracy_table(graphs: dict[str, Graph], configs: dict[str, TrainConfig] | TrainConfig,
                       n_seeds: int = 10) -> dict:
    """Mean and std of test accuracy over seeds for Graph-MLP and the alpha=0 MLP.

    Seeds are ``config.seed + k`` for ``k < n_seeds``; each graph keeps its
    own fixed split.
    """
    table = {}
    for name, g in graphs.items():
        cfg = configs[name] if isinstance(configs, dict) else configs
        a_hat = normalize_adjacency(build_adjacency(g))
        gamma = sparse_power(a_hat, cfg.r) if cfg.alpha > 0 else None
        row = {}
        for kind in ("graphmlp", "mlp"):
            accs = []
            for k in range(n_seeds):
                res = train(g, cfg.replace(seed=cfg.seed + k), kind, a_hat=a_hat, gamma_matrix=gamma)
                accs.append(res.test_acc_at_best)
            row[kind] = _mean_std(accs)
        row["gap"] = row["graphmlp"]["mean"] - row["mlp"]["mean"]
        row["config"] = cfg.to_dict()
        table[name] = row
    return table


def time_inference(model, g: Graph, a_hat=None, reps: int = 100, features: np.ndarray | None = None) -> float:
    """Mean seconds of one eval-mode inference.

    Graph-MLP runs on the test-node features only; GCN needs every node and
    the normalized adjacency. Feature extraction, adjacency construction and
    model loading happen before the timed region.
    """
    x = g.features if features is None else features
    test = g.splits.test
    if isinstance(model, GcnModel):
        if a_hat is None:
            a_hat = normalize_adjacency(build_adjacency(g))

        def run():
            return predict(model, x, a_hat)[test]
    else:
        x_test = np.ascontiguousarray(x[test])

        def run():
            return predict(model, x_test)

    run()  # warm-up, untimed
    t0 = time.perf_counter()
    for _ in range(reps):
        run()
    return (time.perf_counter() - t0) / reps


def _curve(result) -> list[dict]:
    return [{"iteration": e["iter"], "wall_ms": e["elapsed_ms"], "val_acc": e["val_acc"]}
            for e in result.log if e["val_acc"] is not None]


def run_timing(g: Graph, config: TrainConfig = TIMING_CONFIG, reps: int = 100) -> dict:
    """Train Graph-MLP and GCN with the same settings; time inference and record curves."""
    x = node_features(g, config)
    a_hat = normalize_adjacency(build_adjacency(g))
    mlp_res = train(g, config, "graphmlp", a_hat=a_hat)
    gcn_res = train(g, config, "gcn", a_hat=a_hat)
    t_mlp = time_inference(mlp_res.model, g, reps=reps, features=x)
    t_gcn = time_inference(gcn_res.model, g, a_hat=a_hat, reps=reps, features=x)
    return {
        "graphmlp_infer_s": t_mlp,
        "gcn_infer_s": t_gcn,
        "speedup": t_gcn / t_mlp,
        "reps": reps,
        "graphmlp_test_acc": mlp_res.test_acc_at_best,
        "gcn_test_acc": gcn_res.test_acc_at_best,
        "curves": {"graphmlp": _curve(mlp_res), "gcn": _curve(gcn_res)},
        "measured_region": ("eval-mode forward only; Graph-MLP on test-node features, GCN on all "
                            "features with the normalized adjacency; training curves count "
                            "optimizer steps and batch sampling, not validation passes"),
    }


def write_curves_csv(curve: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["iteration", "wall_ms", "val_acc"], lineterminator="\n")
        w.writeheader()
        w.writerows(curve)


@dataclass
class CorruptionReport:
    delta: float
    model: str
    accuracies: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = self.mean
        return d


def corrupted_normalized_adjacency(g: Graph, delta: float, rng: Rng):
    """Corrupt the raw 0/1 adjacency, then renormalize it."""
    return normalize_adjacency(corrupt_adjacency(build_adjacency(g), delta, rng))


def evaluate_under_corruption(models: list, g: Graph, deltas, seed: int = 0,
                              features: np.ndarray | None = None) -> tuple[list[CorruptionReport], dict]:
    """Test accuracy of already-trained models on corrupted adjacencies.

    Model ``k`` is paired with corruption stream ``seed + k``. Graph-MLP
    models are evaluated without any adjacency, so their predictions are
    also returned to let callers check they never change.
    """
    x = g.features if features is None else features
    test = g.splits.test
    reports = {}
    predictions = {}
    for k, model in enumerate(models):
        rng = Rng(seed + k)
        for delta in deltas:
            kind = "gcn" if isinstance(model, GcnModel) else model.kind
            if isinstance(model, GcnModel):
                a_hat = corrupted_normalized_adjacency(g, delta, rng.spawn(int(round(delta * 1e6))))
                logits = predict(model, x, a_hat)
            else:
                logits = predict(model, x)
                predictions.setdefault(k, {})[delta] = np.argmax(logits[test], axis=1)
            rep = reports.setdefault((kind, delta), CorruptionReport(delta, kind))
            rep.accuracies.append(accuracy(logits, g.labels, test))
    return list(reports.values()), predictions


def run_corruption(g: Graph, config: TrainConfig, deltas=(0.01, 0.1), runs: int = 3) -> dict:
    """Train Graph-MLP and GCN ``runs`` times and test both under each corruption ratio.

    ``delta = 0`` is always included as the clean reference.
    """
    deltas = sorted({0.0, *deltas})
    a_hat = normalize_adjacency(build_adjacency(g))
    gamma = sparse_power(a_hat, config.r)
    x = node_features(g, config)
    models = {"graphmlp": [], "gcn": []}
    for k in range(runs):
        cfg = config.replace(seed=config.seed + k)
        models["graphmlp"].append(train(g, cfg, "graphmlp", a_hat=a_hat, gamma_matrix=gamma).model)
        models["gcn"].append(train(g, cfg, "gcn", a_hat=a_hat).model)
    reports = []
    invariant = True
    for kind in ("graphmlp", "gcn"):
        reps, preds = evaluate_under_corruption(models[kind], g, deltas, seed=config.seed, features=x)
        reports += reps
        for per_delta in preds.values():
            ref = per_delta[0.0]
            invariant &= all(np.array_equal(ref, p) for p in per_delta.values())
    return {
        "reports": [r.to_dict() for r in reports],
        "graphmlp_predictions_invariant": bool(invariant),
        "runs": runs,
    }


def export_embeddings(model, g: Graph, path, features: np.ndarray | None = None) -> None:
    """Write ``node<TAB>label<TAB>z_0 ... z_{h-1}`` for every node in node order.

    The first line is a header; each data row has ``h + 2`` columns.
    """
    x = g.features if features is None else features
    was_training = model.training
    model.eval()
    z, _ = model.forward(x)
    model.training = was_training
    h = z.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["node", "label"] + [f"z{j}" for j in range(h)]) + "\n")
        for i, (lab, row) in enumerate(zip(g.labels.tolist(), z.tolist())):
            fh.write("\t".join([str(i), str(lab)] + [repr(v) for v in row]) + "\n")


@dataclass
class SweepGrid:
    lr: list = field(default_factory=lambda: [0.001, 0.01, 0.05, 0.1])
    weight_decay: list = field(default_factory=lambda: [5e-4, 5e-3])
    batch_size: list = field(default_factory=lambda: [2000, 3000])
    tau: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    r: list = field(default_factory=lambda: [2, 3, 4])
    alpha: list = field(default_factory=lambda: [0.0, 1.0, 10.0, 100.0])

    def __post_init__(self):
        for name, values in asdict(self).items():
            if not values:
                raise ValueError(f"sweep axis {name!r} is empty")

    @classmethod
    def reduced(cls) -> "SweepGrid":
        """A 16-point grid around the commonly good region."""
        return cls(lr=[0.01], weight_decay=[5e-4, 5e-3], batch_size=[2000], tau=[1.0, 2.0],
                   r=[2, 3], alpha=[1.0, 10.0])

    def configs(self, base: TrainConfig) -> list[TrainConfig]:
        axes = asdict(self)
        keys = list(axes)
        return [base.replace(**dict(zip(keys, combo))) for combo in itertools.product(*axes.values())]

    def __len__(self) -> int:
        return int(np.prod([len(v) for v in asdict(self).values()]))


def _sweep_point(args):
    g, cfg, n_seeds = args
    vals, params = [], []
    for k in range(n_seeds):
        res = train(g, cfg.replace(seed=cfg.seed + k), "graphmlp", evaluate_test=False)
        vals.append(res.best_val_acc)
        params.append(res.best_params)
    return vals, params


def _pool_size(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("GRAPHMLP_THREADS", "1"))
    return max(1, workers)


def run_sweep(g: Graph, grid: SweepGrid, n_seeds: int = 1, base: TrainConfig | None = None,
              workers: int | None = None) -> dict:
    """Train every grid point, rank by mean validation accuracy, then test the winner.

    Test labels are read only once, after the ranking is final, for the
    best configuration's per-seed best-validation parameters.
    """
    base = base or TrainConfig()
    configs = grid.configs(base)
    jobs = [(g, cfg, n_seeds) for cfg in configs]
    pool = _pool_size(workers)
    if pool == 1:
        outputs = map(_sweep_point, jobs)
        results = _rank(configs, outputs)
    else:
        with ProcessPoolExecutor(max_workers=pool) as ex:
            results = _rank(configs, ex.map(_sweep_point, jobs))
    ranked, best_params = results

    best_cfg = TrainConfig(**ranked[0]["config"])
    x = node_features(g, best_cfg)
    tests = []
    for params in best_params:
        model = build_model("graphmlp", g.d, best_cfg.hidden, g.num_classes, best_cfg.dropout, best_cfg.bias)
        model.load_params(params)
        tests.append(accuracy(predict(model, x), g.labels, g.splits.test))
    return {
        "ranked": ranked,
        "best_config": ranked[0]["config"],
        "best_test": _mean_std(tests),
        "grid_size": len(configs),
        "n_seeds": n_seeds,
    }


def _rank(configs, outputs):
    rows, best_mean, best_params = [], -1.0, None
    for cfg, (vals, params) in zip(configs, outputs):
        mean = float(np.mean(vals))
        rows.append({"config": cfg.to_dict(), "val_mean": mean, "val_runs": vals})
        if mean > best_mean:
            best_mean, best_params = mean, params
    order = sorted(range(len(rows)), key=lambda i: (-rows[i]["val_mean"], i))
    return [rows[i] for i in order], best_params


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
