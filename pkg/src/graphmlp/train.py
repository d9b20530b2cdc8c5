"""Batched Graph-MLP training, full-graph GCN training, and evaluation."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import UNLABELED, Graph, build_adjacency, extract_submatrix, normalize_adjacency, sparse_power
from .ingest import row_normalize
from .loss import combined_loss, softmax_cross_entropy
from .nn import GcnModel, build_model, init_params
from .optim import Adam, exempt_norm_and_bias
from .tensor import NonFiniteError, Rng

MODEL_KINDS = ("graphmlp", "gcn", "mlp")


@dataclass
class TrainConfig:
    batch_size: int = 2000
    alpha: float = 1.0
    tau: float = 1.0
    r: int = 2
    iterations: int = 400
    lr: float = 0.01
    weight_decay: float = 5e-4
    hidden: int = 256
    dropout: float = 0.6
    seed: int = 0
    eval_every: int = 1
    bias: bool = True
    decay_norm_and_bias: bool = True
    row_normalize: bool = False
    record_time: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.r < 1:
            raise ValueError("r must be at least 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainResult:
    kind: str
    config: TrainConfig
    best_params: dict
    best_val_acc: float
    best_iter: int
    test_acc_at_best: float | None
    log: list = field(default_factory=list)
    model: object = None

    def summary(self) -> dict:
        return {
            "model": self.kind,
            "best_val_acc": self.best_val_acc,
            "best_iter": self.best_iter,
            "test_acc_at_best": self.test_acc_at_best,
            "iterations": len(self.log),
            "config": self.config.to_dict(),
        }


def sample_batch(n: int, batch_size: int, rng: Rng) -> np.ndarray:
    """Distinct node ids drawn uniformly without replacement.

    When ``batch_size >= n`` every node is returned in index order.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    if batch_size >= n:
        return np.arange(n, dtype=np.int64)
    return np.asarray(rng.choice(n, batch_size), dtype=np.int64)


def node_features(g: Graph, config: TrainConfig) -> np.ndarray:
    return row_normalize(g.features) if config.row_normalize else g.features


def predict(model, x: np.ndarray, a_hat=None) -> np.ndarray:
    """Eval-mode logits for every row of ``x``.

    Graph-MLP models ignore ``a_hat`` entirely; GCN models require it.
    """
    was_training = model.training
    model.eval()
    try:
        if isinstance(model, GcnModel):
            if a_hat is None:
                raise ValueError("GCN inference needs a normalized adjacency")
            return model.forward(a_hat, x)
        return model.forward(x)[1]
    finally:
        model.training = was_training


def accuracy(logits: np.ndarray, labels: np.ndarray, idx) -> float:
    """Fraction of ``idx`` whose argmax (lowest index on ties) equals the label."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("accuracy over an empty index set")
    pred = np.argmax(logits[idx], axis=1)
    return float(np.mean(pred == labels[idx]))


def evaluate(model, g: Graph, split: str = "test", a_hat=None, features: np.ndarray | None = None) -> float:
    """Eval-mode forward on all node features, accuracy on ``split``."""
    x = g.features if features is None else features
    if isinstance(model, GcnModel) and a_hat is None:
        a_hat = normalize_adjacency(build_adjacency(g))
    return accuracy(predict(model, x, a_hat), g.labels, g.splits[split])


def _train_labels(g: Graph) -> np.ndarray:
    """Label vector with everything outside the train split hidden."""
    out = np.full(g.n, UNLABELED, dtype=np.int64)
    out[g.splits.train] = g.labels[g.splits.train]
    return out


def train(g: Graph, config: TrainConfig, model_kind: str = "graphmlp", *,
          evaluate_test: bool = True, a_hat=None, gamma_matrix=None) -> TrainResult:
    """Train one model and keep the parameters with the best validation accuracy.

    ``graphmlp`` samples a batch per iteration and adds the contrastive term
    computed from the r-th power of the normalized adjacency; ``mlp`` is the
    same loop with ``alpha`` forced to 0; ``gcn`` trains full-graph with
    cross-entropy only. Validation runs every ``eval_every`` iterations on
    an eval-mode forward over all nodes.

    ``a_hat`` / ``gamma_matrix`` may be passed to reuse precomputed
    matrices across runs on the same graph.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
    if g.splits is None or g.splits.train.size == 0:
        raise ValueError("training needs a nonempty train split")
    if g.splits.val.size == 0:
        raise ValueError("model selection needs a nonempty validation split")
    if model_kind == "mlp":
        config = config.replace(alpha=0.0)

    root = Rng(config.seed)
    init_rng, batch_rng, drop_rng = root.spawn(1), root.spawn(2), root.spawn(3)

    x = node_features(g, config)
    model = build_model(model_kind, g.d, config.hidden, g.num_classes, config.dropout, config.bias)
    init_params(model, init_rng)
    params = model.named_params()
    no_decay = set() if config.decay_norm_and_bias else exempt_norm_and_bias(params)
    opt = Adam(params, lr=config.lr, weight_decay=config.weight_decay, no_decay=no_decay)

    train_labels = _train_labels(g)
    is_train = train_labels != UNLABELED
    val_idx = g.splits.val
    val_labels = g.labels  # only indexed at val_idx

    if model_kind == "gcn" and a_hat is None:
        a_hat = normalize_adjacency(build_adjacency(g))
    if model_kind == "graphmlp" and config.alpha > 0 and gamma_matrix is None:
        a_hat_local = a_hat if a_hat is not None else normalize_adjacency(build_adjacency(g))
        gamma_matrix = sparse_power(a_hat_local, config.r)

    log = []
    best_val, best_iter, best_params = -1.0, -1, None
    train_time = 0.0

    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        if model_kind == "gcn":
            logits = model.forward(a_hat, x, drop_rng)
            ce = softmax_cross_entropy(logits, train_labels, g.splits.train)
            loss_nc, loss_ce, skipped = 0.0, ce.loss, 0
            model.backward(ce.grad)
        else:
            ids = sample_batch(g.n, config.batch_size, batch_rng)
            z, y = model.forward(x[ids], drop_rng)
            gamma = extract_submatrix(gamma_matrix, ids) if config.alpha > 0 else None
            rows = np.flatnonzero(is_train[ids])
            rep = combined_loss(z, y, gamma, train_labels[ids], rows, config.tau, config.alpha)
            loss_nc, loss_ce, skipped = rep.loss_nc, rep.loss_ce, rep.skipped_nodes
            model.backward(rep.grad_z, rep.grad_y)
        loss_final = loss_ce + loss_nc
        if not np.isfinite(loss_final):
            raise NonFiniteError(f"non-finite loss at iteration {it}")
        opt.step(model.named_grads())
        train_time += time.perf_counter() - t0

        entry = {
            "iter": it,
            "loss_nc": loss_nc,
            "loss_ce": loss_ce,
            "loss_final": loss_final,
            "skipped_nodes": skipped,
            "val_acc": None,
            "elapsed_ms": round(train_time * 1e3, 3) if config.record_time else None,
        }
        if it % config.eval_every == 0 or it == config.iterations:
            val = accuracy(predict(model, x, a_hat), val_labels, val_idx)
            entry["val_acc"] = val
            if val > best_val:
                best_val, best_iter, best_params = val, it, model.snapshot()
        log.append(entry)

    model.load_params(best_params)
    test_acc = None
    if evaluate_test:
        test_acc = accuracy(predict(model, x, a_hat), g.labels, g.splits.test)
    return TrainResult(model_kind, config, best_params, best_val, best_iter, test_acc, log, model)


def write_log_jsonl(log: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def read_log_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
