"""Command-line entry point: ``graphmlp <subcommand> ...``.

Subcommands: ingest, train, eval, corrupt-eval, bench, sweep, embed.
Every run writes the fully resolved arguments to ``<out>/config.json``;
``--config <file>`` replays such a file.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .ingest import (DATASETS, DataError, load_dataset, make_planetoid_splits, save_canonical,
                     validate_counts)
from .nn import CheckpointError, GcnModel, load_checkpoint, save_checkpoint
from .tensor import NonFiniteError, Rng
from .train import MODEL_KINDS, TrainConfig, evaluate, node_features, train, write_log_jsonl

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("graphmlp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--batch-size", "--B", dest="batch_size", type=int, default=d.batch_size)
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--tau", type=float, default=d.tau)
    p.add_argument("--r", type=int, default=d.r)
    p.add_argument("--iterations", "--T", dest="iterations", type=int, default=d.iterations)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--dropout", type=float, default=d.dropout)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--eval-every", type=int, default=d.eval_every)
    p.add_argument("--no-bias", dest="bias", action="store_false")
    p.add_argument("--exempt-norm-bias-decay", dest="decay_norm_and_bias", action="store_false")
    p.add_argument("--row-normalize", action="store_true")
    p.add_argument("--deterministic", action="store_true",
                   help="omit wall-clock fields so logs are bit-reproducible")


def _train_config(a) -> TrainConfig:
    return TrainConfig(
        batch_size=a.batch_size, alpha=a.alpha, tau=a.tau, r=a.r, iterations=a.iterations,
        lr=a.lr, weight_decay=a.weight_decay, hidden=a.hidden, dropout=a.dropout, seed=a.seed,
        eval_every=a.eval_every, bias=a.bias, decay_norm_and_bias=a.decay_norm_and_bias,
        row_normalize=a.row_normalize, record_time=not a.deterministic,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphmlp", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="replay a config.json written by a previous run")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="convert a raw corpus to the canonical format with splits")
    p.add_argument("--src", required=True, help="directory with .content/.cites or Pubmed .tab files")
    p.add_argument("--name", default="custom", choices=sorted(DATASETS))
    p.add_argument("--per-class-train", type=int, default=20)
    p.add_argument("--num-val", type=int, default=500)
    p.add_argument("--num-test", type=int, default=1000)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", default="graphmlp", choices=MODEL_KINDS)
    _add_train_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a split")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--dataset")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out")

    p = sub.add_parser("corrupt-eval", help="test accuracy with a corrupted adjacency")
    p.add_argument("--model", required=True, action="append", help="checkpoint; repeat for several runs")
    p.add_argument("--dataset")
    p.add_argument("--delta", type=float, action="append", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="train Graph-MLP and GCN, time inference, write curves")
    p.add_argument("--dataset", required=True)
    p.add_argument("--reps", type=int, default=100)
    _add_train_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="hyperparameter grid search ranked on validation accuracy")
    p.add_argument("--dataset", required=True)
    p.add_argument("--full-grid", action="store_true", help="the full 576-point grid")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=None, help="defaults to $GRAPHMLP_THREADS or 1")
    _add_train_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("embed", help="export eval-mode embeddings Z as TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset")
    p.add_argument("--out", required=True, help="output TSV path")
    return parser


def _write_json(obj, path) -> None:
    ex.dump_json(obj, path)


def _out_dir(a) -> Path:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolved(a) -> dict:
    return {k: v for k, v in vars(a).items() if k not in ("config", "verbose")}


def _dataset_for(a, meta) -> Path:
    path = a.dataset or meta.get("extra", {}).get("dataset")
    if not path:
        raise DataError("no --dataset given and the checkpoint does not record one")
    return Path(path)


def _graph(path):
    g = load_dataset(path)
    if g.splits is None:
        raise DataError(f"{path}: dataset has no splits; run `graphmlp ingest` first")
    return g


def cmd_ingest(a) -> dict:
    g = load_dataset(a.src, a.name)
    validate_counts(g, DATASETS[a.name])
    splits = make_planetoid_splits(g, a.per_class_train, a.num_val, a.num_test, Rng(a.split_seed))
    g = g.with_splits(splits)
    out = _out_dir(a)
    save_canonical(g, out)
    report = {"n": g.n, "d": g.d, "num_classes": g.num_classes, "num_edges": int(len(g.edges)),
              "splits": {k: int(splits[k].size) for k in ("train", "val", "test")},
              "load_report": g.meta.get("load_report", {})}
    return report


def cmd_train(a) -> dict:
    g = _graph(a.dataset)
    cfg = _train_config(a)
    res = train(g, cfg, a.model)
    out = _out_dir(a)
    write_log_jsonl(res.log, out / "train_log.jsonl")
    save_checkpoint(out / "best.ckpt", res.model, res.best_params,
                    extra={"dataset": str(Path(a.dataset)), "config": cfg.to_dict()})
    summary = res.summary()
    _write_json(summary, out / "result.json")
    return summary


def cmd_eval(a) -> dict:
    model, meta, _ = load_checkpoint(a.model)
    g = _graph(_dataset_for(a, meta))
    cfg = TrainConfig(**meta["extra"]["config"]) if "config" in meta.get("extra", {}) else TrainConfig()
    acc = evaluate(model, g, a.split, features=node_features(g, cfg))
    result = {"model": meta["kind"], "split": a.split, "accuracy": acc}
    if a.out:
        _write_json(result, _out_dir(a) / "eval.json")
    return result


def cmd_corrupt_eval(a) -> dict:
    models, g, cfg = [], None, TrainConfig()
    for path in a.model:
        model, meta, _ = load_checkpoint(path)
        models.append(model)
        if g is None:
            g = _graph(_dataset_for(a, meta))
            if "config" in meta.get("extra", {}):
                cfg = TrainConfig(**meta["extra"]["config"])
    deltas = sorted({0.0, *a.delta})
    reports, preds = ex.evaluate_under_corruption(models, g, deltas, a.seed, node_features(g, cfg))
    result = {"reports": [r.to_dict() for r in reports], "runs": len(models)}
    if preds:
        result["graphmlp_predictions_invariant"] = all(
            all((p == per[0.0]).all() for p in per.values()) for per in preds.values())
    if a.out:
        _write_json(result, _out_dir(a) / "corruption.json")
    return result


def cmd_bench(a) -> dict:
    g = _graph(a.dataset)
    cfg = _train_config(a)
    res = ex.run_timing(g, cfg, reps=a.reps)
    out = _out_dir(a)
    for kind, curve in res["curves"].items():
        ex.write_curves_csv(curve, out / f"curve_{kind}.csv")
    _write_json(res, out / "timing.json")
    return {k: v for k, v in res.items() if k != "curves"}


def cmd_sweep(a) -> dict:
    g = _graph(a.dataset)
    grid = ex.SweepGrid() if a.full_grid else ex.SweepGrid.reduced()
    res = ex.run_sweep(g, grid, n_seeds=a.seeds, base=_train_config(a), workers=a.workers)
    _write_json(res, _out_dir(a) / "sweep.json")
    return {"best_config": res["best_config"], "best_test": res["best_test"], "grid_size": res["grid_size"]}


def cmd_embed(a) -> dict:
    model, meta, _ = load_checkpoint(a.model)
    if isinstance(model, GcnModel):
        raise DataError("embedding export needs a Graph-MLP checkpoint")
    g = load_dataset(_dataset_for(a, meta))
    cfg = TrainConfig(**meta["extra"]["config"]) if "config" in meta.get("extra", {}) else TrainConfig()
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ex.export_embeddings(model, g, out, features=node_features(g, cfg))
    return {"path": str(out), "rows": g.n}


COMMANDS = {
    "ingest": cmd_ingest, "train": cmd_train, "eval": cmd_eval, "corrupt-eval": cmd_corrupt_eval,
    "bench": cmd_bench, "sweep": cmd_sweep, "embed": cmd_embed,
}


def _parse(parser, argv):
    a = parser.parse_args(argv)
    if a.config:
        with open(a.config, encoding="utf-8") as fh:
            saved = json.load(fh)
        command = saved.get("command")
        if not command:
            raise UsageError(f"{a.config} has no 'command' entry")
        a = argparse.Namespace(**{**saved, "config": a.config, "verbose": a.verbose})
    if not a.command:
        raise UsageError("a subcommand is required")
    return a


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = _parse(parser, argv)
    except UsageError as exc:
        print(f"graphmlp: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(a, "out", None) and a.command != "embed":
            _write_json(_resolved(a), _out_dir(a) / "config.json")
        elif a.command == "embed":
            Path(a.out).parent.mkdir(parents=True, exist_ok=True)
            _write_json(_resolved(a), Path(a.out).with_suffix(".config.json"))
        result = COMMANDS[a.command](a)
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        print(json.dumps({"error": "data", "message": str(exc)}), file=sys.stderr)
        return EXIT_DATA
    except NonFiniteError as exc:
        print(json.dumps({"error": "numeric", "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
