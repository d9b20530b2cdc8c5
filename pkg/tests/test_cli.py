import hashlib
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from graphmlp.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from graphmlp.ingest import load_canonical
from graphmlp.synthetic import citation_graph

SMALL = ["--iterations", "6", "--hidden", "8", "--batch-size", "100", "--deterministic"]


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def write_linqs(g, root: Path) -> Path:
    root.mkdir(parents=True)
    with open(root / "toy.content", "w") as fh:
        for i in range(g.n):
            words = "\t".join(str(int(v)) for v in g.features[i])
            fh.write(f"id{i}\t{words}\tclass{g.labels[i]}\n")
    with open(root / "toy.cites", "w") as fh:
        for i, j in g.edges:
            fh.write(f"id{j}\tid{i}\n")
    return root


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    g = citation_graph(n=200, num_classes=3, d=40, seed=5, splits=None)
    raw = write_linqs(g, root / "raw")
    data = root / "data"
    assert main(["ingest", "--src", str(raw), "--out", str(data), "--per-class-train", "5",
                 "--num-val", "40", "--num-test", "80"]) == EXIT_OK
    return root, g


def run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestIngest:
    def test_canonical_written(self, workspace):
        root, g = workspace
        loaded = load_canonical(root / "data")
        np.testing.assert_array_equal(loaded.features, g.features)
        assert loaded.edges.shape == g.edges.shape
        assert loaded.splits.train.size == 15 and loaded.splits.test.size == 80
        assert json.loads((root / "data" / "config.json").read_text())["command"] == "ingest"

    def test_named_dataset_mismatch_is_data_error(self, workspace, capsys, tmp_path):
        root, _ = workspace
        code, _, err = run(capsys, ["ingest", "--src", str(root / "raw"), "--name", "cora", "--out", str(tmp_path)])
        assert code == EXIT_DATA
        assert json.loads(err.strip().splitlines()[-1])["error"] == "data"


class TestTrainEval:
    def test_train_outputs(self, workspace, capsys, tmp_path):
        root, _ = workspace
        code, out, _ = run(capsys, ["train", "--dataset", str(root / "data"), "--alpha", "10", "--r", "2",
                                    "--tau", "1.0", "--seed", "7", "--out", str(tmp_path)] + SMALL)
        assert code == EXIT_OK
        summary = json.loads(out)
        assert summary["model"] == "graphmlp" and summary["config"]["alpha"] == 10.0
        for name in ("best.ckpt", "train_log.jsonl", "result.json", "config.json"):
            assert (tmp_path / name).is_file()

        code, out, _ = run(capsys, ["eval", "--model", str(tmp_path / "best.ckpt")])
        assert code == EXIT_OK
        assert json.loads(out)["accuracy"] == summary["test_acc_at_best"]

    def test_alpha_zero_is_mlp_run(self, workspace, capsys, tmp_path):
        root, _ = workspace
        run(capsys, ["train", "--dataset", str(root / "data"), "--alpha", "0", "--out", str(tmp_path)] + SMALL)
        log = [json.loads(ln) for ln in (tmp_path / "train_log.jsonl").read_text().splitlines()]
        assert all(e["loss_nc"] == 0.0 for e in log)

    @pytest.mark.parametrize("model", ["gcn", "mlp"])
    def test_other_models(self, workspace, capsys, tmp_path, model):
        root, _ = workspace
        code, out, _ = run(capsys, ["train", "--dataset", str(root / "data"), "--model", model,
                                    "--out", str(tmp_path)] + SMALL)
        assert code == EXIT_OK and json.loads(out)["model"] == model

    def test_config_replay_is_bit_exact(self, workspace, capsys, tmp_path):
        root, _ = workspace
        out = tmp_path / "run"
        assert main(["train", "--dataset", str(root / "data"), "--out", str(out)] + SMALL) == EXIT_OK
        first = tree_digest(out)
        saved = tmp_path / "saved.json"
        shutil.copy(out / "config.json", saved)
        shutil.rmtree(out)
        assert main(["--config", str(saved)]) == EXIT_OK
        capsys.readouterr()
        assert tree_digest(out) == first

    def test_input_dir_not_mutated(self, workspace, capsys, tmp_path):
        root, _ = workspace
        before = tree_digest(root / "data"), tree_digest(root / "raw")
        run(capsys, ["train", "--dataset", str(root / "data"), "--out", str(tmp_path / "t")] + SMALL)
        ckpt = str(tmp_path / "t" / "best.ckpt")
        run(capsys, ["eval", "--model", ckpt, "--split", "val"])
        run(capsys, ["corrupt-eval", "--model", ckpt, "--delta", "0.1", "--out", str(tmp_path / "c")])
        run(capsys, ["embed", "--model", ckpt, "--out", str(tmp_path / "z.tsv")])
        assert (tree_digest(root / "data"), tree_digest(root / "raw")) == before


@pytest.fixture(scope="module")
def ckpts(workspace, tmp_path_factory):
    root, _ = workspace
    out = tmp_path_factory.mktemp("ck")
    paths = []
    for model, seed in (("graphmlp", 0), ("graphmlp", 1), ("gcn", 0)):
        d = out / f"{model}{seed}"
        assert main(["train", "--dataset", str(root / "data"), "--model", model, "--seed", str(seed),
                     "--out", str(d)] + SMALL) == EXIT_OK
        paths.append(str(d / "best.ckpt"))
    return paths


class TestExperimentCommands:
    def test_corrupt_eval(self, ckpts, capsys, tmp_path):
        argv = ["corrupt-eval", "--delta", "0.01", "--delta", "0.1", "--out", str(tmp_path)]
        for p in ckpts:
            argv += ["--model", p]
        code, out, _ = run(capsys, argv)
        assert code == EXIT_OK
        res = json.loads(out)
        assert res["graphmlp_predictions_invariant"] is True and res["runs"] == 3
        assert {r["delta"] for r in res["reports"]} == {0.0, 0.01, 0.1}
        assert (tmp_path / "corruption.json").is_file()

    def test_embed_byte_identical(self, ckpts, capsys, tmp_path):
        for name in ("a.tsv", "b.tsv"):
            code, _, _ = run(capsys, ["embed", "--model", ckpts[0], "--out", str(tmp_path / name)])
            assert code == EXIT_OK
        text = (tmp_path / "a.tsv").read_text().splitlines()
        assert len(text) == 201 and len(text[1].split("\t")) == 8 + 2
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
        assert (tmp_path / "a.config.json").is_file()

    def test_embed_rejects_gcn(self, ckpts, capsys, tmp_path):
        code, _, _ = run(capsys, ["embed", "--model", ckpts[2], "--out", str(tmp_path / "z.tsv")])
        assert code == EXIT_DATA

    def test_bench(self, workspace, capsys, tmp_path):
        root, _ = workspace
        code, out, _ = run(capsys, ["bench", "--dataset", str(root / "data"), "--reps", "3",
                                    "--iterations", "4", "--hidden", "8", "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert json.loads(out)["speedup"] > 0
        for name in ("curve_graphmlp.csv", "curve_gcn.csv", "timing.json"):
            assert (tmp_path / name).is_file()
        assert (tmp_path / "curve_gcn.csv").read_text().splitlines()[0] == "iteration,wall_ms,val_acc"

    def test_sweep_reduced(self, workspace, capsys, tmp_path):
        root, _ = workspace
        code, out, _ = run(capsys, ["sweep", "--dataset", str(root / "data"), "--out", str(tmp_path),
                                    "--iterations", "2", "--hidden", "4", "--batch-size", "50"])
        assert code == EXIT_OK
        assert json.loads(out)["grid_size"] == 16
        assert len(json.loads((tmp_path / "sweep.json").read_text())["ranked"]) == 16


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        code, _, err = run(capsys, ["train", "--bogus"])
        assert code == EXIT_USAGE and "usage" in err

    def test_no_subcommand(self, capsys):
        assert run(capsys, [])[0] == EXIT_USAGE

    def test_missing_dataset(self, capsys, tmp_path):
        code, _, err = run(capsys, ["train", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == EXIT_DATA
        assert json.loads(err.strip().splitlines()[-1])["error"] == "data"

    def test_invalid_config_value(self, workspace, capsys, tmp_path):
        root, _ = workspace
        code, _, _ = run(capsys, ["train", "--dataset", str(root / "data"), "--tau", "0", "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_failure(self, workspace, capsys, tmp_path):
        root, _ = workspace
        code, _, err = run(capsys, ["train", "--dataset", str(root / "data"), "--lr", "1e300",
                                    "--iterations", "30", "--hidden", "8", "--out", str(tmp_path)])
        assert code == EXIT_NUMERIC
        assert json.loads(err.strip().splitlines()[-1])["error"] == "numeric"

    def test_console_script(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "graphmlp", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "corrupt-eval" in proc.stdout
