import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rsmnce.cli import main
from rsmnce.corpus import load_vocabulary
from rsmnce.rsm import RsmModel, RsmParams, load_model, save_model

TOPICS = {
    "sport": "goal match team score player coach league",
    "space": "orbit rocket planet launch star moon comet",
    "food": "bread cheese pasta sauce spice oven recipe",
}


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return str(path)


@pytest.fixture
def corpus_files(tmp_path):
    rng = np.random.default_rng(0)
    names = sorted(TOPICS)
    docs, labels = [], []
    for i in range(60):
        t = names[i % 3]
        words = TOPICS[t].split()
        docs.append(" ".join(rng.choice(words, size=8)))
        labels.append(t)
    return {
        "train": write_lines(tmp_path / "train.txt", docs[:45]),
        "train_labels": write_lines(tmp_path / "train.labels", labels[:45]),
        "test": write_lines(tmp_path / "test.txt", docs[45:]),
        "test_labels": write_lines(tmp_path / "test.labels", labels[45:]),
        "dir": tmp_path,
    }


def build_vocab(files, max_size=50):
    out = str(files["dir"] / "vocab.txt")
    assert main(["build-vocab", "--input", files["train"], "--max-size", str(max_size), "--out", out]) == 0
    return out


def train(files, vocab, model, *extra):
    args = ["train", "--input", files["train"], "--vocab", vocab, "--model", model,
            "--hidden", "6", "--epochs", "2", "--batch", "8", "--seed", "3", *extra]
    return main(args)


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error:")
    return err[0]


class TestBuildVocab:
    def test_writes_files(self, corpus_files, capsys):
        vocab = build_vocab(corpus_files, max_size=10)
        v = load_vocabulary(vocab)
        assert len(v) == 10
        assert json.loads(capsys.readouterr().out)["K"] == 10

    def test_missing_input(self, tmp_path, capsys):
        assert main(["build-vocab", "--input", str(tmp_path / "nope"), "--max-size", "5",
                     "--out", str(tmp_path / "v")]) != 0
        assert "not found" in error_line(capsys)


class TestTrain:
    def test_nce_model_and_stats(self, corpus_files, capsys):
        vocab = build_vocab(corpus_files)
        capsys.readouterr()
        model = str(corpus_files["dir"] / "m.json")
        assert train(corpus_files, vocab, model, "--trainer", "nce", "--noise-k", "3", "--alpha", "0.3") == 0
        m = load_model(model)
        assert m.params.H == 6
        records = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
        assert [r["epoch"] for r in records] == [1, 2]
        assert {"objective", "wall_seconds", "trainer", "accuracy", "k", "alpha"} <= set(records[0])
        assert records[0]["k"] == 3 and records[0]["alpha"] == 0.3
        mirrored = open(model + ".stats.jsonl").read().splitlines()
        assert [json.loads(x) for x in mirrored] == records
        run = json.load(open(model + ".run.json"))
        assert run["seed"] == 3 and run["trainer"] == "nce"

    @pytest.mark.parametrize("trainer", ["cd", "pcd"])
    def test_cd(self, corpus_files, trainer):
        vocab = build_vocab(corpus_files)
        model = str(corpus_files["dir"] / "m.json")
        assert train(corpus_files, vocab, model, "--trainer", trainer, "--gibbs-steps", "2") == 0
        assert load_model(model).params.is_finite()

    def test_transforms_recorded(self, corpus_files):
        vocab = build_vocab(corpus_files)
        model = str(corpus_files["dir"] / "m.json")
        assert train(corpus_files, vocab, model, "--idf", "--log-count") == 0
        assert load_model(model).transform_flags == {"log_count": True, "idf": True}

    def test_epochs_zero(self, corpus_files):
        vocab = build_vocab(corpus_files)
        model = str(corpus_files["dir"] / "m.json")
        assert train(corpus_files, vocab, model, "--epochs", "0") == 0
        assert np.abs(load_model(model).params.W).max() < 0.1

    @pytest.mark.parametrize("extra", [
        ["--trainer", "cd", "--idf"],
        ["--trainer", "pcd", "--alpha", "0.5"],
        ["--trainer", "cd", "--noise-k", "5"],
        ["--trainer", "nce", "--gibbs-steps", "3"],
        ["--alpha", "1.0"],
        ["--noise-k", "0"],
        ["--hidden", "0"],
    ])
    def test_invalid_combinations(self, corpus_files, capsys, extra):
        vocab = build_vocab(corpus_files)
        capsys.readouterr()
        model = corpus_files["dir"] / "bad.json"
        assert train(corpus_files, vocab, str(model), *extra) == 2
        error_line(capsys)
        assert not model.exists()

    def test_byte_identical_with_seed(self, corpus_files, tmp_path):
        vocab = build_vocab(corpus_files)
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        assert train(corpus_files, vocab, a) == 0
        assert train(corpus_files, vocab, b) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

        def untimed(path):
            return [{k: v for k, v in json.loads(x).items() if k != "wall_seconds"} for x in open(path)]

        assert untimed(a + ".stats.jsonl") == untimed(b + ".stats.jsonl")

    def test_env_seed_override(self, corpus_files, tmp_path, monkeypatch):
        vocab = build_vocab(corpus_files)
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        args = ["train", "--input", corpus_files["train"], "--vocab", vocab, "--hidden", "4", "--epochs", "1"]
        assert main(args + ["--model", a, "--seed", "11"]) == 0
        monkeypatch.setenv("RSM_SEED", "11")
        assert main(args + ["--model", b, "--seed", "0"]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()
        assert json.load(open(b + ".run.json"))["seed"] == 11


def hand_model(files):
    """Three-word model whose features rank index docs relevant, irrelevant, relevant."""
    d = files["dir"]
    write_lines(d / "hand_train.txt", ["alpha", "beta", "gamma"])
    write_lines(d / "hand_train.labels", ["x", "y", "x"])
    write_lines(d / "hand_test.txt", ["alpha"])
    write_lines(d / "hand_test.labels", ["x"])
    vocab = str(d / "hand_vocab.txt")
    assert main(["build-vocab", "--input", str(d / "hand_train.txt"), "--max-size", "3", "--out", vocab]) == 0
    words = load_vocabulary(vocab).words
    cols = {"alpha": [5.0, -5.0], "beta": [2.0, 0.0], "gamma": [0.0, 5.0]}
    W = np.array([cols[w] for w in words]).T
    model = str(d / "hand.json")
    save_model(RsmModel(RsmParams(W, np.zeros(3), np.zeros(2)), {"log_count": False, "idf": False}, words), model)
    return model, vocab


class TestEval:
    def test_hand_average_precision(self, corpus_files, capsys):
        model, vocab = hand_model(corpus_files)
        d = corpus_files["dir"]
        out = d / "eval"
        assert main(["eval", "--model", model, "--vocab", vocab, "--train", str(d / "hand_train.txt"),
                     "--test", str(d / "hand_test.txt"), "--train-labels", str(d / "hand_train.labels"),
                     "--test-labels", str(d / "hand_test.labels"), "--out-dir", str(out)]) == 0
        rows = (out / "retrieval.csv").read_text().splitlines()
        assert rows[-1].startswith("# map=0.8333")
        assert json.loads((out / "summary.json").read_text())["map"] == pytest.approx(5 / 6)

    def test_trained_model(self, corpus_files):
        vocab = build_vocab(corpus_files)
        model = str(corpus_files["dir"] / "m.json")
        assert train(corpus_files, vocab, model) == 0
        out = corpus_files["dir"] / "eval"
        assert main(["eval", "--model", model, "--vocab", vocab, "--train", corpus_files["train"],
                     "--test", corpus_files["test"], "--train-labels", corpus_files["train_labels"],
                     "--test-labels", corpus_files["test_labels"], "--retrieval", "--classify",
                     "--clf-epochs", "20", "--hidden", "6", "--out-dir", str(out)]) == 0
        report = json.loads((out / "classification.json").read_text())
        assert report["n_test"] == 15
        assert report["classes"] == sorted(TOPICS)
        summary = json.loads((out / "summary.json").read_text())
        assert 0 <= summary["map"] <= 1 and 0 <= summary["accuracy"] <= 1

    def test_missing_labels(self, corpus_files, capsys):
        model, vocab = hand_model(corpus_files)
        capsys.readouterr()
        d = corpus_files["dir"]
        assert main(["eval", "--model", model, "--vocab", vocab, "--train", str(d / "hand_train.txt"),
                     "--test", str(d / "hand_test.txt"), "--classify", "--out-dir", str(d / "o")]) == 2
        assert "labels" in error_line(capsys)

    def test_hidden_mismatch(self, corpus_files, capsys):
        model, vocab = hand_model(corpus_files)
        capsys.readouterr()
        d = corpus_files["dir"]
        assert main(["eval", "--model", model, "--vocab", vocab, "--train", str(d / "hand_train.txt"),
                     "--test", str(d / "hand_test.txt"), "--hidden", "9", "--out-dir", str(d / "o")]) == 2
        assert "H mismatch" in error_line(capsys)


class TestInfer:
    def test_features_csv(self, corpus_files):
        model, vocab = hand_model(corpus_files)
        d = corpus_files["dir"]
        out = d / "features.csv"
        assert main(["infer", "--model", model, "--vocab", vocab, "--input", str(d / "hand_train.txt"),
                     "--out", str(out)]) == 0
        rows = [[float(x) for x in r] for r in csv.reader(out.open())]
        assert len(rows) == 3 and all(len(r) == 2 for r in rows)
        assert rows[0][0] == pytest.approx(1 / (1 + np.exp(-5.0)))


class TestSweepAndBenchmark:
    def test_sweep_alpha(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main(["sweep-alpha", "--grid", "0,0.3,0.5,0.9", "--synthetic-docs", "60,20",
                     "--synthetic-vocab", "30", "--hidden", "4", "--epochs", "1", "--batch", "16",
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert [float(r["alpha"]) for r in rows] == [0.0, 0.3, 0.5, 0.9]
        assert all(0 <= float(r["map"]) <= 1 for r in rows)

    def test_sweep_bad_grid(self, tmp_path, capsys):
        assert main(["sweep-alpha", "--grid", "0.5,1.2", "--out", str(tmp_path / "s.csv")]) == 2
        assert "[0, 1)" in error_line(capsys)

    def test_benchmark(self, tmp_path):
        out = tmp_path / "bench.csv"
        assert main(["benchmark", "--vocab-sizes", "50,200", "--configs", "cd1,nce5", "--batches", "2",
                     "--warmup", "1", "--hidden", "8", "--batch", "8", "--doc-length", "10",
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert [(r["trainer"], r["K"]) for r in rows] == [("cd", "50"), ("nce", "50"), ("cd", "200"), ("nce", "200")]
        assert all(float(r["mean_seconds"]) > 0 and float(r["std_seconds"]) >= 0 for r in rows)
        assert all(r["batches"] == "2" for r in rows)

    def test_benchmark_bad_config(self, tmp_path, capsys):
        assert main(["benchmark", "--configs", "cd0", "--out", str(tmp_path / "b.csv")]) == 2
        error_line(capsys)


def test_no_command(capsys):
    assert main([]) == 2
    error_line(capsys)


def test_entry_point_exit_status(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rsmnce.cli", "build-vocab", "--input",
                           str(tmp_path / "missing.txt"), "--max-size", "3", "--out", str(tmp_path / "v")],
                          capture_output=True, text=True)
    assert proc.returncode != 0
    assert proc.stderr.startswith("error:")
