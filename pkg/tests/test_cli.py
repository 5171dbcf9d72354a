"""End-to-end command-line flows, exit codes, and artifact determinism."""

import csv
import json

import numpy as np
import pytest

from ktboost import Dataset, load_csv, write_csv
from ktboost.cli import main


def run_cli(argv):
    """Invoke the CLI in-process; parser exits surface as their code."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


def _write_regression_csv(path, n=80, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n, 1))
    y = np.sin(2 * np.pi * x[:, 0]) + 0.1 * rng.normal(size=n)
    write_csv(Dataset(x, y, "regression"), path)
    return path


def _write_binary_csv(path, n=80, seed=1):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = (x[:, 0] + 0.4 * rng.normal(size=n) > 0).astype(int)
    data = Dataset(x, y, "binary", label_names=("neg", "pos"))
    write_csv(data, path)
    return path


# -------------------------------------------------------------- exit codes


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == 0
    assert "train" in capsys.readouterr().out


def test_usage_errors_exit_one(tmp_path, capsys):
    cases = [
        [],  # no subcommand
        ["train", "--task", "regression", "--out", "m.json"],  # missing --data
        ["train", "--data", "x.csv", "--task", "clustering", "--out", "m.json"],
        ["train", "--data", "x.csv", "--task", "regression", "--out", "m.json",
         "--rho", "1.0", "--rho-knn", "5"],  # exclusive bandwidth flags
        ["train", "--data", "x.csv", "--task", "regression", "--out", "m.json",
         "--nu", "7.0"],  # config validation routed to usage
        ["train", "--data", "x.csv", "--task", "regression", "--out", "m.json",
         "--loss", "logistic"],  # loss does not fit the task
        ["simulate", "--n", "0", "--out", str(tmp_path / "s.csv")],
        ["benchmark", "--sim", "--out", str(tmp_path / "b")],  # no --rho
        ["benchmark", "--sim", "--rho", "0.1", "--methods", "bagging",
         "--out", str(tmp_path / "b")],
        ["benchmark", "--data", "x.csv", "--out", str(tmp_path / "b")],  # no --task
    ]
    for argv in cases:
        assert run_cli(argv) == 1, argv
        capsys.readouterr()  # drain


def test_data_errors_exit_two(tmp_path, capsys):
    model = tmp_path / "m.json"
    data = _write_regression_csv(tmp_path / "d.csv")
    assert run_cli(["train", "--data", str(data), "--task", "regression",
                    "--rho", "0.5", "--iterations", "2",
                    "--out", str(model)]) == 0
    capsys.readouterr()
    # missing files
    assert run_cli(["predict", "--model", str(tmp_path / "nope.json"),
                    "--data", str(data), "--out", str(tmp_path / "p.csv")]) == 2
    assert run_cli(["train", "--data", str(tmp_path / "nope.csv"),
                    "--task", "regression", "--rho", "0.5",
                    "--out", str(tmp_path / "m2.json")]) == 2
    # malformed cell
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,target\n1.0,oops\n2.0,3.0\n")
    assert run_cli(["train", "--data", str(bad), "--task", "regression",
                    "--rho", "0.5", "--out", str(tmp_path / "m3.json")]) == 2
    # feature-count mismatch between model and prediction file
    wide = tmp_path / "wide.csv"
    wide.write_text("a,b\n1.0,2.0\n")
    assert run_cli(["predict", "--model", str(model), "--data", str(wide),
                    "--out", str(tmp_path / "p.csv")]) == 2
    # corrupt model document
    half = tmp_path / "half.json"
    half.write_text(model.read_text()[:40])
    assert run_cli(["evaluate", "--model", str(half), "--data", str(data)]) == 2
    err = capsys.readouterr().err
    assert "error:" in err


def test_numerical_errors_exit_three(tmp_path, capsys):
    # overflow-scale residuals make the squared risk leave float range
    path = tmp_path / "huge.csv"
    data = Dataset(np.arange(4.0)[:, None],
                   np.array([1e200, -1e200, 1e200, -1e200]), "regression")
    write_csv(data, path)
    with np.errstate(over="ignore"):
        code = run_cli(["train", "--data", str(path), "--task", "regression",
                        "--learner", "tree", "--max-depth", "1",
                        "--iterations", "3", "--no-standardize",
                        "--out", str(tmp_path / "m.json")])
    assert code == 3
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------ round trips


def test_train_predict_evaluate_regression(tmp_path, capsys):
    train_csv = _write_regression_csv(tmp_path / "train.csv", seed=2)
    val_csv = _write_regression_csv(tmp_path / "val.csv", n=40, seed=3)
    model = tmp_path / "model.json"
    trace = tmp_path / "trace.csv"
    code = run_cli([
        "train", "--data", str(train_csv), "--validation", str(val_csv),
        "--task", "regression", "--rho", "0.3", "--nu", "0.2",
        "--iterations", "30", "--out", str(model), "--trace", str(trace),
    ])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["model"] == str(model)
    assert 1 <= summary["selected_iterations"] <= summary["completed_iterations"] == 30
    assert model.exists()

    # trace holds one train and one validation row per iteration
    with open(trace, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "method", "value", "replication"]
    assert len(rows) == 1 + 2 * 30

    # evaluating the saved model on its own training data replays the
    # stored train risk at the selected iteration
    assert run_cli(["evaluate", "--model", str(model), "--data", str(train_csv)]) == 0
    evaluation = json.loads(capsys.readouterr().out)
    assert evaluation["n"] == 80
    assert np.isclose(evaluation["risk"], summary["train_risk"], rtol=1e-9)

    # prediction output parses and matches the evaluation metric
    pred = tmp_path / "pred.csv"
    assert run_cli(["predict", "--model", str(model), "--data", str(train_csv),
                    "--has-target", "--out", str(pred)]) == 0
    with open(pred, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["score"]
    scores = np.array([float(r[0]) for r in rows[1:]])
    truth = load_csv(train_csv, task="regression")
    assert np.isclose(
        np.mean((scores - truth.targets) ** 2), evaluation["metric"], rtol=1e-9
    )


def test_train_predict_classification(tmp_path, capsys):
    train_csv = _write_binary_csv(tmp_path / "train.csv")
    model = tmp_path / "model.json"
    assert run_cli(["train", "--data", str(train_csv), "--task", "binary",
                    "--rho", "1.0", "--iterations", "15",
                    "--out", str(model)]) == 0
    capsys.readouterr()
    pred = tmp_path / "pred.csv"
    assert run_cli(["predict", "--model", str(model), "--data", str(train_csv),
                    "--has-target", "--out", str(pred)]) == 0
    with open(pred, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["prob_neg", "prob_pos", "label"]
    probs = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert all(r[2] in ("neg", "pos") for r in rows[1:])
    # hard label agrees with the larger probability
    for r in rows[1:]:
        expect = "pos" if float(r[1]) > float(r[0]) else "neg"
        assert r[2] == expect

    assert run_cli(["evaluate", "--model", str(model), "--data", str(train_csv)]) == 0
    evaluation = json.loads(capsys.readouterr().out)
    assert 0.0 <= evaluation["metric"] <= 0.5


def test_evaluate_aligns_label_subset(tmp_path, capsys):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(90, 2))
    y = rng.integers(0, 3, 90)
    names = ("alpha", "beta", "gamma")
    write_csv(Dataset(x, y, "multiclass", label_names=names), tmp_path / "train.csv")
    model = tmp_path / "m.json"
    assert run_cli(["train", "--data", str(tmp_path / "train.csv"),
                    "--task", "multiclass", "--rho", "1.0",
                    "--iterations", "5", "--out", str(model)]) == 0
    capsys.readouterr()
    # evaluation file missing the "alpha" class: indices must still align
    keep = y > 0
    write_csv(Dataset(x[keep], y[keep], "multiclass", label_names=names),
              tmp_path / "eval.csv")
    assert run_cli(["evaluate", "--model", str(model),
                    "--data", str(tmp_path / "eval.csv")]) == 0
    evaluation = json.loads(capsys.readouterr().out)
    assert 0.0 <= evaluation["metric"] <= 1.0


def test_target_column_by_name(tmp_path, capsys):
    path = tmp_path / "named.csv"
    path.write_text("y,x0\n" + "\n".join(
        f"{v},{i / 10}" for i, v in enumerate([1.0, 2.0, 1.5, 2.5, 1.2, 2.2,
                                               1.7, 2.7, 1.4, 2.4])
    ) + "\n")
    model = tmp_path / "m.json"
    assert run_cli(["train", "--data", str(path), "--task", "regression",
                    "--target-column", "y", "--learner", "tree",
                    "--iterations", "3", "--out", str(model)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["completed_iterations"] == 3


# ------------------------------------------------------------ determinism


def test_simulate_is_seed_deterministic(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    assert run_cli(["simulate", "--n", "50", "--seed", "7", "--out", str(a)]) == 0
    assert run_cli(["simulate", "--n", "50", "--seed", "7", "--out", str(b)]) == 0
    assert run_cli(["simulate", "--n", "50", "--seed", "8", "--out", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    data = load_csv(a, task="regression")
    assert data.n_samples == 50 and data.n_features == 1


def test_train_artifacts_are_deterministic(tmp_path, capsys):
    train_csv = _write_regression_csv(tmp_path / "train.csv", seed=5)
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    argv = ["train", "--data", str(train_csv), "--task", "regression",
            "--rho", "0.4", "--iterations", "10"]
    assert run_cli(argv + ["--out", str(m1)]) == 0
    out1 = capsys.readouterr().out.replace(str(m1), "MODEL")
    assert run_cli(argv + ["--out", str(m2)]) == 0
    out2 = capsys.readouterr().out.replace(str(m2), "MODEL")
    assert m1.read_bytes() == m2.read_bytes()
    assert out1 == out2


def test_benchmark_sim_mode_artifacts(tmp_path, capsys):
    out1 = tmp_path / "run1"
    argv = ["benchmark", "--sim", "--replications", "2", "--n", "30",
            "--iterations", "4", "--rho", "0.1", "--gradient",
            "--methods", "tree,kernel", "--seed", "3"]
    assert run_cli(argv + ["--out", str(out1)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary["mean_test_mse"]) == {"tree", "kernel"}
    assert "pointwise_mean_0_to_0.5" in summary
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert len(manifest) == 4  # methods x replications
    assert {r["method"] for r in manifest} == {"tree", "kernel"}
    assert (out1 / "comparison.csv").exists()
    with open(out1 / "pointwise.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "method", "value", "replication"]
    assert len(rows) == 1 + 2 * 501

    # reruns are byte-identical
    out2 = tmp_path / "run2"
    assert run_cli(argv + ["--out", str(out2)]) == 0
    capsys.readouterr()
    for name in ("manifest.json", "comparison.csv", "pointwise.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_benchmark_data_mode(tmp_path, capsys):
    data_csv = _write_regression_csv(tmp_path / "d.csv", n=60, seed=6)
    out = tmp_path / "bench"
    code = run_cli(["benchmark", "--data", str(data_csv), "--task", "regression",
                    "--methods", "tree", "--splits", "2", "--fix-nu", "0.5",
                    "--iterations", "5", "--out", str(out)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert "tree" in summary["mean_test_metric"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest) == 2  # splits x methods
    assert all(r["dataset"] == "d.csv" for r in manifest)
    assert all(r["config"]["nu"] == 0.5 for r in manifest)
    assert (out / "comparison.csv").exists()
