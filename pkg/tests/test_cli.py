import csv

import pytest

from dpvi.cli import main
from dpvi.experiments import parse_config, run_sweep


@pytest.fixture
def logistic_csv(tmp_path):
    path = tmp_path / "data.csv"
    assert main(["gen-data", "--kind", "logistic", "--d", "3", "--n", "300", "--seed", "1", "--out", str(path)]) == 0
    return path


def train_args(data, out, *extra):
    return ["train", "--model", "logistic", "--data", str(data), "--target", "y", "--iterations", "50",
            "--q", "0.1", "--sigma", "1.0", "--seed", "5", "--trace-out", str(out), *extra]


def test_train_is_byte_reproducible(tmp_path, logistic_csv, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(train_args(logistic_csv, a)) == 0
    assert main(train_args(logistic_csv, b)) == 0
    assert a.read_bytes() == b.read_bytes()
    out = capsys.readouterr().out
    assert "Renyi" in out or "RDP" in out
    c = tmp_path / "c.csv"
    main(train_args(logistic_csv, c)[:-4] + ["--seed", "6", "--trace-out", str(c)])
    assert c.read_bytes() != a.read_bytes()


def test_train_with_epsilon_and_analyze(tmp_path, logistic_csv, capsys):
    trace, guide, report = tmp_path / "t.csv", tmp_path / "g.csv", tmp_path / "r.csv"
    args = ["train", "--model", "logistic", "--data", str(logistic_csv), "--target", "y", "--epochs", "10",
            "--q", "0.1", "--epsilon", "2", "--variant", "vanilla", "--init-sigma", "0.5",
            "--trace-out", str(trace), "--guide-out", str(guide)]
    assert main(args) == 0
    with open(trace) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["iteration"] == "0" and len(rows) == 101 * 6
    assert main(["analyze-trace", "--trace", str(trace), "--out", str(report)]) == 0
    with open(report) as fh:
        header = next(csv.reader(fh))
    assert header == ["parameter", "T_burn_out", "slope", "mean", "trace_var", "inflated_var"]
    assert guide.read_text().startswith("name,index,value")


def test_gen_data_regression(tmp_path):
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    args = ["gen-data", "--d", "4", "--rho", "0.5", "--n", "100", "--out", str(train), "--test-out", str(test)]
    assert main(args) == 0
    assert len(train.read_text().splitlines()) == 101
    assert test.exists()


def test_grad_check_exit_codes(capsys):
    assert main(["grad-check", "--model", "poisson", "--points", "20"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_accountant_and_calibrate(capsys):
    assert main(["accountant", "--sigma", "4", "--q", "1", "--iterations", "1", "--delta", "1e-5"]) == 0
    out = capsys.readouterr().out
    assert "1.23" in out
    assert main(["calibrate", "--epsilon", "1", "--q", "0.01", "--iterations", "1000", "--delta", "1e-5"]) == 0
    assert capsys.readouterr().out.strip()


def test_errors_return_code_two(tmp_path, capsys):
    assert main(["accountant", "--sigma", "1", "--q", "2", "--iterations", "1", "--delta", "1e-5"]) == 2
    assert main(["train", "--model", "logistic", "--data", str(tmp_path / "none.csv"), "--sigma", "1"]) == 2


def test_parse_config():
    sweep, values = parse_config("# comment\nsweep = full-rank\nd = 3\nrhos = 0.2, 0.8\n\n")
    assert sweep == "full-rank"
    assert values == {"d": "3", "rhos": "0.2, 0.8"}


def test_experiment_sweep(tmp_path):
    cfg = "sweep = full-rank\nd = 2\nn = 200\nepochs = 1\nq = 0.1\nseeds = 2\nrhos = 0.5\nn_eval_samples = 20\n"
    rows, summary = run_sweep(cfg, tmp_path)
    assert len(rows) == 4
    assert {r["variant"] for r in rows} == {"full-rank-vanilla", "full-rank-aligned"}
    for name in ("runs.csv", "summary.csv", "config.txt"):
        assert (tmp_path / name).exists()
    assert len(summary) == 2


def test_experiment_cli(tmp_path):
    cfg = tmp_path / "sweep.txt"
    cfg.write_text("sweep = disparate-noise\nn = 200\np = 2\nepochs = 2\nq = 0.1\nseeds = 1\nreference_factor = 1\n")
    assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "out"), "--set", "epsilon=2"]) == 0
    with open(tmp_path / "out" / "runs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["variant"] for r in rows} == {"vanilla", "aligned"}
    assert float(rows[0]["mpae_s"]) >= 0
