import json

import numpy as np
import pytest

from ldpboost.boosting import Ensemble
from ldpboost.cli import main, mse_bench, read_table
from ldpboost.data import EncodedDataset, write_dataset
from ldpboost.learners import Stump


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def rows_of(text):
    return read_table(text)[1]


def test_synth_writes_identical_files(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["synth", "--n", "300", "--seed", "7", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.schema.json").exists()
    lines = a.read_text().splitlines()
    assert len(lines) == 301 and len(lines[0].split(",")) == 21


def test_mse_bench_table(capsys):
    code, out = run(["mse-bench", "--d", "50", "--owners", "500", "--eps", "5", "--reps", "3"], capsys)
    assert code == 0
    config, rows = read_table(out)
    assert config["command"] == "mse-bench"
    assert list(rows[0]) == ["dataset", "learner", "mechanism", "epsilon", "rounds", "seed", "metric", "value", "sd"]
    by_mech = {r["mechanism"]: float(r["value"]) for r in rows}
    assert by_mech["noop"] == 0.0
    assert by_mech["pm"] < by_mech["duchi"] < by_mech["laplace"]


def test_mse_halves_when_owners_double():
    small = mse_bench(20, 400, [3.0], ["laplace", "pm", "duchi"], 60, seed=1)
    large = mse_bench(20, 800, [3.0], ["laplace", "pm", "duchi"], 60, seed=2)
    for key in small:
        ratio = np.mean(large[key]) / np.mean(small[key])
        assert ratio == pytest.approx(0.5, rel=0.15)


def test_train_outputs_and_model_file(tmp_path, capsys):
    model = tmp_path / "m.json"
    argv = ["train", "--n", "1000", "--learner", "bdt", "--mechanism", "pm", "--eps", "2",
            "--owners", "40", "--rounds", "4", "--reps", "2", "--model-out", str(model)]
    code, out = run(argv, capsys)
    assert code == 0
    rows = rows_of(out)
    assert [r["rounds"] for r in rows if r["metric"] == "misclassification"] == ["1", "2", "3", "4"]
    saved = json.loads(model.read_text())
    assert len(saved["models"]) == 2
    assert len(saved["models"][0]["reports"]) == 4
    assert main(["eval", "--model", str(model), "--n", "1000"]) == 0


def test_linear_learner_defaults_to_one_round(capsys):
    code, out = run(["train", "--n", "600", "--learner", "lr", "--mechanism", "noop", "--eps", "1",
                     "--owners", "10", "--reps", "1"], capsys)
    assert code == 0
    assert {r["rounds"] for r in rows_of(out)} == {"1"}
    with pytest.raises(SystemExit):
        main(["train", "--learner", "lr", "--rounds", "3"])


def test_budget_errors_reported(capsys):
    code = main(["train", "--n", "600", "--owners", "10", "--group-size", "5", "--rounds", "3", "--reps", "1"])
    assert code == 2
    assert "exceeds" in capsys.readouterr().err


def test_hitrate_rows(capsys):
    code, out = run(["hitrate", "--n", "2000", "--eps", "1,5", "--owners", "100", "--group-size", "50",
                     "--reps", "10"], capsys)
    assert code == 0
    rows = rows_of(out)
    for eps in ("1.0", "5.0"):
        rates = [float(r["value"]) for r in rows if r["epsilon"] == eps]
        assert len(rates) == 20
        assert all(a <= b for a, b in zip(rates, rates[1:]))
        assert rates[-1] == 1.0
    assert main(["hitrate", "--learner", "ncc", "--n", "500"]) == 2


@pytest.fixture
def balanced(tmp_path):
    X = np.array([[0.5, 0.1], [-0.5, 0.2], [0.7, -0.3], [-0.2, 0.0]])
    y = np.array([1, 0, 1, 0])
    path = tmp_path / "bal.csv"
    write_dataset(EncodedDataset(X, y, 2), path)
    return path


def _save(ens, path):
    path.write_text(json.dumps(ens.to_dict()))
    return path


def test_eval_perfect_and_constant(tmp_path, balanced, capsys):
    perfect = Ensemble(2)
    perfect.add(1.0, Stump(0, 0, 1))
    code, out = run(["eval", "--model", str(_save(perfect, tmp_path / "p.json")), "--dataset", str(balanced)], capsys)
    metrics = {r["metric"]: float(r["value"]) for r in rows_of(out)}
    assert metrics["accuracy"] == 1.0
    assert metrics["confusion_0_0"] == 2.0 and metrics["confusion_1_0"] == 0.0

    constant = Ensemble(2)
    constant.add(1.0, Stump(0, 1, 1))
    code, out = run(["eval", "--model", str(_save(constant, tmp_path / "c.json")), "--dataset", str(balanced)], capsys)
    assert {r["metric"]: float(r["value"]) for r in rows_of(out)}["accuracy"] == 0.5


def test_eval_dimension_mismatch(tmp_path, balanced, capsys):
    ens = Ensemble(2)
    ens.add(1.0, Stump(5, 0, 1))
    assert main(["eval", "--model", str(_save(ens, tmp_path / "x.json")), "--dataset", str(balanced)]) == 2


@pytest.mark.parametrize("argv", [
    ["mse-bench", "--d", "8", "--owners", "50", "--reps", "2"],
    ["train", "--n", "800", "--learner", "ncc", "--eps", "3", "--owners", "24", "--rounds", "3", "--reps", "2"],
    ["hitrate", "--n", "800", "--eps", "2", "--owners", "20", "--group-size", "10", "--reps", "3"],
])
def test_commands_are_byte_deterministic(tmp_path, argv):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# config: {")
