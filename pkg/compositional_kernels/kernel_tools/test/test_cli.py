from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from compositional_kernels.kernel_tools.cli.main import main
from compositional_kernels.kernel_tools.core.config import build_run_config
from compositional_kernels.kernel_tools.core.errors import UsageError


@pytest.fixture
def grouped_counts(tmp_path, rng):
    """Counts table with a binary 'group' column; the first feature separates the groups."""
    n, p = 30, 5
    counts = rng.integers(1, 200, size=(n, p))
    counts[:15, 0] += 300
    frame = pd.DataFrame(counts, columns=[f"otu{j + 1}" for j in range(p)])
    frame.insert(0, "sample", [f"s{i + 1}" for i in range(n)])
    frame["group"] = ["case"] * 15 + ["control"] * 15
    path = tmp_path / "counts.csv"
    frame.to_csv(path, index=False)
    return str(path)


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--design", "blocktv", "--n", "40", "--seed", "3", "--output-dir", str(out)]) == 0
    return str(out / "simulated.csv")


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        code = main(["simulate", "--design", "blocktv", "--n", "20", "--seed", "7", "--output-dir", str(tmp_path / name)])
        assert code == 0
    first = (tmp_path / "a" / "simulated.csv").read_bytes()
    assert first == (tmp_path / "b" / "simulated.csv").read_bytes()
    header = first.decode("utf-8").splitlines()[0]
    assert header == "sample_id,x1,x2,x3,x4,x5,x6,x7,x8,x9,y"


def test_seeded_commands_need_a_seed(tmp_path, simulated):
    assert main(["simulate", "--output-dir", str(tmp_path)]) == 2
    assert main(["select", "--input", simulated, "--label-column", "y", "--output-dir", str(tmp_path)]) == 2


def test_missing_label_column_is_a_usage_error(tmp_path, simulated):
    code = main(["fit", "--input", simulated, "--label-column", "response", "--lambda", "0.1",
                 "--output-dir", str(tmp_path)])
    assert code == 2


def test_data_errors_exit_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("sample,a,b,y\ns1,1,2,0.5\ns2,0,0,1.0\n", encoding="utf-8")
    code = main(["fit", "--input", str(bad), "--label-column", "y", "--lambda", "0.1", "--output-dir", str(tmp_path)])
    assert code == 3


def test_fit_predict_interpret(tmp_path, simulated):
    out = tmp_path / "run"
    code = main(["fit", "--input", simulated, "--label-column", "y", "--kernel", "generalized_js",
                 "--a", "inf", "--b", "1", "--lambda", "0.001", "--output-dir", str(out)])
    assert code == 0
    model = json.loads((out / "model.json").read_text())
    assert model["spec"]["a"] == "inf"
    assert model["lambda"] == 0.001

    common = ["--input", simulated, "--label-column", "y", "--model", str(out / "model.json"), "--output-dir", str(out)]
    assert main(["predict", *common]) == 0
    predictions = pd.read_csv(out / "predictions.csv")
    assert list(predictions.columns) == ["sample_id", "prediction"]
    assert len(predictions) == 40

    assert main(["interpret", "--cpd-points", "7", *common]) == 0
    cfi = pd.read_csv(out / "cfi.csv")
    assert cfi["feature"].tolist() == [f"x{j + 1}" for j in range(9)]
    cpd = pd.read_csv(out / "cpd.csv")
    assert list(cpd.columns) == ["feature", "z", "value"]
    assert len(cpd) == 9 * 7
    assert (out / "cfi.svg").read_text().lstrip().startswith("<?xml")


def test_fit_chooses_lambda_when_omitted(tmp_path, simulated):
    code = main(["fit", "--input", simulated, "--label-column", "y", "--kernel", "linear", "--n-lambdas", "5",
                 "--output-dir", str(tmp_path)])
    assert code == 0
    model = json.loads((tmp_path / "model.json").read_text())
    assert model["lambda"] > 0


def test_select_writes_report_and_model(tmp_path, simulated):
    args = ["select", "--input", simulated, "--label-column", "y", "--seed", "1", "--n-outer", "3",
            "--n-inner", "3", "--n-lambdas", "6", "--threads", "1"]
    assert main([*args, "--output-dir", str(tmp_path / "a")]) == 0
    assert main([*args, "--output-dir", str(tmp_path / "b")]) == 0
    report = (tmp_path / "a" / "selection_report.csv").read_bytes()
    assert report == (tmp_path / "b" / "selection_report.csv").read_bytes()
    frame = pd.read_csv(tmp_path / "a" / "selection_report.csv")
    assert list(frame.columns) == ["kernel", "fold", "score", "lambda"]
    assert len(frame) == 55 * 3
    assert (tmp_path / "a" / "model.json").exists()


def test_classification_select_and_predict(tmp_path, grouped_counts):
    out = tmp_path / "cls"
    code = main(["select", "--input", grouped_counts, "--label-column", "group", "--task", "classification",
                 "--seed", "0", "--n-outer", "3", "--n-inner", "2", "--n-lambdas", "4", "--output-dir", str(out)])
    assert code == 0
    code = main(["predict", "--input", grouped_counts, "--label-column", "group",
                 "--model", str(out / "model.json"), "--output-dir", str(out)])
    assert code == 0
    predictions = pd.read_csv(out / "predictions.csv")
    assert list(predictions.columns) == ["sample_id", "prediction", "decision"]
    assert set(predictions["prediction"]) <= {"case", "control"}


def test_kpca_summary_medoid(tmp_path, grouped_counts):
    out = str(tmp_path)
    base = ["--input", grouped_counts, "--label-column", "group", "--output-dir", out]
    assert main(["kpca", *base, "--kernel", "aitchison", "--c", "0.001", "--components", "2"]) == 0
    embedding = pd.read_csv(tmp_path / "embedding.csv")
    assert list(embedding.columns) == ["sample_id", "pc1", "pc2"]
    contributions = pd.read_csv(tmp_path / "pc_contributions.csv")
    assert contributions["feature"].tolist() == [f"otu{j + 1}" for j in range(5)]
    assert (tmp_path / "kpca.svg").exists()

    assert main(["summary", *base, "--kernel", "linear"]) == 0
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert (summary["value"] <= 0).all()

    assert main(["summary", *base, "--kernel", "linear", "--reference", "medoid",
                 "--reference-label", "control"]) == 0
    assert main(["medoid", *base, "--kernel", "linear", "--reference-label", "case"]) == 0
    medoid = pd.read_csv(tmp_path / "medoid.csv")
    assert medoid["index"].iloc[0] < 15

    assert main(["summary", *base, "--kernel", "linear", "--reference", "medoid"]) == 2
    assert main(["medoid", *base, "--kernel", "linear", "--reference-label", "nobody"]) == 2


def test_unifrac_weights_command(tmp_path):
    tree = tmp_path / "tree.nwk"
    tree.write_text("((A:1,B:1):1,C:2);\n", encoding="utf-8")
    assert main(["unifrac-weights", "--tree", str(tree), "--output-dir", str(tmp_path)]) == 0
    W = np.loadtxt(tmp_path / "weights.csv", delimiter=",")
    np.testing.assert_allclose(np.diag(W), 1.0, atol=1e-12)
    features = pd.read_csv(tmp_path / "weights_features.csv")
    assert features["feature"].tolist() == ["A", "B", "C"]
    assert main(["unifrac-weights", "--tree", str(tmp_path / "missing.nwk"), "--output-dir", str(tmp_path)]) == 2

    bad = tmp_path / "bad.nwk"
    bad.write_text("((A:1,B:1);", encoding="utf-8")
    assert main(["unifrac-weights", "--tree", str(bad), "--output-dir", str(tmp_path)]) == 3


def test_weighted_fit_from_unifrac_file(tmp_path):
    tree = tmp_path / "tree.nwk"
    tree.write_text("((A:1,B:1):1,C:2);\n", encoding="utf-8")
    assert main(["unifrac-weights", "--tree", str(tree), "--variant", "B", "--output-dir", str(tmp_path)]) == 0
    data = tmp_path / "abc.csv"
    rows = ["sample,A,B,C,y"] + [f"s{i},{1 + i},{2 + (i % 3)},{3 + (i % 5)},{i / 10}" for i in range(12)]
    data.write_text("\n".join(rows) + "\n", encoding="utf-8")
    code = main(["fit", "--input", str(data), "--label-column", "y", "--kernel", "linear", "--lambda", "0.01",
                 "--weights", str(tmp_path / "weights.csv"), "--output-dir", str(tmp_path)])
    assert code == 0
    model = json.loads((tmp_path / "model.json").read_text())
    assert len(model["weight"]) == 3


def test_compare_importance_command(tmp_path):
    assert main(["compare-importance", "--n", "30", "--seed", "2", "--output-dir", str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "importance.csv")
    assert list(table.columns) == ["function", "measure", "x1", "x2", "x3"]
    curves = pd.read_csv(tmp_path / "importance_curves.csv")
    assert list(curves.columns) == ["function", "feature", "z", "cpd", "pdp"]


def test_config_file_and_flag_precedence(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"n": 12, "seed": 4, "design": "lognormal"}), encoding="utf-8")
    cfg = build_run_config("simulate", {"n": 15, "output_dir": str(tmp_path)}, str(config))
    assert cfg.n == 15
    assert cfg.seed == 4
    assert cfg.design.value == "lognormal"
    config.write_text(json.dumps({"unknown_key": 1}), encoding="utf-8")
    with pytest.raises(UsageError):
        build_run_config("simulate", {"seed": 1, "output_dir": str(tmp_path)}, str(config))
    assert main(["simulate", "--config", str(tmp_path / "absent.json"), "--seed", "1", "--output-dir", str(tmp_path)]) == 2
