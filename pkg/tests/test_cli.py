import json

import numpy as np
import pytest

from snowlink.cli import main


@pytest.fixture
def population_file(tmp_path):
    obj = {
        "N": 8, "n": 3,
        "cluster_mode": {"type": "conditional_multinomial", "tau1": 400},
        "tau2": 200,
        "model1": {"family": "homogeneous", "n": 3},
        "model2": {"family": "homogeneous", "n": 3},
        "theta1": [-0.6, -0.6, -0.6],
        "theta2": [-0.8, -0.8, -0.8],
    }
    path = tmp_path / "population.json"
    path.write_text(json.dumps(obj))
    return path


def test_simulate_estimate_pipeline(tmp_path, population_file, capsys):
    sample = tmp_path / "sample.json"
    truth = tmp_path / "truth.json"
    assert main(["simulate", "--config", str(population_file), "--seed", "3",
                 "--out", str(sample), "--truth", str(truth)]) == 0
    truth_obj = json.loads(truth.read_text())
    assert truth_obj["tau1"] == 400

    model = tmp_path / "model.json"
    model.write_text(json.dumps({"family": "homogeneous", "n": 3}))
    report_path = tmp_path / "report.json"
    assert main(["estimate", "--data", str(sample), "--model", str(model),
                 "--method", "cmle", "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["method"] == "cmle"
    assert report["tau"] == report["tau1"]["floor"] + report["tau2"]["floor"]
    assert "intervals" in report["variance"]


def test_matrices_command(tmp_path):
    model = tmp_path / "model.json"
    model.write_text(json.dumps({"family": "homogeneous", "n": 2}))
    theta = tmp_path / "theta.json"
    theta.write_text(json.dumps({"values": [-0.5, -0.5]}))
    out = tmp_path / "matrix.json"
    for which, dim in (("sigma1", 3), ("psi1", 2), ("sigma2", 3)):
        assert main(["matrices", "--model", str(model), "--theta", str(theta),
                     "--design", "2,6", "--which", which, "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert len(obj["inverse"]) == dim
        prod = np.array(obj["inverse"]) @ np.array(obj["covariance"])
        assert np.allclose(prod, np.eye(dim), atol=1e-8)


def test_experiment_command(tmp_path, population_file):
    config = {
        "population": json.loads(population_file.read_text()),
        "replicates": 3,
        "methods": ["cmle"],
        "master_seed": 11,
    }
    cfg_path = tmp_path / "experiment.json"
    cfg_path.write_text(json.dumps(config))
    out_dir = tmp_path / "results"
    assert main(["experiment", "--config", str(cfg_path),
                 "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "summary.json").exists()
    assert (out_dir / "replicates.csv").exists()
    assert (out_dir / "digest.txt").exists()


def test_experiment_with_replicate_failures_still_exits_zero(tmp_path, capsys):
    # no people outside the frame: every replicate's outside fit fails, but
    # the run completes, tallies the failures, and exits 0
    config = {
        "population": {
            "N": 8, "n": 3,
            "cluster_mode": {"type": "conditional_multinomial", "tau1": 300},
            "tau2": 0,
            "model1": {"family": "homogeneous", "n": 3},
            "model2": {"family": "homogeneous", "n": 3},
            "theta1": [-0.6, -0.6, -0.6],
            "theta2": [-0.8, -0.8, -0.8],
        },
        "replicates": 2,
        "methods": ["cmle"],
        "master_seed": 1,
        "out_dir": str(tmp_path / "results"),
    }
    cfg_path = tmp_path / "experiment.json"
    cfg_path.write_text(json.dumps(config))
    assert main(["experiment", "--config", str(cfg_path)]) == 0
    assert "2 replicate failures" in capsys.readouterr().out


def test_bad_config_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["experiment", "--config", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_file_exits_nonzero(tmp_path):
    assert main(["estimate", "--data", str(tmp_path / "nope.json"),
                 "--model", str(tmp_path / "nope.json"),
                 "--method", "cmle", "--out", str(tmp_path / "r.json")]) == 1
