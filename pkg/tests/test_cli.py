import json
import subprocess
import sys

import numpy as np
import pytest

from coresel import cli
from coresel.ols import SingularMatrixError
from coresel.thermal import SimConfig, spans_clusters

SMALL = {
    "simulate": ["--runs", "40", "--probe-samples", "200"],
    "select": ["--n-trees", "15", "--folds", "3"],
    "allocate": ["--trials", "10"],
    "train": ["--epochs", "5", "--resamples", "3", "--hidden", "8"],
    "evaluate": [],
    "report": [],
}


def run_pipeline(out, seed=0):
    for stage, extra in SMALL.items():
        assert cli.main([stage, "--out-dir", str(out), "--seed", str(seed), *extra]) == 0, stage


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run_pipeline(out)
    return out


def files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_outputs(pipeline):
    names = set(files(pipeline))
    for stage in SMALL:
        assert f"manifest_{stage}.json" in names
    assert {"features.csv", "temperatures.csv", "selection.json", "plan.json", "metrics.csv",
            "report.json", "models/fcn.txt", "models/fcn_rf_bs.txt", "cv_curve.csv"} <= names
    manifest = json.loads((pipeline / "manifest_select.json").read_text())
    assert manifest["inputs"].keys() == {"features.csv"}
    assert manifest["version"] and manifest["seed"] == 0


def test_metrics_table(pipeline):
    lines = (pipeline / "metrics.csv").read_text().splitlines()
    assert lines[0] == "model,mse,params"
    rows = [line.split(",") for line in lines[1:]]
    assert [r[0] for r in rows] == ["fcn", "fcn_rf", "fcn_rf_bs"]
    assert int(rows[0][2]) > int(rows[1][2])


def test_allocation_spans_clusters(pipeline):
    plan = json.loads((pipeline / "plan.json").read_text())
    assert spans_clusters(plan["correlation"]["cores"], SimConfig.clustered((2, 3)))
    comp = json.loads((pipeline / "comparison.json").read_text())
    assert comp["cross_cluster_rate"]["corr"] == 1.0


def test_pipeline_byte_identical(pipeline, tmp_path):
    run_pipeline(tmp_path)
    assert files(tmp_path) == files(pipeline)


def test_seed_changes_output(pipeline, tmp_path):
    assert cli.main(["simulate", "--out-dir", str(tmp_path), "--seed", "1", *SMALL["simulate"]]) == 0
    assert (tmp_path / "features.csv").read_bytes() != (pipeline / "features.csv").read_bytes()


def test_minimal_two_core(tmp_path):
    (tmp_path / "sim.cfg").write_text("cores = 2\n")
    assert cli.main(["simulate", "--out-dir", str(tmp_path), "--sim-config",
                     str(tmp_path / "sim.cfg"), "--runs", "10"]) == 0
    rows = (tmp_path / "features.csv").read_text().splitlines()
    assert len(rows) == 11
    assert (tmp_path / "temperatures.csv").read_text().startswith("step,core_0,core_1\n")


def test_config_file_and_flag_precedence(tmp_path):
    (tmp_path / "p.cfg").write_text("runs = 3\nseed = 4\n")
    assert cli.main(["simulate", "--config", str(tmp_path / "p.cfg"), "--out-dir", str(tmp_path),
                     "--runs", "2"]) == 0
    manifest = json.loads((tmp_path / "manifest_simulate.json").read_text())
    assert manifest["params"]["runs"] == 2 and manifest["seed"] == 4


def test_malformed_config_key(tmp_path, capsys):
    (tmp_path / "p.cfg").write_text("seed = 1\n\nrnus = 3\n")
    code = cli.main(["simulate", "--config", str(tmp_path / "p.cfg"), "--out-dir", str(tmp_path)])
    assert code == cli.EXIT_DATA
    err = capsys.readouterr().err
    assert "p.cfg:3" in err and "rnus" in err


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--runs", "many"])
    assert exc.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == cli.EXIT_USAGE


def test_missing_target(pipeline, tmp_path, capsys):
    code = cli.main(["select", "--trace", str(pipeline / "features.csv"), "--target", "watts",
                     "--out-dir", str(tmp_path)])
    assert code == cli.EXIT_DATA
    assert "watts" in capsys.readouterr().err


def test_evaluate_without_train(pipeline, tmp_path, capsys):
    for name in ("features.csv", "selection.json"):
        (tmp_path / name).write_bytes((pipeline / name).read_bytes())
    assert cli.main(["evaluate", "--out-dir", str(tmp_path)]) == cli.EXIT_DATA
    assert "run 'train' first" in capsys.readouterr().err


def test_numeric_failure_exit(pipeline, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise SingularMatrixError("x")
    monkeypatch.setattr(cli, "backward_stepwise", boom)
    (tmp_path / "features.csv").write_bytes((pipeline / "features.csv").read_bytes())
    assert cli.main(["select", "--out-dir", str(tmp_path), "--n-trees", "5"]) == cli.EXIT_NUMERIC


def planted_trace(path, seed=0, n=300):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 6))
    y = 3 * X[:, 0] - 2 * X[:, 1] + 0.1 * rng.standard_normal(n)
    header = "a,b,n1,n2,n3,n4,energy"
    np.savetxt(path, np.column_stack([X, y]), delimiter=",", header=header, comments="")


def test_select_planted_trace(tmp_path):
    planted_trace(tmp_path / "p.csv")
    assert cli.main(["select", "--trace", str(tmp_path / "p.csv"), "--out-dir", str(tmp_path),
                     "--n-trees", "30", "--folds", "3"]) == 0
    sel = json.loads((tmp_path / "selection.json").read_text())
    assert set(sel["rf_ranking"][:2]) == {"a", "b"}
    assert {"a", "b"} <= set(sel["stepwise_final"])


def test_select_full_grid_runs_stepwise_on_all(tmp_path):
    planted_trace(tmp_path / "p.csv")
    assert cli.main(["select", "--trace", str(tmp_path / "p.csv"), "--out-dir", str(tmp_path),
                     "--n-trees", "10", "--folds", "3", "--k-grid", "6"]) == 0
    sel = json.loads((tmp_path / "selection.json").read_text())
    assert len(sel["stepwise_pool"]) == 6


def test_allocate_single_task_and_random(pipeline, tmp_path):
    temps = str(pipeline / "temperatures.csv")
    assert cli.main(["allocate", "--temperatures", temps, "--out-dir", str(tmp_path),
                     "--tasks", "1"]) == 0
    plan = json.loads((tmp_path / "plan.json").read_text())
    scores = np.array(plan["scores"])
    eligible = [c for c in range(len(scores)) if c != 0]
    assert plan["correlation"]["cores"] == [min(eligible, key=lambda c: (scores[c], c))]
    assert "comparison.json" not in files(tmp_path)
    first = plan["random"]
    assert cli.main(["allocate", "--temperatures", temps, "--out-dir", str(tmp_path),
                     "--tasks", "1", "--policy", "random"]) == 0
    assert json.loads((tmp_path / "plan.json").read_text())["random"] == first


def test_allocate_too_many_tasks(pipeline, tmp_path):
    assert cli.main(["allocate", "--temperatures", str(pipeline / "temperatures.csv"),
                     "--out-dir", str(tmp_path), "--tasks", "5"]) == cli.EXIT_DATA


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "coresel", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for stage in SMALL:
        assert stage in res.stdout
