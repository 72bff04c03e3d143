import json
import subprocess
import sys

import pytest

from credit_debias.cli import main
from credit_debias.learner import TrainedModel


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--n", "3000", "--seed", "1", "--out", str(out)]) == 0
    return out


def test_simulate_writes_files(simulated):
    assert {p.name for p in simulated.iterdir()} == {"data.csv", "schema.json", "hidden.csv"}
    header = (simulated / "data.csv").read_text().splitlines()[0]
    assert "W" not in header.split(",")


def test_screen_train_audit_flow(simulated, tmp_path, capsys):
    data, schema = str(simulated / "data.csv"), str(simulated / "schema.json")
    assert main(["screen", "--data", data, "--schema", schema, "--group", "A=1",
                 "--out", str(tmp_path / "scr")]) == 0
    screening = json.loads((tmp_path / "scr" / "screening.json").read_text())
    assert set(screening["dropped"]) == {"X_Z1", "X_Z2"}
    assert (tmp_path / "scr" / "positivity.json").exists()

    params = tmp_path / "params.json"
    params.write_text(json.dumps({"num_trees": 20, "max_leaves": 8}))
    for mode in ("awareness", "unawareness", "counterfactual"):
        model = tmp_path / f"{mode}.json"
        extra = ["--screening", str(tmp_path / "scr" / "screening.json")] if mode == "unawareness" else []
        assert main(["train", "--data", data, "--schema", schema, "--mode", mode,
                     "--params", str(params), "--seed", "4", "--out", str(model), *extra]) == 0
        m = TrainedModel.from_json(model.read_text())
        assert m.metadata["mode"] == mode and m.params.seed == 4
        audit = tmp_path / f"{mode}_audit.json"
        assert main(["audit", "--model", str(model), "--data", data, "--schema", schema,
                     "--out", str(audit)]) == 0
        summary = json.loads(audit.read_text())["summary"]
        if mode == "awareness":
            assert summary["max_abs_delta"] > 0
        else:
            assert summary["max_abs_delta"] == 0.0
    assert "X_Z1" not in TrainedModel.from_json((tmp_path / "unawareness.json").read_text()).features


def test_unawareness_without_screening(simulated, tmp_path, capsys):
    code = main(["train", "--data", str(simulated / "data.csv"),
                 "--schema", str(simulated / "schema.json"), "--mode", "unawareness",
                 "--out", str(tmp_path / "m.json")])
    assert code == 2
    assert error_of(capsys)["error"] == "MissingScreeningReport"
    assert not (tmp_path / "m.json").exists()


def test_missing_file(tmp_path, capsys):
    assert main(["screen", "--data", str(tmp_path / "no.csv"), "--schema", str(tmp_path / "no.json"),
                 "--group", "A=1", "--out", str(tmp_path)]) == 2
    assert error_of(capsys)["error"] == "FileNotFound"


def test_bad_group_level(simulated, tmp_path, capsys):
    assert main(["screen", "--data", str(simulated / "data.csv"),
                 "--schema", str(simulated / "schema.json"), "--group", "A=7",
                 "--out", str(tmp_path / "o")]) == 2
    assert error_of(capsys)["error"] == "UnknownLevel"


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seeds": [1, 2], "colour": "red"}))
    assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = error_of(capsys)
    assert err["error"] == "ConfigParse" and "colour" in err["message"]


def test_experiment_and_report(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"source": {"scm": {"n": 3000}}, "seeds": [1, 2], "cv_folds": 0,
                               "params": {"num_trees": 20}}))
    out = tmp_path / "o"
    assert main(["experiment", "--config", str(cfg), "--out", str(out)]) == 0
    report = (out / "report.txt").read_text()
    assert main(["report", "--result", str(out / "experiment.json"),
                 "--out", str(tmp_path / "again.txt")]) == 0
    assert (tmp_path / "again.txt").read_text() == report


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "credit_debias", "train", "--data", "x.csv",
                           "--schema", "x.json", "--mode", "awareness", "--out", "m.json"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip())["error"] == "FileNotFound"


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("simulate", "nsmo-prepare", "screen", "train", "audit", "experiment", "report"):
        assert cmd in out
