import csv
import json

import pytest

from deeptcn import cli, gradcheck, synthetic
from deeptcn.cli import RunConfig, main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    values, static = synthetic.write_generic_csv(synthetic.seasonal_panel(10, length=70), root / "raw")
    assert main(["prepare", "generic", str(values), str(static), str(root / "prep")]) == 0
    (root / "run.ini").write_text(
        "[data]\npanel = {}\ncalendar = day_of_week\n"
        "[model]\ninput_length = 14\nhorizon = 7\ndilations = 1,2,4\nchannels = 8\n"
        "[train]\nepochs = 3\nbatch_size = 16\n".format(root / "prep"))
    return root


def _error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_prepare_reports_shape(tmp_path, capsys):
    values, static = synthetic.write_generic_csv(synthetic.seasonal_panel(4, length=30), tmp_path / "raw")
    assert main(["prepare", "generic", str(values), str(static), str(tmp_path / "p")]) == 0
    assert "4 x 30" in capsys.readouterr().out
    assert (tmp_path / "p" / "config.ini").exists()


def test_prepare_parts_reports_reference_counts(tmp_path, capsys):
    raw = tmp_path / "parts.csv"
    synthetic.parts_like(60).to_csv(raw)
    assert main(["prepare", "parts", str(raw), str(tmp_path / "p")]) == 0
    out = capsys.readouterr().out
    assert "1406" in out and "1046" in out
    assert json.loads((tmp_path / "p" / "parts_report.json").read_text())["total"] == 60


def test_train_is_deterministic_and_config_echo_reproduces(workspace):
    ini = str(workspace / "run.ini")
    a, b, c = (workspace / n for n in ("a", "b", "c"))
    assert main(["train", "--config", ini, "--seed", "5", "--out", str(a)]) == 0
    assert main(["train", "--config", ini, "--seed", "5", "--out", str(b)]) == 0
    assert (a / "model.dtcn").read_bytes() == (b / "model.dtcn").read_bytes()
    assert main(["train", "--config", str(a / "config.ini"), "--out", str(c)]) == 0
    assert (a / "model.dtcn").read_bytes() == (c / "model.dtcn").read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert len(summary["checkpoint_sha256"]) == 64
    header = (a / "history.csv").read_text().splitlines()[0]
    assert "train_pinball" in header and "selection_pinball" in header


def test_gaussian_history_columns(workspace):
    out = workspace / "g"
    assert main(["train", "--config", str(workspace / "run.ini"), "--head", "gaussian", "--out", str(out),
                 "--train.epochs=1"]) == 0
    header = (out / "history.csv").read_text().splitlines()[0]
    assert "train_nll" in header and "selection_nll" in header


def test_forecast_and_eval(workspace):
    run = workspace / "fe"
    assert main(["train", "--config", str(workspace / "run.ini"), "--out", str(run), "--train.epochs=1"]) == 0
    fc = workspace / "fc.csv"
    assert main(["forecast", "--checkpoint", str(run / "model.dtcn"), "--panel", str(workspace / "prep"),
                 "--series", "s000", "--out", str(fc)]) == 0
    rows = list(csv.reader(open(fc)))
    assert rows[0] == ["series_id", "origin", "step", "level_or_param", "value"]
    assert len(rows) == 1 + 7 * 2
    ev = workspace / "ev"
    assert main(["eval", "--config", str(workspace / "run.ini"), "--checkpoint", str(run / "model.dtcn"),
                 "--out", str(ev)]) == 0
    for name in ("report.json", "report.txt", "baseline.json", "config.ini"):
        assert (ev / name).exists(), name
    assert "QL50" in json.loads((ev / "report.json").read_text())["metrics"]


def test_sensitivity_writes_curves(workspace):
    out = workspace / "sens"
    assert main(["sensitivity", "--config", str(workspace / "run.ini"), "--dilations", "1,2",
                 "--dilations", "1,2,4", "--out", str(out), "--train.epochs=2"]) == 0
    assert (out / "curve_1-2.csv").exists() and (out / "curve_1-2-4.csv").exists()


def test_gradcheck_command(capsys, monkeypatch):
    assert main(["gradcheck", "--configs", "2", "--ops", "dense"]) == 0
    assert "dense" in capsys.readouterr().out
    monkeypatch.setattr(gradcheck, "TOLERANCE", -1.0)
    assert main(["gradcheck", "--configs", "1", "--ops", "dense"]) == 3
    assert _error(capsys)["error"] == "numeric"


def test_unknown_key_is_a_config_error(workspace, capsys):
    assert main(["train", "--config", str(workspace / "run.ini"), "--out", str(workspace / "x"),
                 "--model.widht=3"]) == 1
    err = _error(capsys)
    assert err["code"] == 1 and "widht" in err["message"]
    bad = workspace / "bad.ini"
    bad.write_text("[optimizer]\nlr = 1\n")
    assert main(["train", "--config", str(bad), "--out", str(workspace / "x")]) == 1


def test_missing_panel_is_a_data_error(tmp_path, capsys):
    assert main(["train", "--panel", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2
    assert _error(capsys)["error"] == "data"


def test_usage_errors(capsys):
    assert main(["train"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["gradcheck", "--train.epochs=3"]) == 1


def test_dataset_presets():
    cfg = RunConfig.load(overrides=["data.dataset=traffic"])
    assert (cfg["model"]["input_length"], cfg["model"]["horizon"]) == (168, 24)
    assert cfg["model"]["dilations"] == (1, 2, 4, 8, 16, 20, 32)
    assert (cfg["train"]["batch_size"], cfg["train"]["learning_rate"]) == (128, 1e-2)
    elec = RunConfig.load(overrides=["data.dataset=electricity", "train.batch_size=64"])
    assert elec["train"]["batch_size"] == 64 and elec["train"]["learning_rate"] == 5e-2
    parts = RunConfig.load(overrides=["data.dataset=parts"])
    assert (parts["model"]["input_length"], parts["model"]["horizon"]) == (12, 12)


def test_config_round_trips_through_ini(tmp_path):
    cfg = RunConfig.load(overrides=["data.dataset=electricity", "model.quantiles=0.1,0.5,0.9", "train.clip=true"])
    path = tmp_path / "c.ini"
    path.write_text(cfg.to_ini())
    assert RunConfig.load(path).values == cfg.values
    assert cli.EXIT_NUMERIC == 3


def test_inline_comments_in_config(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[data]\ndataset = traffic   # preset\n[train]\nepochs = 5 # short\n")
    cfg = RunConfig.load(path)
    assert cfg["data"]["dataset"] == "traffic" and cfg["train"]["epochs"] == 5
