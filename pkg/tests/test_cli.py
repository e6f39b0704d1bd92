import json
import subprocess
import sys

import pytest

from cognitraj.cli import main
from cognitraj.config import ConfigError, RunConfig
from cognitraj.evaluation import EvalReport
from cognitraj.scene import load_windows

pytestmark = pytest.mark.filterwarnings("ignore::cognitraj.graph.TruncationWarning")

TINY = ["--width", "8", "--heads", "2", "--modes", "2", "--gn-groups", "2", "--epochs", "2", "--batch-size", "4"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_synth_writes_windows(tmp_path, capsys):
    out = tmp_path / "w.jsonl"
    code, stdout, _ = run(capsys, "synth", "--synth-n", "5", "--synth-kind", "braking", "--out", str(out))
    assert code == 0
    assert json.loads(stdout)["windows"] == 5
    ws = load_windows(out)
    assert len(ws) == 5 and all(w.has_full_future() for w in ws)


def test_ingest_three_row_file(tmp_path, capsys):
    csv_path = tmp_path / "t.csv"
    csv_path.write_text("agent_id,frame,x,y\n1,0,0,0\n1,1,1,0\n1,2,2,0\n")
    out = tmp_path / "w.jsonl"
    code, stdout, _ = run(capsys, "ingest", "--input-csv", str(csv_path), "--out", str(out))
    assert code == 0
    summary = json.loads(stdout)
    # three frames are far too short for a 3 s + 5 s window
    assert summary == {"tracks": 1, "windows": 0, "skipped_short": [1], "out": str(out)}


def test_unknown_variant_is_a_config_error(tmp_path, capsys):
    code, _, err = run(capsys, "eval", "--variant", "drop4", "--checkpoint", str(tmp_path / "none.ckpt"))
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "config" and "variant" in payload["fields"]


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"synth_n": 3, "synth_kind": "lane-change"}))
    out = tmp_path / "w.jsonl"
    code, stdout, _ = run(capsys, "synth", "--config", str(cfg), "--synth-n", "2", "--out", str(out))
    assert code == 0
    summary = json.loads(stdout)
    assert summary["windows"] == 2 and summary["kind"] == "lane-change"


def test_config_reports_every_problem():
    with pytest.raises(ConfigError) as exc:
        RunConfig(dt=-1, width=10, heads=4, fraction=2.0).validate()
    assert {"dt", "width", "fraction"} <= set(exc.value.problems)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"no_such_key": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"epochs": "ten"})


def test_missing_file_is_reported(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--windows", str(tmp_path / "absent.jsonl"))
    assert code == 1
    assert json.loads(err.strip())["error"] == "FileNotFoundError"


def pipeline(tmp_path, capsys, monkeypatch, tag):
    d = tmp_path / tag
    d.mkdir()
    # relative paths, since the checkpoint records the run config verbatim
    monkeypatch.chdir(d)
    assert run(capsys, "synth", "--synth-n", "6", "--synth-kind", "lane-change", "--out", "w.jsonl")[0] == 0
    assert run(capsys, "train", "--windows", "w.jsonl", "--out", "m.ckpt", *TINY)[0] == 0
    assert run(capsys, "eval", "--windows", "w.jsonl", "--checkpoint", "m.ckpt", "--variant", "drop5", "--out", "r.csv")[0] == 0
    code, stdout, _ = run(capsys, "predict", "--windows", "w.jsonl", "--checkpoint", "m.ckpt", "--window-id", "lane-change-3", "--out", "plots")
    assert code == 0
    return d, json.loads(stdout)


def test_end_to_end_is_byte_identical(tmp_path, capsys, monkeypatch):
    a, pa = pipeline(tmp_path, capsys, monkeypatch, "a")
    b, pb = pipeline(tmp_path, capsys, monkeypatch, "b")
    for name in ("w.jsonl", "m.ckpt", "m.metrics.csv", "r.csv", "plots/lane-change-3.csv", "plots/lane-change-3.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert pa["means"] == pb["means"]
    report = EvalReport.read(a / "r.csv")
    assert report.variant == "drop5" and report.n_windows == 6
    assert len((a / "m.metrics.csv").read_text().splitlines()) == 3


def test_featurize_dump(tmp_path, capsys):
    w = tmp_path / "w.jsonl"
    run(capsys, "synth", "--synth-n", "1", "--out", str(w))
    out = tmp_path / "f.jsonl"
    code, stdout, _ = run(capsys, "featurize", "--windows", str(w), "--out", str(out))
    assert code == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    ws = load_windows(w)
    assert len(rows) == ws[0].n_agents * ws[0].t_h_frames
    assert {"ttc", "tet", "tit", "spr", "drv", "katz", "bci_power"} <= set(rows[0])


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cognitraj.cli", "eval", "--variant", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip())["fields"]["variant"].startswith("must be one of")
