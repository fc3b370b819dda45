import json
import subprocess
import sys

import pytest

from cuetrack.cli import main
from cuetrack.io import read_frames, read_tracks, read_truth, write_tracks

from conftest import truth_as_tracks

SMALL = {"mcf": {"d": 8}, "learn": {"epochs": 1},
         "scenario": {"num_frames": 15, "num_objects": 4, "flicker_prob": 0.15}}


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps(SMALL))
    return tmp_path


def cli(*args):
    return main([str(a) for a in args])


def simulate(workdir, cfg="cfg.json", out="sim"):
    assert cli("simulate", "--config", workdir / cfg, "--out", workdir / out) == 0
    return workdir / out


def test_full_pipeline(workdir, capsys):
    sim = simulate(workdir)
    cfg = workdir / "cfg.json"
    assert cli("train", "--config", cfg, "--frames", sim / "frames.jsonl", "--truth", sim / "truth.jsonl",
               "--checkpoint", workdir / "ck.json") == 0
    assert (workdir / "ck.loss.csv").read_text().startswith("epoch,mean_loss\n0,")
    assert cli("track", "--config", cfg, "--frames", sim / "frames.jsonl", "--checkpoint", workdir / "ck.json",
               "--out", workdir / "tr.jsonl") == 0
    frames = read_frames(sim / "frames.jsonl")
    assert [t.frame_id for t in read_tracks(workdir / "tr.jsonl")] == [f.frame_id for f in frames]
    capsys.readouterr()
    assert cli("eval", "--tracks", workdir / "tr.jsonl", "--truth", sim / "truth.jsonl",
               "--events", sim / "events.jsonl", "--out", workdir / "rep.json") == 0
    out = capsys.readouterr().out.splitlines()
    report = json.loads(out[0])
    assert set(report) == {"loc_recall", "loc_precision", "assoc_accuracy", "id_switches", "cls_accuracy",
                           "detection_recovery_rate"}
    assert out[1].startswith("config") and out[2].startswith("result")
    assert json.loads((workdir / "rep.json").read_text()) == report


def test_single_object_track_spans_all_frames(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"mcf": {"d": 8}, "scenario": {
        "num_frames": 25, "num_objects": 1, "flicker_prob": 0.0}}))
    simulate(tmp_path, "c.json")
    assert cli("track", "--config", tmp_path / "c.json", "--frames", tmp_path / "sim" / "frames.jsonl",
               "--out", tmp_path / "tr.jsonl") == 0
    tracks = read_tracks(tmp_path / "tr.jsonl")
    assert len(tracks) == 25 and all([t.track_id for t in f.tracks] == [0] for f in tracks)


def test_eval_truth_as_output_is_perfect(workdir, capsys):
    sim = simulate(workdir)
    truth = read_truth(sim / "truth.jsonl", sim / "events.jsonl")
    write_tracks(workdir / "gt.jsonl", truth_as_tracks(truth))
    capsys.readouterr()
    assert cli("eval", "--tracks", workdir / "gt.jsonl", "--truth", sim / "truth.jsonl",
               "--events", sim / "events.jsonl") == 0
    report = json.loads(capsys.readouterr().out.splitlines()[0])
    assert report == {"loc_recall": 1.0, "loc_precision": 1.0, "assoc_accuracy": 1.0, "id_switches": 0,
                      "cls_accuracy": 1.0, "detection_recovery_rate": 1.0}


def test_ablate_rows_and_tcp_monotonicity(workdir, capsys):
    sim = simulate(workdir)
    capsys.readouterr()
    assert cli("ablate", "--config", workdir / "cfg.json", "--frames", sim / "frames.jsonl",
               "--truth", sim / "truth.jsonl", "--events", sim / "events.jsonl") == 0
    lines = capsys.readouterr().out.splitlines()
    rows = json.loads(lines[0])
    assert list(rows) == ["full", "no_mcf", "no_mga", "no_tcp"]
    assert [l.split()[0] for l in lines[2:]] == ["full", "no_mcf", "no_mga", "no_tcp"]
    assert rows["full"]["detection_recovery_rate"] >= rows["no_tcp"]["detection_recovery_rate"]


def test_ablation_flags_and_seed(workdir):
    sim = simulate(workdir)
    assert cli("track", "--config", workdir / "cfg.json", "--frames", sim / "frames.jsonl", "--no-tcp",
               "--no-mga", "--naive-fusion", "--out", workdir / "tr.jsonl") == 0
    assert not any(t.recovered for f in read_tracks(workdir / "tr.jsonl") for t in f.tracks)
    other = workdir / "seeded"
    assert cli("simulate", "--config", workdir / "cfg.json", "--seed", 5, "--out", other) == 0
    assert (other / "frames.jsonl").read_bytes() != (sim / "frames.jsonl").read_bytes()


def _error(capsys):
    err = capsys.readouterr().err.strip()
    assert "\n" not in err
    return json.loads(err)


def test_malformed_input_reports_location(workdir, capsys):
    sim = simulate(workdir)
    lines = (sim / "frames.jsonl").read_text().splitlines()
    lines[2] = lines[2].replace('"score": ', '"score": "x", "_": ', 1)
    (sim / "frames.jsonl").write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    code = cli("track", "--config", workdir / "cfg.json", "--frames", sim / "frames.jsonl", "--out", workdir / "o")
    assert code != 0
    err = _error(capsys)
    assert err["error"] == "format" and err["line"] == 3 and err["field"] == "detections[0].score"


@pytest.mark.parametrize("argv,kind", [
    (["bogus"], "usage"),
    (["track", "--frames", "missing.jsonl", "--out", "x"], "io"),
    (["eval"], "usage"),
])
def test_errors_are_single_line_json(argv, kind, capsys):
    assert main(argv) != 0
    assert _error(capsys)["error"] == kind


def test_bad_config_rejected(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"mcf": {"width": 3}}))
    assert cli("simulate", "--config", tmp_path / "c.json", "--out", tmp_path / "o") != 0
    assert _error(capsys)["error"] == "config"


def test_dimension_mismatch_rejected(workdir, capsys):
    sim = simulate(workdir)
    (workdir / "c16.json").write_text(json.dumps({"mcf": {"d": 16}}))
    capsys.readouterr()
    assert cli("track", "--config", workdir / "c16.json", "--frames", sim / "frames.jsonl", "--out",
               workdir / "o") != 0
    assert "embedding dim" in _error(capsys)["message"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cuetrack.cli", "stats", "--truth", tmp_path / "none"],
                          capture_output=True, text=True)
    assert proc.returncode != 0 and json.loads(proc.stderr)["error"] == "io"
