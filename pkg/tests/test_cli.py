import csv
import json
import subprocess
import sys

import pytest

from vmtrack import io as vio
from vmtrack.cli import main, sample_frames
from vmtrack.simulator import ScenarioSpec, generate

SCENARIO = {"n_sources": 1, "frames_T": 150, "obs_kappa": 10.0, "dynamics_kappa": 1e4,
            "detection_prob": 1.0, "clutter_rate": 0.2,
            "confidence_law": {"kind": "fixed", "value": 1.0}, "rng_seed": 3}
TRACK_OPTS = ["--tau0", "0.1", "--kappa-d", "3000"]


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(SCENARIO))
    return path


@pytest.fixture
def simulated(tmp_path, spec_file):
    out = tmp_path / "sim"
    assert main(["simulate", "--spec", str(spec_file), "--out", str(out)]) == 0
    return out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- simulate

def test_simulate_writes_three_files(simulated):
    assert sorted(p.name for p in simulated.iterdir()) == ["frames.jsonl", "scenario.json", "truth.csv"]
    resolved = json.loads((simulated / "scenario.json").read_text())
    assert resolved["rng_seed"] == 3 and resolved["fps"] == 125.0


def test_simulate_missing_spec_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["simulate", "--spec", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_simulate_invalid_spec_exits_3(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n_sources": 1, "clutter_rate": -2.0}))
    assert main(["simulate", "--spec", str(path), "--out", str(tmp_path / "o")]) == 3
    path.write_text("{not json")
    assert main(["simulate", "--spec", str(path), "--out", str(tmp_path / "o")]) == 3


def test_simulate_unwritable_output_exits_2(tmp_path, spec_file):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--spec", str(spec_file), "--out", str(blocker / "sub")]) == 2


def test_simulate_is_byte_identical_and_seed_overridable(tmp_path, spec_file):
    for name in ("a", "b"):
        assert main(["simulate", "--spec", str(spec_file), "--out", str(tmp_path / name)]) == 0
    for f in ("frames.jsonl", "truth.csv", "scenario.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert main(["simulate", "--spec", str(spec_file), "--out", str(tmp_path / "c"), "--seed", "4"]) == 0
    assert (tmp_path / "c" / "frames.jsonl").read_bytes() != (tmp_path / "a" / "frames.jsonl").read_bytes()


# ---------------------------------------------------------------- track

def test_track_single_source(simulated, tmp_path):
    out = tmp_path / "trk"
    argv = ["track", "--frames", str(simulated / "frames.jsonl"), "--out", str(out), "--dump-vem"]
    assert main(argv + TRACK_OPTS) == 0
    rows = read_rows(out / "trajectories.csv")
    assert rows[0] == ["t", "track_id", "mu_rad", "kappa", "active"]
    assert len({r[1] for r in rows[1:]}) >= 1
    records = [json.loads(line) for line in (out / "frame_outputs.jsonl").read_text().splitlines()]
    assert len(records) == 150 and set(records[0]) == {"t", "tracks", "births", "deaths"}
    diag = [json.loads(line) for line in (out / "vem_diagnostics.jsonl").read_text().splitlines()]
    assert len(diag) == 150 and {"n_iter", "elbo_trace", "kappa_y"} <= set(diag[0])


def test_track_empty_file(tmp_path):
    frames = tmp_path / "empty.jsonl"
    frames.write_text("")
    assert main(["track", "--frames", str(frames), "--out", str(tmp_path / "o")]) == 0
    assert read_rows(tmp_path / "o" / "trajectories.csv") == [["t", "track_id", "mu_rad", "kappa", "active"]]


def test_track_out_of_order_exits_3(tmp_path, capsys):
    frames = tmp_path / "f.jsonl"
    frames.write_text('{"t": 0, "observations": [[0.1, 1.0]]}\n{"t": 5, "observations": []}\n')
    assert main(["track", "--frames", str(frames), "--out", str(tmp_path / "o")]) == 3
    assert "expected frame 1" in capsys.readouterr().err


def test_track_malformed_record_cites_line(tmp_path, capsys):
    frames = tmp_path / "f.jsonl"
    frames.write_text('{"fps": 125}\n{"t": 0, "observations": [[0.1, 1.0]]}\n{"t": 1, "observations": [1]}\n')
    assert main(["track", "--frames", str(frames), "--out", str(tmp_path / "o")]) == 3
    assert "f.jsonl:3" in capsys.readouterr().err


def test_track_reads_csv_frames(tmp_path):
    frames = tmp_path / "f.csv"
    frames.write_text("t,azimuth_rad,confidence\n0,0.1,1.0\n2,0.1,1.0\n")
    assert main(["track", "--frames", str(frames), "--out", str(tmp_path / "o")]) == 0


def test_track_rejects_bad_options(simulated, tmp_path):
    argv = ["track", "--frames", str(simulated / "frames.jsonl"), "--out", str(tmp_path / "o")]
    assert main(argv + ["--kappa-y", "-1"]) == 3
    assert main(argv + ["--death-frames", "0"]) == 3


# ---------------------------------------------------------------- evaluate

def truth_as_trajectories(truth_path, out_path):
    rows = read_rows(truth_path)[1:]
    records = {}
    for t, sid, az, on in rows:
        records.setdefault(int(t), []).append({"id": int(sid), "mu_rad": float(az), "kappa": 1.0,
                                               "active": on == "1", "assigned_mass": 1.0})
    vio.write_trajectories_csv(out_path, [{"t": t, "tracks": trs} for t, trs in sorted(records.items())])


def test_evaluate_identical(simulated, tmp_path, capsys):
    est = tmp_path / "est.csv"
    truth_as_trajectories(simulated / "truth.csv", est)
    assert main(["evaluate", "--est", str(est), "--truth", str(simulated / "truth.csv"),
                 "--out", str(tmp_path / "ev")]) == 0
    assert "MD 0.0%  FA 0.0%  MAE 0.00 deg" in capsys.readouterr().out
    report = json.loads((tmp_path / "ev" / "metrics.json").read_text())
    assert report["md_pct"] == 0.0 and report["fa_pct"] == 0.0 and report["mae_deg"] == 0.0


def test_evaluate_five_frame_fixture(tmp_path, capsys):
    truth = tmp_path / "truth.csv"
    truth.write_text("t,source_id,azimuth_rad,active_flag\n" +
                     "".join(f"{t},1,{repr(1.0)},1\n" for t in range(5)))
    est = tmp_path / "est.csv"
    deg = 3.141592653589793 / 180
    errs = [0, 10, None, 2, -4]
    est.write_text("t,track_id,mu_rad,kappa,active\n" + "".join(
        f"{t},1,{repr(1.0 + (e or 0) * deg)},5.0,{0 if e is None else 1}\n" for t, e in enumerate(errs)))
    assert main(["evaluate", "--est", str(est), "--truth", str(truth), "--out", str(tmp_path / "ev")]) == 0
    assert "MD 20.0%  FA 0.0%  MAE 4.00 deg" in capsys.readouterr().out


def test_evaluate_missing_truth_exits_2(tmp_path, simulated):
    assert main(["evaluate", "--est", str(simulated / "truth.csv"), "--truth", str(tmp_path / "none.csv"),
                 "--out", str(tmp_path / "ev")]) == 2


def test_evaluate_schema_mismatch_exits_3(tmp_path, simulated):
    # a truth file handed over as the estimate has the wrong header
    assert main(["evaluate", "--est", str(simulated / "truth.csv"), "--truth", str(simulated / "truth.csv"),
                 "--out", str(tmp_path / "ev")]) == 3


# ---------------------------------------------------------------- plot-data

def test_sample_frames_arithmetic():
    assert len(sample_frames(120, 60.0, 12.0)) == 24
    assert sample_frames(20, 125.0, 12.0) == [0, 10]
    assert sample_frames(0, 125.0, 12.0) == []
    with pytest.raises(ValueError):
        sample_frames(10, 0.0, 12.0)


def test_plot_data_rows_per_track(tmp_path):
    est = tmp_path / "est.csv"
    vio.write_trajectories_csv(est, [{"t": t, "tracks": [
        {"id": 1, "mu_rad": 0.0, "kappa": 1.0, "active": True, "assigned_mass": 1.0},
        {"id": 2, "mu_rad": 1.0, "kappa": 1.0, "active": False, "assigned_mass": 0.0}]} for t in range(120)])
    assert main(["plot-data", "--est", str(est), "--out", str(tmp_path / "p"), "--fps", "60"]) == 0
    rows = read_rows(tmp_path / "p" / "plot_data.csv")
    assert rows[0] == ["time_s", "kind", "id", "azimuth_rad", "active"]
    assert sum(r[2] == "1" for r in rows[1:]) == 24
    assert sum(r[2] == "2" for r in rows[1:]) == 24
    assert float(rows[2][0]) == pytest.approx(5 / 60)


def test_plot_data_with_truth_and_empty_estimates(tmp_path, simulated):
    est = tmp_path / "est.csv"
    vio.write_trajectories_csv(est, [])
    assert main(["plot-data", "--est", str(est), "--out", str(tmp_path / "p")]) == 0
    assert read_rows(tmp_path / "p" / "plot_data.csv") == [["time_s", "kind", "id", "azimuth_rad", "active"]]
    assert main(["plot-data", "--est", str(est), "--truth", str(simulated / "truth.csv"),
                 "--out", str(tmp_path / "q")]) == 0
    kinds = {r[1] for r in read_rows(tmp_path / "q" / "plot_data.csv")[1:]}
    assert kinds == {"truth"}


def test_plot_data_missing_input_exits_2(tmp_path):
    assert main(["plot-data", "--est", str(tmp_path / "x.csv"), "--out", str(tmp_path / "p")]) == 2


# ---------------------------------------------------------------- whole pipeline

def run_pipeline(root, spec_file):
    assert main(["simulate", "--spec", str(spec_file), "--out", str(root / "sim")]) == 0
    assert main(["track", "--frames", str(root / "sim" / "frames.jsonl"), "--out", str(root / "trk"),
                 "--dump-vem"] + TRACK_OPTS) == 0
    assert main(["evaluate", "--est", str(root / "trk" / "trajectories.csv"),
                 "--truth", str(root / "sim" / "truth.csv"), "--out", str(root / "ev")]) == 0
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_rerun_is_byte_identical(tmp_path, spec_file):
    a = run_pipeline(tmp_path / "a", spec_file)
    b = run_pipeline(tmp_path / "b", spec_file)
    assert a.keys() == b.keys() and len(a) == 7
    assert a == b


def test_module_entry_point(tmp_path, spec_file):
    res = subprocess.run([sys.executable, "-m", "vmtrack.cli", "simulate", "--spec", str(spec_file),
                          "--out", str(tmp_path / "s")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "vmtrack.cli", "bogus"], capture_output=True, text=True)
    assert res.returncode == 2
