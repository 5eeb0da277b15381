"""Reading and writing observation, truth, trajectory and track files.

Observation files are line-delimited JSON. The first line is a header
``{"fps": 125.0}``; every further line is one frame
``{"t": 0, "observations": [[azimuth_rad, confidence], ...]}``. A CSV
variant ``t,azimuth_rad,confidence`` holds one row per observation.

Floats are written with ``repr`` precision, so a write/read cycle
reproduces every value exactly.
"""

import csv
import json

import numpy as np

from .circular_stats import VonMises
from .evaluation import Trajectory
from .model import Frame, HistoryEntry, MalformedInputError, Observation, Track

__all__ = [
    "DEFAULT_FPS",
    "frame_to_dict",
    "frame_from_dict",
    "track_to_dict",
    "track_from_dict",
    "write_frames_jsonl",
    "read_frames_jsonl",
    "write_frames_csv",
    "read_frames_csv",
    "write_truth_csv",
    "read_truth_csv",
    "write_trajectories_csv",
    "read_trajectories_csv",
    "TRUTH_HEADER",
    "TRAJECTORY_HEADER",
]

DEFAULT_FPS = 125.0
OBS_CSV_HEADER = ["t", "azimuth_rad", "confidence"]
TRUTH_HEADER = ["t", "source_id", "azimuth_rad", "active_flag"]
TRAJECTORY_HEADER = ["t", "track_id", "mu_rad", "kappa", "active"]


def frame_to_dict(frame):
    return {"t": int(frame.time_index),
            "observations": [[float(o.azimuth), float(o.confidence)] for o in frame.observations]}


def frame_from_dict(d, where="record"):
    try:
        t = d["t"]
        obs = d.get("observations", [])
        if isinstance(t, bool) or not isinstance(t, int):
            raise TypeError(f"t must be an integer, got {t!r}")
        observations = []
        for pair in obs:
            az, conf = pair
            observations.append(Observation(float(az), float(conf)))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInputError(f"{where}: {exc}") from None
    return Frame(t, tuple(observations))


def _vm_to_list(vm):
    return [float(vm.mu), float(vm.kappa)]


def track_to_dict(track):
    return {
        "id": int(track.id),
        "posterior": _vm_to_list(track.posterior),
        "prior_weight": float(track.prior_weight),
        "history": [[h.time_index, _vm_to_list(h.posterior), float(h.assigned_mass)]
                    for h in track.history],
        "active": bool(track.active),
        "frames_since_support": int(track.frames_since_support),
    }


def track_from_dict(d):
    try:
        history = [HistoryEntry(int(t), VonMises(*post), float(m)) for t, post, m in d["history"]]
        return Track(int(d["id"]), VonMises(*d["posterior"]), float(d["prior_weight"]),
                     history, bool(d["active"]), int(d["frames_since_support"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInputError(f"bad track record: {exc}") from None


def write_frames_jsonl(path, frames, fps=DEFAULT_FPS):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"fps": float(fps)}) + "\n")
        for f in frames:
            fh.write(json.dumps(frame_to_dict(f)) + "\n")


def read_frames_jsonl(path):
    """Return ``(frames, fps)``. Errors cite the 1-based line number."""
    frames = []
    fps = DEFAULT_FPS
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInputError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise MalformedInputError(f"{path}:{lineno}: expected an object")
            if "t" not in rec and "fps" in rec and lineno == 1:
                fps = float(rec["fps"])
                continue
            frames.append(frame_from_dict(rec, where=f"{path}:{lineno}"))
    return frames, fps


def write_frames_csv(path, frames):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(OBS_CSV_HEADER)
        for f in frames:
            for o in f.observations:
                w.writerow([f.time_index, repr(float(o.azimuth)), repr(float(o.confidence))])


def _check_header(path, header, expected):
    if header is None or [h.strip() for h in header] != expected:
        raise MalformedInputError(f"{path}: expected header {','.join(expected)}, got {header}")


def read_frames_csv(path):
    """Frames from the CSV variant. Frames without rows between the first
    and last time index come back empty."""
    by_t = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        _check_header(path, next(r, None), OBS_CSV_HEADER)
        for lineno, row in enumerate(r, 2):
            try:
                t, az, conf = int(row[0]), float(row[1]), float(row[2])
            except (IndexError, ValueError):
                raise MalformedInputError(f"{path}:{lineno}: bad row {row}") from None
            by_t.setdefault(t, []).append(Observation(az, conf))
    if not by_t:
        return []
    return [Frame(t, tuple(by_t.get(t, ()))) for t in range(min(by_t), max(by_t) + 1)]


def write_truth_csv(path, truth):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRUTH_HEADER)
        for t, sid, az, active in truth.rows():
            w.writerow([t, sid, repr(az), int(active)])


def _read_series(path, header, id_col, value_col):
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        _check_header(path, r.fieldnames, header)
        for lineno, row in enumerate(r, 2):
            try:
                rows.setdefault(int(row[id_col]), []).append(
                    (int(row["t"]), float(row[value_col]), bool(int(row[header[-1]]))))
            except (TypeError, ValueError):
                raise MalformedInputError(f"{path}:{lineno}: bad row {row}") from None
    out = []
    for i, r in sorted(rows.items()):
        r.sort()
        t, az, act = zip(*r)
        try:
            out.append(Trajectory(i, np.array(t), np.array(az), np.array(act)))
        except ValueError as exc:
            raise MalformedInputError(f"{path}: {exc}") from None
    return out


def read_truth_csv(path):
    """Ground truth as one :class:`Trajectory` per source."""
    return _read_series(path, TRUTH_HEADER, "source_id", "azimuth_rad")


def write_trajectories_csv(path, outputs):
    """One row per track per frame from a sequence of tracker outputs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for out in outputs:
            rec = out if isinstance(out, dict) else out.to_record()
            for tr in rec["tracks"]:
                w.writerow([rec["t"], tr["id"], repr(float(tr["mu_rad"])),
                            repr(float(tr["kappa"])), int(tr["active"])])


def read_trajectories_csv(path):
    """Estimated trajectories, one :class:`Trajectory` per track id."""
    return _read_series(path, TRAJECTORY_HEADER, "track_id", "mu_rad")
