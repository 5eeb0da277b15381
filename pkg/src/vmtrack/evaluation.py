"""Scoring estimated trajectories against ground truth.

Estimated tracks are matched one-to-one to true sources by a greedy pass
over mean angular errors; the matched pairs are then scored frame by frame
for missed detections (MD), false alarms (FA) and mean absolute error (MAE).
"""

from dataclasses import asdict, dataclass, field
import json

import numpy as np

from .circular_stats import angle_diff

__all__ = [
    "Trajectory",
    "Association",
    "MetricsReport",
    "detect_activity",
    "trajectories_from_outputs",
    "trajectories_from_truth",
    "associate",
    "compute_metrics",
    "evaluate",
]


@dataclass
class Trajectory:
    """Direction of one source or track over the frames where it exists.

    ``t`` is sorted and unique; ``active[i]`` says whether the source is
    emitting (or the track is declared active) at ``t[i]``.
    """

    id: int
    t: np.ndarray
    azimuth: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=int)
        self.azimuth = np.asarray(self.azimuth, dtype=float)
        self.active = np.asarray(self.active, dtype=bool)
        if not (self.t.shape == self.azimuth.shape == self.active.shape):
            raise ValueError(f"trajectory {self.id}: field lengths differ")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError(f"trajectory {self.id}: times must increase")

    def active_map(self):
        """``{t: azimuth}`` over active frames."""
        return {int(t): float(a) for t, a, on in zip(self.t, self.azimuth, self.active) if on}


@dataclass
class Association:
    pairs: dict                      # track id -> truth id
    mean_errors: dict = field(default_factory=dict)   # (track id, truth id) -> degrees
    gate_deg: float = 15.0


@dataclass
class MetricsReport:
    """Aggregate scores for one run.

    ``mae_deg`` is 0.0 when no frame is matched; check ``n_matched_frames``
    before reading it as an accuracy.
    """

    mae_deg: float
    md_pct: float
    fa_pct: float
    per_source: dict
    n_active_frames: int
    n_matched_frames: int = 0
    fa_denominator: str = "estimates"

    def to_dict(self):
        d = asdict(self)
        d["per_source"] = {str(k): v for k, v in self.per_source.items()}
        return d

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def summary_line(self):
        return (f"MD {self.md_pct:.1f}%  FA {self.fa_pct:.1f}%  MAE {self.mae_deg:.2f} deg  "
                f"({self.n_active_frames} voice-active frames)")


def detect_activity(track_history, alpha_history=None, config=None, window=None, delta=None):
    """Windowed activity decision for one track.

    Parameters
    ----------
    track_history : sequence of HistoryEntry
        The track's per-frame records; only ``time_index`` is used when
        ``alpha_history`` is given, otherwise ``assigned_mass`` too.
    alpha_history : sequence of (alpha_column, confidences), optional
        The track's responsibilities and the frame confidences, aligned
        with ``track_history``.
    config : FilterConfig, optional
        Supplies the window ``vad_window_D`` and threshold
        ``vad_threshold_delta`` unless ``window``/``delta`` are given.

    Returns
    -------
    list of (int, bool)
        Active at ``t`` iff the weighted assignment mass summed over ``t``
        and the preceding ``D`` records is strictly above the threshold.
    """
    if window is None:
        window = config.vad_window_D if config is not None else 2
    if delta is None:
        delta = config.vad_threshold_delta if config is not None else 0.025
    times = [h.time_index for h in track_history]
    if alpha_history is None:
        mass = np.array([h.assigned_mass for h in track_history], dtype=float)
    else:
        if len(alpha_history) != len(times):
            raise ValueError("histories are not aligned")
        mass = np.array([float(np.dot(np.asarray(a, dtype=float), np.asarray(w, dtype=float)))
                         for a, w in alpha_history])
    csum = np.concatenate([[0.0], np.cumsum(mass)])
    out = []
    for i, t in enumerate(times):
        lo = max(0, i - window)
        out.append((t, bool(csum[i + 1] - csum[lo] > delta)))
    return out


def trajectories_from_outputs(outputs):
    """Gather per-frame tracker outputs into one :class:`Trajectory` per track.

    Accepts :class:`FrameOutput` objects or their ``to_record()`` dicts.
    """
    rows = {}
    for out in outputs:
        rec = out if isinstance(out, dict) else out.to_record()
        for tr in rec["tracks"]:
            rows.setdefault(int(tr["id"]), []).append(
                (int(rec["t"]), float(tr["mu_rad"]), bool(tr["active"])))
    return [Trajectory(i, *map(np.array, zip(*r))) for i, r in sorted(rows.items())]


def trajectories_from_truth(truth):
    """One :class:`Trajectory` per source of a :class:`GroundTruth`."""
    n_frames = truth.azimuth.shape[0]
    t = np.arange(n_frames)
    return [Trajectory(sid, t, truth.azimuth[:, i], truth.active[:, i])
            for i, sid in enumerate(truth.source_ids)]


def _abs_err_deg(a, b):
    return np.degrees(np.abs(np.asarray(angle_diff(a, b))))


def associate(estimated, ground_truth, gate_deg=15.0):
    """Greedy one-to-one matching of tracks to sources.

    Every (track, source) pair gets the mean wrapped error over the frames
    where both are active. The smallest error is matched first, ties going
    to the lower ``(track id, source id)``; both are then removed. Pairs
    above ``gate_deg`` or without common active frames stay unmatched.
    """
    errors = {}
    truth_maps = [(g.id, g.active_map()) for g in ground_truth]
    for est in estimated:
        emap = est.active_map()
        for gid, gmap in truth_maps:
            common = sorted(emap.keys() & gmap.keys())
            if not common:
                continue
            e = _abs_err_deg([emap[t] for t in common], [gmap[t] for t in common])
            errors[(est.id, gid)] = float(np.mean(e))
    pairs = {}
    used_truth = set()
    for (tid, gid), err in sorted(errors.items(), key=lambda kv: (kv[1], kv[0])):
        if err > gate_deg:
            break
        if tid in pairs or gid in used_truth:
            continue
        pairs[tid] = gid
        used_truth.add(gid)
    return Association(pairs, errors, gate_deg)


def compute_metrics(association, estimated, ground_truth, fa_denominator="estimates"):
    """Frame-level MD, FA and MAE for a given association.

    Only voice-active frames (at least one source active) are scored.

    * A source frame is a miss unless its matched track is active there and
      within the gate.
    * An active track frame is a false alarm unless it is matched to a
      source that is active there and within the gate.
    * MAE averages the absolute wrapped error over the frames that are
      neither.

    ``fa_denominator`` selects what FA is a percentage of: ``"estimates"``
    (active track frames) or ``"truth"`` (active source frames).
    """
    if fa_denominator not in ("estimates", "truth"):
        raise ValueError(f"unknown FA denominator {fa_denominator!r}")
    gate = association.gate_deg
    truth_maps = {g.id: g.active_map() for g in ground_truth}
    voice = set()
    for m in truth_maps.values():
        voice.update(m)
    est_maps = {e.id: e.active_map() for e in estimated}
    by_truth = {gid: tid for tid, gid in association.pairs.items()}

    hit_errors = []
    n_truth_frames = n_miss = 0
    per_source = {}
    for gid, gmap in sorted(truth_maps.items()):
        tid = by_truth.get(gid)
        emap = est_maps.get(tid, {})
        errs, misses = [], 0
        for t, az in gmap.items():
            if t in emap:
                e = float(_abs_err_deg(emap[t], az))
                if e <= gate:
                    errs.append(e)
                    continue
            misses += 1
        n = len(gmap)
        per_source[gid] = {
            "track_id": tid,
            "n_active": n,
            "md_pct": 100.0 * misses / n if n else 0.0,
            "mae_deg": float(np.mean(errs)) if errs else 0.0,
        }
        hit_errors.extend(errs)
        n_truth_frames += n
        n_miss += misses

    n_est_frames = n_fa = 0
    for tid, emap in est_maps.items():
        gmap = truth_maps.get(association.pairs.get(tid), {})
        for t, az in emap.items():
            if t not in voice:
                continue
            n_est_frames += 1
            if t not in gmap or float(_abs_err_deg(az, gmap[t])) > gate:
                n_fa += 1

    denom = n_est_frames if fa_denominator == "estimates" else n_truth_frames
    return MetricsReport(
        mae_deg=float(np.mean(hit_errors)) if hit_errors else 0.0,
        md_pct=100.0 * n_miss / n_truth_frames if n_truth_frames else 0.0,
        fa_pct=min(100.0, 100.0 * n_fa / denom) if denom else 0.0,
        per_source=per_source,
        n_active_frames=len(voice),
        n_matched_frames=len(hit_errors),
        fa_denominator=fa_denominator,
    )


def evaluate(estimated, ground_truth, gate_deg=15.0, fa_denominator="estimates"):
    """:func:`associate` followed by :func:`compute_metrics`."""
    assoc = associate(estimated, ground_truth, gate_deg)
    return compute_metrics(assoc, estimated, ground_truth, fa_denominator)
