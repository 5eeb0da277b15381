"""Synthetic direction-of-arrival scenarios with ground truth.

Sources follow von Mises random walks (optionally with a constant angular
drift), emit noisy detections while active, and are mixed with uniform
clutter.
"""

from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .circular_stats import VonMises, vm_sample, wrap
from .model import Frame, Observation

__all__ = ["ScenarioSpec", "GroundTruth", "generate", "crossing_scenario"]


@dataclass
class ScenarioSpec:
    """Scenario description.

    ``detection_prob`` may be one value or one per source.
    ``confidence_law`` is ``{"kind": "fixed", "value": w}`` or
    ``{"kind": "uniform", "low": a, "high": b}``. ``activity_intervals``
    holds, per source, a list of half-open ``[start, end)`` frame spans;
    ``None`` means always active. ``initial_azimuths`` (``None`` draws
    uniformly) and ``angular_velocity`` (rad/frame) shape the trajectories.
    """

    n_sources: int = 1
    frames_T: int = 100
    dynamics_kappa: float = 1e4
    obs_kappa: float = 10.0
    detection_prob: object = 1.0
    clutter_rate: float = 0.0
    confidence_law: dict = field(default_factory=lambda: {"kind": "uniform", "low": 0.3, "high": 1.0})
    activity_intervals: list = None
    rng_seed: int = 0
    initial_azimuths: list = None
    angular_velocity: list = None
    fps: float = 125.0

    def __post_init__(self):
        if self.n_sources < 0 or self.frames_T < 0:
            raise ValueError("n_sources and frames_T must be non-negative")
        if self.dynamics_kappa < 0 or self.obs_kappa < 0 or self.clutter_rate < 0:
            raise ValueError("concentrations and rates must be non-negative")
        for p in self.detection_probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError("detection probabilities must lie in [0, 1]")
        kind = self.confidence_law.get("kind")
        if kind not in ("fixed", "uniform"):
            raise ValueError(f"unknown confidence law {kind!r}")
        if self.activity_intervals is not None:
            if len(self.activity_intervals) != self.n_sources:
                raise ValueError("need one activity interval list per source")
            for spans in self.activity_intervals:
                for start, end in spans:
                    if not 0 <= start <= end <= self.frames_T:
                        raise ValueError(f"activity span {(start, end)} outside [0, {self.frames_T})")
        for name in ("initial_azimuths", "angular_velocity"):
            v = getattr(self, name)
            if v is not None and len(v) != self.n_sources:
                raise ValueError(f"{name} needs one entry per source")

    @property
    def detection_probs(self):
        if np.ndim(self.detection_prob) == 0:
            return [float(self.detection_prob)] * self.n_sources
        return [float(p) for p in self.detection_prob]

    def is_active(self, source, t):
        if self.activity_intervals is None:
            return True
        return any(start <= t < end for start, end in self.activity_intervals[source])

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GroundTruth:
    """Per-frame source directions; ``azimuth[t, i]`` and ``active[t, i]``.

    Source ids are ``1..n_sources``; column ``i`` holds source ``i + 1``.
    """

    azimuth: np.ndarray
    active: np.ndarray

    @property
    def source_ids(self):
        return list(range(1, self.azimuth.shape[1] + 1))

    def rows(self):
        """``(t, source_id, azimuth_rad, active_flag)`` tuples in file order."""
        T, n = self.azimuth.shape
        return [(t, i + 1, float(self.azimuth[t, i]), bool(self.active[t, i]))
                for t in range(T) for i in range(n)]


def _confidence(law, rng):
    if law["kind"] == "fixed":
        return float(law["value"])
    return float(rng.uniform(law["low"], law["high"]))


def generate(spec):
    """Draw one scenario. Deterministic for a given ``spec.rng_seed``.

    Returns
    -------
    frames : list of Frame
    truth : GroundTruth
    """
    rng = np.random.default_rng(spec.rng_seed)
    T, n = spec.frames_T, spec.n_sources
    az = np.zeros((T, n))
    active = np.zeros((T, n), dtype=bool)
    drift = spec.angular_velocity or [0.0] * n
    for i in range(n):
        if spec.initial_azimuths is None:
            s = float(rng.uniform(-math.pi, math.pi))
        else:
            s = float(wrap(spec.initial_azimuths[i]))
        for t in range(T):
            if t > 0:
                s = vm_sample(VonMises(s + drift[i], spec.dynamics_kappa), rng)
            az[t, i] = s
            active[t, i] = spec.is_active(i, t)

    probs = spec.detection_probs
    frames = []
    for t in range(T):
        obs = []
        for i in range(n):
            if active[t, i] and rng.random() < probs[i]:
                w = _confidence(spec.confidence_law, rng)
                y = vm_sample(VonMises(az[t, i], w * spec.obs_kappa), rng)
                obs.append(Observation(y, w))
        for _ in range(rng.poisson(spec.clutter_rate)):
            w = _confidence(spec.confidence_law, rng)
            obs.append(Observation(float(wrap(rng.uniform(-math.pi, math.pi))), w))
        order = rng.permutation(len(obs))
        frames.append(Frame(t, tuple(obs[k] for k in order)))
    return frames, GroundTruth(az, active)


def crossing_scenario(seed=0, frames_T=1000, span_deg=60.0, **overrides):
    """Two sources sweeping through each other at constant angular speed.

    Source 1 moves from ``-span_deg`` to ``+span_deg`` and source 2 the
    other way, crossing half-way through the sequence.
    """
    span = math.radians(span_deg)
    speed = 2.0 * span / max(frames_T - 1, 1)
    params = dict(n_sources=2, frames_T=frames_T, dynamics_kappa=1e5, obs_kappa=10.0,
                  detection_prob=0.9, clutter_rate=1.0, rng_seed=seed,
                  initial_azimuths=[-span, span], angular_velocity=[speed, -speed])
    params.update(overrides)
    return ScenarioSpec(**params)
