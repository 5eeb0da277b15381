"""Domain types shared by the filter, the track manager, the simulator and
the evaluation code."""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .circular_stats import VonMises, wrap

__all__ = [
    "MalformedInputError",
    "FrameOrderError",
    "Observation",
    "Frame",
    "Track",
    "HistoryEntry",
    "ModelParams",
    "FilterConfig",
    "validate_frame",
    "check_assignment",
]


class MalformedInputError(ValueError):
    """An observation or record could not be interpreted."""


class FrameOrderError(ValueError):
    """Frames were presented out of order."""


@dataclass(frozen=True)
class Observation:
    """One observed direction of arrival with a confidence weight in [0, 1]."""

    azimuth: float
    confidence: float = 1.0


@dataclass(frozen=True)
class Frame:
    time_index: int
    observations: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))

    def __len__(self):
        return len(self.observations)

    @property
    def azimuths(self):
        return np.array([o.azimuth for o in self.observations], dtype=float)

    @property
    def confidences(self):
        return np.array([o.confidence for o in self.observations], dtype=float)


def validate_frame(frame, strict=False):
    """Return a cleaned copy of ``frame``.

    Azimuths are wrapped to (-pi, pi]. Confidences outside [0, 1] are
    clamped, or rejected when ``strict`` is set. Non-finite values are
    always rejected.

    Raises
    ------
    MalformedInputError
        Names the index of the offending observation.
    """
    if frame.time_index < 0:
        raise MalformedInputError(f"negative time index {frame.time_index}")
    clean = []
    for i, obs in enumerate(frame.observations):
        az, conf = float(obs.azimuth), float(obs.confidence)
        if not (math.isfinite(az) and math.isfinite(conf)):
            raise MalformedInputError(
                f"frame {frame.time_index}: observation {i} is not finite ({az}, {conf})")
        if conf < 0.0 or conf > 1.0:
            if strict:
                raise MalformedInputError(
                    f"frame {frame.time_index}: observation {i} confidence {conf} outside [0, 1]")
            conf = min(max(conf, 0.0), 1.0)
        clean.append(Observation(float(wrap(az)), conf))
    return Frame(int(frame.time_index), tuple(clean))


@dataclass(frozen=True)
class HistoryEntry:
    time_index: int
    posterior: VonMises
    assigned_mass: float


@dataclass
class Track:
    """One hypothesised source.

    ``prior_weight`` is the mixing weight of this source in the assignment
    prior; the clutter weight lives in :class:`ModelParams`.
    """

    id: int
    posterior: VonMises
    prior_weight: float
    history: list = field(default_factory=list)
    active: bool = False
    frames_since_support: int = 0

    def record(self, time_index, assigned_mass):
        if self.history and time_index <= self.history[-1].time_index:
            raise FrameOrderError(
                f"track {self.id}: history time {time_index} does not increase")
        self.history.append(HistoryEntry(int(time_index), self.posterior, float(assigned_mass)))

    def recent_mass(self, window):
        """Assigned mass over the last ``window + 1`` recorded frames."""
        return sum(h.assigned_mass for h in self.history[-(window + 1):])


@dataclass(frozen=True)
class ModelParams:
    """Observation and dynamics concentrations plus assignment priors.

    ``weights[0]`` is the clutter weight, ``weights[n]`` the prior of the
    n-th track in the order the filter was given.
    """

    kappa_y: float
    kappa_d: float
    weights: tuple = (1.0,)

    def __post_init__(self):
        if not (self.kappa_y > 0 and self.kappa_d > 0):
            raise ValueError("concentrations must be positive")
        w = tuple(float(x) for x in self.weights)
        if any(x < 0 for x in w):
            raise ValueError("prior weights must be non-negative")
        object.__setattr__(self, "weights", w)

    @property
    def clutter_weight(self):
        return self.weights[0]

    @property
    def n_tracks(self):
        return len(self.weights) - 1

    def normalized(self):
        w = np.asarray(self.weights)
        return replace(self, weights=tuple(w / w.sum()))


@dataclass
class FilterConfig:
    """Tracker settings.

    The first four fields are the nominal settings (window L = 2, birth
    threshold 0.5, activity window D = 2, activity threshold 0.025).
    """

    birth_window_L: int = 2
    birth_threshold_tau0: float = 0.5
    vad_window_D: int = 2
    vad_threshold_delta: float = 0.025
    vem_max_iters: int = 20
    vem_convergence_tol: float = 1e-6
    death_frames: int = 10
    birth_gate: float = math.radians(20.0)
    clutter_threshold: float = 0.5
    max_candidates: int = 512
    enable_birth: bool = True
    # weight kept on the previous frame's parameters; 0 gives per-frame estimates
    param_smoothing: float = 0.9
    learn_kappa_y: bool = True
    learn_kappa_d: bool = True
    kappa_min: float = 1e-3
    kappa_max: float = 1e4
    line_search_step: float = 0.1
    line_search_trials: int = 25
    # alternative linear E-Z weights and the uncorrected kappa_d derivative, for comparison runs
    literal_ez: bool = False
    literal_kd_gradient: bool = False
    # evaluate the bound after every sweep rather than only after the last one
    record_elbo_trace: bool = True

    def __post_init__(self):
        positive = ("vem_max_iters", "vem_convergence_tol", "death_frames", "birth_gate",
                    "max_candidates", "kappa_min", "kappa_max", "line_search_step",
                    "line_search_trials", "birth_threshold_tau0", "vad_threshold_delta")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.birth_window_L < 0 or self.vad_window_D < 0:
            raise ValueError("window lengths must be non-negative")
        if not 0.0 <= self.param_smoothing < 1.0:
            raise ValueError("param_smoothing must lie in [0, 1)")
        if not 0.0 <= self.clutter_threshold <= 1.0:
            raise ValueError("clutter_threshold must lie in [0, 1]")


def check_assignment(alpha, n_obs=None, n_tracks=None, atol=1e-10):
    """Validate an assignment matrix (rows: observations, column 0: clutter)."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 2:
        raise ValueError("assignment matrix must be 2-D")
    if n_obs is not None and alpha.shape[0] != n_obs:
        raise ValueError(f"expected {n_obs} rows, got {alpha.shape[0]}")
    if n_tracks is not None and alpha.shape[1] != n_tracks + 1:
        raise ValueError(f"expected {n_tracks + 1} columns, got {alpha.shape[1]}")
    if np.any(alpha < 0) or np.any(alpha > 1 + atol):
        raise ValueError("assignment probabilities must lie in [0, 1]")
    if alpha.shape[0] and not np.allclose(alpha.sum(axis=1), 1.0, atol=atol, rtol=0):
        raise ValueError("assignment rows must sum to one")
    return alpha
