"""Track lifecycle and the per-frame tracking loop.

New sources are detected from chains of clutter observations, one per
frame over a window of ``L + 1`` frames. Each chain is scored by its
marginal likelihood under a single von Mises source; the best chain above
the birth threshold seeds a track. Tracks that receive no assignment mass
for ``death_frames`` consecutive frames are dropped.
"""

from collections import deque
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from .circular_stats import LOG_TWO_PI, VonMises, angle_diff, log_bessel_i, ratio_a, ratio_a_inv, wrap
from .model import FilterConfig, FrameOrderError, ModelParams, Track, validate_frame
from .vem_filter import predict, vem_iterate

logger = logging.getLogger(__name__)

__all__ = [
    "BirthCandidate",
    "TrackOutput",
    "FrameOutput",
    "Tracker",
    "collect_clutter",
    "enumerate_candidates",
    "score_candidate",
    "score_chains",
    "birth_step",
    "death_step",
]


@dataclass
class BirthCandidate:
    """A chain of clutter observations, one per consecutive frame.

    ``running_mu``/``running_kappa`` hold the prior of the first direction
    before scoring and the posterior of the last one afterwards.
    """

    observations: list
    running_mu: float = 0.0
    running_kappa: float = 0.0
    log_tau: float = float("nan")
    step_log_factors: list = field(default_factory=list)

    @property
    def tau(self):
        return math.exp(self.log_tau)

    @property
    def azimuths(self):
        return [obs.azimuth for _, obs in self.observations]


@dataclass
class TrackOutput:
    id: int
    mu_rad: float
    kappa: float
    active: bool
    assigned_mass: float


@dataclass
class FrameOutput:
    t: int
    tracks: list
    births: list
    deaths: list
    n_iter: int = 0
    elbo_proxy: float = float("nan")
    alpha: np.ndarray = None

    def to_record(self):
        return {
            "t": self.t,
            "tracks": [{"id": tr.id, "mu_rad": tr.mu_rad, "kappa": tr.kappa,
                        "active": tr.active, "assigned_mass": tr.assigned_mass}
                       for tr in self.tracks],
            "births": list(self.births),
            "deaths": list(self.deaths),
        }


def collect_clutter(alpha, frame, threshold=0.5):
    """Observations whose clutter responsibility exceeds ``threshold``."""
    alpha = np.asarray(alpha, dtype=float)
    return [obs for obs, a0 in zip(frame.observations, alpha[:, 0]) if a0 > threshold]


def enumerate_candidates(clutter_buffer, birth_gate, window=None, max_candidates=512):
    """All gated chains through a buffer of per-frame clutter lists.

    Parameters
    ----------
    clutter_buffer : sequence of (time_index, list of Observation)
        Oldest frame first.
    birth_gate : float
        Largest wrapped jump (rad) allowed between consecutive picks.
    window : int, optional
        Required number of frames (``L + 1``); defaults to the buffer length.
    max_candidates : int
        Keep at most this many chains, preferring the smallest summed jump.
    """
    frames = list(clutter_buffer)
    window = len(frames) if window is None else window
    if window == 0 or len(frames) != window:
        return []
    times = [t for t, _ in frames]
    if any(b - a != 1 for a, b in zip(times, times[1:])):
        return []
    if any(len(obs) == 0 for _, obs in frames):
        return []

    chains = [([o], 0.0) for o in frames[0][1]]
    for _, obs_list in frames[1:]:
        grown = []
        for chain, cost in chains:
            last = chain[-1].azimuth
            for o in obs_list:
                jump = abs(angle_diff(o.azimuth, last))
                if jump <= birth_gate:
                    grown.append((chain + [o], cost + jump))
        chains = grown
        if not chains:
            return []
    if len(chains) > max_candidates:
        chains = sorted(chains, key=lambda c: c[1])[:max_candidates]
    return [BirthCandidate(list(zip(times, chain)), running_mu=chain[0].azimuth,
                           running_kappa=0.0)
            for chain, _ in chains]


def score_candidate(candidate, kappa_y, kappa_d):
    """Marginal likelihood of a chain under a single von Mises source.

    Runs the forward recursion over the chain: fold each observation into
    the running prior by harmonic addition, accumulate
    ``log I0(k_bar) - log 2pi - log I0(kappa_y w) - log I0(k_hat)``, then
    propagate through the dynamics.

    Returns a scored copy; ``running_mu``/``running_kappa`` are the
    posterior of the last direction given the whole chain.
    """
    mu_hat, k_hat = candidate.running_mu, candidate.running_kappa
    log_tau = 0.0
    factors = []
    mu_bar = mu_hat
    k_bar = k_hat
    n = len(candidate.observations)
    for i, (_, obs) in enumerate(candidate.observations):
        k_obs = kappa_y * obs.confidence
        k_bar2 = (k_hat ** 2 + k_obs ** 2
                  + 2.0 * k_hat * k_obs * math.cos(obs.azimuth - mu_hat))
        k_bar = math.sqrt(max(k_bar2, 0.0))
        mu_bar = math.atan2(k_hat * math.sin(mu_hat) + k_obs * math.sin(obs.azimuth),
                            k_hat * math.cos(mu_hat) + k_obs * math.cos(obs.azimuth))
        f = (log_bessel_i(0, k_bar) - LOG_TWO_PI
             - log_bessel_i(0, k_obs) - log_bessel_i(0, k_hat))
        factors.append(f)
        log_tau += f
        if i < n - 1:
            pred = predict(VonMises(mu_bar, k_bar), kappa_d).predictive
            mu_hat, k_hat = pred.mu, pred.kappa
    return replace(candidate, running_mu=float(wrap(mu_bar)), running_kappa=k_bar,
                   log_tau=log_tau, step_log_factors=factors)


def score_chains(azimuths, confidences, kappa_y, kappa_d, prior_kappa=0.0):
    """Vectorised log marginal likelihood for many chains at once.

    ``azimuths`` and ``confidences`` are ``(J, L + 1)`` arrays. Returns
    ``(log_tau, mu, kappa)`` arrays of length J, the latter two being the
    posterior of the last direction.
    """
    y = np.atleast_2d(np.asarray(azimuths, dtype=float))
    w = np.atleast_2d(np.asarray(confidences, dtype=float))
    n_chain, length = y.shape
    mu_hat = y[:, 0].copy()
    k_hat = np.full(n_chain, float(prior_kappa))
    log_tau = np.zeros(n_chain)
    a_d = ratio_a(float(kappa_d))
    mu_bar = mu_hat
    k_bar = k_hat
    for i in range(length):
        k_obs = kappa_y * w[:, i]
        s = k_hat * np.sin(mu_hat) + k_obs * np.sin(y[:, i])
        c = k_hat * np.cos(mu_hat) + k_obs * np.cos(y[:, i])
        k_bar = np.sqrt(np.maximum(k_hat ** 2 + k_obs ** 2
                                   + 2.0 * k_hat * k_obs * np.cos(y[:, i] - mu_hat), 0.0))
        mu_bar = np.arctan2(s, c)
        log_tau += (np.asarray(log_bessel_i(0, k_bar)) - LOG_TWO_PI
                    - np.asarray(log_bessel_i(0, k_obs)) - np.asarray(log_bessel_i(0, k_hat)))
        if i < length - 1:
            mu_hat = mu_bar
            k_hat = np.minimum(np.asarray(ratio_a_inv(np.asarray(ratio_a(k_bar)) * a_d)), k_bar)
    return log_tau, mu_bar, k_bar


class Tracker:
    """Online multi-source direction tracker.

    Each :meth:`step` predicts every track, runs variational EM on the
    frame, gathers clutter, possibly gives birth to one track and removes
    tracks that have been unsupported for too long.

    A tracker owns mutable state and is not thread-safe.
    """

    def __init__(self, params=None, config=None):
        self.config = config or FilterConfig()
        params = params or ModelParams(kappa_y=10.0, kappa_d=100.0, weights=(1.0,))
        self.kappa_y = params.kappa_y
        self.kappa_d = params.kappa_d
        self.clutter_weight = 1.0
        self.tracks = []
        self.clutter_buffer = deque(maxlen=self.config.birth_window_L + 1)
        self.frame_clock = None
        self._next_id = 1
        self.last_state = None

    @property
    def params(self):
        weights = (self.clutter_weight,) + tuple(t.prior_weight for t in self.tracks)
        return ModelParams(self.kappa_y, self.kappa_d, weights)

    def _set_weights(self, weights):
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        self.clutter_weight = float(w[0])
        for tr, wn in zip(self.tracks, w[1:]):
            tr.prior_weight = float(wn)

    def add_track(self, posterior, prior_weight=None, time_index=None, assigned_mass=0.0):
        """Create a track. Its weight defaults to half the clutter weight;
        all weights are then renormalised."""
        if prior_weight is None:
            prior_weight = 0.5 * self.clutter_weight
        track = Track(self._next_id, posterior, 0.0)
        self._next_id += 1
        self.tracks.append(track)
        self._set_weights([self.clutter_weight]
                          + [t.prior_weight for t in self.tracks[:-1]] + [prior_weight])
        if time_index is not None:
            track.record(time_index, assigned_mass)
            track.active = self._vad(track)
        return track

    def _vad(self, track):
        return track.recent_mass(self.config.vad_window_D) > self.config.vad_threshold_delta

    def step(self, frame):
        """Process one frame and return its :class:`FrameOutput`."""
        frame = validate_frame(frame)
        if self.frame_clock is not None and frame.time_index != self.frame_clock + 1:
            raise FrameOrderError(
                f"expected frame {self.frame_clock + 1}, got {frame.time_index}")
        cfg = self.config

        predicted = [predict(tr.posterior, self.kappa_d, tr.id) for tr in self.tracks]
        state = vem_iterate(predicted, frame, self.params, cfg)
        self.last_state = state
        self._absorb_params(state.params, has_data=len(frame) > 0)

        w = frame.confidences
        masses = (state.alpha[:, 1:] * w[:, None]).sum(axis=0) if len(frame) else \
            np.zeros(len(self.tracks))
        for tr, post, mass in zip(self.tracks, state.posteriors, masses):
            tr.posterior = post
            tr.record(frame.time_index, mass)

        clutter = collect_clutter(state.alpha, frame, cfg.clutter_threshold) \
            if len(frame) else []
        self.clutter_buffer.append((frame.time_index, clutter))

        births = []
        if cfg.enable_birth:
            born = birth_step(self, frame.time_index)
            if born is not None:
                births.append(born.id)
        deaths = death_step(self, masses, exclude=births)

        for tr in self.tracks:
            tr.active = self._vad(tr)
        self.frame_clock = frame.time_index

        outputs = [TrackOutput(tr.id, tr.posterior.mu, tr.posterior.kappa, tr.active,
                               tr.history[-1].assigned_mass)
                   for tr in self.tracks]
        return FrameOutput(frame.time_index, outputs, births, deaths,
                           state.n_iter, state.elbo_proxy, state.alpha)

    def _absorb_params(self, new, has_data):
        """Blend per-frame estimates into the running parameters."""
        if not has_data:
            return
        s = self.config.param_smoothing
        self.kappa_y = s * self.kappa_y + (1.0 - s) * new.kappa_y
        self.kappa_d = s * self.kappa_d + (1.0 - s) * new.kappa_d
        old = np.asarray(self.params.weights)
        self._set_weights(s * old + (1.0 - s) * np.asarray(new.weights))

    def run(self, frames):
        return [self.step(f) for f in frames]


def birth_step(tracker, time_index=None):
    """Seed at most one new track from the clutter buffer.

    The best-scoring chain is accepted only if its marginal likelihood is
    strictly above ``birth_threshold_tau0``. Its observations leave the
    buffer and the new track starts from the chain's posterior for the
    latest frame. Returns the new track or ``None``.
    """
    cfg = tracker.config
    window = cfg.birth_window_L + 1
    candidates = enumerate_candidates(tracker.clutter_buffer, cfg.birth_gate, window,
                                      cfg.max_candidates)
    if not candidates:
        return None
    az = np.array([c.azimuths for c in candidates])
    conf = np.array([[o.confidence for _, o in c.observations] for c in candidates])
    log_tau, mu, kappa = score_chains(az, conf, tracker.kappa_y, tracker.kappa_d)
    best = int(np.argmax(log_tau))
    if not log_tau[best] > math.log(cfg.birth_threshold_tau0):
        return None
    winner = candidates[best]
    for t, obs in winner.observations:
        for i, (bt, bobs) in enumerate(tracker.clutter_buffer):
            if bt == t:
                tracker.clutter_buffer[i] = (bt, [o for o in bobs if o is not obs])
    last_t, last_obs = winner.observations[-1]
    t = last_t if time_index is None else time_index
    track = tracker.add_track(VonMises(float(mu[best]), float(kappa[best])),
                              time_index=t, assigned_mass=last_obs.confidence)
    logger.debug("birth of track %d at t=%s (log tau %.3f)", track.id, t, log_tau[best])
    return track


def death_step(tracker, masses, exclude=()):
    """Update silence counters and drop tracks silent for ``death_frames``.

    ``masses`` holds this frame's assigned mass (sum of responsibility
    times confidence) for the tracks that took part in the frame, in order.
    Returns the ids of removed tracks.
    """
    cfg = tracker.config
    for tr, mass in zip(tracker.tracks, masses):
        if tr.id in exclude:
            continue
        if mass < cfg.vad_threshold_delta:
            tr.frames_since_support += 1
        else:
            tr.frames_since_support = 0
    dead = [tr.id for tr in tracker.tracks if tr.frames_since_support >= cfg.death_frames]
    if dead:
        keep = [tr for tr in tracker.tracks if tr.id not in dead]
        weights = [tracker.clutter_weight] + [tr.prior_weight for tr in keep]
        tracker.tracks = keep
        tracker._set_weights(weights)
        logger.debug("tracks %s removed", dead)
    return dead
