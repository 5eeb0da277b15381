"""One filtering time step: von Mises prediction followed by variational EM
over source directions (E-S), observation-to-source assignments (E-Z) and
model parameters (M).

Assignment matrices are ``(M, N + 1)`` arrays; column 0 is clutter and
column ``n`` belongs to the n-th entry of the predicted-track list.
"""

from dataclasses import dataclass, field, replace
import logging
import math
import warnings

import numpy as np

from .circular_stats import (
    LOG_TWO_PI,
    VonMises,
    bessel_i,
    harmonic_sum,
    log_bessel_i,
    ratio_a,
    ratio_a_inv,
    ratio_a_inv_prime,
    ratio_a_prime,
    vm_entropy,
    wrap,
)
from .model import FilterConfig, ModelParams

logger = logging.getLogger(__name__)

__all__ = [
    "PredictedTrack",
    "VemState",
    "EmptyFrameWarning",
    "predict",
    "e_s_step",
    "e_s_step_closed_form",
    "e_z_step",
    "q_kappa_y",
    "grad_kappa_y",
    "q_kappa_d",
    "grad_kappa_d",
    "m_step",
    "free_energy",
    "vem_iterate",
]


class EmptyFrameWarning(UserWarning):
    """The M-step received a frame without observations."""


@dataclass(frozen=True)
class PredictedTrack:
    """Predictive density of one track, plus the posterior it came from.

    Keeping ``prior`` lets the filter re-predict when the dynamics
    concentration is re-estimated.
    """

    track_id: int
    predictive: VonMises
    prior: VonMises


@dataclass
class VemState:
    alpha: np.ndarray
    posteriors: list
    params: ModelParams
    elbo_proxy: float
    n_iter: int
    converged: bool
    predicted: list = field(default_factory=list)
    elbo_trace: list = field(default_factory=list)


def predict(posterior_prev, kappa_d, track_id=-1):
    """Propagate a posterior through von Mises random-walk dynamics.

    The mean is kept and the concentration becomes
    ``A^-1(A(kappa_prev) A(kappa_d))``, capped at ``kappa_prev`` because
    the rational inverse overshoots by up to ~7% for mid-range arguments.
    """
    k_prev = posterior_prev.kappa
    k_tilde = ratio_a_inv(ratio_a(k_prev) * ratio_a(float(kappa_d)))
    return PredictedTrack(track_id, VonMises(posterior_prev.mu, min(k_tilde, k_prev)),
                          posterior_prev)


def _track_arrays(dists):
    mu = np.array([d.mu for d in dists], dtype=float)
    kappa = np.array([d.kappa for d in dists], dtype=float)
    return mu, kappa


def e_s_step(predicted, frame, alpha, kappa_y):
    """Variational posterior of every source direction.

    Each posterior is the harmonic sum of the observation terms
    ``(kappa_y * alpha_mn * w_m, y_m)`` and the predictive term.
    """
    y, w = frame.azimuths, frame.confidences
    alpha = np.asarray(alpha, dtype=float)
    out = []
    for n, pt in enumerate(predicted):
        amp = kappa_y * alpha[:, n + 1] * w if len(y) else np.zeros(0)
        if not np.any(amp > 0):
            out.append(pt.predictive)
            continue
        r, phi = harmonic_sum(np.append(amp, pt.predictive.kappa),
                              np.append(y, pt.predictive.mu))
        out.append(VonMises(phi, r))
    return out


def e_s_step_closed_form(predicted, frame, alpha, kappa_y):
    """Same posteriors as :func:`e_s_step`, written out term by term.

    The concentration is the square root of the squared amplitudes plus
    every pairwise cross term; kept as an independent check of the
    harmonic-sum route.
    """
    y, w = frame.azimuths, frame.confidences
    alpha = np.asarray(alpha, dtype=float)
    out = []
    for n, pt in enumerate(predicted):
        mu_p, k_p = pt.predictive.mu, pt.predictive.kappa
        b = alpha[:, n + 1] * w if len(y) else np.zeros(0)
        if not np.any(b > 0):
            out.append(pt.predictive)
            continue
        num = kappa_y * np.sum(b * np.sin(y)) + k_p * math.sin(mu_p)
        den = kappa_y * np.sum(b * np.cos(y)) + k_p * math.cos(mu_p)
        mu = math.atan2(num, den)
        cross = 0.0
        for m in range(len(y)):
            for l in range(m + 1, len(y)):
                cross += b[m] * b[l] * math.cos(y[m] - y[l])
        k2 = (kappa_y ** 2 * np.sum(b * b) + k_p ** 2
              + 2.0 * kappa_y ** 2 * cross
              + 2.0 * kappa_y * k_p * np.sum(b * np.cos(y - mu_p)))
        kappa = math.sqrt(max(k2, 0.0))
        out.append(VonMises(mu, kappa) if kappa >= 1e-12 else VonMises(0.0, 0.0))
    return out


def _log_weights(weights):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(weights, dtype=float))


def _expected_loglik(posteriors, y, w, kappa_y):
    """``E_q[log M(y_m; s_n, w_m kappa_y)]`` for every observation/track pair."""
    mu, kappa = _track_arrays(posteriors)
    a = np.asarray(ratio_a(kappa)) if len(kappa) else np.zeros(0)
    wk = w * kappa_y
    return (wk[:, None] * a[None, :] * np.cos(y[:, None] - mu[None, :])
            - LOG_TWO_PI - np.asarray(log_bessel_i(0, wk))[:, None])


def e_z_step(posteriors, frame, params, literal=False):
    """Assignment posterior ``alpha[m, n] = q(z_m = n)``.

    By default the responsibilities are the normalised exponentials of the
    expected log-likelihoods, computed in log space. ``literal=True`` uses
    the linear weights ``w kappa_y A(w kappa_y) cos(y - mu)`` (negative
    values clipped to zero) against ``1 / 2pi`` for clutter.
    """
    y, w = frame.azimuths, frame.confidences
    n_tracks = len(posteriors)
    if len(params.weights) != n_tracks + 1:
        raise ValueError("prior weights do not match the number of tracks")
    if len(y) == 0:
        return np.zeros((0, n_tracks + 1))
    if n_tracks == 0:
        return np.ones((len(y), 1))
    if literal:
        mu, _ = _track_arrays(posteriors)
        wk = w * params.kappa_y
        beta = (wk * np.asarray(ratio_a(wk)))[:, None] * np.cos(y[:, None] - mu[None, :])
        beta = np.hstack([np.full((len(y), 1), 1.0 / (2.0 * np.pi)), np.maximum(beta, 0.0)])
        un = beta * np.asarray(params.weights)[None, :]
        return un / un.sum(axis=1, keepdims=True)
    log_pi = _log_weights(params.weights)
    logits = np.empty((len(y), n_tracks + 1))
    logits[:, 0] = log_pi[0] - LOG_TWO_PI
    logits[:, 1:] = log_pi[None, 1:] + _expected_loglik(posteriors, y, w, params.kappa_y)
    logits -= logits.max(axis=1, keepdims=True)
    alpha = np.exp(logits)
    return alpha / alpha.sum(axis=1, keepdims=True)


class _KappaYTerms:
    """kappa_y-dependent share of Q with the kappa-independent pieces cached."""

    def __init__(self, alpha, posteriors, frame):
        y, self.w = frame.azimuths, frame.confidences
        mu, kappa = _track_arrays(posteriors)
        a = np.asarray(ratio_a(kappa))
        resp = np.asarray(alpha, dtype=float)[:, 1:]
        # per observation: sum_n alpha_mn cos(y_m - mu_n) A(kappa_n), and sum_n alpha_mn
        self.aligned = np.sum(resp * np.cos(y[:, None] - mu[None, :]) * a[None, :], axis=1)
        self.mass = resp.sum(axis=1)

    def value(self, kappa_y):
        wk = self.w * kappa_y
        return float(np.sum(wk * self.aligned - self.mass * np.asarray(log_bessel_i(0, wk))))

    def grad(self, kappa_y):
        a_obs = np.asarray(ratio_a(self.w * kappa_y))
        return float(np.sum(self.w * (self.aligned - self.mass * a_obs)))


class _KappaDTerms:
    """kappa_d-dependent share of Q with the kappa-independent pieces cached.

    Track counts are small, so this works on plain floats.
    """

    def __init__(self, posteriors, predicted):
        mu, kappa = _track_arrays(posteriors)
        mu_prev, k_prev = _track_arrays([p.prior for p in predicted])
        self._setup(mu, np.asarray(ratio_a(kappa)), mu_prev, k_prev,
                    np.asarray(ratio_a(k_prev)))

    @classmethod
    def from_arrays(cls, mu, a, mu_prev, k_prev, a_prev):
        self = cls.__new__(cls)
        self._setup(mu, a, mu_prev, k_prev, a_prev)
        return self

    def _setup(self, mu, a, mu_prev, k_prev, a_prev):
        self.k_prev = [float(k) for k in k_prev]
        self.a_prev = [float(x) for x in a_prev]
        self.target = (np.cos(mu - mu_prev) * a).tolist()

    def _tilde(self, kappa_d):
        # (A(k_prev) A(kappa_d), uncapped and capped predicted concentration) per track
        if getattr(self, "_memo", (None,))[0] == kappa_d:
            return self._memo[1]
        ad = ratio_a(float(kappa_d))
        out = []
        for ap, kp in zip(self.a_prev, self.k_prev):
            prod = ap * ad
            raw = ratio_a_inv(prod)
            out.append((prod, raw, min(raw, kp)))
        self._memo = (kappa_d, out)
        return out

    def value(self, kappa_d):
        return sum(-log_bessel_i(0, kt) + kt * tg
                   for (_, _, kt), tg in zip(self._tilde(kappa_d), self.target))

    def grad(self, kappa_d, literal=False):
        kappa_d = float(kappa_d)
        if literal:
            i0, i1, i2 = (bessel_i(p, kappa_d) for p in (0, 1, 2))
            da = (i2 * i0 - i1 * i1) / (i0 * i0)
        else:
            da = ratio_a_prime(kappa_d)
        total = 0.0
        for (prod, raw, kt), ap, kp, tg in zip(self._tilde(kappa_d), self.a_prev,
                                               self.k_prev, self.target):
            if raw > kp:
                continue
            total += (tg - ratio_a(kt)) * ratio_a_inv_prime(prod) * ap * da
        return total


def q_kappa_y(kappa_y, alpha, posteriors, frame):
    """The part of the expected complete-data log-likelihood that depends on kappa_y:

    ``sum_m sum_{n>0} alpha_mn (w_m kappa_y cos(y_m - mu_n) A(kappa_n) - log I0(w_m kappa_y))``
    """
    if len(frame) == 0 or not posteriors:
        return 0.0
    return _KappaYTerms(alpha, posteriors, frame).value(kappa_y)


def grad_kappa_y(kappa_y, alpha, posteriors, frame):
    """``sum_mn alpha_mn w_m (cos(y_m - mu_n) A(kappa_n) - A(w_m kappa_y))``."""
    if len(frame) == 0 or not posteriors:
        return 0.0
    return _KappaYTerms(alpha, posteriors, frame).grad(kappa_y)


def q_kappa_d(kappa_d, posteriors, predicted):
    """The part of the expected complete-data log-likelihood that depends on kappa_d.

    ``sum_n -log I0(kt_n) + kt_n cos(mu_n - mu_prev_n) A(kappa_n)`` where
    ``kt_n`` is the predicted concentration of track n under ``kappa_d``.
    """
    if not posteriors:
        return 0.0
    return _KappaDTerms(posteriors, predicted).value(kappa_d)


def grad_kappa_d(kappa_d, posteriors, predicted, literal=False):
    """Derivative of :func:`q_kappa_d` through the predicted concentration.

    ``literal=True`` swaps ``dA/dk`` for ``(I2 I0 - I1^2) / I0^2``, which is
    not the derivative of A (it differs by ``A(k)/k``); kept only for
    comparison runs.
    """
    if not posteriors:
        return 0.0
    return _KappaDTerms(posteriors, predicted).grad(kappa_d, literal)


def _ascent_step(objective, gradient, x, lo, hi, step, trials, f0=None):
    """One projected gradient-ascent step with halving backtracking."""
    g = gradient(x)
    if g == 0.0 or not math.isfinite(g):
        return x
    for _ in range(trials):
        x_new = min(max(x + step * g, lo), hi)
        if abs(x_new - x) <= 1e-13 * max(1.0, abs(x)):
            break
        if f0 is None:
            f0 = objective(x)
        f_new = objective(x_new)
        if f_new > f0:
            return x_new
        if f_new == f0:
            # flat direction (e.g. predicted concentration at its cap)
            break
        step *= 0.5
    return x


def m_step(alpha, posteriors, predicted, frame, params, config=None):
    """Update assignment priors and take one ascent step on each concentration.

    Priors follow the responsibility sums. ``kappa_y`` and ``kappa_d`` each
    move by one backtracking projected-gradient step on their share of the
    expected complete-data log-likelihood, kept in
    ``[config.kappa_min, config.kappa_max]``.

    An empty frame carries no information: the parameters are returned
    unchanged and an :class:`EmptyFrameWarning` is issued.
    """
    config = config or FilterConfig()
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[0] == 0:
        warnings.warn(f"frame {frame.time_index} is empty; parameters unchanged",
                      EmptyFrameWarning, stacklevel=2)
        return params
    weights = alpha.sum(axis=0)
    weights = weights / weights.sum()

    kappa_y = params.kappa_y
    if config.learn_kappa_y and posteriors:
        terms = _KappaYTerms(alpha, posteriors, frame)
        kappa_y = _ascent_step(
            terms.value, terms.grad,
            kappa_y, config.kappa_min, config.kappa_max,
            config.line_search_step, config.line_search_trials)
    kappa_d = params.kappa_d
    if config.learn_kappa_d and posteriors:
        terms = _KappaDTerms(posteriors, predicted)
        kappa_d = _ascent_step(
            terms.value, lambda k: terms.grad(k, config.literal_kd_gradient),
            kappa_d, config.kappa_min, config.kappa_max,
            config.line_search_step, config.line_search_trials)
    return ModelParams(kappa_y, kappa_d, tuple(weights))


def free_energy(alpha, posteriors, predicted, frame, params):
    """Variational lower bound on the log evidence of one frame.

    Expected complete-data log-likelihood plus the entropies of the
    assignment and direction posteriors.
    """
    alpha = np.asarray(alpha, dtype=float)
    y, w = frame.azimuths, frame.confidences
    log_pi = _log_weights(params.weights)
    total = 0.0
    if len(y):
        ll = np.empty_like(alpha)
        ll[:, 0] = -LOG_TWO_PI
        if posteriors:
            ll[:, 1:] = _expected_loglik(posteriors, y, w, params.kappa_y)
        with np.errstate(invalid="ignore"):
            contrib = alpha * (log_pi[None, :] + ll - np.log(np.where(alpha > 0, alpha, 1.0)))
        total += float(np.sum(np.where(alpha > 0, contrib, 0.0)))
    if posteriors:
        mu, kappa = _track_arrays(posteriors)
        mu_p, k_p = _track_arrays([p.predictive for p in predicted])
        total += float(np.sum(k_p * np.asarray(ratio_a(kappa)) * np.cos(mu - mu_p)
                              - LOG_TWO_PI - np.asarray(log_bessel_i(0, k_p))))
        total += float(np.sum(vm_entropy(kappa)))
    return total


class _FrameProblem:
    """Array form of one frame's updates with the Bessel terms cached per sweep.

    Produces the same numbers as chaining :func:`e_s_step`, :func:`e_z_step`,
    :func:`m_step`, :func:`predict` and :func:`free_energy`.
    """

    def __init__(self, predicted, frame, config):
        self.config = config
        self.ids = [p.track_id for p in predicted]
        self.mu_prev, self.k_prev = _track_arrays([p.prior for p in predicted])
        self.a_prev = np.asarray(ratio_a(self.k_prev))
        self.y, self.w = frame.azimuths, frame.confidences
        self.unit_y = np.exp(1j * self.y)
        self.mu_p, self.k_p = _track_arrays([p.predictive for p in predicted])
        self._set_predictive(self.k_p)

    def _set_predictive(self, k_p):
        self.k_p = k_p
        self.log_i0_kp = np.asarray(log_bessel_i(0, k_p))
        # predictive means never move, only their concentrations
        self.z_p = k_p * np.exp(1j * self.mu_p)

    def repredict(self, kappa_d):
        k = np.asarray(ratio_a_inv(self.a_prev * ratio_a(float(kappa_d))))
        self._set_predictive(np.minimum(k, self.k_prev))

    def predicted(self):
        return [PredictedTrack(i, VonMises(m, k), VonMises(mp, kp))
                for i, m, k, mp, kp in zip(self.ids, self.mu_p, self.k_p,
                                           self.mu_prev, self.k_prev)]

    def e_s(self, alpha, kappa_y):
        # harmonic sum of the observation terms and the predictive term, as phasors
        amp = alpha[:, 1:] * self.w[:, None]
        z = kappa_y * (self.unit_y @ amp) + self.z_p
        r = np.abs(z)
        cancelled = r < 1e-12
        mu = np.where(cancelled, 0.0, np.angle(z))
        mu = np.where(mu == -np.pi, np.pi, mu)
        kappa = np.where(cancelled, 0.0, r)
        # tracks without observation support keep their predictive density
        bare = amp.max(axis=0) <= 0.0
        self.mu = np.where(bare, self.mu_p, mu)
        self.kappa = np.where(bare, self.k_p, kappa)
        self.a = np.asarray(ratio_a(self.kappa))
        self.cos_dev = np.cos(self.y[:, None] - self.mu[None, :])

    def loglik(self, kappa_y, log_i0_wk):
        wk = self.w * kappa_y
        return wk[:, None] * self.a[None, :] * self.cos_dev - LOG_TWO_PI - log_i0_wk[:, None]

    def e_z(self, params, log_i0_wk):
        log_pi = _log_weights(params.weights)
        m = len(self.y)
        if self.config.literal_ez:
            wk = self.w * params.kappa_y
            beta = (wk * np.asarray(ratio_a(wk)))[:, None] * self.cos_dev
            beta = np.hstack([np.full((m, 1), 1.0 / (2.0 * np.pi)), np.maximum(beta, 0.0)])
            un = beta * np.asarray(params.weights)[None, :]
            return un / un.sum(axis=1, keepdims=True)
        logits = np.empty((m, len(log_pi)))
        logits[:, 0] = log_pi[0] - LOG_TWO_PI
        logits[:, 1:] = log_pi[None, 1:] + self.loglik(params.kappa_y, log_i0_wk)
        logits -= logits.max(axis=1, keepdims=True)
        alpha = np.exp(logits)
        return alpha / alpha.sum(axis=1, keepdims=True)

    def m(self, alpha, params, log_i0_wk):
        cfg = self.config
        weights = alpha.sum(axis=0)
        weights = weights / weights.sum()
        kappa_y = params.kappa_y
        if cfg.learn_kappa_y:
            resp = alpha[:, 1:]
            aligned = np.sum(resp * self.cos_dev * self.a[None, :], axis=1).tolist()
            mass = resp.sum(axis=1).tolist()
            w = self.w.tolist()
            terms = list(zip(w, aligned, mass))

            def value(k):
                return sum(wm * k * al - ms * log_bessel_i(0, wm * k) for wm, al, ms in terms)

            def grad(k):
                return sum(wm * (al - ms * ratio_a(wm * k)) for wm, al, ms in terms)

            f0 = float(np.dot(self.w * kappa_y, aligned) - np.dot(mass, log_i0_wk))
            kappa_y = _ascent_step(value, grad, kappa_y, cfg.kappa_min, cfg.kappa_max,
                                   cfg.line_search_step, cfg.line_search_trials, f0=f0)
        kappa_d = params.kappa_d
        if cfg.learn_kappa_d:
            terms = _KappaDTerms.from_arrays(self.mu, self.a, self.mu_prev, self.k_prev,
                                             self.a_prev)
            kappa_d = _ascent_step(
                terms.value, lambda k: terms.grad(k, cfg.literal_kd_gradient),
                kappa_d, cfg.kappa_min, cfg.kappa_max,
                cfg.line_search_step, cfg.line_search_trials)
        return ModelParams(kappa_y, kappa_d, tuple(weights))

    def free_energy(self, alpha, params, log_i0_wk):
        log_pi = _log_weights(params.weights)
        ll = np.empty_like(alpha)
        ll[:, 0] = -LOG_TWO_PI
        ll[:, 1:] = self.loglik(params.kappa_y, log_i0_wk)
        with np.errstate(invalid="ignore", divide="ignore"):
            contrib = alpha * (log_pi[None, :] + ll - np.log(np.where(alpha > 0, alpha, 1.0)))
        total = float(np.sum(np.where(alpha > 0, contrib, 0.0)))
        log_i0_k = np.asarray(log_bessel_i(0, self.kappa))
        total += float(np.sum(self.k_p * self.a * np.cos(self.mu - self.mu_p)
                              - LOG_TWO_PI - self.log_i0_kp))
        total += float(np.sum(LOG_TWO_PI + log_i0_k - self.kappa * self.a))
        return total

    def posteriors(self):
        return [VonMises(m, k) for m, k in zip(self.mu, self.kappa)]


def vem_iterate(predicted, frame, params, config=None):
    """Run E-S, E-Z and M updates on one frame until the assignments settle.

    Starts from uniform assignments and stops after ``config.vem_max_iters``
    sweeps or once no assignment probability moves by more than
    ``config.vem_convergence_tol``.
    """
    config = config or FilterConfig()
    predicted = list(predicted)
    n_tracks, n_obs = len(predicted), len(frame)
    if len(params.weights) != n_tracks + 1:
        raise ValueError("prior weights do not match the number of tracks")

    if n_obs == 0:
        posteriors = [p.predictive for p in predicted]
        alpha = np.zeros((0, n_tracks + 1))
        f = free_energy(alpha, posteriors, predicted, frame, params)
        return VemState(alpha, posteriors, params, f, 1, True, predicted, [f])
    if n_tracks == 0:
        alpha = np.ones((n_obs, 1))
        params = replace(params, weights=(1.0,))
        f = free_energy(alpha, [], [], frame, params)
        return VemState(alpha, [], params, f, 1, True, predicted, [f])

    prob = _FrameProblem(predicted, frame, config)
    alpha = np.full((n_obs, n_tracks + 1), 1.0 / (n_tracks + 1))
    log_i0_wk = np.asarray(log_bessel_i(0, prob.w * params.kappa_y))
    trace = []
    converged = False
    it = 0
    for it in range(1, config.vem_max_iters + 1):
        prob.e_s(alpha, params.kappa_y)
        new_alpha = prob.e_z(params, log_i0_wk)
        kappa_y_old = params.kappa_y
        params = prob.m(new_alpha, params, log_i0_wk)
        if params.kappa_y != kappa_y_old:
            log_i0_wk = np.asarray(log_bessel_i(0, prob.w * params.kappa_y))
        if config.learn_kappa_d:
            prob.repredict(params.kappa_d)
        delta = float(np.max(np.abs(new_alpha - alpha)))
        alpha = new_alpha
        if delta < config.vem_convergence_tol:
            converged = True
        last = converged or it == config.vem_max_iters
        if config.record_elbo_trace or last:
            trace.append(prob.free_energy(alpha, params, log_i0_wk))
        if converged:
            break
    logger.debug("frame %d: %d VEM sweeps, converged=%s", frame.time_index, it, converged)
    return VemState(alpha, prob.posteriors(), params, trace[-1], it, converged,
                    prob.predicted(), trace)
