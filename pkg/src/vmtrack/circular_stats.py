"""Circular statistics used throughout the tracker.

Modified Bessel functions of the first kind (orders 0, 1, 2), the von Mises
density and sampler, the harmonic addition of cosines, and the mean
resultant length map ``A(k) = I1(k) / I0(k)`` together with its rational
inverse.

Every function accepts scalars or numpy arrays. Scalars in, floats out.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

__all__ = [
    "VonMises",
    "wrap",
    "angle_diff",
    "bessel_i",
    "log_bessel_i",
    "ratio_a",
    "ratio_a_prime",
    "ratio_a_inv",
    "ratio_a_inv_prime",
    "vm_log_density",
    "vm_entropy",
    "harmonic_sum",
    "vm_sample",
    "circular_mean",
    "resultant_length",
]

TWO_PI = 2.0 * np.pi
LOG_TWO_PI = math.log(TWO_PI)

# switch point between the power series and the large-argument expansion
SERIES_LIMIT = 15.0
_N_SERIES = 50
_N_ASYMP = 30
# below this size a python loop beats the vectorised evaluation
_SMALL_ARRAY = 24

A_INV_INPUT_MAX = 1.0 - 1e-9
A_INV_OUTPUT_MAX = 1e6


def _series_coefficients(order):
    k = np.arange(_N_SERIES)
    log_c = -(np.array([math.lgamma(i + 1) + math.lgamma(i + order + 1) for i in k]))
    return np.exp(log_c)


def _asymptotic_coefficients(order):
    # (-1)^k a_k(order), a_k = prod_{j<=k} (4 p^2 - (2j - 1)^2) / (k! 8^k)
    mu = 4.0 * order * order
    coef = np.empty(_N_ASYMP)
    coef[0] = 1.0
    for k in range(1, _N_ASYMP):
        coef[k] = -coef[k - 1] * (mu - (2 * k - 1) ** 2) / (8.0 * k)
    return coef


_SERIES = {p: _series_coefficients(p) for p in (0, 1, 2)}
_ASYMP = {p: _asymptotic_coefficients(p) for p in (0, 1, 2)}
_SERIES_POW = np.arange(_N_SERIES)
_ASYMP_POW = np.arange(_N_ASYMP)
_SERIES_LIST = {p: c.tolist() for p, c in _SERIES.items()}
_ASYMP_LIST = {p: c.tolist() for p, c in _ASYMP.items()}
_SERIES_PAIRS = list(zip(_SERIES_LIST[0], _SERIES_LIST[1]))
_ASYMP_PAIRS = list(zip(_ASYMP_LIST[0], _ASYMP_LIST[1]))


def _as_output(values, scalar):
    if scalar:
        return float(values.reshape(()))
    return values


def _check_bessel_args(order, x):
    if order not in (0, 1, 2):
        raise ValueError(f"bessel order must be 0, 1 or 2, got {order!r}")
    arr = np.asarray(x, dtype=float)
    if not (arr >= 0).all():
        raise ValueError("bessel argument must be non-negative")
    return arr


# the filter re-evaluates the same arguments many times within a frame
@lru_cache(maxsize=8192)
def _log_bessel_scalar(order, x):
    if x <= SERIES_LIMIT:
        u = 0.25 * x * x
        coef = _SERIES_LIST[order]
        total = 0.0
        term = 1.0
        for c in coef:
            t = c * term
            total += t
            if t < 1e-17 * total:
                break
            term *= u
        if order == 0:
            return math.log(total)
        if x == 0.0:
            return -math.inf
        return order * math.log(0.5 * x) + math.log(total)
    inv = 1.0 / x
    total = 0.0
    term = 1.0
    for c in _ASYMP_LIST[order]:
        t = c * term
        total += t
        if abs(t) < 1e-17 * total:
            break
        term *= inv
    return x - 0.5 * math.log(TWO_PI * x) + math.log(total)


@lru_cache(maxsize=8192)
def _ratio_scalar(x):
    # I1/I0 from one pass over both series
    if x == 0.0:
        return 0.0
    if x <= SERIES_LIMIT:
        u = 0.25 * x * x
        s0 = s1 = 0.0
        term = 1.0
        for c0, c1 in _SERIES_PAIRS:
            t0 = c0 * term
            s0 += t0
            s1 += c1 * term
            if t0 < 1e-17 * s0:
                break
            term *= u
        return 0.5 * x * s1 / s0
    inv = 1.0 / x
    s0 = s1 = 0.0
    term = 1.0
    for c0, c1 in _ASYMP_PAIRS:
        t0, t1 = c0 * term, c1 * term
        s0 += t0
        s1 += t1
        if abs(t0) < 1e-17 * s0 and abs(t1) < 1e-17 * s1:
            break
        term *= inv
    return s1 / s0


def log_bessel_i(order, x):
    """Natural log of the modified Bessel function ``I_order(x)``.

    Power series for ``x <= 15``, Hankel large-argument expansion above.
    Never overflows; ``log I_p(0) = -inf`` for ``p > 0``.
    """
    if isinstance(x, (float, int)) and not isinstance(x, bool):
        if order not in (0, 1, 2):
            raise ValueError(f"bessel order must be 0, 1 or 2, got {order!r}")
        if not x >= 0:
            raise ValueError("bessel argument must be non-negative")
        return _log_bessel_scalar(order, float(x))
    arr = _check_bessel_args(order, x)
    scalar = arr.ndim == 0
    flat = np.atleast_1d(arr).ravel()
    if flat.size <= _SMALL_ARRAY:
        out = np.array([_log_bessel_scalar(order, v) for v in flat.tolist()])
        return _as_output(out.reshape(arr.shape), scalar)
    out = np.empty_like(flat)

    small = flat <= SERIES_LIMIT
    if np.any(small):
        xs = flat[small]
        u = 0.25 * xs * xs
        powers = u[:, None] ** _SERIES_POW[None, :]
        total = powers @ _SERIES[order]
        if order == 0:
            out[small] = np.log(total)
        else:
            with np.errstate(divide="ignore"):
                out[small] = order * np.log(0.5 * xs) + np.log(total)
    large = ~small
    if np.any(large):
        xl = flat[large]
        inv = (1.0 / xl)[:, None] ** _ASYMP_POW[None, :]
        total = inv @ _ASYMP[order]
        out[large] = xl - 0.5 * np.log(TWO_PI * xl) + np.log(total)
    return _as_output(out.reshape(arr.shape), scalar)


def bessel_i(order, x):
    """Modified Bessel function of the first kind, orders 0, 1 and 2.

    Parameters
    ----------
    order : int
        One of 0, 1, 2.
    x : float or array_like
        Non-negative argument.

    Returns
    -------
    float or np.ndarray
        ``I_order(x)``. Overflows to ``inf`` beyond x ~ 713; use
        :func:`log_bessel_i` when the argument can be large.
    """
    with np.errstate(over="ignore"):
        return _as_float_or_array(np.exp(log_bessel_i(order, x)))


def _as_float_or_array(v):
    if np.ndim(v) == 0:
        return float(v)
    return v


def ratio_a(kappa):
    """Mean resultant length ``A(k) = I1(k) / I0(k)`` of a von Mises density."""
    if isinstance(kappa, (float, int)):
        if kappa < 0:
            raise ValueError("concentration must be non-negative")
        return _ratio_scalar(float(kappa))
    k = np.asarray(kappa, dtype=float)
    if not (k >= 0).all():
        raise ValueError("concentration must be non-negative")
    if k.size <= _SMALL_ARRAY:
        out = np.array([_ratio_scalar(v) for v in k.ravel().tolist()]).reshape(k.shape)
        return _as_float_or_array(out)
    with np.errstate(invalid="ignore"):
        out = np.exp(np.asarray(log_bessel_i(1, k)) - np.asarray(log_bessel_i(0, k)))
    return _as_float_or_array(out)


def ratio_a_prime(kappa):
    """Derivative ``dA/dk = 1 - A(k)/k - A(k)^2`` (limit 1/2 at k = 0)."""
    if isinstance(kappa, float):
        if kappa == 0.0:
            return 0.5
        a = ratio_a(kappa)
        return 1.0 - a / kappa - a * a
    k = np.asarray(kappa, dtype=float)
    a = np.asarray(ratio_a(k))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(k > 0, 1.0 - a / np.where(k > 0, k, 1.0) - a * a, 0.5)
    return _as_float_or_array(out)


def ratio_a_inv(a):
    """Rational approximation ``(2a - a^3) / (1 - a^2)`` of the inverse of A.

    Inputs at or above ``1 - 1e-9`` are clamped to that value and the
    output is capped at ``1e6``.
    """
    if isinstance(a, float):
        if not a >= 0:
            raise ValueError("ratio_a_inv is defined on [0, 1)")
        a = min(a, A_INV_INPUT_MAX)
        return min((2.0 * a - a ** 3) / (1.0 - a * a), A_INV_OUTPUT_MAX)
    arr = np.asarray(a, dtype=float)
    if not (arr >= 0).all():
        raise ValueError("ratio_a_inv is defined on [0, 1)")
    arr = np.minimum(arr, A_INV_INPUT_MAX)
    out = (2.0 * arr - arr ** 3) / (1.0 - arr * arr)
    return _as_float_or_array(np.minimum(out, A_INV_OUTPUT_MAX))


def ratio_a_inv_prime(a):
    """Derivative of :func:`ratio_a_inv`: ``(2 - a^2 + a^4) / (1 - a^2)^2``.

    Zero where the clamps are active.
    """
    if isinstance(a, float):
        if a >= A_INV_INPUT_MAX or ratio_a_inv(a) >= A_INV_OUTPUT_MAX:
            return 0.0
        a2 = a * a
        return (2.0 - a2 + a2 * a2) / (1.0 - a2) ** 2
    arr = np.asarray(a, dtype=float)
    a2 = arr * arr
    out = (2.0 - a2 + a2 * a2) / (1.0 - a2) ** 2
    clamped = (arr >= A_INV_INPUT_MAX) | (np.asarray(ratio_a_inv(arr)) >= A_INV_OUTPUT_MAX)
    return _as_float_or_array(np.where(clamped, 0.0, out))


def wrap(x):
    """Wrap angles to the half-open interval (-pi, pi].

    Values already inside the interval come back unchanged, bit for bit.
    """
    if isinstance(x, float) and -math.pi < x <= math.pi:
        return x
    x = np.asarray(x, dtype=float)
    inside = (x > -np.pi) & (x <= np.pi)
    out = np.where(inside, x, np.pi - np.mod(np.pi - x, TWO_PI))
    # mod can round up to exactly 2 pi for tiny negative inputs
    out = np.where(out <= -np.pi, np.pi, out)
    return _as_float_or_array(out)


def angle_diff(a, b):
    """Wrapped difference ``a - b`` in (-pi, pi]."""
    return wrap(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


@dataclass(frozen=True)
class VonMises:
    """Von Mises density on the circle with mean ``mu`` and concentration ``kappa``."""

    mu: float
    kappa: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.kappa)):
            raise ValueError(f"non-finite von Mises parameters ({self.mu}, {self.kappa})")
        if self.kappa < 0:
            raise ValueError(f"concentration must be non-negative, got {self.kappa}")
        object.__setattr__(self, "mu", float(wrap(self.mu)))
        object.__setattr__(self, "kappa", float(self.kappa))

    def logpdf(self, x):
        return vm_log_density(self, x)

    def pdf(self, x):
        return np.exp(vm_log_density(self, x))

    @property
    def mean_resultant_length(self):
        return ratio_a(self.kappa)

    def entropy(self):
        return vm_entropy(self.kappa)


def vm_log_density(d, x):
    """Log density ``k cos(x - mu) - log(2 pi I0(k))`` of a :class:`VonMises`."""
    x = np.asarray(x, dtype=float)
    out = d.kappa * np.cos(x - d.mu) - LOG_TWO_PI - log_bessel_i(0, d.kappa)
    return _as_float_or_array(out)


def vm_entropy(kappa):
    """Differential entropy ``log(2 pi I0(k)) - k A(k)``."""
    k = np.asarray(kappa, dtype=float)
    out = LOG_TWO_PI + np.asarray(log_bessel_i(0, k)) - k * np.asarray(ratio_a(k))
    return _as_float_or_array(out)


def harmonic_sum(amplitudes, phases):
    """Collapse ``sum_i a_i cos(x - phi_i)`` into a single ``R cos(x - Phi)``.

    Parameters
    ----------
    amplitudes, phases : array_like
        Non-empty, same length.

    Returns
    -------
    (float, float)
        Amplitude ``R >= 0`` and wrapped phase ``Phi``. Perfect cancellation
        (``R < 1e-12``) returns ``(0.0, 0.0)``.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    phases = np.asarray(phases, dtype=float)
    if amplitudes.size == 0:
        raise ValueError("harmonic_sum needs at least one term")
    if amplitudes.shape != phases.shape:
        raise ValueError("amplitudes and phases must have the same shape")
    s = float(np.sum(amplitudes * np.sin(phases)))
    c = float(np.sum(amplitudes * np.cos(phases)))
    r = math.hypot(s, c)
    if r < 1e-12:
        return 0.0, 0.0
    return r, float(wrap(math.atan2(s, c)))


def vm_sample(d, rng, size=None):
    """Draw from a von Mises density with the Best-Fisher rejection sampler.

    ``rng`` is a ``numpy.random.Generator``; all randomness flows through it.
    ``kappa == 0`` draws uniformly on (-pi, pi].
    """
    n = 1 if size is None else int(np.prod(size))
    if d.kappa == 0:
        out = wrap(rng.uniform(-np.pi, np.pi, n))
    else:
        kappa = d.kappa
        tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
        rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
        r = (1.0 + rho * rho) / (2.0 * rho)
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(2 * (n - filled), 8)
            u1, u2, u3 = rng.random((3, m))
            z = np.cos(np.pi * u1)
            f = (1.0 + r * z) / (r + z)
            c = kappa * (r - f)
            with np.errstate(divide="ignore", invalid="ignore"):
                accept = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
            theta = np.sign(u3 - 0.5) * np.arccos(np.clip(f, -1.0, 1.0))
            theta = theta[accept][: n - filled]
            out[filled:filled + theta.size] = theta
            filled += theta.size
        out = wrap(d.mu + out)
    out = np.asarray(out)
    if size is None:
        return float(out[0])
    return out.reshape(size)


def circular_mean(angles, weights=None):
    angles = np.asarray(angles, dtype=float)
    w = np.ones_like(angles) if weights is None else np.asarray(weights, dtype=float)
    return float(np.arctan2(np.sum(w * np.sin(angles)), np.sum(w * np.cos(angles))))


def resultant_length(angles):
    angles = np.asarray(angles, dtype=float)
    return float(np.hypot(np.mean(np.sin(angles)), np.mean(np.cos(angles))))
