"""Deterministic curves of the BBM edge and crossing tests against them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SQRT2 = np.sqrt(2.0)
FRONT_LOG_COEF = 3.0 / (2.0 * SQRT2)
REM_LOG_COEF = 1.0 / (2.0 * SQRT2)

Curve = Callable[[np.ndarray], np.ndarray]


def _check_horizon(t) -> None:
    if np.any(np.asarray(t) <= 1):
        raise ValueError(f"horizon must exceed 1 (log correction), got {t}")


def front_m(t):
    """Front of the wave ``sqrt(2) t - 3/(2 sqrt 2) log t``."""
    _check_horizon(t)
    return SQRT2 * np.asarray(t, dtype=float) - FRONT_LOG_COEF * np.log(t) + 0.0


def rem_front_r(t):
    """Centering of the maximum of ``e^t`` iid ``N(0, t)``: ``sqrt(2) t - 1/(2 sqrt 2) log t``."""
    _check_horizon(t)
    return SQRT2 * np.asarray(t, dtype=float) - REM_LOG_COEF * np.log(t) + 0.0


def f_curve(t: float, gamma: float, s):
    """``s^gamma`` on ``[0, t/2]``, ``(t - s)^gamma`` on ``[t/2, t]``."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > t):
        raise ValueError(f"s must lie in [0, {t}]")
    return np.minimum(s, t - s) ** gamma + 0.0


def linear_front(t: float, s):
    """The interpolating line ``(s/t) m(t)``."""
    return np.asarray(s, dtype=float) / t * front_m(t)


def upper_envelope(t: float, gamma: float, s):
    return linear_front(t, s) + f_curve(t, gamma, s)


def entropic_envelope(t: float, alpha: float, s):
    """``(s/t) m(t) - f_{t,alpha}(s)``; with an exponent in (1/2, 1) this is the lower envelope."""
    return linear_front(t, s) - f_curve(t, alpha, s)


lower_envelope = entropic_envelope


@dataclass(frozen=True)
class EnvelopeSpec:
    """Parameters of the upper, entropic and lower envelopes at horizon ``t``."""

    t: float
    gamma: float = 1 / 3
    alpha: float = 1 / 3
    beta: float = 2 / 3
    y: float = 0.0

    def __post_init__(self) -> None:
        if not self.t > 1:
            raise ValueError(f"horizon must exceed 1, got t={self.t}")
        if not 0 < self.gamma < 0.5:
            raise ValueError(f"gamma must lie in (0, 1/2): upper envelope hypothesis, got {self.gamma}")
        if not 0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 1/2): entropic envelope hypothesis 0<alpha<1/2, got {self.alpha}")
        if not 0.5 < self.beta < 1:
            raise ValueError(f"beta must lie in (1/2, 1): lower envelope hypothesis 1/2<beta<1, got {self.beta}")

    def upper(self, s):
        return self.y + upper_envelope(self.t, self.gamma, s)

    def entropic(self, s):
        return entropic_envelope(self.t, self.alpha, s)

    def lower(self, s):
        return lower_envelope(self.t, self.beta, s)


def _window_mask(times: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    if lo > hi:
        raise ValueError(f"empty window {window}")
    tol = 1e-12 * max(1.0, abs(times[-1]))
    if lo < times[0] - tol or hi > times[-1] + tol:
        raise ValueError(f"window {window} outside path support [{times[0]}, {times[-1]}]")
    return (times >= lo - tol) & (times <= hi + tol)


def _crossing(times, values, curve, window, above: bool, rng=None):
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = _window_mask(times, window)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return False, None
    s = times[idx]
    gap = values[idx] - curve(s) if above else curve(s) - values[idx]
    hits = np.flatnonzero(gap > 0)
    first_hit = s[hits[0]] if hits.size else None
    if rng is not None and idx.size > 1:
        # Brownian-bridge excursion between checkpoints that both stay on the safe side.
        a, b = -gap[:-1], -gap[1:]
        h = np.diff(s)
        safe = (a > 0) & (b > 0) & (h > 0)
        p_cross = np.zeros_like(h)
        p_cross[safe] = np.exp(-2.0 * a[safe] * b[safe] / h[safe])
        u = rng.generator.random(h.size)
        sub = np.flatnonzero(safe & (u < p_cross))
        if sub.size and (first_hit is None or s[sub[0]] < first_hit):
            first_hit = s[sub[0]]
    return first_hit is not None, first_hit


def path_crosses_above(path, curve: Curve, window: tuple[float, float], rng=None):
    """Does the path strictly exceed ``curve`` at a checkpoint inside ``window``?

    Returns ``(crossed, first_time)``; ties do not count. With ``rng`` given,
    each gap between adjacent checkpoints additionally crosses with the exact
    Brownian-bridge probability against the chord of the curve.
    """
    return _crossing(path.times, path.positions, curve, window, above=True, rng=rng)


def path_crosses_below(path, curve: Curve, window: tuple[float, float], rng=None):
    """Mirror of :func:`path_crosses_above`: strictly below the curve."""
    return _crossing(path.times, path.positions, curve, window, above=False, rng=rng)
