"""Brownian-bridge barrier probabilities: closed forms, bounds and MC checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba as nb
import numpy as np

from .kernels import RngStream

SERIES_TOL = 1e-16
SERIES_MAX_TERMS = 10_000_000
DEFAULT_MC_GRID_DT = 0.001


@dataclass(frozen=True)
class LinearBarrier:
    """Bridge of length ``T`` from ``a`` to ``b`` against the line from ``A`` to ``B``."""

    A: float
    B: float
    T: float
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError(f"bridge length T must be positive, got {self.T}")

    def line(self, s):
        return self.A + (self.B - self.A) * np.asarray(s, dtype=float) / self.T

    def swapped(self) -> "LinearBarrier":
        """Time-reversed configuration (same probability)."""
        return LinearBarrier(self.B, self.A, self.T, self.b, self.a)


def bridge_below_line_exact(barrier: LinearBarrier) -> float:
    """``P[bridge stays strictly below the line] = 1 - exp(-2 (A-a)(B-b) / T)``."""
    da, db = barrier.A - barrier.a, barrier.B - barrier.b
    if not (da > 0 and db > 0):
        return 0.0
    return float(-math.expm1(-2.0 * da * db / barrier.T))


def line_values(Z1: float, Z2: float, r1: float, r2: float, t: float) -> tuple[float, float]:
    """Heights ``Z(r1), Z(r2)`` of the line from ``(0, Z1)`` to ``(t, Z2)`` at ``r1`` and ``t - r2``."""
    return (1 - r1 / t) * Z1 + (r1 / t) * Z2, (r2 / t) * Z1 + (1 - r2 / t) * Z2


def bridge_below_line_bound(Z1: float, Z2: float, r1: float, r2: float, t: float) -> float:
    """Upper bound ``2/(t-r1-r2) * prod (Z(r_i) + sqrt r_i)`` on staying below the line on ``[r1, t-r2]``."""
    if min(Z1, Z2) < 0 or min(r1, r2) < 0:
        raise ValueError("Z1, Z2, r1, r2 must be non-negative")
    if not t > r1 + r2:
        raise ValueError(f"need t > r1 + r2, got t={t}, r1={r1}, r2={r2}")
    z1, z2 = line_values(Z1, Z2, r1, r2, t)
    return 2.0 / (t - r1 - r2) * (z1 + math.sqrt(r1)) * (z2 + math.sqrt(r2))


def bridge_below_line_probability(Z1: float, Z2: float, r1: float, r2: float, t: float, rng: RngStream,
                                  n: int = 20_000) -> tuple[float, float]:
    """``P[bridge(0->0, length t) <= line on [r1, t - r2]]`` by conditioning on the two end values.

    Given ``z(r1) = x1`` and ``z(t - r2) = x2`` the inner probability is the
    exact linear-barrier formula, so only the Gaussian pair is sampled.
    Returns ``(estimate, standard error)``.
    """
    if not t > r1 + r2:
        raise ValueError(f"need t > r1 + r2, got t={t}, r1={r1}, r2={r2}")
    s1, s2 = r1, t - r2
    # bridge covariance min(s, u) - s u / t, drawn as x1 then x2 given x1
    v1, v2, c = s1 * (1 - s1 / t), s2 * (1 - s2 / t), s1 * (1 - s2 / t)
    z = rng.generator.standard_normal((n, 2))
    x1 = math.sqrt(v1) * z[:, 0]
    beta = c / v1 if v1 > 0 else 0.0
    x2 = beta * x1 + math.sqrt(max(v2 - beta * c, 0.0)) * z[:, 1]
    x = np.column_stack([x1, x2])
    z1, z2 = line_values(Z1, Z2, r1, r2, t)
    da, db = z1 - x[:, 0], z2 - x[:, 1]
    p = np.where((da > 0) & (db > 0), -np.expm1(-2.0 * np.clip(da, 0, None) * np.clip(db, 0, None) / (s2 - s1)), 0.0)
    return float(p.mean()), float(p.std(ddof=1) / math.sqrt(n))


def _series_tail(C: float, delta: float, r: int) -> float:
    """``sum_{k >= r} k exp(-C k^delta)``, truncated once terms drop below 1e-16."""
    total = 0.0
    k0 = r
    chunk = 4096
    while k0 - r < SERIES_MAX_TERMS:
        k = np.arange(k0, min(k0 + chunk, r + SERIES_MAX_TERMS), dtype=float)
        terms = k * np.exp(-C * k**delta)
        small = np.flatnonzero(terms < SERIES_TOL)
        # terms decrease once k^delta > 1/(C delta); only stop in that regime
        stop = small[k[small] ** delta * C * delta > 1.0] if small.size else small
        if stop.size:
            total += float(terms[: stop[0]].sum())
            return total
        total += float(terms.sum())
        k0 += chunk
        chunk = min(chunk * 2, 1 << 20)
    return total


def concave_curve_stay_below_bound(C: float, eps: float, r: float, a_const: float) -> float:
    """Lower bound ``1 - 2 a C sum_{k >= r} k exp(-C k^delta)``, ``delta = 2 eps - 1``.

    The bound is asymptotic in ``r`` and may be negative (vacuous) for small ``r``.
    """
    if not eps > 0.5:
        raise ValueError(f"eps must exceed 1/2 (delta = 2 eps - 1 > 0), got {eps}")
    if not C > 0 or not a_const > 0:
        raise ValueError("C and a_const must be positive")
    if not r >= 1:
        raise ValueError(f"r must be >= 1, got {r}")
    return 1.0 - 2.0 * a_const * C * _series_tail(C, 2 * eps - 1, int(math.ceil(r)))


def concave_curve(t: float, C: float, eps: float) -> Callable[[np.ndarray], np.ndarray]:
    """``C min(s, t - s)^eps``."""
    return lambda s: C * np.minimum(s, t - np.asarray(s, dtype=float)) ** eps


@nb.njit(cache=True)
def _bridge_flags(gen, n_paths, times, start, end, lower1, lower2, upper, in_window, correct):
    """Per path: stays above ``lower1``, above ``lower2``, below ``upper`` on window checkpoints.

    With ``correct`` the upper-barrier flag becomes the survival weight
    ``prod (1 - exp(-2 d_k d_{k+1} / h))`` against the chord of ``upper``
    between adjacent window checkpoints.
    """
    m = times.size
    length = times[m - 1]
    above1 = np.ones(n_paths, dtype=np.bool_)
    above2 = np.ones(n_paths, dtype=np.bool_)
    below = np.ones(n_paths)
    for p in range(n_paths):
        x = start
        w = 1.0
        prev_in = False
        prev_gap = 0.0
        for k in range(m):
            if k == m - 1:
                x = end
            elif k > 0:
                rem = length - times[k - 1]
                h = times[k] - times[k - 1]
                x = x + (end - x) * h / rem + math.sqrt(h * (rem - h) / rem) * gen.standard_normal()
            if not in_window[k]:
                prev_in = False
                continue
            if x <= lower1[k]:
                above1[p] = False
            if x <= lower2[k]:
                above2[p] = False
            gap = upper[k] - x
            if gap <= 0.0:
                w = 0.0
            elif correct and prev_in and w > 0.0:
                w *= -math.expm1(-2.0 * prev_gap * gap / (times[k] - times[k - 1]))
            prev_in = True
            prev_gap = gap
        below[p] = w
    return above1, above2, below


def _grid(length: float, grid_dt: float) -> np.ndarray:
    n = round(length / grid_dt)
    if n < 2 or abs(n * grid_dt - length) > 1e-9 * max(1.0, length):
        raise ValueError(f"grid_dt={grid_dt} must divide length={length} into >= 2 steps")
    return np.linspace(0.0, length, n + 1)


def _eval(curve, s):
    if callable(curve):
        return np.broadcast_to(np.asarray(curve(s), dtype=float), s.shape).copy()
    return np.full(s.shape, float(curve))


@dataclass(frozen=True)
class CrossingEstimate:
    estimate: float
    se: float
    n_paths: int
    grid_dt: float
    corrected: bool
    raw_estimate: float  # checkpoint monitoring only, same paths


def mc_bridge_below_line(barrier: LinearBarrier, n_paths: int, rng: RngStream,
                         grid_dt: float = DEFAULT_MC_GRID_DT, corrected: bool = False) -> CrossingEstimate:
    """MC probability that a bridge stays below the barrier line.

    Uncorrected: checkpoint monitoring only, which misses crossings between
    checkpoints and so overestimates. Corrected: each path contributes its
    exact survival weight between checkpoints, unbiased for any grid.
    """
    times = _grid(barrier.T, grid_dt)
    line = barrier.line(times)
    none = np.full(times.size, -np.inf)
    window = np.ones(times.size, dtype=np.bool_)
    _, _, w = _bridge_flags(rng.generator, n_paths, times, barrier.a, barrier.b, none, none, line, window, corrected)
    raw = float(np.mean(w > 0))
    if not corrected:
        w = (w > 0).astype(float)
    se = float(w.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("nan")
    return CrossingEstimate(float(w.mean()), se, n_paths, grid_dt, corrected, raw)


@dataclass(frozen=True)
class MonotonicityReport:
    p_given_l1: float
    se_l1: float
    n_l1: int
    p_given_l2: float
    se_l2: float
    n_l2: int
    violated: bool

    @property
    def difference(self) -> float:
        return self.p_given_l1 - self.p_given_l2


def conditional_below(l1, l2, Lambda, t: float, n_paths: int, rng: RngStream, window: tuple[float, float] | None = None,
                      grid_dt: float = 0.01) -> MonotonicityReport:
    """Estimates of ``P[below Lambda | above l_i]`` for a bridge from 0 to 0 of length ``t``.

    All events are read on the checkpoints of ``window`` (default ``[1, t - 1]``,
    since a bridge pinned at 0 cannot stay strictly above a curve through 0).
    """
    times = _grid(t, grid_dt)
    lo, hi = window if window is not None else (min(1.0, t / 4), t - min(1.0, t / 4))
    if not 0 <= lo < hi <= t:
        raise ValueError(f"bad window ({lo}, {hi}) for t={t}")
    in_window = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    c1, c2, cu = _eval(l1, times), _eval(l2, times), _eval(Lambda, times)
    if np.any(c1[in_window] > c2[in_window]) or np.any(c2[in_window] > cu[in_window]):
        raise ValueError("curves must satisfy l1 <= l2 <= Lambda pointwise on the window")
    a1, a2, below = _bridge_flags(rng.generator, n_paths, times, 0.0, 0.0, c1, c2, cu, in_window, False)
    below = below > 0.5

    def rate(mask):
        n = int(mask.sum())
        if n == 0:
            return float("nan"), float("nan"), 0
        p = float(below[mask].mean())
        return p, math.sqrt(max(p * (1 - p), 1.0 / n) / n), n

    p1, s1, n1 = rate(a1)
    p2, s2, n2 = rate(a2)
    violated = bool(n1 and n2 and p1 < p2 - 3.0 * math.hypot(s1, s2))
    return MonotonicityReport(p1, s1, n1, p2, s2, n2, violated)


def monotonicity_check(l1, l2, Lambda, t: float, n_paths: int, rng: RngStream,
                       window: tuple[float, float] | None = None, grid_dt: float = 0.01) -> MonotonicityReport:
    """``P[below Lambda | above l1] >= P[below Lambda | above l2]`` for ``l1 <= l2 <= Lambda``.

    ``violated`` is set when the first estimate falls more than 3 combined
    standard errors below the second.
    """
    return conditional_below(l1, l2, Lambda, t, n_paths, rng, window, grid_dt)


def concave_curve_conditional(t: float, r: float, C: float, eps: float, n_paths: int, rng: RngStream,
                              grid_dt: float = 0.01) -> MonotonicityReport:
    """``P[below C min(s, t-s)^eps on [r, t-r] | above 0 on [r, t-r]]`` by rejection."""
    if not t > 2 * r:
        raise ValueError(f"need t > 2r, got t={t}, r={r}")
    return conditional_below(0.0, 0.0, concave_curve(t, C, eps), t, n_paths, rng, (r, t - r), grid_dt)
