"""Per-replica summaries of BBM trees and the estimators built on them.

A :class:`ReplicaSummary` keeps everything the estimators need from one
tree, so campaigns can discard trees as soon as they are summarized. The
r-dependence of the genealogy and path-localization events is stored as a
"reach": the largest ``d = min(s, t - s)`` at which the event happens, so
the event restricted to ``[r, t - r]`` occurs iff ``reach >= r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba as nb
import numpy as np
from scipy import stats

from .engine import ALIVE, GenealogyTree, _has_alive_descendant, _pair_overlaps
from .envelopes import SQRT2, EnvelopeSpec, front_m, rem_front_r
from .kernels import RngStream

NO_REACH = -1.0
GIBBS_SUBSTREAM = 1


@dataclass(frozen=True)
class SummaryConfig:
    """What to extract from each tree."""

    window: tuple[float, float] = (-2.0, 0.0)
    gamma: float = 1 / 3
    alpha: float = 1 / 3
    beta: float = 2 / 3
    y: float = 0.0
    exceedance_offsets: tuple[float, ...] = (3.0,)
    above_levels: tuple[float, ...] = (-1.0,)
    gibbs_beta: float = 2.0
    gibbs_pairs: int = 0
    top_m: int = 21

    def __post_init__(self) -> None:
        lo, hi = self.window
        if not lo <= hi:
            raise ValueError(f"window must satisfy lo <= hi, got {self.window}")
        # validates the envelope exponents
        EnvelopeSpec(t=2.0, gamma=self.gamma, alpha=self.alpha, beta=self.beta, y=self.y)

    def exceedance_levels(self, t: float) -> np.ndarray:
        """Absolute levels ``sqrt(2) t - offset``."""
        return SQRT2 * t - np.asarray(self.exceedance_offsets, dtype=float)


@dataclass(frozen=True)
class ReplicaSummary:
    seed: int
    stream_id: int
    t: float
    n_alive: int
    n_pruned: int
    max_position: float
    top: np.ndarray = field(repr=False)  # descending final positions, at most top_m
    window_positions: np.ndarray = field(repr=False)  # recentred, descending
    window_overlaps: np.ndarray = field(repr=False)  # Q for window pairs i < j
    pair_reach: float = NO_REACH
    upper_reach: float = NO_REACH
    entropic_reach: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    lower_reach: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    derivative_martingale: float = math.nan
    exceedances: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    above_counts: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    gibbs_overlaps: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def key(self) -> tuple[int, int]:
        return (self.seed, self.stream_id)

    @property
    def tube_reach(self) -> np.ndarray:
        return np.maximum(self.entropic_reach, self.lower_reach)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReplicaSummary):
            return NotImplemented
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray):
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif a != b and not (isinstance(a, float) and math.isnan(a) and math.isnan(b)):
                return False
        return True

    __hash__ = None


class SummarySet:
    """Replica summaries ordered by ``(seed, stream_id)``; merging is a sorted union."""

    def __init__(self, summaries: Iterable[ReplicaSummary] = ()):
        items = sorted(summaries, key=lambda r: r.key)
        keys = [r.key for r in items]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate replica in summary set")
        self.items: tuple[ReplicaSummary, ...] = tuple(items)

    @classmethod
    def from_trees(cls, trees: Iterable[GenealogyTree], config: SummaryConfig | None = None) -> "SummarySet":
        config = config or SummaryConfig()
        return cls(summarize(tree, config) for tree in trees)

    def merge(self, other: "SummarySet") -> "SummarySet":
        return SummarySet(self.items + other.items)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __eq__(self, other) -> bool:
        return isinstance(other, SummarySet) and self.items == other.items

    @property
    def t(self) -> float:
        horizons = {r.t for r in self.items}
        if len(horizons) != 1:
            raise ValueError(f"summary set mixes horizons {sorted(horizons)}")
        return horizons.pop()

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.items])


# ----------------------------------------------------------------------------
# tree scans


@nb.njit(cache=True)
def _upper_reach(parent, status, ck_start, ck_len, ck_t, ck_x, t, slope, gamma, y):
    mark = _has_alive_descendant(parent, status)
    reach = NO_REACH
    for i in range(parent.size):
        if not mark[i]:
            continue
        for c in range(ck_start[i], ck_start[i] + ck_len[i]):
            s = ck_t[c]
            x = ck_x[c]
            base = slope * s + y
            if x > base:
                d = min(s, t - s)
                if d > reach and x > base + d**gamma:
                    reach = d
    return reach


@nb.njit(cache=True)
def _leaf_reaches(leaves, parent, ck_start, ck_len, ck_t, ck_x, t, slope, alpha, beta, offset):
    entropic = np.full(leaves.size, NO_REACH)
    lower = np.full(leaves.size, NO_REACH)
    for k in range(leaves.size):
        i = leaves[k]
        while i >= 0:
            for c in range(ck_start[i], ck_start[i] + ck_len[i]):
                s = ck_t[c]
                x = ck_x[c]
                d = min(s, t - s)
                line = offset + slope * s
                if d > entropic[k] and x >= line - d**alpha:
                    entropic[k] = d
                if d > lower[k] and x <= line - d**beta:
                    lower[k] = d
            i = parent[i]
    return entropic, lower


def _pairs_upper(n: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.triu_indices(n, k=1)
    return a, b


def derivative_martingale(tree: GenealogyTree) -> float:
    """``Z(t) = sum_k (sqrt2 t - x_k) exp(-sqrt2 (sqrt2 t - x_k))`` over alive particles."""
    if tree.is_pruned:
        raise ValueError("derivative martingale needs an unpruned tree (pruning biases the sum)")
    return derivative_martingale_from_positions(tree.final_positions, tree.t)


def derivative_martingale_from_positions(positions, t: float) -> float:
    gap = SQRT2 * t - np.asarray(positions, dtype=float)
    return float(np.sum(gap * np.exp(-SQRT2 * gap)))


def derivative_martingale_recentred(recentred, t: float) -> float:
    """Same sum from ``x - m(t)``, reinstating the log term of the front."""
    gap = -(np.asarray(recentred, dtype=float) + float(front_m(t)) - SQRT2 * t)
    return float(np.sum(gap * np.exp(-SQRT2 * gap)))


@dataclass
class GibbsSample:
    """Pair overlaps ``Q/t`` drawn from the product Gibbs measure at inverse temperature ``beta``."""

    beta: float
    overlaps: np.ndarray
    pairs: np.ndarray = field(repr=False)
    two_point_regime: bool = True


def gibbs_overlap_distribution(tree: GenealogyTree, beta: float, n_pairs: int, rng: RngStream) -> GibbsSample:
    """Sample ``n_pairs`` leaf pairs with weights ``exp(beta x_k)`` each and return ``Q/t``.

    Weights are formed from max-shifted exponents, so no overflow at large ``beta t``.
    """
    if not beta > 0:
        raise ValueError(f"inverse temperature must be positive, got {beta}")
    leaves = tree.alive
    if leaves.size == 0:
        raise ValueError("tree has no alive particle")
    x = tree.death_position[leaves]
    w = np.exp(beta * (x - x.max()))
    cdf = np.cumsum(w)
    u = rng.generator.random((n_pairs, 2)) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), leaves.size - 1)
    pairs = leaves[idx]
    q = _pair_overlaps(tree.parent, tree.depth, tree.death_time, pairs[:, 0].copy(), pairs[:, 1].copy())
    return GibbsSample(beta, q / tree.t, pairs, bool(beta > SQRT2))


def summarize(tree: GenealogyTree, config: SummaryConfig, rng: RngStream | None = None) -> ReplicaSummary:
    """Reduce one tree to a :class:`ReplicaSummary`."""
    t = tree.t
    leaves = tree.alive
    x = tree.death_position[leaves]
    m = float(front_m(t)) if t > 1 else 0.0
    slope = m / t
    top = np.sort(x)[::-1][: config.top_m].copy()
    rel = x - m
    lo, hi = config.window
    in_window = (rel >= lo) & (rel <= hi)
    order = np.argsort(-rel[in_window], kind="stable")
    window_leaves = leaves[in_window][order]
    window_positions = rel[in_window][order]
    a, b = _pairs_upper(window_leaves.size)
    overlaps = _pair_overlaps(tree.parent, tree.depth, tree.death_time, window_leaves[a], window_leaves[b])
    pair_reach = float(np.max(np.minimum(overlaps, t - overlaps))) if overlaps.size else NO_REACH
    upper = _upper_reach(tree.parent, tree.status, tree.ck_start, tree.ck_len, tree.ck_time,
                         tree.ck_pos, t, slope, config.gamma, config.y)
    entropic, lower = _leaf_reaches(window_leaves, tree.parent, tree.ck_start, tree.ck_len,
                                    tree.ck_time, tree.ck_pos, t, slope, config.alpha,
                                    config.beta, hi)
    z = math.nan if tree.is_pruned else derivative_martingale_from_positions(x, t)
    levels = config.exceedance_levels(t)
    exceed = np.array([np.count_nonzero(x > level) for level in levels], dtype=np.int64)
    above = np.array([np.count_nonzero(rel >= y) for y in config.above_levels], dtype=np.int64)
    gibbs = np.empty(0)
    if config.gibbs_pairs > 0 and x.size:
        stream = rng or RngStream(tree.seed, tree.stream_id, GIBBS_SUBSTREAM)
        gibbs = gibbs_overlap_distribution(tree, config.gibbs_beta, config.gibbs_pairs, stream).overlaps
    return ReplicaSummary(
        seed=tree.seed, stream_id=tree.stream_id, t=t, n_alive=leaves.size,
        n_pruned=tree.n_pruned, max_position=float(x.max()) if x.size else math.nan, top=top,
        window_positions=window_positions, window_overlaps=overlaps, pair_reach=pair_reach,
        upper_reach=float(upper), entropic_reach=entropic, lower_reach=lower,
        derivative_martingale=z, exceedances=exceed, above_counts=above, gibbs_overlaps=gibbs,
    )


# ----------------------------------------------------------------------------
# interval helpers


def wilson_interval(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    z = stats.norm.ppf(0.5 + level / 2)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return (lo, hi)


def decrease_p_value(k1: int, n1: int, k2: int, n2: int) -> float:
    """One-sided two-proportion z-test of ``p1 > p2``."""
    if n1 == 0 or n2 == 0:
        return 1.0
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0:
        return 1.0 if k1 / n1 <= k2 / n2 else 0.0
    return float(stats.norm.sf((k1 / n1 - k2 / n2) / se))


def paired_decrease_p_value(first: np.ndarray, second: np.ndarray) -> float:
    """Exact one-sided McNemar test that event ``first`` is more frequent than ``second``.

    Both arrays hold one indicator per replica, for the same replicas.
    """
    first, second = np.asarray(first, dtype=bool), np.asarray(second, dtype=bool)
    b = int(np.count_nonzero(first & ~second))
    c = int(np.count_nonzero(~first & second))
    if b + c == 0:
        return 1.0
    return float(stats.binomtest(b, b + c, 0.5, alternative="greater").pvalue)


@dataclass
class RateRow:
    r: float
    count: int
    n: int
    fraction: float
    ci_low: float
    ci_high: float
    events: np.ndarray | None = field(default=None, repr=False)  # per-replica indicators


def _rate_row(r: float, count: int, n: int, events: np.ndarray | None = None) -> RateRow:
    lo, hi = wilson_interval(count, n)
    return RateRow(r, int(count), int(n), count / n if n else 0.0, lo, hi, events)


def _events_row(r: float, events) -> RateRow:
    events = np.asarray(events, dtype=bool)
    return _rate_row(r, int(np.count_nonzero(events)), events.size, events)


def trend_p_value(a: RateRow, b: RateRow) -> float:
    """One-sided p-value for ``rate(a) > rate(b)``; paired when both rows carry per-replica events."""
    if a.events is not None and b.events is not None and a.events.size == b.events.size:
        return paired_decrease_p_value(a.events, b.events)
    return decrease_p_value(a.count, a.n, b.count, b.n)


def strictly_decreasing(rows: Sequence, alpha: float = 0.05) -> bool:
    """Successive rates drop: disjoint Wilson intervals or a one-sided test at ``alpha``."""
    for a, b in zip(rows, rows[1:]):
        disjoint = a.ci_low > b.ci_high
        if not disjoint and trend_p_value(a, b) >= alpha:
            return False
    return True


def _as_summaries(replicas, config: SummaryConfig | None = None) -> SummarySet:
    if isinstance(replicas, SummarySet):
        return replicas
    replicas = list(replicas)
    if replicas and isinstance(replicas[0], GenealogyTree):
        return SummarySet.from_trees(replicas, config)
    return SummarySet(replicas)


# ----------------------------------------------------------------------------
# estimators


@dataclass
class GenealogyResult:
    t: float
    window: tuple[float, float]
    rows: list[RateRow]
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray
    n_pairs: int

    @property
    def bimodal(self) -> bool:
        """Both end bins hold more pairs than the average interior bin."""
        c = self.histogram_counts
        if c.size < 3 or c.sum() == 0:
            return False
        inner = c[1:-1].mean()
        return bool(c[0] > inner and c[-1] > inner)


def genealogy_concentration(replicas, r_values: Sequence[float], window=(-2.0, 0.0), bins: int = 24) -> GenealogyResult:
    """Fraction of replicas having an extremal pair whose overlap lies in ``(r, t - r)``."""
    summaries = _as_summaries(replicas, SummaryConfig(window=tuple(window)))
    t = summaries.t
    for r in r_values:
        if t <= 3 * r:
            raise ValueError(f"need t > 3r (got t={t}, r={r})")
    reach = summaries.column("pair_reach")
    n = len(summaries)
    rows = [_events_row(r, reach > r) for r in r_values]
    overlaps = np.concatenate([s.window_overlaps for s in summaries]) if n else np.empty(0)
    counts, edges = np.histogram(overlaps, bins=bins, range=(0.0, t))
    return GenealogyResult(t, tuple(window), rows, edges, counts, overlaps.size)


def pair_interior_mass(replicas, r: float) -> float:
    """Share of extremal pairs (pooled over replicas) with overlap in ``(r, t - r)``."""
    summaries = _as_summaries(replicas)
    t = summaries.t
    q = np.concatenate([s.window_overlaps for s in summaries])
    if q.size == 0:
        return 0.0
    return float(np.mean((q > r) & (q < t - r)))


ENVELOPE_MODES = ("upper", "entropic", "lower", "tube")


@dataclass
class EnvelopeResult:
    mode: str
    t: float
    rows: list[RateRow]
    containment: list[RateRow]  # per-particle, extremal modes only
    theorem_regime: list[bool]


def envelope_violation_rate(replicas, which: str, r_values: Sequence[float], config: SummaryConfig | None = None) -> EnvelopeResult:
    """Fraction of replicas where the envelope event of mode ``which`` happens on ``[r, t - r]``.

    ``upper``: some particle path exceeds ``y + U`` (all particles).
    ``entropic``: an extremal particle path reaches ``D_max + E_alpha``.
    ``lower``: an extremal particle path drops to ``D_max + E_beta``.
    ``tube``: either of the two previous. A window holding no particle counts
    as no violation. ``containment`` reports the share of extremal particles
    whose path stays strictly inside the band.
    """
    if which not in ENVELOPE_MODES:
        raise ValueError(f"unknown envelope mode {which!r}; expected one of {ENVELOPE_MODES}")
    summaries = _as_summaries(replicas, config)
    t = summaries.t
    for r in r_values:
        if not t > 2 * r:
            raise ValueError(f"window [r, t-r] is empty for t={t}, r={r}")
    rows, containment = [], []
    for r in r_values:
        if which == "upper":
            rows.append(_events_row(r, [s.upper_reach >= r for s in summaries]))
            continue
        per_leaf = [getattr(s, f"{which}_reach") for s in summaries]
        rows.append(_events_row(r, [bool(np.any(p >= r)) for p in per_leaf]))
        total = sum(p.size for p in per_leaf)
        inside = sum(int(np.count_nonzero(p < r)) for p in per_leaf)
        containment.append(_rate_row(r, inside, total))
    return EnvelopeResult(which, t, rows, containment, [t > 3 * r for r in r_values])


@dataclass
class LocalFinitenessResult:
    y: float
    horizons: list[float]
    tail_curves: dict[float, np.ndarray]  # P[N >= k] for k = 0..max
    quantile: float
    quantiles: dict[float, float]

    @property
    def relative_spread(self) -> float:
        q = np.array(list(self.quantiles.values()), dtype=float)
        return float((q.max() - q.min()) / q.min()) if q.min() > 0 else math.inf


def counts_above(summaries: SummarySet, y: float, levels: Sequence[float]) -> np.ndarray:
    if y in levels:
        j = list(levels).index(y)
        return np.array([s.above_counts[j] for s in summaries])
    # fall back to the stored top order statistics
    out = []
    for s in summaries:
        rel = s.top - float(front_m(s.t))
        if rel.size and rel[-1] >= y and s.n_alive > rel.size:
            raise ValueError(f"level {y} not stored and beyond the top order statistics")
        out.append(int(np.count_nonzero(rel >= y)))
    return np.array(out)


def local_finiteness_curve(replica_sets: dict[float, SummarySet], y: float, levels=(-1.0,), quantile: float = 0.99) -> LocalFinitenessResult:
    """Empirical ``P[N_t[y, inf) >= N]`` per horizon and the spread of its upper quantile."""
    curves, quantiles = {}, {}
    for t, summaries in sorted(replica_sets.items()):
        counts = counts_above(_as_summaries(summaries), y, levels)
        k_max = int(counts.max()) if counts.size else 0
        curves[t] = np.array([np.mean(counts >= k) for k in range(k_max + 2)])
        quantiles[t] = float(np.quantile(counts, quantile, method="inverted_cdf"))
    return LocalFinitenessResult(y, sorted(replica_sets), curves, quantile, quantiles)


@dataclass
class TailFit:
    t: float
    x_grid: np.ndarray
    survival: np.ndarray
    slope: float
    slope_se: float
    intercept: float
    kappa: float
    bound_ok: bool
    loglik_gumbel: float
    loglik_bbm: float
    vuong_z: float
    n_tail: int

    @property
    def gumbel_rejected(self) -> bool:
        return self.vuong_z > stats.norm.ppf(0.95)


class TailSampleError(ValueError):
    """Too few maxima in the regression window."""


def max_law_tail(replicas, window=(0.5, 2.5), n_grid: int = 21, likelihood_start: float = 1.0) -> TailFit:
    """Right tail of ``max_k x_k(t) - m(t)``.

    Regresses ``log((1 - F(x)) / x)`` on ``x`` over ``window``, fits the
    right-tail bound constant on ``Y in (0, 1]`` and checks it on the rest of
    ``(0, sqrt t)``, and compares the tails ``e^{-sqrt2 x}`` and
    ``x e^{-sqrt2 x}`` by likelihood (Vuong) above ``likelihood_start``.
    """
    summaries = _as_summaries(replicas)
    t = summaries.t
    maxima = summaries.column("max_position")
    # a pruned-out population ended far below the front: it stays in the denominator
    rel = np.sort(np.where(np.isnan(maxima), -np.inf, maxima) - float(front_m(t)))
    n = rel.size
    lo, hi = window
    n_tail = int(np.count_nonzero(rel > lo))
    if n_tail < 100:
        raise TailSampleError(f"only {n_tail} maxima beyond x={lo}; need at least 100")
    grid = np.linspace(lo, hi, n_grid)
    surv = 1.0 - np.searchsorted(rel, grid, side="right") / n
    ok = surv > 0
    fit = stats.linregress(grid[ok], np.log(surv[ok] / grid[ok]))

    # right-tail bound: kappa fitted on (0, 1], checked (within 3 SE) up to sqrt t
    y_grid = np.linspace(0.05, min(math.sqrt(t), rel.max()), 60)
    p_hat = 1.0 - np.searchsorted(rel, y_grid, side="left") / n
    shape = (1 + y_grid) ** 2 * np.exp(-SQRT2 * y_grid)
    head = y_grid <= 1.0
    kappa = float(np.max(p_hat[head] / shape[head]))
    se = np.sqrt(p_hat * (1 - p_hat) / n)
    bound_ok = bool(np.all(p_hat <= kappa * shape + 3 * se + 1.0 / n))

    tail = rel[rel > likelihood_start] - likelihood_start
    x0 = likelihood_start
    ll_g = -SQRT2 * tail + math.log(SQRT2)
    xs = tail + x0
    ll_b = -SQRT2 * tail + np.log(SQRT2 * xs - 1) - math.log(x0)
    diff = ll_b - ll_g
    vuong = float(diff.sum() / (math.sqrt(diff.size) * diff.std(ddof=1))) if diff.size > 1 else 0.0
    return TailFit(t, grid, surv, float(fit.slope), float(fit.stderr), float(fit.intercept), kappa,
                   bound_ok, float(ll_g.sum()), float(ll_b.sum()), vuong, n_tail)


def exceedance_formula(t: float, x):
    """Leading-order mean number of particles above ``x``: ``e^t / sqrt(2 pi t) exp(-x^2 / 2t)``."""
    x = np.asarray(x, dtype=float)
    return np.exp(t - x * x / (2 * t)) / math.sqrt(2 * math.pi * t)


def exceedance_exact_mean(t: float, x):
    """``e^t P[N(0, t) > x]`` (first moment; correlations play no role)."""
    return np.exp(t + stats.norm.logsf(np.asarray(x, dtype=float) / math.sqrt(t)))


@dataclass
class ExceedanceRow:
    level: float
    mean: float
    se: float
    formula: float
    exact: float


def exceedance_counts(replicas, config: SummaryConfig | None = None) -> list[ExceedanceRow]:
    """Empirical mean count above each configured level next to the formulas."""
    config = config or SummaryConfig()
    summaries = _as_summaries(replicas, config)
    t = summaries.t
    counts = np.array([s.exceedances for s in summaries], dtype=float)
    rows = []
    for j, level in enumerate(config.exceedance_levels(t)):
        c = counts[:, j]
        rows.append(ExceedanceRow(float(level), float(c.mean()), float(c.std(ddof=1) / math.sqrt(c.size)),
                                  float(exceedance_formula(t, level)), float(exceedance_exact_mean(t, level))))
    return rows


@dataclass
class GapRow:
    rank: int
    mean: float
    se: float
    poisson_mean: float
    poisson_se: float
    harmonic: float
    brunet_derrida: float
    denser_than_poisson: bool


def poisson_gap_control(n_samples: int, max_rank: int, rng: RngStream, rate: float = SQRT2) -> np.ndarray:
    """Gaps between the top ``max_rank + 1`` points of a PPP with intensity ``e^{-rate x} dx``.

    The ``n``-th point from the top satisfies ``e^{-rate x_n} / rate = Gamma_n``
    with ``Gamma_n`` the arrival times of a unit Poisson process.
    """
    arrivals = np.cumsum(rng.generator.standard_exponential((n_samples, max_rank + 1)), axis=1)
    points = -np.log(rate * arrivals) / rate
    return -np.diff(points, axis=1)


def gap_statistics(replicas, max_rank: int, rng: RngStream | None = None, n_control: int | None = None):
    """Mean gaps ``D_t(n, n+1)`` for ``n = 1..max_rank`` against a Poisson control.

    Replicas with at most ``max_rank`` particles are skipped; returns the rows
    and the number skipped.
    """
    if not 1 <= max_rank <= 20:
        raise ValueError("max_rank must lie in 1..20")
    summaries = _as_summaries(replicas)
    tops = [s.top for s in summaries if s.top.size > max_rank]
    skipped = len(summaries) - len(tops)
    if not tops:
        raise ValueError("no replica has enough particles")
    gaps = -np.diff(np.array([top[: max_rank + 1] for top in tops]), axis=1)
    control = poisson_gap_control(n_control or len(tops), max_rank, rng or RngStream(0, 0, 7))
    rows = []
    for n in range(1, max_rank + 1):
        g, c = gaps[:, n - 1], control[:, n - 1]
        se, cse = g.std(ddof=1) / math.sqrt(g.size), c.std(ddof=1) / math.sqrt(c.size)
        bd = 1 / n - 1 / (n * math.log(n)) if n > 1 else math.nan
        rows.append(GapRow(n, float(g.mean()), float(se), float(c.mean()), float(cse), 1 / (SQRT2 * n),
                           bd / SQRT2, bool(c.mean() - g.mean() >= 3 * math.hypot(se, cse))))
    return rows, skipped


def gibbs_overlap_histogram(replicas, bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    summaries = _as_summaries(replicas)
    q = np.concatenate([s.gibbs_overlaps for s in summaries])
    counts, edges = np.histogram(q, bins=bins, range=(0.0, 1.0))
    return counts / max(q.size, 1), edges


def gibbs_masses(replicas, inner=(0.1, 0.9)) -> dict[str, float]:
    summaries = _as_summaries(replicas)
    q = np.concatenate([s.gibbs_overlaps for s in summaries])
    lo, hi = inner
    return {
        "n": int(q.size),
        "near_zero": float(np.mean(q <= lo)),
        "middle": float(np.mean((q > lo) & (q < hi))),
        "near_one": float(np.mean(q >= hi)),
    }


def reference_centerings(t: float) -> dict[str, float]:
    return {"m": float(front_m(t)), "r": float(rem_front_r(t))}
