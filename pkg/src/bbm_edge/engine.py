"""Event-driven simulation of branching Brownian motion with full genealogy.

A realization is stored as an arena of particle records (struct of arrays).
Record ``i`` lives on ``[birth_time[i], death_time[i]]``; its checkpoints
``ck_time/ck_pos[ck_start[i] : ck_start[i] + ck_len[i]]`` always include the
birth point, every grid multiple of ``grid_dt`` inside its lifetime and the
death point. Parents always precede their children in the arena.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np

from .envelopes import front_m
from .kernels import OffspringLaw, RngStream

BRANCHED, ALIVE, PRUNED = 0, 1, 2
DEFAULT_GRID_DT = 0.25
DEFAULT_MAX_PARTICLES = 50_000_000
_GRID_EPS = 1e-12


class CapacityError(RuntimeError):
    """The arena outgrew the configured particle cap."""


@dataclass(frozen=True)
class PruneConfig:
    """Kill particles below the line ``(s/t) m(t) - margin``."""

    enabled: bool = False
    margin: float = 40.0

    def __post_init__(self) -> None:
        if self.enabled and not self.margin >= 10:
            raise ValueError(f"prune margin must be >= 10 when pruning is enabled, got {self.margin}")


@dataclass
class ParticlePath:
    """Ancestral line of one particle: checkpoint times and positions."""

    times: np.ndarray
    positions: np.ndarray
    leaf: int = -1

    def at(self, s: float) -> float:
        k = np.searchsorted(self.times, s - 1e-12)
        if k >= self.times.size or abs(self.times[k] - s) > 1e-9:
            raise ValueError(f"{s} is not a checkpoint time of this path")
        return float(self.positions[k])


@dataclass
class ExtremalSnapshot:
    """Alive particles whose recentred final position ``x - m(t)`` lies in a window."""

    t: float
    window: tuple[float, float]
    centering: float
    positions: np.ndarray  # recentred, descending
    leaves: np.ndarray

    def __len__(self) -> int:
        return self.positions.size


OK, NEED_RECORDS, NEED_CHECKPOINTS, NEED_STACK, OVER_CAP = 0, 1, 2, 3, 4


@nb.njit(cache=True)
def _simulate_kernel(gen, t, grid_dt, cumulative, prune, line_slope, margin, max_records,
                     parent, birth_t, birth_x, death_t, death_x, status, ck_start, ck_len,
                     ck_t, ck_x, stack):
    cap = parent.size
    ck_cap = ck_t.size
    parent[0] = -1
    birth_t[0] = 0.0
    birth_x[0] = 0.0
    n_rec = 1
    n_ck = 0
    stack[0] = 0
    sp = 1
    k_max = cumulative.size
    while sp > 0:
        sp -= 1
        i = stack[sp]
        s = birth_t[i]
        x = birth_x[i]
        end = s + gen.standard_exponential()
        branched = end < t
        if not branched:
            end = t
        if n_ck + 2 + (end - s) / grid_dt >= ck_cap:
            return NEED_CHECKPOINTS, n_rec, n_ck
        ck_start[i] = n_ck
        ck_t[n_ck] = s
        ck_x[n_ck] = x
        n_ck += 1
        cut = False
        g_index = np.floor(s / grid_dt + _GRID_EPS) + 1.0
        while True:
            g = g_index * grid_dt
            if g >= end - _GRID_EPS:
                break
            x += np.sqrt(g - s) * gen.standard_normal()
            s = g
            ck_t[n_ck] = s
            ck_x[n_ck] = x
            n_ck += 1
            if prune and x < line_slope * s - margin:
                cut = True
                break
            g_index += 1.0
        if not cut:
            x += np.sqrt(end - s) * gen.standard_normal()
            s = end
            ck_t[n_ck] = s
            ck_x[n_ck] = x
            n_ck += 1
            if prune and x < line_slope * s - margin:
                cut = True
        ck_len[i] = n_ck - ck_start[i]
        death_t[i] = s
        death_x[i] = x
        if cut:
            status[i] = PRUNED
        elif not branched:
            status[i] = ALIVE
        else:
            status[i] = BRANCHED
            u = gen.random()
            k = 1
            while k < k_max and u >= cumulative[k - 1]:
                k += 1
            if n_rec + k > max_records:
                return OVER_CAP, n_rec, n_ck
            if n_rec + k > cap:
                return NEED_RECORDS, n_rec, n_ck
            if sp + k > stack.size:
                return NEED_STACK, n_rec, n_ck
            for c in range(k):
                j = n_rec + c
                parent[j] = i
                birth_t[j] = end
                birth_x[j] = x
            # push in reverse so the first child is processed first
            for c in range(k - 1, -1, -1):
                stack[sp] = n_rec + c
                sp += 1
            n_rec += k
    return OK, n_rec, n_ck


class _Workspace:
    """Reusable arena buffers; reallocated only when a realization overflows them."""

    def __init__(self, records: int = 1 << 12, checkpoints: int = 1 << 14, stack: int = 256):
        self.records = records
        self.checkpoints = checkpoints
        self.stack_size = stack
        self.parent = np.empty(records, np.int64)
        self.birth_t = np.empty(records)
        self.birth_x = np.empty(records)
        self.death_t = np.empty(records)
        self.death_x = np.empty(records)
        self.status = np.empty(records, np.int8)
        self.ck_start = np.empty(records, np.int64)
        self.ck_len = np.empty(records, np.int64)
        self.ck_t = np.empty(checkpoints)
        self.ck_x = np.empty(checkpoints)
        self.stack = np.empty(stack, np.int64)

    def arrays(self):
        return (self.parent, self.birth_t, self.birth_x, self.death_t, self.death_x, self.status,
                self.ck_start, self.ck_len, self.ck_t, self.ck_x, self.stack)

    def grown(self, code: int) -> "_Workspace":
        records, checkpoints, stack = self.records, self.checkpoints, self.stack_size
        if code == NEED_RECORDS:
            records *= 2
        elif code == NEED_CHECKPOINTS:
            checkpoints *= 2
        else:
            stack *= 2
        return _Workspace(records, checkpoints, stack)


_WORKSPACE = _Workspace()


@nb.njit(cache=True)
def _depths(parent):
    depth = np.zeros(parent.size, np.int64)
    for i in range(1, parent.size):
        depth[i] = depth[parent[i]] + 1
    return depth


@nb.njit(cache=True)
def _mrca(parent, depth, i, j):
    while depth[i] > depth[j]:
        i = parent[i]
    while depth[j] > depth[i]:
        j = parent[j]
    while i != j:
        i = parent[i]
        j = parent[j]
    return i


@nb.njit(cache=True)
def _pair_overlaps(parent, depth, death_t, leaves_a, leaves_b):
    out = np.empty(leaves_a.size)
    for k in range(leaves_a.size):
        out[k] = death_t[_mrca(parent, depth, leaves_a[k], leaves_b[k])]
    return out


@nb.njit(cache=True)
def _resample_kernel(parent, ck_start, ck_len, ck_t, normals):
    n_rec = parent.size
    ck_x = np.empty(ck_t.size)
    death_x = np.empty(n_rec)
    for i in range(n_rec):
        a = ck_start[i]
        x = 0.0 if parent[i] < 0 else death_x[parent[i]]
        ck_x[a] = x
        for c in range(a + 1, a + ck_len[i]):
            x += np.sqrt(ck_t[c] - ck_t[c - 1]) * normals[c]
            ck_x[c] = x
        death_x[i] = x
    return ck_x, death_x


@nb.njit(cache=True)
def _has_alive_descendant(parent, status):
    mark = status == ALIVE
    for i in range(parent.size - 1, 0, -1):
        if mark[i]:
            mark[parent[i]] = True
    return mark


@dataclass
class GenealogyTree:
    """One BBM realization to horizon ``t``: particle arena plus checkpoints."""

    t: float
    grid_dt: float
    law: OffspringLaw
    seed: int
    stream_id: int
    prune: PruneConfig
    parent: np.ndarray
    birth_time: np.ndarray
    birth_position: np.ndarray
    death_time: np.ndarray
    death_position: np.ndarray
    status: np.ndarray
    ck_start: np.ndarray
    ck_len: np.ndarray
    ck_time: np.ndarray
    ck_pos: np.ndarray
    _depth: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_records(self) -> int:
        return self.parent.size

    @property
    def alive(self) -> np.ndarray:
        """Arena indices of particles alive at the horizon, in arena order."""
        return np.flatnonzero(self.status == ALIVE)

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(self.status == ALIVE))

    @property
    def n_pruned(self) -> int:
        return int(np.count_nonzero(self.status == PRUNED))

    @property
    def is_pruned(self) -> bool:
        return self.n_pruned > 0

    @property
    def final_positions(self) -> np.ndarray:
        return self.death_position[self.status == ALIVE]

    @property
    def depth(self) -> np.ndarray:
        if self._depth is None:
            self._depth = _depths(self.parent)
        return self._depth

    def children(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.parent == i)

    def checkpoints(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        a = self.ck_start[i]
        b = a + self.ck_len[i]
        return self.ck_time[a:b], self.ck_pos[a:b]

    def lineage(self, i: int) -> list[int]:
        """Record indices from the root down to ``i``."""
        line = []
        while i >= 0:
            line.append(int(i))
            i = self.parent[i]
        return line[::-1]

    def alive_descendant_mask(self) -> np.ndarray:
        return _has_alive_descendant(self.parent, self.status)

    def audit(self) -> None:
        """Raise ``AssertionError`` if any structural invariant fails."""
        t = self.t
        assert self.parent[0] == -1 and np.all(self.parent[1:] >= 0), "single root expected"
        assert self.birth_time[0] == 0.0 and self.birth_position[0] == 0.0, "root must start at (0, 0)"
        idx = np.arange(1, self.n_records)
        assert np.all(self.parent[1:] < idx), "parents must precede children"
        assert np.all(self.birth_time < self.death_time), "birth_time < death_time"
        assert np.all(self.death_time <= t), "death_time <= t"
        p = self.parent[1:]
        assert np.all(self.status[p] == BRANCHED), "only branched records have children"
        assert np.array_equal(self.birth_time[1:], self.death_time[p]), "child birth = parent death time"
        assert np.array_equal(self.birth_position[1:], self.death_position[p]), "child birth = parent death position"
        alive = self.status == ALIVE
        assert np.all(self.death_time[alive] == t), "alive particles reach the horizon"
        if not self.is_pruned:
            assert self.n_alive >= 1, "at least one particle alive"
        first = self.ck_start
        last = self.ck_start + self.ck_len - 1
        assert np.array_equal(self.ck_time[first], self.birth_time)
        assert np.array_equal(self.ck_pos[first], self.birth_position)
        assert np.array_equal(self.ck_time[last], self.death_time)
        assert np.array_equal(self.ck_pos[last], self.death_position)
        n_children = np.bincount(p, minlength=self.n_records)
        branched = self.status == BRANCHED
        assert np.all(n_children[branched] >= 1) and np.all(n_children[~branched] == 0)

    @classmethod
    def from_records(cls, t: float, parent, birth_time, death_time, death_position, status,
                     checkpoints: dict | None = None, law: OffspringLaw | None = None,
                     grid_dt: float = DEFAULT_GRID_DT) -> "GenealogyTree":
        """Build a tree from record arrays (fixtures, reloaded dumps).

        ``checkpoints`` maps a record id to ``(times, positions)``; records
        without an entry get their birth and death points only.
        """
        parent = np.asarray(parent, dtype=np.int64)
        birth_time = np.asarray(birth_time, dtype=float)
        death_time = np.asarray(death_time, dtype=float)
        death_position = np.asarray(death_position, dtype=float)
        birth_position = np.where(parent >= 0, death_position[np.maximum(parent, 0)], 0.0)
        checkpoints = checkpoints or {}
        ck_t, ck_x, lens = [], [], []
        for i in range(parent.size):
            s, x = checkpoints.get(i, ([birth_time[i], death_time[i]], [birth_position[i], death_position[i]]))
            ck_t.append(np.asarray(s, dtype=float))
            ck_x.append(np.asarray(x, dtype=float))
            lens.append(len(s))
        lens = np.asarray(lens, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(np.int64)
        tree = cls(float(t), grid_dt, law or OffspringLaw.binary(), 0, 0, PruneConfig(), parent, birth_time,
                   birth_position, death_time, death_position, np.asarray(status, dtype=np.int8), starts, lens,
                   np.concatenate(ck_t), np.concatenate(ck_x))
        tree.audit()
        return tree

    @classmethod
    def load(cls, directory: str | Path, stem: str = "tree", t: float | None = None) -> "GenealogyTree":
        """Inverse of :meth:`save` (the horizon defaults to the largest death time)."""
        directory = Path(directory)
        with open(directory / f"{stem}_records.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        with open(directory / f"{stem}_checkpoints.csv", newline="") as fh:
            cks = list(csv.DictReader(fh))
        status = [ALIVE if r["alive"] == "1" else PRUNED if r["pruned"] == "1" else BRANCHED for r in rows]
        points: dict[int, tuple[list, list]] = {}
        for c in cks:
            s, x = points.setdefault(int(c["id"]), ([], []))
            s.append(float(c["time"]))
            x.append(float(c["position"]))
        death_x = [points[i][1][-1] for i in range(len(rows))]
        death_t = [float(r["death_time"]) for r in rows]
        return cls.from_records(t if t is not None else max(death_t), [int(r["parent"]) for r in rows],
                                [float(r["birth_time"]) for r in rows], death_t, death_x, status, points)

    def leaf_positions(self, leaves) -> np.ndarray:
        return self.death_position[np.asarray(leaves, dtype=np.int64)]

    def save(self, directory: str | Path, stem: str = "tree") -> tuple[Path, Path]:
        """Columnar dump: one row per record plus a separate checkpoint table."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rec_path = directory / f"{stem}_records.csv"
        ck_path = directory / f"{stem}_checkpoints.csv"
        with open(rec_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "parent", "birth_time", "birth_position", "death_time", "alive", "pruned"])
            for i in range(self.n_records):
                w.writerow([
                    i, int(self.parent[i]), repr(float(self.birth_time[i])),
                    repr(float(self.birth_position[i])), repr(float(self.death_time[i])),
                    int(self.status[i] == ALIVE), int(self.status[i] == PRUNED),
                ])
        with open(ck_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "time", "position"])
            for i in range(self.n_records):  # checkpoint storage is not in record order
                for s, x in zip(*self.checkpoints(i)):
                    w.writerow([i, repr(float(s)), repr(float(x))])
        return rec_path, ck_path


def simulate(
    t: float,
    law: OffspringLaw,
    rng: RngStream,
    grid_dt: float = DEFAULT_GRID_DT,
    prune: PruneConfig | None = None,
    max_particles: int = DEFAULT_MAX_PARTICLES,
    copy: bool = True,
) -> GenealogyTree:
    """Sample one BBM tree to horizon ``t``.

    Branch clocks are exact Exp(1) draws and displacements exact Gaussian
    increments between events; the grid only controls where positions are
    recorded. ``max_particles`` caps the number of arena records.

    With ``copy=False`` the tree views a module-level buffer that the next
    call overwrites; campaigns use this to summarize without reallocating.
    """
    global _WORKSPACE
    if not t > 0:
        raise ValueError(f"horizon must be positive, got t={t}")
    if not 0 < grid_dt <= 1:
        raise ValueError(f"grid_dt must lie in (0, 1], got {grid_dt}")
    prune = prune or PruneConfig()
    slope = 0.0
    if prune.enabled:
        if t <= 1:
            raise ValueError("pruning needs t > 1 (the front m(t) is undefined below)")
        slope = float(front_m(t)) / t
    stream = rng
    while True:
        code, n_rec, n_ck = _simulate_kernel(
            stream.generator, float(t), float(grid_dt), law.cumulative, prune.enabled, slope,
            float(prune.margin), int(max_particles), *_WORKSPACE.arrays(),
        )
        if code == OK:
            break
        if code == OVER_CAP:
            raise CapacityError(f"particle cap max_particles={max_particles} exceeded at t={t}")
        # replay the identical stream into a larger arena
        _WORKSPACE = _WORKSPACE.grown(code)
        stream = rng.reset()
    if stream is not rng:
        rng.generator.bit_generator.state = stream.generator.bit_generator.state
    ws = _WORKSPACE
    take = (lambda a, n: a[:n].copy()) if copy else (lambda a, n: a[:n])
    return GenealogyTree(
        t=float(t), grid_dt=float(grid_dt), law=law, seed=rng.seed, stream_id=rng.stream_id,
        prune=prune, parent=take(ws.parent, n_rec), birth_time=take(ws.birth_t, n_rec),
        birth_position=take(ws.birth_x, n_rec), death_time=take(ws.death_t, n_rec),
        death_position=take(ws.death_x, n_rec), status=take(ws.status, n_rec),
        ck_start=take(ws.ck_start, n_rec), ck_len=take(ws.ck_len, n_rec),
        ck_time=take(ws.ck_t, n_ck), ck_pos=take(ws.ck_x, n_ck),
    )


def _require_alive(tree: GenealogyTree, *leaves: int) -> None:
    for i in leaves:
        if not 0 <= i < tree.n_records:
            raise ValueError(f"no particle {i}")
        if tree.status[i] == PRUNED:
            raise ValueError(f"particle {i} was pruned")
        if tree.status[i] != ALIVE:
            raise ValueError(f"particle {i} is not alive at the horizon")


def overlap_Q(tree: GenealogyTree, i: int, j: int) -> float:
    """Branch time of the most recent common ancestor of two alive particles."""
    _require_alive(tree, i, j)
    if i == j:
        return tree.t
    return float(tree.death_time[_mrca(tree.parent, tree.depth, i, j)])


def pair_overlaps(tree: GenealogyTree, a, b) -> np.ndarray:
    """Vectorized :func:`overlap_Q` over index arrays (``Q(i, i) = t``)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return _pair_overlaps(tree.parent, tree.depth, tree.death_time, a, b)


def ancestral_path(tree: GenealogyTree, leaf: int) -> ParticlePath:
    """Checkpointed trajectory of an alive particle from time 0 to ``t``."""
    _require_alive(tree, leaf)
    times, positions = [], []
    for k, i in enumerate(tree.lineage(leaf)):
        s, x = tree.checkpoints(i)
        # the birth point repeats the parent's death point
        start = 0 if k == 0 else 1
        times.append(s[start:])
        positions.append(x[start:])
    return ParticlePath(np.concatenate(times), np.concatenate(positions), leaf)


def resample_positions_on_skeleton(tree: GenealogyTree, rng: RngStream) -> GenealogyTree:
    """Same branching skeleton, fresh Gaussian displacements."""
    normals = rng.generator.standard_normal(tree.ck_time.size)
    ck_pos, death_x = _resample_kernel(tree.parent, tree.ck_start, tree.ck_len, tree.ck_time, normals)
    birth_x = np.where(tree.parent >= 0, death_x[np.maximum(tree.parent, 0)], 0.0)
    return GenealogyTree(
        t=tree.t, grid_dt=tree.grid_dt, law=tree.law, seed=tree.seed, stream_id=tree.stream_id,
        prune=tree.prune, parent=tree.parent, birth_time=tree.birth_time, birth_position=birth_x,
        death_time=tree.death_time, death_position=death_x, status=tree.status,
        ck_start=tree.ck_start, ck_len=tree.ck_len, ck_time=tree.ck_time, ck_pos=ck_pos,
        _depth=tree._depth,
    )


def resample_leaf_positions(tree: GenealogyTree, leaves, n: int, rng: RngStream) -> np.ndarray:
    """``n`` independent draws of the final positions of ``leaves`` given the skeleton.

    Only the records on the union of the ancestral lines are resampled, each
    contributing one ``N(0, lifetime)`` displacement. Returns shape ``(n, len(leaves))``.
    """
    leaves = [int(i) for i in leaves]
    _require_alive(tree, *leaves)
    lines = [tree.lineage(i) for i in leaves]
    records = sorted(set().union(*lines))
    col = {r: c for c, r in enumerate(records)}
    incidence = np.zeros((len(leaves), len(records)))
    for row, line in enumerate(lines):
        incidence[row, [col[r] for r in line]] = 1.0
    sd = np.sqrt(tree.death_time[records] - tree.birth_time[records])
    displacements = rng.generator.standard_normal((n, len(records))) * sd
    return displacements @ incidence.T


def extremal_snapshot(tree: GenealogyTree, window: tuple[float, float]) -> ExtremalSnapshot:
    """Alive particles with ``x - m(t)`` in ``[lo, hi]``, sorted descending."""
    lo, hi = window
    centering = float(front_m(tree.t))
    leaves = tree.alive
    rel = tree.death_position[leaves] - centering
    keep = (rel >= lo) & (rel <= hi)
    order = np.argsort(-rel[keep], kind="stable")
    return ExtremalSnapshot(tree.t, (lo, hi), centering, rel[keep][order], leaves[keep][order])
