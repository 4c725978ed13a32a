"""Seedable random primitives shared by the simulator and the oracles.

Every stream is a Philox4x64-10 counter-based generator keyed by
``(seed, stream_id)``; a third ``substream`` index is written into the high
word of the 256-bit counter, so sub-streams of one replica never overlap.
Gaussians use numpy's ziggurat (``Generator.standard_normal``); numba-compiled
code calling the same generator methods reproduces numpy's bits exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RNG_ALGORITHM = "philox4x64-10/numpy-ziggurat-normal/numpy-ziggurat-exponential"
K_MAX = 64
_UINT64_MAX = 2**64 - 1


@dataclass
class RngStream:
    """Independent random stream identified by ``(seed, stream_id, substream)``."""

    seed: int
    stream_id: int = 0
    substream: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id", "substream"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _UINT64_MAX:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        counter = np.array([0, 0, 0, self.substream], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key, counter=counter))

    def child(self, substream: int) -> "RngStream":
        """Fresh stream sharing seed and stream id, at another sub-stream."""
        return RngStream(self.seed, self.stream_id, substream)

    def reset(self) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.substream)


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring distribution ``p_k`` for ``k = 1..k_max``.

    ``probabilities[k - 1]`` is ``p_k``. The mean number of offspring must be
    exactly 2 so that the population grows like ``e^t``.
    """

    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("offspring law needs at least one probability")
        if p.size > K_MAX:
            raise ValueError(f"offspring support exceeds k_max={K_MAX}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("offspring probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"offspring probabilities sum to {p.sum():.15g}, not 1")
        k = np.arange(1, p.size + 1)
        mean = float(np.dot(k, p))
        if abs(mean - 2.0) > 1e-12:
            raise ValueError(
                f"mean offspring sum k p_k = {mean:.15g}; the normalization sum k p_k = 2 "
                "is required (E n(t) = e^t)"
            )

    @classmethod
    def binary(cls) -> "OffspringLaw":
        return cls((0.0, 1.0))

    @classmethod
    def from_mapping(cls, mapping: dict[int, float]) -> "OffspringLaw":
        if not mapping:
            raise ValueError("empty offspring mapping")
        if min(mapping) < 1:
            raise ValueError("offspring counts must be >= 1")
        k_max = max(mapping)
        if k_max > K_MAX:
            raise ValueError(f"offspring support exceeds k_max={K_MAX}")
        probs = [0.0] * k_max
        for k, pk in mapping.items():
            probs[k - 1] = float(pk)
        return cls(tuple(probs))

    @classmethod
    def parse(cls, text: str) -> "OffspringLaw":
        """Parse ``binary`` or ``"1:0.5,3:0.5"``."""
        text = text.strip()
        if text == "binary":
            return cls.binary()
        mapping: dict[int, float] = {}
        for item in text.split(","):
            k, _, pk = item.partition(":")
            if not pk:
                raise ValueError(f"bad offspring item {item!r}; expected k:p")
            mapping[int(k)] = float(pk)
        return cls.from_mapping(mapping)

    @property
    def k_max(self) -> int:
        return len(self.probabilities)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.probabilities, dtype=float)

    @property
    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.array)
        c[-1] = 1.0
        return c

    @property
    def second_factorial_moment(self) -> float:
        """``K = sum k(k-1) p_k``."""
        k = np.arange(1, self.k_max + 1)
        return float(np.dot(k * (k - 1), self.array))

    @property
    def is_binary(self) -> bool:
        return self.k_max == 2 and self.probabilities[1] == 1.0

    def describe(self) -> str:
        if self.is_binary:
            return "binary"
        return ",".join(f"{k}:{p!r}" for k, p in enumerate(self.probabilities, 1) if p > 0)


def sample_gaussian_increment(rng: RngStream, dt: float, size: int | None = None):
    """Brownian displacement over a time step ``dt``: ``Normal(0, dt)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return np.sqrt(dt) * rng.generator.standard_normal(size)


def sample_branch_time(rng: RngStream, size: int | None = None):
    """Exp(1) holding time."""
    return rng.generator.standard_exponential(size)


def sample_offspring(rng: RngStream, law: OffspringLaw, size: int | None = None):
    """Offspring count ``k`` with probability ``p_k``.

    One uniform per draw, inverted through the cumulative table (the same
    rule the compiled simulator uses).
    """
    u = rng.generator.random(size)
    k = np.searchsorted(law.cumulative, u, side="right") + 1
    return int(k) if size is None else k


def _bridge_grid(length: float, grid_dt: float) -> np.ndarray:
    if not length > 0:
        raise ValueError(f"bridge length must be positive, got {length}")
    if not grid_dt > 0:
        raise ValueError(f"grid_dt must be positive, got {grid_dt}")
    n = round(length / grid_dt)
    if n < 2 or abs(n * grid_dt - length) > 1e-9 * max(1.0, length):
        raise ValueError(f"grid_dt={grid_dt} must divide length={length} into >= 2 steps")
    return np.linspace(0.0, length, n + 1)


def sample_bridge_path(
    rng: RngStream,
    length: float,
    start: float,
    end: float,
    grid_dt: float,
    n_paths: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Brownian bridge from ``(0, start)`` to ``(length, end)`` on a uniform grid.

    Sampled sequentially from the exact Markov transition of the bridge, so
    the endpoints are pinned exactly. Returns ``(times, positions)``;
    ``positions`` has shape ``(n_paths, len(times))`` when ``n_paths`` is given.
    """
    times = _bridge_grid(length, grid_dt)
    shape = (1 if n_paths is None else n_paths, times.size)
    x = np.empty(shape)
    x[:, 0] = start
    x[:, -1] = end
    z = rng.generator.standard_normal((shape[0], times.size - 2))
    for k in range(1, times.size - 1):
        remaining = length - times[k - 1]
        h = times[k] - times[k - 1]
        mean = x[:, k - 1] + (end - x[:, k - 1]) * h / remaining
        var = h * (remaining - h) / remaining
        x[:, k] = mean + np.sqrt(var) * z[:, k - 1]
    return times, (x[0] if n_paths is None else x)


def bridge_from_free_path(times: np.ndarray, free: np.ndarray) -> np.ndarray:
    """``x(s) - (s/t) x(t)`` applied along the last axis."""
    free = np.asarray(free, dtype=float)
    return free - (times / times[-1]) * free[..., -1:]


def sample_free_path(
    rng: RngStream, length: float, grid_dt: float, n_paths: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Standard Brownian motion from 0 on a uniform grid."""
    times = _bridge_grid(length, grid_dt)
    rows = 1 if n_paths is None else n_paths
    steps = np.sqrt(np.diff(times)) * rng.generator.standard_normal((rows, times.size - 1))
    x = np.zeros((rows, times.size))
    np.cumsum(steps, axis=1, out=x[:, 1:])
    return times, (x[0] if n_paths is None else x)
