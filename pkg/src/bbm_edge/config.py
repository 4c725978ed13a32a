"""Experiment configuration: a flat ``key = value`` file (or JSON) with validation.

Documented keys (defaults in :class:`RunConfig`)::

    experiment     subcommand name
    t              horizon (float)
    horizons       comma list of horizons for multi-horizon experiments
    replicas       number of replicas per horizon
    seed           master seed (64-bit unsigned)
    offspring      "binary" or "k:p,k:p,..." with sum p = 1 and sum k p = 2
    grid_dt        checkpoint spacing in (0, 1]
    prune          true/false
    prune_margin   L >= 10
    window         "lo:hi" relative to m(t)
    r              comma list of r values
    gamma, alpha, beta, y    envelope parameters (y offsets the upper envelope)
    levels         comma list of levels y for counts N_t[y, inf) (local finiteness)
    gibbs_beta, gibbs_pairs  Gibbs sampling
    max_rank       gap statistics rank
    trials         bridge MC paths per parameter set
    dx             F-KPP grid spacing
    jobs           worker processes (never changes results)
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .envelopes import EnvelopeSpec
from .kernels import OffspringLaw


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


THEOREM_MODES_3R = {"genealogy"}
THEOREM_MODES_2R = {"envelopes", "tube"}


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    if isinstance(text, (int, float)):
        return (float(text),)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _window(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        lo, _, hi = str(text).partition(":")
        if not hi:
            raise ConfigError(f"window must look like lo:hi, got {text!r}")
    return (float(lo), float(hi))


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in {"1", "true", "yes", "on"}:
        return True
    if value in {"0", "false", "no", "off"}:
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "simulate"
    t: float = 10.0
    horizons: tuple[float, ...] = ()
    replicas: int = 100
    seed: int = 0
    offspring: str = "binary"
    grid_dt: float = 0.25
    prune: bool = False
    prune_margin: float = 40.0
    window: tuple[float, float] = (-2.0, 0.0)
    r: tuple[float, ...] = (1.0, 2.0, 3.0)
    gamma: float = 1 / 3
    alpha: float = 1 / 3
    beta: float = 2 / 3
    y: float = 0.0
    levels: tuple[float, ...] = (-1.0,)
    gibbs_beta: float = 2.0
    gibbs_pairs: int = 100
    max_rank: int = 3
    trials: int = 100_000
    dx: float = 0.02
    jobs: int = field(default=1, compare=False)

    def __post_init__(self) -> None:
        validate(self)

    @property
    def law(self) -> OffspringLaw:
        return OffspringLaw.parse(self.offspring)

    @property
    def all_horizons(self) -> tuple[float, ...]:
        return self.horizons or (self.t,)

    def to_dict(self, include_jobs: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not include_jobs:
            d.pop("jobs")
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def replace(self, **changes) -> "RunConfig":
        return from_mapping({**self.to_dict(), **changes})


_PARSERS = {
    "experiment": str, "t": float, "horizons": _floats, "replicas": int, "seed": int, "offspring": str,
    "grid_dt": float, "prune": _bool, "prune_margin": float, "window": _window, "r": _floats,
    "gamma": float, "alpha": float, "beta": float, "y": float, "levels": _floats,
    "gibbs_beta": float, "gibbs_pairs": int, "max_rank": int, "trials": int, "dx": float, "jobs": int,
}


def validate(c: RunConfig) -> None:
    try:
        OffspringLaw.parse(c.offspring)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        EnvelopeSpec(t=2.0, gamma=c.gamma, alpha=c.alpha, beta=c.beta, y=c.y)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for t in c.all_horizons:
        if not t > 0:
            raise ConfigError(f"horizon must be positive, got {t}")
    if not 0 < c.grid_dt <= 1:
        raise ConfigError(f"grid_dt must lie in (0, 1], got {c.grid_dt}")
    if c.prune and c.prune_margin < 10:
        raise ConfigError(f"prune margin must be >= 10 to keep the pruning bias negligible, got {c.prune_margin}")
    if c.replicas < 1:
        raise ConfigError("replicas must be >= 1")
    if not 0 <= c.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if c.window[0] > c.window[1]:
        raise ConfigError(f"window must satisfy lo <= hi, got {c.window}")
    if c.gibbs_beta <= 0:
        raise ConfigError("gibbs_beta must be positive (inverse temperature)")
    if not 1 <= c.max_rank <= 20:
        raise ConfigError("max_rank must lie in 1..20")
    if c.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if c.dx <= 0:
        raise ConfigError("dx must be positive")
    for t in c.all_horizons:
        for r in c.r:
            if c.experiment in THEOREM_MODES_3R and not t > 3 * r:
                raise ConfigError(f"need t > 3r for the genealogy statement (t={t}, r={r})")
            if c.experiment in THEOREM_MODES_2R and not t > 2 * r:
                raise ConfigError(f"need t > 2r so that [r, t - r] is non-empty (t={t}, r={r})")


def from_mapping(values: dict) -> RunConfig:
    unknown = set(values) - set(_PARSERS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    parsed = {}
    for key, raw in values.items():
        try:
            parsed[key] = _PARSERS[key](raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    return RunConfig(**parsed)


def parse_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected key = value")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a config file; ``overrides`` (e.g. CLI flags) win."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    values = json.loads(text) if path.suffix == ".json" or text.lstrip().startswith("{") else parse_text(text)
    return from_mapping({**values, **(overrides or {})})


def save_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
