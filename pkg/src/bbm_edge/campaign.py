"""Replica campaigns, run manifests and deterministic output files.

Replica ``k`` at horizon ``t`` always draws from the stream
``(seed, round(1000 t) * 2^32 + k)``: the same replica is reproduced by
every experiment that asks for it, and results do not depend on how
replicas are split across worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Iterable, Sequence

from .engine import PruneConfig, simulate
from .extremal import ReplicaSummary, SummaryConfig, SummarySet, summarize
from .kernels import RNG_ALGORITHM, OffspringLaw, RngStream

HORIZON_STRIDE = 2**32
OUT_ENV = "BBM_EDGE_OUT"


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def stream_id(t: float, replica: int) -> int:
    if not 0 <= replica < HORIZON_STRIDE:
        raise ValueError("replica index must fit in 32 bits")
    return int(round(1000 * t)) * HORIZON_STRIDE + replica


@dataclass(frozen=True)
class ReplicaJob:
    t: float
    law: OffspringLaw
    seed: int
    start: int
    stop: int
    grid_dt: float
    prune: PruneConfig
    summary: SummaryConfig


def _run_chunk(job: ReplicaJob) -> list[ReplicaSummary]:
    out = []
    for k in range(job.start, job.stop):
        rng = RngStream(job.seed, stream_id(job.t, k))
        tree = simulate(job.t, job.law, rng, grid_dt=job.grid_dt, prune=job.prune, copy=False)
        out.append(summarize(tree, job.summary))
    return out


def run_replicas(t: float, replicas: int, seed: int, law: OffspringLaw | None = None, *,
                 grid_dt: float = 0.25, prune: PruneConfig | None = None,
                 summary: SummaryConfig | None = None, jobs: int = 1, chunk: int | None = None) -> SummarySet:
    """Simulate and summarize ``replicas`` trees; identical output for any ``jobs``."""
    law = law or OffspringLaw.binary()
    prune = prune or PruneConfig()
    summary = summary or SummaryConfig()
    jobs = max(1, int(jobs))
    chunk = chunk or max(1, math.ceil(replicas / (4 * jobs)))
    tasks = [ReplicaJob(t, law, seed, a, min(a + chunk, replicas), grid_dt, prune, summary)
             for a in range(0, replicas, chunk)]
    if jobs == 1:
        parts = [_run_chunk(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    return SummarySet(s for part in parts for s in part)


CACHE_ENV = "BBM_EDGE_CACHE"


SUMMARY_SOURCES = ("kernels.py", "engine.py", "envelopes.py", "extremal.py")


def _source_digest() -> str:
    """Hash of the modules that determine replica summaries."""
    h = hashlib.sha256()
    for name in SUMMARY_SOURCES:
        h.update((Path(__file__).parent / name).read_bytes())
    return h.hexdigest()[:16]


def cached_replicas(t: float, replicas: int, seed: int, law: OffspringLaw | None = None, *,
                    grid_dt: float = 0.25, prune: PruneConfig | None = None,
                    summary: SummaryConfig | None = None, jobs: int = 1,
                    cache_dir: str | Path | None = None) -> SummarySet:
    """:func:`run_replicas` with an on-disk cache keyed by arguments and package source.

    The cache directory comes from ``cache_dir`` or ``$BBM_EDGE_CACHE``;
    without either, nothing is cached.
    """
    law = law or OffspringLaw.binary()
    prune = prune or PruneConfig()
    summary = summary or SummaryConfig()
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    if not cache_dir:
        return run_replicas(t, replicas, seed, law, grid_dt=grid_dt, prune=prune, summary=summary, jobs=jobs)
    key = hashlib.sha256(repr((t, replicas, seed, law, grid_dt, prune, summary, _source_digest())).encode())
    path = Path(cache_dir) / f"replicas-{key.hexdigest()[:24]}.pkl"
    if path.exists():
        with path.open("rb") as fh:
            return pickle.load(fh)
    result = run_replicas(t, replicas, seed, law, grid_dt=grid_dt, prune=prune, summary=summary, jobs=jobs)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("wb") as fh:
        pickle.dump(result, fh)
    tmp.replace(path)
    return result


# ----------------------------------------------------------------------------
# outputs


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True, default=_jsonable)


def _jsonable(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value)}")


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_id(config_dict: dict) -> str:
    """Content hash of the result-determining configuration."""
    payload = {k: v for k, v in config_dict.items() if k != "jobs"}
    payload["code_version"] = code_version()
    payload["rng"] = RNG_ALGORITHM
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], manifest_ref: str) -> Path:
    """CSV with a header row and a trailing ``run_id`` column referencing the manifest."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*header, "run_id"])
        for row in rows:
            writer.writerow([*(_fmt(v) for v in row), manifest_ref])
    return path


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class RunManifest:
    config: dict
    seed: int
    replicas: int
    horizons: list[float]
    code_version: str = field(default_factory=code_version)
    rng_algorithm: str = RNG_ALGORITHM
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    outputs: dict[str, str] = field(default_factory=dict)

    @property
    def run_id(self) -> str:
        return run_id(self.config)

    def record(self, path: str | Path) -> None:
        path = Path(path)
        self.outputs[path.name] = file_digest(path)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id, "config": self.config, "seed": self.seed, "replicas": self.replicas,
            "horizons": self.horizons, "code_version": self.code_version, "rng_algorithm": self.rng_algorithm,
            "timestamp": self.timestamp, "outputs": dict(sorted(self.outputs.items())),
        }

    def save(self, directory: str | Path) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        d = json.loads(path.read_text())
        return cls(d["config"], d["seed"], d["replicas"], d["horizons"], d["code_version"],
                   d["rng_algorithm"], d["timestamp"], d["outputs"])

    def verify(self, directory: str | Path) -> dict[str, bool]:
        """Recompute the digest of every recorded output file."""
        directory = Path(directory)
        return {name: (directory / name).exists() and file_digest(directory / name) == digest
                for name, digest in self.outputs.items()}


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def write_summary_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(json.loads(canonical_json(payload)), indent=2, sort_keys=True) + "\n")
    return path
