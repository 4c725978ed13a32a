"""Command-line entry point: ``bbm-edge <experiment> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 capacity error,
4 acceptance-check failure (with ``--check``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .campaign import (RunManifest, default_out_root, run_id, write_csv, write_summary_json)
from .config import ConfigError, from_mapping, parse_text
from .engine import CapacityError, simulate
from .experiments import EXPERIMENT_DEFAULTS, EXPERIMENTS, default_provider
from .kernels import RngStream

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_CHECK = 0, 2, 3, 4

# flag name -> config key
FLAGS = {
    "t": float, "horizons": str, "replicas": int, "seed": int, "offspring": str, "grid-dt": float,
    "prune-margin": float, "window": str, "r": str, "gamma": float, "alpha": float, "beta": float,
    "y": float, "levels": str, "gibbs-beta": float, "gibbs-pairs": int, "max-rank": int, "trials": int,
    "dx": float, "jobs": int,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bbm-edge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value or JSON config file (flags override it)")
        p.add_argument("--out", help=f"output directory (default: ${{BBM_EDGE_OUT:-runs}}/{name}-<run_id>)")
        p.add_argument("--check", action="store_true", help="exit 4 unless every acceptance check passes")
        for flag, typ in FLAGS.items():
            p.add_argument(f"--{flag}", type=typ, dest=flag.replace("-", "_"), default=None)
        p.add_argument("--prune", action=argparse.BooleanOptionalAction, default=None)
        if name == "simulate":
            p.add_argument("--dump-trees", type=int, default=0, help="write the first N trees as CSV")
    rep = sub.add_parser("report", help="collect summary.json files into one report")
    rep.add_argument("--root", default=None, help="directory to scan (default: $BBM_EDGE_OUT or runs)")
    rep.add_argument("--out", default=None)
    rep.add_argument("--check", action="store_true")
    return parser


def _config_from_args(args) -> "RunConfig":  # noqa: F821
    values = {"experiment": args.command, **EXPERIMENT_DEFAULTS.get(args.command, {})}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
        file_values = json.loads(text) if text.lstrip().startswith("{") else parse_text(text)
        values.update(file_values)
        values["experiment"] = args.command
    for flag in [*FLAGS, "prune"]:
        v = getattr(args, flag.replace("-", "_"))
        if v is not None:
            values[flag.replace("-", "_")] = v
    return from_mapping(values)


def run_experiment(config, out: Path | None = None, dump_trees: int = 0):
    """Run one experiment and write manifest, CSV tables and summary.json."""
    rid = run_id(config.to_dict())
    out = Path(out) if out else default_out_root() / f"{config.experiment}-{rid}"
    out.mkdir(parents=True, exist_ok=True)
    result = EXPERIMENTS[config.experiment](config, default_provider(config))
    manifest = RunManifest(config.to_dict(), config.seed, config.replicas, list(config.all_horizons))
    for name, table in result.tables.items():
        manifest.record(write_csv(out / f"{name}.csv", table.header, table.rows, rid))
    manifest.record(write_summary_json(out / "summary.json", result.payload(rid)))
    if dump_trees:
        from .campaign import stream_id
        from .engine import PruneConfig

        for t in config.all_horizons:
            for k in range(min(dump_trees, config.replicas)):
                tree = simulate(t, config.law, RngStream(config.seed, stream_id(t, k)), grid_dt=config.grid_dt,
                                prune=PruneConfig(config.prune, config.prune_margin))
                for path in tree.save(out, f"tree_t{t:g}_{k}"):
                    manifest.record(path)
    manifest.save(out)
    return result, out, manifest


def _report(args) -> int:
    root = Path(args.root) if args.root else default_out_root()
    report = {}
    for path in sorted(root.glob("*/summary.json")):
        payload = json.loads(path.read_text())
        report[path.parent.name] = payload
    all_checks = {f"{run}:{name}": ok for run, p in report.items() for name, ok in p.get("checks", {}).items()}
    for key, ok in all_checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {key}")
    out = Path(args.out) if args.out else root / "report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_summary_json(out, {"runs": report, "checks": all_checks})
    if args.check and not all(all_checks.values()):
        return EXIT_CHECK
    return EXIT_OK


def _join_values(argv: list[str]) -> list[str]:
    """``--window -2:0`` -> ``--window=-2:0`` so values may start with a minus sign."""
    out, i = [], 0
    while i < len(argv):
        token = argv[i]
        if token.startswith("--") and "=" not in token and token[2:] in FLAGS and i + 1 < len(argv):
            out.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        out.append(token)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_join_values(list(sys.argv[1:] if argv is None else argv)))
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "report":
        return _report(args)
    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result, out, manifest = run_experiment(config, args.out, getattr(args, "dump_trees", 0))
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {config.experiment}:{name}")
    print(f"wrote {out} (run_id {manifest.run_id})")
    if args.check and not result.passed:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
