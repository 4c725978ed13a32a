"""Build (or reuse) the cached replica campaigns behind the extremal experiments.

    python3 scripts/campaign.py --horizons 8,10,12 --replicas 10000 --seed 2024 --jobs 4
"""

import argparse
import logging
import os
import time
from pathlib import Path

from bbm_edge import campaign
from bbm_edge import experiments as E
from bbm_edge.config import from_mapping

log = logging.getLogger("campaign")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizons", default="8,10,12")
    parser.add_argument("--replicas", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--cache", default=str(Path(__file__).resolve().parents[1] / ".cache"))
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    os.environ[campaign.CACHE_ENV] = args.cache

    config = from_mapping({"experiment": "tails", "replicas": args.replicas, "seed": args.seed, "jobs": args.jobs})
    provide = E.default_provider(config)
    for t in (float(v) for v in args.horizons.split(",")):
        start = time.time()
        summaries = provide(t)
        log.info("t=%g: %d replicas in %.1fs", t, len(summaries), time.time() - start)


if __name__ == "__main__":
    main()
