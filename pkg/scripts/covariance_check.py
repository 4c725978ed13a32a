"""Covariance of two final positions over a fixed skeleton against their overlap Q."""

import argparse

from bbm_edge.experiments import covariance_overlap_check


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--pairs", type=int, default=20)
    parser.add_argument("--resamples", type=int, default=100_000)
    args = parser.parse_args()
    table = covariance_overlap_check(args.seed, args.pairs, args.resamples)
    print(",".join(table.header))
    for row in table.rows:
        print(",".join(f"{v:.5f}" if isinstance(v, float) else str(v) for v in row))
    print(f"# {sum(r[-1] for r in table.rows)}/{len(table.rows)} pairs within 3 SE")


if __name__ == "__main__":
    main()
