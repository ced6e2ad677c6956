"""Per-round bit share of the leading color and its population share.

Writes ``t,x1_over_x,a_over_n`` for one memory-protocol run.

    python scripts/bit_shares.py --n 1000000 --seed 1 > bits.csv
"""

import argparse
import csv
import math
import sys

from plurality.harness import ExperimentSpec, Initializer, sqrt_nlogn, trajectory_bits


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10**6)
    ap.add_argument("--k", type=int, default=None, help="default ceil(sqrt(n))")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    k = args.k or math.ceil(math.sqrt(args.n))
    spec = ExperimentSpec("memory", "aggregate", Initializer("equal-plus-bias", args.n, k, sqrt_nlogn(args.n)), 1, args.seed)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("t", "x1_over_x", "a_over_n"))
    for t, share, a in trajectory_bits(spec):
        writer.writerow((t, "" if share is None else repr(share), repr(a)))


if __name__ == "__main__":
    main()
