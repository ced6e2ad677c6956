"""Rounds to consensus against n with k = ceil(sqrt(n)) and bias ceil(sqrt(n ln n)).

    python scripts/runtime_vs_n.py --n-grid 1000,10000,100000,1000000 --trials 5
"""

import argparse
import csv
import math
import sys

from plurality.harness import SWEEP_HEADER, ExperimentSpec, Initializer, sqrt_nlogn, sweep

PROTOCOLS = (("two-choices", "aggregate"), ("memory", "aggregate"), ("async", "agent"))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-grid", default="1000,10000,100000,1000000")
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--skip-async-above", type=int, default=10**5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    specs = []
    for n in (int(float(v)) for v in args.n_grid.split(",")):
        k = math.ceil(math.sqrt(n))
        init = Initializer("equal-plus-bias", n, k, sqrt_nlogn(n))
        for protocol, engine in PROTOCOLS:
            if protocol == "async" and n > args.skip_async_above:
                continue
            specs.append(ExperimentSpec(protocol, engine, init, args.trials, args.seed))

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in sweep(specs, args.threads):
        writer.writerow(row.csv_row())
        sys.stdout.flush()


if __name__ == "__main__":
    main()
