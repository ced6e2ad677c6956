"""One-round top-two gap against the (a - b)(1 + a/4n) bound.

    python scripts/gap_growth.py --n 100000 --multiples 1,4,16,32 --trials 10000
"""

import argparse

import numpy as np

from plurality.aggregate import two_choices_counts
from plurality.harness import sqrt_nlogn
from plurality.model import RngStream
from plurality.oracle import equal_plus_gap, gap_growth_bound


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10**5)
    ap.add_argument("--ks", default="2,10")
    ap.add_argument("--multiples", default="1,4,16,32")
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    unit = sqrt_nlogn(args.n)
    print(f"{'k':>4} {'z':>4} {'gap':>7} {'bound':>10} {'held':>7}")
    for k in (int(v) for v in args.ks.split(",")):
        for z in (int(v) for v in args.multiples.split(",")):
            cfg = equal_plus_gap(args.n, k, z * unit)
            bound = gap_growth_bound(cfg)
            batch = np.broadcast_to(cfg.array(), (args.trials, cfg.k))
            top = np.sort(two_choices_counts(batch, RngStream(args.seed, z).generator(k)), axis=-1)
            held = np.mean(top[:, -1] - top[:, -2] >= bound)
            print(f"{k:>4} {z:>4} {z * unit:>7} {bound:>10.1f} {held:>7.4f}")


if __name__ == "__main__":
    main()
