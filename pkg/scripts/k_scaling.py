"""Two-choices rounds against k at fixed n, under two ways of setting the lead.

With ``bias = ceil(sqrt(n ln n))`` the lead is a fixed absolute number of
nodes, so the relative lead over n/k grows with k and the run time grows
well below linearly. Holding the relative lead fixed (c1 = (1 + eps) n/k)
isolates the dependence on k itself.

    python scripts/k_scaling.py --n 100000 --ks 8,16,32 --trials 20
"""

import argparse
import math

from plurality.harness import ExperimentSpec, Initializer, run_experiment, sqrt_nlogn, summarize


def mean_rounds(n, k, bias, trials, seed):
    spec = ExperimentSpec("two-choices", "aggregate", Initializer("equal-plus-bias", n, k, bias), trials, seed)
    return summarize(run_experiment(spec)).mean_rounds


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10**5)
    ap.add_argument("--ks", default="8,16,32")
    ap.add_argument("--eps", type=float, default=0.2, help="relative lead for the second column")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    n = args.n
    ks = [int(v) for v in args.ks.split(",")]
    print(f"{'k':>5} {'bias':>7} {'rounds':>8} {'rel. bias':>10} {'rounds':>8}")
    base = {}
    for k in ks:
        fixed = sqrt_nlogn(n)
        relative = math.ceil(args.eps * n / k)
        r1 = mean_rounds(n, k, fixed, args.trials, args.seed)
        r2 = mean_rounds(n, k, relative, args.trials, args.seed)
        base.setdefault("fixed", r1)
        base.setdefault("relative", r2)
        print(f"{k:>5} {fixed:>7} {r1:>8.2f} {relative:>10} {r2:>8.2f}")
    print(f"ratio last/first: fixed bias {r1 / base['fixed']:.2f}, relative bias {r2 / base['relative']:.2f}")


if __name__ == "__main__":
    main()
