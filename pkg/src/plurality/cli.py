"""Command-line entry point: ``plurality {simulate,sweep,replicate,oracle,validate}``.

Exit codes: 0 success, 1 validation/suite/I-O failure, 2 usage error.
Every error is reported as one ``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional, Sequence

from . import acceptance, oracle
from .harness import (
    CSV_HEADER,
    ENGINES,
    INITIALIZERS,
    SWEEP_HEADER,
    ExperimentSpec,
    Initializer,
    default_threads,
    run_experiment,
    sqrt_nlogn,
    sweep,
    trajectory_bits,
)
from .model import ProtocolParams, ValidationError, make_configuration
from .schedule import PROTOCOLS


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # single-line usage errors
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(v)) if "e" in v.lower() else int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _number(text: str) -> int:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from exc
    if value != int(value):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    return int(value)


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ell", type=int, default=10)
    p.add_argument("--u", type=float, default=None, help="upper bound U on b/(c1-c2)")
    p.add_argument("--propagation-rounds", type=int, default=None)
    p.add_argument("--max-rounds", type=int, default=100_000)
    p.add_argument("--exclude-self", action="store_true", help="never sample the node itself")
    p.add_argument("--max-time-units", type=float, default=None, help="async cap")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="default: $PLURALITY_THREADS or 1")
    p.add_argument("--out", default="-")
    p.add_argument("--config", default=None, help="key = value file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plurality", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sim = sub.add_parser("simulate", help="run one experiment")
    sim.add_argument("--protocol", choices=PROTOCOLS, default=None)
    sim.add_argument("--engine", choices=ENGINES, default=None)
    sim.add_argument("--init", choices=INITIALIZERS, default="equal-plus-bias")
    sim.add_argument("--n", type=_number)
    sim.add_argument("--k", type=int)
    sim.add_argument("--bias", type=_number, default=None, help="default: ceil(z sqrt(n ln n))")
    sim.add_argument("--gap", type=_number, default=None)
    sim.add_argument("--z", type=float, default=4.0)
    sim.add_argument("--z-prime", type=float, default=1.0)
    sim.add_argument("--counts", type=_int_list, default=None)
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument("--trajectory", default=None, help="write per-round rows to this CSV path")
    _add_common(sim)
    _add_params(sim)

    sw = sub.add_parser("sweep", help="grid of experiments, one summary row per cell")
    sw.add_argument("--protocols", type=_str_list, default=["two-choices", "memory"])
    sw.add_argument("--engine", choices=ENGINES, default="aggregate")
    sw.add_argument("--n", type=_int_list, required=True)
    sw.add_argument("--k", type=_str_list, default=["sqrt"], help="integers or 'sqrt'")
    sw.add_argument("--bias", type=_int_list, default=None)
    sw.add_argument("--bias-scale", type=float, default=1.0)
    sw.add_argument("--bias-power", type=int, default=1, help="ln exponent in sqrt(n ln^p n)")
    _add_common(sw)
    _add_params(sw)

    rep = sub.add_parser("replicate", help="emit the data behind the runtime or bits figure")
    rep.add_argument("figure", choices=("runtime", "bits"))
    rep.add_argument("--n-grid", type=_int_list, default=[1000, 10_000, 100_000])
    rep.add_argument("--n", type=_number, default=10**6, help="population for the bits figure")
    _add_common(rep)
    _add_params(rep)

    orc = sub.add_parser("oracle", help="closed-form queries, printed as JSON")
    orc.add_argument(
        "query",
        choices=(
            "expected-next", "flows", "bits", "theorem3", "theorem4", "exact-transition",
            "gap-bound", "propagation", "monotone",
        ),
    )
    orc.add_argument("--counts", type=_int_list)
    orc.add_argument("--n", type=_number)
    orc.add_argument("--k", type=int)
    orc.add_argument("--z", type=float, default=4.0)
    orc.add_argument("--z-prime", type=float, default=1.0)
    orc.add_argument("--x", type=int)
    orc.add_argument("--xj", type=int)

    val = sub.add_parser("validate", help="run the acceptance criteria")
    val.add_argument("--fast", action="store_true")
    val.add_argument("--only", type=_int_list, default=None)
    return parser


def _read_config(path: str) -> dict:
    values = {}
    try:
        with open(path) as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValidationError(f"config line without '=': {raw.strip()!r}")
                key, value = (part.strip() for part in line.split("=", 1))
                values[key.lstrip("-").replace("-", "_")] = value
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from exc
    return values


def parse_args(argv: Optional[Sequence[str]]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        defaults = _read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        for key, value in defaults.items():
            if key not in known:
                raise ValidationError(f"unknown config key {key!r}")
            if isinstance(known[key], argparse._StoreTrueAction):
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _params(args) -> ProtocolParams:
    return ProtocolParams(
        ell=args.ell,
        u_override=args.u,
        propagation_rounds_override=args.propagation_rounds,
        max_rounds=args.max_rounds,
        sample_includes_self=not args.exclude_self,
    )


def _initializer(args) -> Initializer:
    if args.init == "custom":
        if not args.counts:
            raise ValidationError("--init custom needs --counts")
        return Initializer("custom", counts=tuple(args.counts))
    if args.n is None or args.k is None:
        raise ValidationError(f"--init {args.init} needs --n and --k")
    value = {
        "equal-plus-bias": args.bias if args.bias is not None else sqrt_nlogn(args.n, 1, args.z),
        "equal-plus-gap": args.gap if args.gap is not None else sqrt_nlogn(args.n),
        "theorem3": args.z_prime,
        "theorem4": args.z,
    }[args.init]
    return Initializer(args.init, args.n, args.k, value)


class _Output:
    """Text sink for ``--out``; '-' means stdout."""

    def __init__(self, path: str):
        self.path = path
        self.buffer = io.StringIO(newline="")

    def commit(self) -> None:
        text = self.buffer.getvalue()
        if self.path == "-":
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        try:
            with open(self.path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ValidationError(f"cannot write {self.path}: {exc.strerror}") from exc


def _write_csv(out: _Output, header, rows) -> None:
    writer = csv.writer(out.buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


def cmd_simulate(args) -> int:
    if args.protocol is None:
        raise UsageError("--protocol is required (flag or config file)")
    engine = args.engine or ("agent" if args.protocol == "async" else "aggregate")
    spec = ExperimentSpec(
        protocol=args.protocol,
        engine=engine,
        initializer=_initializer(args),
        trials=args.trials,
        seed=args.seed,
        params=_params(args),
        record_trajectory=args.trajectory is not None and args.protocol != "async",
        max_time_units=args.max_time_units,
    )
    spec.validate()
    records = run_experiment(spec, args.threads)
    out = _Output(args.out)
    if args.format == "csv":
        _write_csv(out, CSV_HEADER, (r.csv_row() for r in records))
    else:
        json.dump([r.as_dict() for r in records], out.buffer, indent=1)
        out.buffer.write("\n")
    out.commit()
    if args.trajectory is not None:
        traj = _Output(args.trajectory)
        k = records[0].k
        if args.protocol == "two-choices":
            header = ["trial", "t", *(f"c{j}" for j in range(k))]
        elif args.protocol == "memory":
            header = ["trial", "t", "a", "b", "x", "x1"]
        else:
            raise ValidationError("async runs have no per-round trajectory")
        _write_csv(traj, header, ([r.trial, *row] for r in records for row in r.trajectory))
        traj.commit()
    return 0


def _resolve_k(token: str, n: int) -> int:
    if token == "sqrt":
        return math.ceil(math.sqrt(n))
    try:
        return int(token)
    except ValueError as exc:
        raise ValidationError(f"--k entries must be integers or 'sqrt', got {token!r}") from exc


def _grid_specs(args, protocols, n_values, k_tokens, biases=None) -> list[ExperimentSpec]:
    params = _params(args)
    specs = []
    for n in n_values:
        for token in k_tokens:
            k = _resolve_k(token, n)
            bias_values = biases or [sqrt_nlogn(n, args.bias_power, args.bias_scale)]
            for bias in bias_values:
                for protocol in protocols:
                    engine = "agent" if protocol == "async" else args.engine
                    specs.append(
                        ExperimentSpec(
                            protocol, engine, Initializer("equal-plus-bias", n, k, bias),
                            args.trials, args.seed, params, max_time_units=args.max_time_units,
                        )
                    )
    return specs


def cmd_sweep(args) -> int:
    for p in args.protocols:
        if p not in PROTOCOLS:
            raise UsageError(f"unknown protocol {p!r}")
    specs = _grid_specs(args, args.protocols, args.n, args.k, args.bias)
    rows = sweep(specs, args.threads)
    out = _Output(args.out)
    _write_csv(out, SWEEP_HEADER, (r.csv_row() for r in rows))
    out.commit()
    return 0


def cmd_replicate(args) -> int:
    out = _Output(args.out)
    if args.figure == "runtime":
        args.bias_power, args.bias_scale, args.engine = 1, 1.0, "aggregate"
        specs = _grid_specs(args, ("two-choices", "memory", "async"), args.n_grid, ["sqrt"])
        rows = sweep(specs, args.threads)
        _write_csv(out, SWEEP_HEADER, (r.csv_row() for r in rows))
    else:
        n = args.n
        spec = ExperimentSpec(
            "memory", "aggregate",
            Initializer("equal-plus-bias", n, math.ceil(math.sqrt(n)), sqrt_nlogn(n)),
            1, args.seed, _params(args),
        )
        rows = trajectory_bits(spec)
        _write_csv(
            out,
            ("t", "x1_over_x", "a_over_n"),
            ([t, "" if share is None else repr(share), repr(a)] for t, share, a in rows),
        )
    out.commit()
    return 0


def cmd_oracle(args) -> int:
    q = args.query

    def cfg():
        if not args.counts:
            raise ValidationError(f"oracle {q} needs --counts")
        return make_configuration(args.counts)

    if q == "expected-next":
        result = oracle.expected_next(cfg())
    elif q == "flows":
        c = cfg()
        pairs = [[(i, j) for j in range(c.k)] for i in range(c.k)]
        result = {
            "expected": [[None if i == j else oracle.expected_flow(c, i, j) for i, j in r] for r in pairs],
            "variance": [[None if i == j else oracle.flow_variance(c, i, j) for i, j in r] for r in pairs],
        }
    elif q == "bits":
        c = cfg()
        result = {
            "expected_total": oracle.expected_bits_after_two_choices(c),
            "expected_per_color": [oracle.per_color_bit_expectation(c, j) for j in range(c.k)],
        }
    elif q in ("theorem3", "theorem4"):
        if args.n is None or args.k is None:
            raise ValidationError(f"oracle {q} needs --n and --k")
        if q == "theorem3":
            result = list(oracle.theorem3_configuration(args.n, args.k, args.z_prime).counts)
        else:
            result = list(oracle.theorem4_configuration(args.n, args.k, args.z).counts)
    elif q == "exact-transition":
        result = oracle.exact_transition(cfg()).to_json()
    elif q == "gap-bound":
        result = oracle.gap_growth_bound(cfg())
    elif q == "propagation":
        if None in (args.x, args.xj, args.n):
            raise ValidationError("oracle propagation needs --x, --xj and --n")
        result = list(oracle.bit_propagation_expectation(args.x, args.xj, args.n))
    else:
        result = oracle.monotonicity_check(cfg())
    sys.stdout.write(json.dumps(result) + "\n")
    return 0


def cmd_validate(args) -> int:
    only = set(args.only) if args.only else None
    results = acceptance.run_all(fast=args.fast, only=only, echo=lambda s: print(s, flush=True))
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed", flush=True)
    return 1 if failed else 0


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "replicate": cmd_replicate,
    "oracle": cmd_oracle,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        if getattr(args, "threads", None) is None and hasattr(args, "threads"):
            args.threads = default_threads()
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ValueError) as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
