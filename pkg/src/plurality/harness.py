"""Seeded multi-trial experiments, summaries, sweeps and engine comparisons."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from . import agent, aggregate, oracle
from .model import (
    AgentPopulation,
    Configuration,
    ProtocolParams,
    RngStream,
    ValidationError,
    make_configuration,
    propagation_rounds,
)
from .schedule import PROTOCOLS

ENGINES = ("agent", "aggregate")
INITIALIZERS = ("equal-plus-bias", "equal-plus-gap", "theorem3", "theorem4", "custom")
THREADS_ENV = "PLURALITY_THREADS"


@dataclass(frozen=True)
class Initializer:
    kind: str
    n: Optional[int] = None
    k: Optional[int] = None
    value: float = 0.0  # bias, gap, z' or z depending on kind
    counts: Optional[tuple[int, ...]] = None

    def build(self) -> Configuration:
        if self.kind == "custom":
            if self.counts is None:
                raise ValidationError("custom initializer needs counts")
            return make_configuration(self.counts)
        if self.n is None or self.k is None:
            raise ValidationError(f"initializer {self.kind} needs n and k")
        if self.kind == "equal-plus-bias":
            return oracle.equal_plus_bias(self.n, self.k, int(self.value))
        if self.kind == "equal-plus-gap":
            return oracle.equal_plus_gap(self.n, self.k, int(self.value))
        if self.kind == "theorem3":
            return oracle.theorem3_configuration(self.n, self.k, self.value)
        if self.kind == "theorem4":
            return oracle.theorem4_configuration(self.n, self.k, self.value)
        raise ValidationError(f"unknown initializer {self.kind!r}")


def sqrt_nlogn(n: int, power: int = 1, scale: float = 1.0) -> int:
    """``ceil(scale * sqrt(n * ln(n)^power))``, the bias unit used throughout."""
    return math.ceil(scale * math.sqrt(n * math.log(n) ** power))


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: str
    engine: str
    initializer: Initializer
    trials: int = 1
    seed: int = 0
    params: ProtocolParams = ProtocolParams()
    record_trajectory: bool = False
    max_time_units: Optional[float] = None  # async only

    def validate(self) -> Configuration:
        if self.protocol not in PROTOCOLS:
            raise ValidationError(f"unknown protocol {self.protocol!r}")
        if self.engine not in ENGINES:
            raise ValidationError(f"unknown engine {self.engine!r}")
        if self.protocol == "async" and self.engine != "agent":
            raise ValidationError("async protocol requires the agent engine")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        return self.initializer.build()


@dataclass
class TrialRecord:
    trial: int
    seed: int
    protocol: str
    engine: str
    n: int
    k: int
    rounds: int  # activations for async
    time_units: Optional[float]
    winner: Optional[int]
    converged: bool
    leader: int = 0  # initially largest color
    trajectory: Optional[list[tuple]] = None

    def csv_row(self) -> list:
        return [
            self.trial,
            self.seed,
            self.protocol,
            self.engine,
            self.n,
            self.k,
            self.rounds,
            "" if self.time_units is None else repr(self.time_units),
            "" if self.winner is None else self.winner,
            str(self.converged).lower(),
        ]

    def as_dict(self) -> dict:
        d = {name: value for name, value in zip(CSV_HEADER, self._json_values())}
        if self.trajectory is not None:
            d["trajectory"] = [list(row) for row in self.trajectory]
        return d

    def _json_values(self) -> list:
        return [
            self.trial,
            self.seed,
            self.protocol,
            self.engine,
            self.n,
            self.k,
            self.rounds,
            self.time_units,
            self.winner,
            self.converged,
        ]


CSV_HEADER = ("trial", "seed", "protocol", "engine", "n", "k", "rounds", "time_units", "winner", "converged")


def _trajectory_rows(protocol: str, reports, leader: int, runner_up: int) -> list[tuple]:
    if protocol == "two-choices":
        return [(r.t, *map(int, r.counts)) for r in reports]
    return [
        (
            r.t,
            int(r.counts[leader]),
            int(r.counts[runner_up]),
            int(r.set_counts.sum()),
            int(r.set_counts[leader]),
        )
        for r in reports
    ]


def run_trial(spec: ExperimentSpec, cfg: Configuration, trial: int) -> TrialRecord:
    stream = RngStream(spec.seed, trial)
    order = np.argsort(-cfg.array(), kind="stable")
    leader = int(order[0])
    runner_up = int(order[1]) if cfg.k > 1 else leader
    base = dict(
        trial=trial, seed=spec.seed, protocol=spec.protocol, engine=spec.engine,
        n=cfg.n, k=cfg.k, leader=leader,
    )
    if spec.protocol == "async":
        pop = AgentPopulation.from_configuration(cfg, with_pcs=True)
        final, ticks = agent.run_async_protocol(
            pop, stream, spec.params.sample_includes_self, spec.max_time_units
        )
        counts = final.counts()
        converged = bool(counts.max() == cfg.n)
        return TrialRecord(
            rounds=ticks,
            time_units=ticks / cfg.n,
            winner=int(counts.argmax()) if converged else None,
            converged=converged,
            **base,
        )
    engine = agent if spec.engine == "agent" else aggregate
    res = engine.run_single(cfg, spec.protocol, spec.params, stream, record=spec.record_trajectory)
    converged = bool(res.converged[()])
    traj = None
    if spec.record_trajectory:
        traj = _trajectory_rows(spec.protocol, res.reports, leader, runner_up)
    return TrialRecord(
        rounds=int(res.rounds[()]),
        time_units=None,
        winner=int(res.winners[()]) if converged else None,
        converged=converged,
        trajectory=traj,
        **base,
    )


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(spec: ExperimentSpec, threads: Optional[int] = None) -> list[TrialRecord]:
    """Run every trial on its own ``(seed, trial)`` stream; output ordered by trial."""
    cfg = spec.validate()
    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1:
        return [run_trial(spec, cfg, t) for t in range(spec.trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: run_trial(spec, cfg, t), range(spec.trials)))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials <= 0:
        raise ValidationError("Wilson interval needs at least one trial")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class SweepCell:
    trials: int
    mean_rounds: float
    median_rounds: float
    std_rounds: float
    win_rate: float
    win_ci_lo: float
    win_ci_hi: float


def run_length(record: TrialRecord) -> float:
    """Rounds for synchronous protocols, time units for async."""
    return record.time_units if record.time_units is not None else float(record.rounds)


def summarize(records: Sequence[TrialRecord]) -> SweepCell:
    if not records:
        raise ValidationError("cannot summarize an empty record list")
    lengths = np.array([run_length(r) for r in records], dtype=float)
    wins = sum(1 for r in records if r.converged and r.winner == r.leader)
    lo, hi = wilson_interval(wins, len(records))
    return SweepCell(
        trials=len(records),
        mean_rounds=float(lengths.mean()),
        median_rounds=float(np.median(lengths)),
        std_rounds=float(lengths.std(ddof=1)) if len(records) > 1 else 0.0,
        win_rate=wins / len(records),
        win_ci_lo=lo,
        win_ci_hi=hi,
    )


SWEEP_HEADER = (
    "protocol", "engine", "n", "k", "bias", "trials", "mean_rounds", "median_rounds",
    "std_rounds", "win_rate", "win_ci_lo", "win_ci_hi",
)


@dataclass(frozen=True)
class SweepRow:
    spec: ExperimentSpec
    cell: SweepCell

    def csv_row(self) -> list:
        init = self.spec.initializer
        cfg = init.build()
        c = self.cell
        return [
            self.spec.protocol, self.spec.engine, cfg.n, cfg.k,
            int(init.value) if init.kind in ("equal-plus-bias", "equal-plus-gap") else init.value,
            c.trials, repr(c.mean_rounds), repr(c.median_rounds), repr(c.std_rounds),
            repr(c.win_rate), repr(c.win_ci_lo), repr(c.win_ci_hi),
        ]


def sweep(specs: Iterable[ExperimentSpec], threads: Optional[int] = None) -> list[SweepRow]:
    specs = list(specs)
    if not specs:
        raise ValidationError("empty sweep grid")
    for s in specs:
        s.validate()
    return [SweepRow(s, summarize(run_experiment(s, threads))) for s in specs]


def trajectory_bits(spec: ExperimentSpec) -> list[tuple[int, Optional[float], float]]:
    """Rows ``(t, x_lead/x, a/n)`` for trial 0 of a memory-protocol run.

    The bit share is None when no bit is set.
    """
    if spec.protocol != "memory":
        raise ValidationError("bit trajectories need the memory protocol")
    spec = replace(spec, record_trajectory=True)
    cfg = spec.validate()
    rec = run_trial(spec, cfg, 0)
    rows = []
    for t, a, _b, x, x_lead in rec.trajectory:
        rows.append((t, x_lead / x if x > 0 else None, a / cfg.n))
    return rows


def phase_end_saturation(spec: ExperimentSpec, threads: Optional[int] = None) -> tuple[int, int]:
    """Count completed memory phases ending with every bit set.

    Returns ``(saturated, observed)``; phases cut short by convergence are
    not observed.
    """
    engine = agent if spec.engine == "agent" else aggregate
    cfg = spec.validate()
    saturated = observed = 0
    last_step = propagation_rounds(cfg.n, cfg.k, spec.params)
    for trial in range(spec.trials):
        res = engine.run_single(cfg, "memory", spec.params, RngStream(spec.seed, trial), True)
        for r in res.reports:
            if r.step == last_step:
                observed += 1
                saturated += int(r.set_counts.sum() == cfg.n)
    return saturated, observed


# engine comparison


@dataclass(frozen=True)
class EngineComparison:
    one_round_p: float
    rounds_p: Optional[float]
    agent_vs_exact_p: Optional[float] = None
    aggregate_vs_exact_p: Optional[float] = None
    details: dict = field(default_factory=dict)

    def passed(self, alpha: float = 1e-3) -> bool:
        ps = [self.one_round_p, self.rounds_p, self.agent_vs_exact_p, self.aggregate_vs_exact_p]
        return all(p is None or p > alpha for p in ps)


def _outcome_keys(counts: np.ndarray) -> list[tuple]:
    return [tuple(int(v) for v in row) for row in counts]


def _pooled_bins(a: np.ndarray, b: np.ndarray, min_expected: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Histogram two samples of a scalar on shared bins with enough mass each."""
    values, inverse = np.unique(np.concatenate([a, b]), return_inverse=True)
    ia, ib = inverse[: a.size], inverse[a.size :]
    ca = np.bincount(ia, minlength=values.size)
    cb = np.bincount(ib, minlength=values.size)
    # merge adjacent values until every pooled bin has enough total mass
    bins_a, bins_b = [], []
    acc_a = acc_b = 0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        if acc_a + acc_b >= 2 * min_expected:
            bins_a.append(acc_a)
            bins_b.append(acc_b)
            acc_a = acc_b = 0
    if acc_a + acc_b:
        if bins_a:
            bins_a[-1] += acc_a
            bins_b[-1] += acc_b
        else:
            bins_a.append(acc_a)
            bins_b.append(acc_b)
    return np.array(bins_a), np.array(bins_b)


def _two_sample_chi2(a_counts: np.ndarray, b_counts: np.ndarray) -> float:
    table = np.vstack([a_counts, b_counts])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(table, correction=False)[1])


def _goodness_of_fit(observed: dict, dist: oracle.TransitionDistribution, trials: int) -> float:
    keys = list(dist.probs)
    obs = np.array([observed.get(key, 0) for key in keys], dtype=float)
    if sum(observed.values()) != obs.sum():
        return 0.0  # an impossible outcome was observed
    exp = np.array([float(dist.probs[key]) * trials for key in keys])
    keep = exp > 0
    if keep.sum() < 2:
        return 1.0
    return float(stats.chisquare(obs[keep], exp[keep])[1])


def one_round_samples(
    cfg: Configuration, engine: str, trials: int, stream: RngStream, batch: int = 20_000
) -> np.ndarray:
    """Configurations after one two-choices round, shape ``(trials, k)``."""
    out = []
    done = 0
    chunk = 0
    while done < trials:
        m = min(batch, trials - done)
        gen = stream.generator(chunk)
        if engine == "agent":
            pop = AgentPopulation.from_configuration(cfg, batch=m)
            out.append(agent.two_choices_round(pop, gen).counts())
        else:
            base = np.broadcast_to(cfg.array(), (m, cfg.k))
            out.append(aggregate.two_choices_counts(base, gen))
        done += m
        chunk += 1
    return np.concatenate(out)


def compare_engines(
    cfg: Configuration,
    trials: int,
    seed: int = 0,
    protocol: str = "two-choices",
    rounds_trials: Optional[int] = None,
) -> EngineComparison:
    """Chi-square on one-round outcomes and KS on rounds to convergence."""
    if cfg.n > 10_000:
        raise ValidationError("engine comparison limited to n <= 10^4")
    agent_next = one_round_samples(cfg, "agent", trials, RngStream(seed, 0))
    agg_next = one_round_samples(cfg, "aggregate", trials, RngStream(seed, 1))
    details: dict = {}

    if cfg.k <= oracle.EXACT_MAX_K and cfg.n <= oracle.EXACT_MAX_N:
        dist = oracle.exact_transition(cfg)
        obs_agent: dict = {}
        obs_agg: dict = {}
        for key in _outcome_keys(agent_next):
            obs_agent[key] = obs_agent.get(key, 0) + 1
        for key in _outcome_keys(agg_next):
            obs_agg[key] = obs_agg.get(key, 0) + 1
        p_agent_exact = _goodness_of_fit(obs_agent, dist, trials)
        p_agg_exact = _goodness_of_fit(obs_agg, dist, trials)
        keys = sorted(set(obs_agent) | set(obs_agg))
        one_round_p = _two_sample_chi2(
            np.array([obs_agent.get(key, 0) for key in keys]),
            np.array([obs_agg.get(key, 0) for key in keys]),
        )
        details["outcomes"] = len(keys)
    else:
        p_agent_exact = p_agg_exact = None
        a_bins, b_bins = _pooled_bins(agent_next[:, 0], agg_next[:, 0])
        one_round_p = _two_sample_chi2(a_bins, b_bins)
        details["bins"] = int(a_bins.size)

    rounds_p = None
    if rounds_trials and not cfg.is_unanimous():
        params = ProtocolParams()
        ra = agent.run_batch(cfg, protocol, rounds_trials, params, RngStream(seed, 2))
        rb = aggregate.run_batch(cfg, protocol, rounds_trials, params, RngStream(seed, 3))
        rounds_p = float(stats.ks_2samp(ra.rounds, rb.rounds, method="asymp").pvalue)
        details["mean_rounds"] = (float(ra.rounds.mean()), float(rb.rounds.mean()))
    return EngineComparison(one_round_p, rounds_p, p_agent_exact, p_agg_exact, details)
