"""Exit criteria for the whole package, runnable from pytest or the CLI.

Each criterion returns a ``CriterionResult``; ``fast=True`` shrinks trial
counts while keeping every threshold (as a fraction) unchanged.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import agent, aggregate, oracle
from .harness import (
    ExperimentSpec,
    Initializer,
    compare_engines,
    phase_end_saturation,
    run_experiment,
    sqrt_nlogn,
    summarize,
)
from .model import (
    AgentPopulation,
    AggregateState,
    Configuration,
    ProtocolParams,
    RngStream,
    make_configuration,
    propagation_rounds,
)

SEED = 20240601


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _trials(full: int, fast: bool, reduced: int) -> int:
    return reduced if fast else full


def _at_least(successes: int, trials: int, fraction: float) -> bool:
    return successes >= math.ceil(fraction * trials - 1e-9)


def majority_wins(fast: bool = False) -> tuple[bool, str]:
    n, k = 10**5, 10
    trials = _trials(100, fast, 40)
    spec = ExperimentSpec(
        "two-choices", "aggregate", Initializer("equal-plus-bias", n, k, sqrt_nlogn(n, 1, 4)),
        trials, SEED,
    )
    recs = run_experiment(spec)
    wins = sum(r.converged and r.winner == r.leader for r in recs)
    return _at_least(wins, trials, 0.95), f"leader won {wins}/{trials}"


def overtake_at_sqrt_bias(fast: bool = False) -> tuple[bool, str]:
    trials = _trials(2000, fast, 2000)
    spec = ExperimentSpec(
        "two-choices", "aggregate", Initializer("theorem3", 10**4, 3, 1.0), trials, SEED,
        record_trajectory=True,
    )
    recs = run_experiment(spec)
    overtakes = sum(r.trajectory[1][2] > r.trajectory[1][1] for r in recs)
    frac = overtakes / trials
    return frac >= 0.02, f"a' < b' after one round in {overtakes}/{trials} = {frac:.4f}"


def runtime_scales_with_k(fast: bool = False) -> tuple[bool, str]:
    n = 10**5
    trials = _trials(50, fast, 20)
    means = {}
    for k in (8, 16, 32):
        spec = ExperimentSpec(
            "two-choices", "aggregate", Initializer("equal-plus-bias", n, k, sqrt_nlogn(n)),
            trials, SEED,
        )
        means[k] = summarize(run_experiment(spec)).mean_rounds
    ratio = means[32] / means[8]
    shown = ", ".join(f"k={k}: {m:.2f}" for k, m in means.items())
    return 2.5 <= ratio <= 6.0, f"mean rounds {shown}; ratio k32/k8 = {ratio:.3f} (need [2.5, 6])"


def memory_protocol_wins_fast(fast: bool = False) -> tuple[bool, str]:
    n, k = 10**5, 10
    trials = _trials(100, fast, 40)
    spec = ExperimentSpec(
        "memory", "aggregate", Initializer("equal-plus-bias", n, k, sqrt_nlogn(n, 3)), trials, SEED,
    )
    recs = run_experiment(spec)
    cell = summarize(recs)
    wins = sum(r.converged and r.winner == r.leader for r in recs)
    limit = 3 * math.log2(n) ** 2
    ok = _at_least(wins, trials, 0.95) and cell.median_rounds <= limit
    return ok, f"leader won {wins}/{trials}, median rounds {cell.median_rounds} (limit {limit:.1f})"


def memory_beats_two_choices(fast: bool = False) -> tuple[bool, str]:
    n, k = 10**6, 100
    trials = _trials(20, fast, 6)
    init = Initializer("equal-plus-bias", n, k, sqrt_nlogn(n))
    med = {
        p: summarize(run_experiment(ExperimentSpec(p, "aggregate", init, trials, SEED))).median_rounds
        for p in ("memory", "two-choices")
    }
    ratio = med["memory"] / med["two-choices"]
    phases = math.ceil(med["memory"] / (1 + propagation_rounds(n, k)))
    return ratio <= 0.5, (
        f"median rounds memory {med['memory']} (~{phases} phases) vs two-choices "
        f"{med['two-choices']}; ratio {ratio:.3f} (need <= 0.5)"
    )


def random_configuration(rng: np.random.Generator, max_n: int, max_k: int) -> Configuration:
    """Random composition of n into k positive parts."""
    k = int(rng.integers(2, max_k + 1))
    n = int(rng.integers(k, max_n + 1))
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
    counts = np.diff(np.concatenate([[0], cuts, [n]]))
    return make_configuration(counts.tolist())


def _within(samples: np.ndarray, mean: float, var: float, sigmas: float = 4.0) -> bool:
    emp = float(samples.mean())
    if var == 0:
        return emp == mean
    return abs(emp - mean) <= sigmas * math.sqrt(var / samples.size)


def oracle_agreement_batch(cfg: Configuration, trials: int, seed: int) -> list[str]:
    """Compare aggregate-engine sample means with closed forms; return failures."""
    stream = RngStream(seed, 0)
    failures = []
    k = cfg.k
    base = np.broadcast_to(cfg.array(), (trials, k))
    flows = aggregate.flow_matrix(base, stream.generator(0))
    nxt = flows.sum(axis=-2)
    for i in range(k):
        for j in range(k):
            if i != j and not _within(
                flows[:, i, j], oracle.expected_flow(cfg, i, j), oracle.flow_variance(cfg, i, j)
            ):
                failures.append(f"f[{i},{j}]")
        if not _within(nxt[:, i], oracle.expected_next(cfg, i), oracle.next_variance(cfg, i)):
            failures.append(f"c'[{i}]")

    state = AggregateState.from_configuration(cfg, batch=trials)
    after = aggregate.memory_two_choices_round_agg(state, stream.generator(1))
    if not _within(
        after.x(), oracle.expected_bits_after_two_choices(cfg), oracle.bits_after_two_choices_variance(cfg)
    ):
        failures.append("x(1)")
    for j in range(k):
        if not _within(
            after.set_counts[:, j],
            oracle.per_color_bit_expectation(cfg, j),
            oracle.bits_after_two_choices_variance(cfg, j),
        ):
            failures.append(f"x_{j}(1)")

    # one propagation step from a fixed bit assignment
    gen = stream.generator(2)
    set_counts = np.array([int(gen.integers(0, c + 1)) for c in cfg.counts], dtype=np.int64)
    x = int(set_counts.sum())
    start = AggregateState(
        np.broadcast_to(set_counts, (trials, k)).copy(),
        np.broadcast_to(cfg.array() - set_counts, (trials, k)).copy(),
    )
    prop = aggregate.bit_propagation_round_agg(start, stream.generator(3))
    for j in range(k):
        (ex, exj) = oracle.bit_propagation_expectation(x, int(set_counts[j]), cfg.n)
        (vx, vxj) = oracle.bit_propagation_variance(x, int(set_counts[j]), cfg.n)
        if j == 0 and not _within(prop.x(), ex, vx):
            failures.append("x(t+1)")
        if not _within(prop.set_counts[:, j], exj, vxj):
            failures.append(f"x_{j}(t+1)")
    return failures


def oracle_agreement(fast: bool = False) -> tuple[bool, str]:
    configs = _trials(50, fast, 12)
    trials = _trials(10**5, fast, 10**5)
    rng = np.random.default_rng(SEED)
    bad = []
    for c in range(configs):
        cfg = random_configuration(rng, 1000, 8)
        failures = oracle_agreement_batch(cfg, trials, SEED + c)
        if failures:
            bad.append(f"{list(cfg.counts)}: {', '.join(failures)}")
    detail = f"{configs} configurations x {trials} trials"
    if bad:
        detail += "; outside 4 sigma: " + " | ".join(bad)
    return not bad, detail


def brute_force_equivalence(fast: bool = False) -> tuple[bool, str]:
    trials = _trials(10**5, fast, 10**5)
    parts = []
    ok = True
    for counts in ((1, 1), (2, 1, 1)):
        rep = compare_engines(make_configuration(counts), trials, seed=SEED)
        good = rep.agent_vs_exact_p > 1e-3 and rep.aggregate_vs_exact_p > 1e-3
        ok &= good
        parts.append(
            f"{counts}: agent p={rep.agent_vs_exact_p:.3g}, aggregate p={rep.aggregate_vs_exact_p:.3g}"
        )
    rep = compare_engines(
        make_configuration((120, 60, 20)), trials=_trials(10**4, fast, 4000), seed=SEED,
        rounds_trials=_trials(10**4, fast, 4000),
    )
    ok &= rep.rounds_p > 1e-3
    parts.append(f"n=200 rounds KS p={rep.rounds_p:.3g}")
    return ok, "; ".join(parts)


def _reports_conserve(reports, n: int) -> bool:
    return all(int(r.counts.sum()) == n for r in reports)


def invariant_suites(fast: bool = False) -> tuple[bool, str]:
    violations: list[str] = []
    params = ProtocolParams()
    rng = np.random.default_rng(SEED)

    # conservation and bit monotonicity across engines and protocols
    runs = _trials(20, fast, 6)
    for trial in range(runs):
        cfg = random_configuration(rng, 2000, 6)
        stream = RngStream(SEED, trial)
        for engine in (agent, aggregate):
            for protocol in ("two-choices", "memory"):
                res = engine.run_single(cfg, protocol, params, stream, record=True)
                if not _reports_conserve(res.reports, cfg.n):
                    violations.append(f"conservation {engine.__name__} {protocol} {cfg.counts}")
                if protocol == "memory":
                    for prev, cur in zip(res.reports, res.reports[1:]):
                        if cur.step and cur.step >= 1 and cur.x < prev.x:
                            violations.append(f"bit monotonicity {engine.__name__} t={cur.t}")
        pop, _ = agent.run_async_protocol(AgentPopulation.from_configuration(cfg), stream)
        if int(pop.counts().sum()) != cfg.n:
            violations.append("conservation async")

    # ordering of expected next counts over random configurations
    n_configs = _trials(10**4, fast, 2000)
    for _ in range(n_configs):
        k = int(rng.integers(1, 101))
        n = int(rng.integers(1, 10**6 + 1))
        cfg = make_configuration(rng.multinomial(n, rng.dirichlet(np.ones(k))).tolist())
        if not oracle.monotonicity_check(cfg):
            violations.append(f"monotonicity {cfg.counts}")

    # unanimity absorption for all three protocols
    for counts in ((50, 0, 0), (0, 7), (1,)):
        cfg = make_configuration(counts)
        for engine in (agent, aggregate):
            for protocol in ("two-choices", "memory"):
                res = engine.run_single(cfg, protocol, params, RngStream(SEED), record=True)
                if not (res.converged.all() and res.rounds.max() == 0):
                    violations.append(f"absorption {engine.__name__} {protocol}")
        pop = AgentPopulation.from_configuration(cfg)
        for step in (agent.two_choices_round, agent.memory_two_choices_round, agent.bit_propagation_round):
            if not np.array_equal(step(pop, np.random.default_rng(1)).counts(), cfg.array()):
                violations.append(f"absorption {step.__name__}")
        state = AggregateState.from_configuration(cfg)
        for step in (aggregate.memory_two_choices_round_agg, aggregate.bit_propagation_round_agg):
            if not np.array_equal(step(state, np.random.default_rng(1)).counts(), cfg.array()):
                violations.append(f"absorption {step.__name__}")
        final, ticks = agent.run_async_protocol(pop, RngStream(SEED))
        if ticks != 0 or not np.array_equal(final.counts(), cfg.array()):
            violations.append("absorption async")

    # determinism under thread-count variation
    for protocol, engine in (("two-choices", "aggregate"), ("memory", "agent"), ("async", "agent")):
        spec = ExperimentSpec(
            protocol, engine, Initializer("equal-plus-bias", 600, 4, 60), trials=8, seed=SEED,
            record_trajectory=protocol != "async",
        )
        one = run_experiment(spec, threads=1)
        many = run_experiment(spec, threads=4)
        if [r.as_dict() for r in one] != [r.as_dict() for r in many]:
            violations.append(f"determinism {protocol}/{engine}")

    if violations:
        return False, f"{len(violations)} violations: " + "; ".join(violations[:10])
    return True, f"zero violations ({runs} runs per engine/protocol, {n_configs} monotonicity configs)"


def gap_growth(fast: bool = False) -> tuple[bool, str]:
    n = 10**5
    gap = 32 * sqrt_nlogn(n)
    trials = _trials(10**4, fast, 10**4)
    parts = []
    ok = True
    for k in (2, 10):
        cfg = oracle.equal_plus_gap(n, k, gap)
        bound = oracle.gap_growth_bound(cfg)
        base = np.broadcast_to(cfg.array(), (trials, k))
        nxt = aggregate.two_choices_counts(base, RngStream(SEED, k).generator(0))
        hits = int(np.sum(nxt[:, 0] - nxt[:, 1] >= bound))
        ok &= _at_least(hits, trials, 0.99)
        parts.append(f"k={k} a-b={cfg.counts[0] - cfg.counts[1]}: {hits}/{trials} above {bound:.1f}")
    return ok, "; ".join(parts)


def bit_saturation(fast: bool = False) -> tuple[bool, str]:
    n, k = 10**6, 100
    spec = ExperimentSpec(
        "memory", "aggregate", Initializer("equal-plus-bias", n, k, sqrt_nlogn(n)),
        trials=_trials(10, fast, 4), seed=SEED,
    )
    saturated, observed = phase_end_saturation(spec)
    ok = observed > 0 and _at_least(saturated, observed, 0.95)
    return ok, f"x = n at the end of {saturated}/{observed} completed phases"


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    check: Callable[[bool], tuple[bool, str]]
    time_limit: float | None = None


CRITERIA = (
    Criterion(1, "two-choices majority wins", majority_wins, 120.0),
    Criterion(2, "overtake at sqrt(n) bias", overtake_at_sqrt_bias, 60.0),
    Criterion(3, "two-choices run time grows with k", runtime_scales_with_k, 300.0),
    Criterion(4, "memory protocol wins in O(log^2 n)", memory_protocol_wins_fast, 120.0),
    Criterion(5, "memory rounds <= half of two-choices", memory_beats_two_choices),
    Criterion(6, "oracle agreement", oracle_agreement),
    Criterion(7, "brute-force engine equivalence", brute_force_equivalence),
    Criterion(8, "invariant suites", invariant_suites),
    Criterion(9, "gap growth per round", gap_growth),
    Criterion(10, "bit saturation per phase", bit_saturation),
)


def run_criterion(criterion: Criterion, fast: bool = False) -> CriterionResult:
    start = time.perf_counter()
    passed, detail = criterion.check(fast)
    elapsed = time.perf_counter() - start
    if criterion.time_limit is not None and elapsed > criterion.time_limit:
        passed = False
        detail += f"; exceeded time limit {criterion.time_limit:.0f}s"
    return CriterionResult(criterion.number, criterion.title, passed, detail, elapsed)


def run_all(fast: bool = False, only: set[int] | None = None, echo=print) -> list[CriterionResult]:
    results = []
    for c in CRITERIA:
        if only and c.number not in only:
            continue
        res = run_criterion(c, fast)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
