import math

import numpy as np
import pytest

from plurality import agent
from plurality.harness import sqrt_nlogn
from plurality.model import (
    AgentPopulation,
    Configuration,
    ProtocolParams,
    RngStream,
    make_configuration,
    propagation_rounds,
)
from plurality.oracle import equal_plus_bias, expected_next, next_variance, theorem3_configuration

TRIALS = 100_000


def batch(counts, trials=TRIALS):
    return AgentPopulation.from_configuration(make_configuration(counts), batch=trials)


def with_bits(colors, set_mask, trials=TRIALS):
    colors = np.broadcast_to(np.asarray(colors), (trials, len(colors))).copy()
    bits = np.broadcast_to(np.asarray(set_mask, bool), colors.shape).copy()
    return AgentPopulation(colors, bits, int(colors.max()) + 1)


class TestTwoChoicesRound:
    def test_unanimous_is_absorbing(self):
        pop = batch([0, 50, 0], trials=100)
        out = agent.two_choices_round(pop, RngStream(1).generator())
        assert np.array_equal(out.colors, pop.colors)

    def test_two_node_kernel(self):
        out = agent.two_choices_round(batch([1, 1]), RngStream(2).generator())
        first = out.counts()[:, 0]
        freq = np.bincount(first, minlength=3) / TRIALS  # c1' in {0, 1, 2}
        np.testing.assert_allclose(freq, [3 / 16, 10 / 16, 3 / 16], atol=0.01)

    def test_expected_next_count(self):
        out = agent.two_choices_round(batch([6, 3, 1]), RngStream(3).generator())
        assert abs(out.counts()[:, 0].mean() - 6.84) < 0.02

    def test_exclude_self_two_nodes(self):
        # each node can only see the other one, so the pair always swaps
        out = agent.two_choices_round(batch([1, 1], 1000), RngStream(4).generator(), include_self=False)
        assert np.array_equal(out.colors, np.tile([1, 0], (1000, 1)))

    def test_order_invariance(self):
        cfg = make_configuration([40, 35, 25])
        pop = AgentPopulation.from_configuration(cfg)
        rng = RngStream(5).generator()
        samples = agent.draw_samples(pop.colors.shape, 2, rng)
        vectorized, _ = agent.apply_two_choices(pop.colors, samples)
        # sequential update in reverse order, reading the frozen round-t snapshot
        snapshot = pop.colors.copy()
        sequential = pop.colors.copy()
        for v in reversed(range(cfg.n)):
            u, w = samples[v]
            if snapshot[u] == snapshot[w]:
                sequential[v] = snapshot[u]
        assert np.array_equal(vectorized, sequential)


class TestMemoryRounds:
    def test_expected_bits(self):
        out = agent.memory_two_choices_round(batch([6, 3, 1]), RngStream(6).generator())
        x = out.bits.sum(axis=-1)
        assert abs(x.mean() - 4.6) < 0.02

    def test_equal_colors(self):
        n, k, trials = 120, 4, 20_000
        out = agent.memory_two_choices_round(batch([n // k] * k, trials), RngStream(7).generator())
        x = out.bits.sum(axis=-1)
        # x(1) ~ B(n, 1/k) when all colors are equal
        sd = math.sqrt(n * (1 / k) * (1 - 1 / k) / trials)
        assert abs(x.mean() - n / k) < 3 * sd

    def test_unanimous_sets_all_bits(self):
        out = agent.memory_two_choices_round(batch([0, 9], 10), RngStream(8).generator())
        assert out.bits.all() and (out.colors == 1).all()

    def test_propagation_example(self):
        colors = [0, 0, 1, 1, 0, 0, 1, 1, 2, 2]
        set_mask = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
        out = agent.bit_propagation_round(with_bits(colors, set_mask), RngStream(9).generator())
        x = out.bits.sum(axis=-1)
        x0 = (out.bits & (out.colors == 0)).sum(axis=-1)
        assert abs(x0.mean() - 3.2) < 0.02
        assert abs(x.mean() - 6.4) < 0.02
        assert (x >= 4).all()

    def test_propagation_without_bits(self):
        pop = with_bits([0, 1, 2, 1], [0, 0, 0, 0], 10)
        out = agent.bit_propagation_round(pop, RngStream(10).generator())
        assert np.array_equal(out.colors, pop.colors) and not out.bits.any()

    def test_propagation_saturated(self):
        pop = with_bits([0, 1, 2, 1, 0], [1] * 5, 1000)
        out = agent.bit_propagation_round(pop, RngStream(11).generator())
        assert out.bits.all()
        assert (np.bincount(out.colors.ravel(), minlength=3) > 0).all()


class TestRunners:
    def test_single_color_converged_at_zero(self):
        for protocol in ("two-choices", "memory"):
            res = agent.run_single(make_configuration([12]), protocol, ProtocolParams(), RngStream(0), True)
            assert res.rounds == 0 and res.converged and len(res.reports) == 1

    def test_phase_length(self):
        cfg = make_configuration([30_000, 20_000] + [1_000] * 14)
        r = propagation_rounds(cfg.n, cfg.k)
        assert r == 16
        res = agent.run_single(cfg, "memory", ProtocolParams(), RngStream(1), True)
        steps = [rep.step for rep in res.reports[1 : r + 3]]
        assert steps == list(range(r + 1)) + [0]

    def test_bits_monotone_within_phase(self):
        cfg = equal_plus_bias(20_000, 30, sqrt_nlogn(20_000))
        _, reports = agent.run_memory_protocol(
            AgentPopulation.from_configuration(cfg), ProtocolParams(), RngStream(2)
        )
        for prev, cur in zip(reports, reports[1:]):
            assert cur.counts.sum() == cfg.n
            if cur.step and cur.step > 0:
                assert cur.x >= prev.x

    def test_extinction_is_permanent(self):
        cfg = make_configuration([400, 300, 200, 60, 40])
        _, reports = agent.run_two_choices(AgentPopulation.from_configuration(cfg), ProtocolParams(), RngStream(3))
        dead = np.zeros(cfg.k, bool)
        for r in reports:
            assert not (r.counts[dead] > 0).any()
            dead |= r.counts == 0

    def test_cap_flags_without_raising(self):
        cfg = make_configuration([500, 500])
        params = ProtocolParams(u_override=2, ell=1, propagation_rounds_override=0)
        res = agent.run_single(cfg, "memory", params, RngStream(4), False)
        assert res.rounds <= 5  # ceil(1 + log2 log2 1000) phases of one round
        assert bool(res.converged) == (res.winners >= 0)

    def test_batch_is_deterministic(self):
        cfg = make_configuration([60, 30, 10])
        a = agent.run_batch(cfg, "two-choices", 50, ProtocolParams(), RngStream(5))
        b = agent.run_batch(cfg, "two-choices", 50, ProtocolParams(), RngStream(5))
        assert np.array_equal(a.rounds, b.rounds) and np.array_equal(a.winners, b.winners)

    def test_overtake_after_one_round(self):
        cfg = theorem3_configuration(10**4, 3, 1)
        out = agent.two_choices_round(AgentPopulation.from_configuration(cfg, batch=2000), RngStream(6).generator())
        c = out.counts()
        assert np.mean(c[:, 0] < c[:, 1]) >= 0.02


class TestAsync:
    def test_two_nodes_run_thirty_instructions(self):
        pop = AgentPopulation.from_configuration(make_configuration([1, 1]), with_pcs=True)
        out, ticks = agent.run_async_protocol(pop, RngStream(1), stop_on_unanimity=False)
        assert out.pcs.tolist() == [[10, 0], [10, 0]]
        assert ticks >= 60

    def test_unanimous_stops_at_once(self):
        pop = AgentPopulation.from_configuration(make_configuration([0, 100]))
        out, ticks = agent.run_async_protocol(pop, RngStream(2))
        assert ticks == 0 and out.configuration().counts == (0, 100)

    def test_conserves_population(self):
        cfg = make_configuration([300, 250, 200])
        out, _ = agent.run_async_protocol(AgentPopulation.from_configuration(cfg), RngStream(3), max_time_units=5)
        assert out.counts().sum() == cfg.n

    def test_time_cap(self):
        cfg = make_configuration([500, 500])
        _, ticks = agent.run_async_protocol(AgentPopulation.from_configuration(cfg), RngStream(4), max_time_units=2)
        assert ticks <= 2 * cfg.n

    def test_deterministic(self):
        cfg = make_configuration([300, 250, 200])
        a = agent.run_async_protocol(AgentPopulation.from_configuration(cfg), RngStream(5))
        b = agent.run_async_protocol(AgentPopulation.from_configuration(cfg), RngStream(5))
        assert a[1] == b[1] and np.array_equal(a[0].colors, b[0].colors)

    def test_leader_wins_mostly(self):
        cfg = Configuration((2860, 2380, 2380, 2380))
        wins = 0
        for trial in range(100):
            out, ticks = agent.run_async_protocol(
                AgentPopulation.from_configuration(cfg), RngStream(6, trial), max_time_units=200
            )
            counts = out.counts()
            wins += bool(counts[0] == cfg.n)
        assert wins >= 90


@pytest.mark.slow
def test_two_choices_majority_wins_agent():
    n, k = 10**5, 10
    cfg = equal_plus_bias(n, k, sqrt_nlogn(n, 1, 4))
    res = agent.run_batch(cfg, "two-choices", 100, ProtocolParams(), RngStream(11))
    assert np.sum(res.winners == 0) >= 95


@pytest.mark.slow
def test_memory_majority_wins_agent():
    n, k = 10**5, 10
    cfg = equal_plus_bias(n, k, sqrt_nlogn(n, 3))
    res = agent.run_batch(cfg, "memory", 100, ProtocolParams(), RngStream(12))
    assert np.sum(res.winners == 0) >= 95


def test_round_expectation_random_configs():
    """Mean next counts agree with the closed form within 4 sigma."""
    rng = np.random.default_rng(13)
    for _ in range(5):
        k = int(rng.integers(2, 6))
        counts = tuple(int(c) for c in rng.multinomial(int(rng.integers(20, 200)), np.ones(k) / k))
        if sum(counts) == 0:
            continue
        cfg = Configuration(counts)
        trials = 20_000
        out = agent.two_choices_round(AgentPopulation.from_configuration(cfg, batch=trials), RngStream(14).generator())
        means = out.counts().mean(axis=0)
        for i in range(k):
            sd = math.sqrt(next_variance(cfg, i) / trials)
            assert abs(means[i] - expected_next(cfg, i)) <= 4 * sd + 1e-12
