"""Closed forms, frozen reference values and a second route to the exact kernel."""

import itertools
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plurality import oracle
from plurality.model import Configuration, ValidationError, make_configuration

C631 = make_configuration([6, 3, 1])


def enumerate_kernel(counts):
    """Walk every joint pair-sample outcome: n^(2n) equally likely cases."""
    colors = [c for c, m in enumerate(counts) for _ in range(m)]
    n = len(colors)
    tally = Counter()
    pairs = list(itertools.product(range(n), repeat=2))
    for choice in itertools.product(pairs, repeat=n):
        nxt = [colors[u] if colors[u] == colors[w] else colors[v] for v, (u, w) in enumerate(choice)]
        tally[tuple(nxt.count(j) for j in range(len(counts)))] += 1
    total = len(pairs) ** n
    return {k: Fraction(v, total) for k, v in tally.items()}


@pytest.mark.parametrize("counts", [(1, 1), (2, 1), (1, 2), (2, 1, 1), (1, 1, 1), (3, 1), (0, 2, 1)])
def test_kernel_matches_enumeration(counts):
    assert oracle.exact_transition(Configuration(counts)).probs == enumerate_kernel(counts)


def test_kernel_two_nodes():
    dist = oracle.exact_transition(make_configuration([1, 1]))
    assert dist.probs == {(2, 0): Fraction(3, 16), (0, 2): Fraction(3, 16), (1, 1): Fraction(10, 16)}


def test_kernel_unanimous_and_guard():
    assert oracle.exact_transition(make_configuration([0, 4, 0])).probs == {(0, 4, 0): 1}
    with pytest.raises(ValidationError):
        oracle.exact_transition(make_configuration([5, 4]))
    with pytest.raises(ValidationError):
        oracle.exact_transition(make_configuration([1, 1, 1, 1]))


@pytest.mark.parametrize("counts", [(6, 2), (4, 3, 1), (2, 2, 2), (5, 1, 1)])
def test_kernel_marginals_match_closed_forms(counts):
    cfg = Configuration(counts)
    dist = oracle.exact_transition(cfg)
    assert dist.total() == 1
    for i in range(cfg.k):
        assert float(dist.mean(i)) == pytest.approx(oracle.expected_next(cfg, i), abs=1e-12)
        var = sum((c[i] - dist.mean(i)) ** 2 * p for c, p in dist.probs.items())
        assert float(var) == pytest.approx(oracle.next_variance(cfg, i), abs=1e-12)


class TestFlows:
    def test_values(self):
        assert oracle.expected_flow(C631, 0, 1) == pytest.approx(0.54)
        assert oracle.flow_variance(C631, 0, 1) == pytest.approx(0.4914)
        assert oracle.expected_flow(C631, 1, 0) == pytest.approx(1.08)

    def test_empty_classes(self):
        cfg = make_configuration([5, 0, 5])
        assert oracle.expected_flow(cfg, 0, 1) == 0 and oracle.flow_variance(cfg, 0, 1) == 0
        assert oracle.expected_flow(cfg, 1, 0) == 0

    def test_diagonal_rejected(self):
        with pytest.raises(ValidationError):
            oracle.expected_flow(C631, 1, 1)


class TestExpectedNext:
    def test_values(self):
        assert oracle.expected_next(C631) == pytest.approx([6.84, 2.52, 0.64])

    def test_fixed_point_and_symmetry(self):
        assert oracle.expected_next(make_configuration([7, 0, 0])) == [7, 0, 0]
        assert len(set(oracle.expected_next(make_configuration([5, 5, 5, 5])))) == 1


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=100).filter(lambda c: sum(c) > 0))
@settings(max_examples=300)
def test_conservation_and_monotonicity(counts):
    cfg = Configuration(tuple(counts))
    assert sum(oracle.expected_next(cfg)) == pytest.approx(cfg.n, abs=1e-9 * cfg.n)
    assert oracle.monotonicity_check(cfg)


def test_monotonicity_examples():
    assert oracle.monotonicity_check(C631)
    assert oracle.monotonicity_check(make_configuration([4, 4, 4]))


class TestGapBound:
    def test_tie(self):
        assert oracle.gap_growth_bound(make_configuration([3, 3, 1])) == 0

    def test_values(self):
        assert oracle.gap_growth_bound(make_configuration([20_000, 10_000] + [7_000] * 10)) == pytest.approx(10_500)

    def test_half_population_lead(self):
        # a = n/2 against a field of singletons; storage order is irrelevant
        lead = make_configuration([1] * 250 + [500] + [1] * 250)
        assert oracle.gap_growth_bound(lead) == pytest.approx(499 * (1 + 1 / 8))

    def test_needs_two_colors(self):
        with pytest.raises(ValidationError):
            oracle.gap_growth_bound(make_configuration([5]))


class TestBits:
    def test_values(self):
        assert oracle.expected_bits_after_two_choices(C631) == pytest.approx(4.6)
        per = [oracle.per_color_bit_expectation(C631, j) for j in range(3)]
        assert per == pytest.approx([3.6, 0.9, 0.1])

    def test_equal_and_unanimous(self):
        assert oracle.expected_bits_after_two_choices(make_configuration([25] * 4)) == pytest.approx(25)
        assert oracle.expected_bits_after_two_choices(make_configuration([0, 9])) == 9

    def test_propagation(self):
        assert oracle.bit_propagation_expectation(4, 2, 10) == pytest.approx((6.4, 3.2))
        assert oracle.bit_propagation_expectation(10, 3, 10) == (10, 3)
        assert oracle.bit_propagation_expectation(0, 0, 10) == (0, 0)
        with pytest.raises(ValidationError):
            oracle.bit_propagation_expectation(2, 3, 10)

    @given(st.integers(1, 10**6).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))))
    def test_growth_factor(self, nx):
        n, x = nx
        ex, _ = oracle.bit_propagation_expectation(x, 0, n)
        assert 1 <= ex / x <= 2

    @given(st.lists(st.integers(0, 200), min_size=1, max_size=10), st.integers(0, 500))
    def test_total_is_sum_of_colors(self, set_counts, unset):
        x, n = sum(set_counts), sum(set_counts) + unset
        if n == 0:
            return
        total, _ = oracle.bit_propagation_expectation(x, 0, n)
        per = sum(oracle.bit_propagation_expectation(x, xj, n)[1] for xj in set_counts)
        assert per == pytest.approx(total, rel=1e-12, abs=1e-9)


class TestConstructions:
    def test_theorem3(self):
        assert oracle.theorem3_configuration(100, 3, 1).counts == (54, 45, 1)
        assert oracle.theorem3_configuration(100, 2, 0).counts == (50, 50)
        assert oracle.theorem3_configuration(10**4, 3, 1).counts == (5049, 4950, 1)

    @given(st.integers(2, 10**6), st.integers(2, 50), st.floats(0, 3))
    def test_theorem3_sums(self, n, k, z):
        if n < k:
            return
        try:
            cfg = oracle.theorem3_configuration(n, k, z)
        except ValidationError:
            return
        assert cfg.n == n and cfg.k == k and min(cfg.counts[:2]) >= 1

    def test_theorem3_infeasible(self):
        with pytest.raises(ValidationError):
            oracle.theorem3_configuration(10, 2, 10)

    def test_theorem4(self):
        assert oracle.theorem4_configuration(90_000, 9, 0).counts == (10_000,) * 9
        cfg = oracle.theorem4_configuration(10**4, 10, 1)
        assert cfg.counts[0] == 1304 and sum(cfg.counts[1:]) == 8696
        assert max(cfg.counts[1:]) - min(cfg.counts[1:]) <= 1

    def test_theorem4_infeasible(self):
        with pytest.raises(ValidationError):
            oracle.theorem4_configuration(100, 2, 50)

    @given(st.integers(1, 10**6), st.integers(1, 100), st.integers(0, 5000))
    def test_bias_and_gap_initializers(self, n, k, bias):
        try:
            cfg = oracle.equal_plus_bias(n, k, bias)
        except ValidationError:
            return
        assert cfg.n == n and cfg.k == k
        if k > 1:
            assert cfg.counts[0] == -(-n // k) + bias
        if k > 1:
            try:
                gap = oracle.equal_plus_gap(n, k, bias)
            except ValidationError:
                return
            a, b = gap.counts[:2]
            assert gap.n == n and a - b in (bias, bias + 1)
            assert a - b == bias or k == 2
