import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plurality.model import (
    AgentPopulation,
    AggregateState,
    Configuration,
    ProtocolParams,
    RngStream,
    ValidationError,
    make_configuration,
    phase_cap,
    propagation_rounds,
    sample_categorical,
    sample_multinomial,
    two_choices_cap,
)

counts_strategy = st.lists(st.integers(0, 50), min_size=1, max_size=8).filter(lambda c: sum(c) > 0)


class TestConfiguration:
    def test_basic(self):
        cfg = make_configuration([6, 3, 1])
        assert (cfg.n, cfg.k) == (10, 3)
        assert cfg.leader() == 0

    def test_single_color(self):
        cfg = make_configuration([10])
        assert (cfg.n, cfg.k) == (10, 1)
        assert cfg.is_unanimous()

    def test_zero_count_allowed(self):
        cfg = make_configuration([0, 5])
        assert cfg.counts == (0, 5) and cfg.n == 5

    def test_input_order_kept(self):
        assert make_configuration([1, 3, 2]).counts == (1, 3, 2)
        assert make_configuration([1, 3, 2]).sorted_desc() == (3, 2, 1)

    @pytest.mark.parametrize("bad", [[], [-1, 3], [0, 0]])
    def test_rejects(self, bad):
        with pytest.raises(ValidationError):
            make_configuration(bad)


class TestSampling:
    def test_categorical_degenerate(self):
        rng = RngStream(1).generator()
        assert np.all(sample_categorical([1, 0, 0], rng, size=1000) == 0)

    def test_categorical_all_zero(self):
        with pytest.raises(ValidationError):
            sample_categorical([0, 0], RngStream(1).generator())

    def test_categorical_fair_coin(self):
        draws = sample_categorical([1, 1], RngStream(2).generator(), size=10**6)
        assert abs(np.mean(draws == 0) - 0.5) < 0.002

    def test_categorical_frequencies(self):
        draws = sample_categorical([6, 3, 1], RngStream(3).generator(), size=10**6)
        freq = np.bincount(draws, minlength=3) / 10**6
        np.testing.assert_allclose(freq, [0.6, 0.3, 0.1], atol=0.002)

    def test_multinomial_trivial(self):
        rng = RngStream(4).generator()
        assert list(sample_multinomial(0, [0.2, 0.8], rng)) == [0, 0]
        assert list(sample_multinomial(5, [1.0, 0.0], rng)) == [5, 0]

    def test_multinomial_mean(self):
        rng = RngStream(5).generator()
        first = [sample_multinomial(10**5, [0.25, 0.75], rng)[0] for _ in range(1000)]
        assert abs(np.mean(first) - 25_000) < 300

    @pytest.mark.parametrize("probs", [[1.2, -0.2], [0.5, 0.4]])
    def test_multinomial_rejects(self, probs):
        with pytest.raises(ValidationError):
            sample_multinomial(3, probs, RngStream(0).generator())


class TestStreams:
    def test_same_stream_same_draws(self):
        a = RngStream(9, 3).generator(7).integers(0, 1 << 30, 16)
        b = RngStream(9, 3).generator(7).integers(0, 1 << 30, 16)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        base = RngStream(9, 3).generator(7).integers(0, 1 << 30, 16)
        for other in (RngStream(9, 4).generator(7), RngStream(9, 3).generator(8), RngStream(10, 3).generator(7)):
            assert not np.array_equal(base, other.integers(0, 1 << 30, 16))


@given(counts_strategy)
def test_population_round_trip(counts):
    cfg = Configuration(tuple(counts))
    pop = AgentPopulation.from_configuration(cfg)
    assert pop.configuration() == cfg
    assert not pop.bits.any()
    state = AggregateState.from_configuration(cfg)
    assert state.configuration() == cfg
    assert int(state.x()) == 0


@given(counts_strategy, st.integers(0, 2**32))
@settings(max_examples=50)
def test_multinomial_conserves(counts, seed):
    total = sum(counts)
    probs = np.array(counts, float) / total
    out = sample_multinomial(total, probs, RngStream(seed).generator())
    assert out.sum() == total and (out >= 0).all()


class TestBudgets:
    def test_propagation_rounds_example(self):
        assert propagation_rounds(65536, 16) == 16

    def test_override(self):
        assert propagation_rounds(10**6, 10, ProtocolParams(propagation_rounds_override=3)) == 3

    def test_two_choices_cap(self):
        assert two_choices_cap(10**5, 10) == 100_000
        assert two_choices_cap(10**5, 10, ProtocolParams(max_rounds=1)) == 167

    def test_phase_cap_clamps_u(self):
        # c2/(c1-c2) = 0.5 is clamped to 2
        assert phase_cap(Configuration((30, 10))) == phase_cap(Configuration((39, 1))) == 13

    @pytest.mark.parametrize("kwargs", [{"ell": 0}, {"max_rounds": 0}])
    def test_params_validate(self, kwargs):
        with pytest.raises(ValidationError):
            ProtocolParams(**kwargs)
