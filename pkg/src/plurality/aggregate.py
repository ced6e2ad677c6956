"""Count-level simulation of the two-choices and memory protocols.

On the complete graph nodes in the same (color, bit) class are
exchangeable, so one round is exactly a set of independent multinomial
draws, one per class, over destination classes. Work per round is
O(k^2) regardless of n. Colors absent from every batch row are dropped
before sampling since nothing can move into them.
"""

from __future__ import annotations

import sys

import numpy as np

from .model import (
    AggregateState,
    Configuration,
    ProtocolParams,
    RngStream,
    RoundReport,
)
from .schedule import ScheduleResult, run_schedule


def _alive(*arrays: np.ndarray) -> np.ndarray:
    mask = np.zeros(arrays[0].shape[-1], dtype=bool)
    for a in arrays:
        mask |= a.reshape(-1, a.shape[-1]).any(axis=0)
    return np.flatnonzero(mask)


def pair_probabilities(counts: np.ndarray, include_self: bool = True) -> np.ndarray:
    """``Q[..., i, j]``: chance that a node of color i draws two nodes of color j."""
    c = counts.astype(float)
    n = c.sum(axis=-1, keepdims=True)
    k = c.shape[-1]
    if include_self:
        q = (c / n) ** 2
        return np.broadcast_to(q[..., None, :], c.shape + (k,))
    m = np.maximum(n - 1, 1)[..., None]
    others = c[..., None, :] - np.eye(k)
    return (np.maximum(others, 0) / m) ** 2


def flow_matrix(
    counts: np.ndarray, rng: np.random.Generator, include_self: bool = True
) -> np.ndarray:
    """Sample ``F[..., i, j]``, the number of color-i nodes moving to color j.

    The diagonal holds the nodes that keep their color.
    """
    counts = np.asarray(counts, dtype=np.int64)
    k = counts.shape[-1]
    idx = _alive(counts)
    sub = counts[..., idx]
    q = pair_probabilities(sub, include_self).copy()
    ka = idx.size
    diag = np.arange(ka)
    q[..., diag, diag] = 0.0
    q[..., diag, diag] = np.clip(1.0 - q.sum(axis=-1), 0.0, 1.0)
    sub_flows = rng.multinomial(sub, q)
    flows = np.zeros(counts.shape + (k,), dtype=np.int64)
    flows[..., idx[:, None], idx[None, :]] = sub_flows
    return flows


def two_choices_counts(
    counts: np.ndarray, rng: np.random.Generator, include_self: bool = True
) -> np.ndarray:
    return flow_matrix(counts, rng, include_self).sum(axis=-2)


def two_choices_round_agg(
    cfg: Configuration, rng: np.random.Generator, include_self: bool = True
) -> Configuration:
    new = two_choices_counts(cfg.array(), rng, include_self)
    return Configuration(tuple(int(c) for c in new))


def memory_two_choices_round_agg(
    state: AggregateState, rng: np.random.Generator, include_self: bool = True
) -> AggregateState:
    counts = state.counts()
    idx = _alive(counts)
    sub = counts[..., idx]
    q = pair_probabilities(sub, include_self)
    # outcomes per source color i: (j, set) for every j, then (i, unset)
    pvals = np.concatenate([q, np.clip(1.0 - q.sum(axis=-1), 0.0, 1.0)[..., None]], axis=-1)
    flows = rng.multinomial(sub, pvals)
    new_set = np.zeros_like(counts)
    new_unset = np.zeros_like(counts)
    new_set[..., idx] = flows[..., :-1].sum(axis=-2)
    new_unset[..., idx] = flows[..., -1]
    return AggregateState(new_set, new_unset)


def bit_propagation_round_agg(
    state: AggregateState, rng: np.random.Generator, include_self: bool = True
) -> AggregateState:
    set_c, unset_c = state.set_counts, state.unset_counts
    idx = _alive(set_c, unset_c)
    s, u = set_c[..., idx], unset_c[..., idx]
    ka = idx.size
    n = (s.sum(axis=-1) + u.sum(axis=-1)).astype(float)[..., None]
    sources = np.concatenate([s, u], axis=-1)
    if include_self:
        p_set = s.astype(float) / n
        p = np.broadcast_to(p_set[..., None, :], sources.shape + (ka,))
    else:
        # a set node cannot sample itself, which removes one set node of its color
        own = np.concatenate([np.eye(ka), np.zeros((ka, ka))], axis=0)
        m = np.maximum(n - 1, 1)[..., None]
        p = np.maximum(s[..., None, :] - own, 0) / m
        # rows over-full only when the source class is empty (x = n, unset)
        p = p / np.maximum(p.sum(axis=-1, keepdims=True), 1.0)
    pvals = np.concatenate([p, np.clip(1.0 - p.sum(axis=-1), 0.0, 1.0)[..., None]], axis=-1)
    flows = rng.multinomial(sources, pvals)
    kept = flows[..., -1]
    new_set = np.zeros_like(set_c)
    new_unset = np.zeros_like(unset_c)
    new_set[..., idx] = flows[..., :-1].sum(axis=-2) + kept[..., :ka]
    new_unset[..., idx] = kept[..., ka:]
    return AggregateState(new_set, new_unset)


# engine interface used by schedule.run_schedule


def counts(state: AggregateState) -> np.ndarray:
    return state.counts()


def set_counts(state: AggregateState) -> np.ndarray:
    return state.set_counts


def two_choices(state: AggregateState, gen, params: ProtocolParams) -> AggregateState:
    new = two_choices_counts(state.counts(), gen, params.sample_includes_self)
    return AggregateState(np.zeros_like(new), new)


def memory_two_choices(state, gen, params: ProtocolParams):
    return memory_two_choices_round_agg(state, gen, params.sample_includes_self)


def propagate(state, gen, params: ProtocolParams):
    return bit_propagation_round_agg(state, gen, params.sample_includes_self)


_ops = sys.modules[__name__]


def run_protocol_agg(
    cfg: Configuration,
    protocol: str,
    params: ProtocolParams,
    stream: RngStream,
    record: bool = True,
) -> tuple[Configuration, list[RoundReport]]:
    res = run_schedule(
        AggregateState.from_configuration(cfg), protocol, cfg, params, stream, _ops, record
    )
    return res.state.configuration(), res.reports


def run_single(
    cfg: Configuration, protocol: str, params: ProtocolParams, stream: RngStream, record: bool
) -> ScheduleResult:
    return run_schedule(
        AggregateState.from_configuration(cfg), protocol, cfg, params, stream, _ops, record
    )


def run_batch(
    cfg: Configuration, protocol: str, trials: int, params: ProtocolParams, stream: RngStream
) -> ScheduleResult:
    """Run ``trials`` independent copies in lockstep from one stream."""
    state = AggregateState.from_configuration(cfg, batch=trials)
    return run_schedule(state, protocol, cfg, params, stream, _ops, record=False)
