"""Per-node simulation of the two-choices, memory and asynchronous protocols.

Synchronous rounds read a snapshot of round ``t`` and write a fresh
buffer. Node ``v`` always uses row ``v`` of the round's sample array, so
results do not depend on any processing order. Arrays may carry leading
batch axes (independent trials stepped together).
"""

from __future__ import annotations

import sys
from typing import Optional

import numpy as np
from numba import njit

from .model import (
    AgentPopulation,
    Configuration,
    ProtocolParams,
    RngStream,
    RoundReport,
    async_phases,
)
from .schedule import ScheduleResult, run_schedule


def draw_samples(
    shape: tuple[int, ...], count: int, rng: np.random.Generator, include_self: bool = True
) -> np.ndarray:
    """Uniform neighbor indices of shape ``shape + (count,)``.

    ``shape[-1]`` is n. With ``include_self=False`` node ``v`` draws from
    the other ``n - 1`` nodes.
    """
    n = shape[-1]
    if include_self or n == 1:
        return rng.integers(0, n, size=shape + (count,))
    s = rng.integers(0, n - 1, size=shape + (count,))
    own = np.arange(n).reshape((n, 1))
    return s + (s >= own)


def _gather(values: np.ndarray, samples: np.ndarray) -> np.ndarray:
    lead = values.shape[:-1]
    flat = samples.reshape(lead + (-1,))
    return np.take_along_axis(values, flat, axis=-1).reshape(samples.shape)


def apply_two_choices(colors: np.ndarray, samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(new_colors, coincided)`` for pair samples of shape ``(..., n, 2)``."""
    picked = _gather(colors, samples)
    coincide = picked[..., 0] == picked[..., 1]
    return np.where(coincide, picked[..., 0], colors), coincide


def apply_bit_propagation(
    colors: np.ndarray, bits: np.ndarray, samples: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Pull step for single samples of shape ``(..., n)``."""
    src_bits = _gather(bits, samples)
    src_colors = _gather(colors, samples)
    return np.where(src_bits, src_colors, colors), bits | src_bits


def two_choices_round(
    pop: AgentPopulation, rng: np.random.Generator, include_self: bool = True
) -> AgentPopulation:
    samples = draw_samples(pop.colors.shape, 2, rng, include_self)
    colors, _ = apply_two_choices(pop.colors, samples)
    return AgentPopulation(colors, pop.bits.copy(), pop.k, pop.pcs)


def memory_two_choices_round(
    pop: AgentPopulation, rng: np.random.Generator, include_self: bool = True
) -> AgentPopulation:
    samples = draw_samples(pop.colors.shape, 2, rng, include_self)
    colors, coincide = apply_two_choices(pop.colors, samples)
    return AgentPopulation(colors, coincide, pop.k, pop.pcs)


def bit_propagation_round(
    pop: AgentPopulation, rng: np.random.Generator, include_self: bool = True
) -> AgentPopulation:
    samples = draw_samples(pop.colors.shape, 1, rng, include_self)[..., 0]
    colors, bits = apply_bit_propagation(pop.colors, pop.bits, samples)
    return AgentPopulation(colors, bits, pop.k, pop.pcs)


# engine interface used by schedule.run_schedule


def counts(pop: AgentPopulation) -> np.ndarray:
    return pop.counts()


def set_counts(pop: AgentPopulation) -> np.ndarray:
    return pop.set_counts()


def two_choices(pop, gen, params: ProtocolParams):
    return two_choices_round(pop, gen, params.sample_includes_self)


def memory_two_choices(pop, gen, params: ProtocolParams):
    return memory_two_choices_round(pop, gen, params.sample_includes_self)


def propagate(pop, gen, params: ProtocolParams):
    return bit_propagation_round(pop, gen, params.sample_includes_self)


_ops = sys.modules[__name__]


def run_two_choices(
    pop: AgentPopulation, params: ProtocolParams, stream: RngStream, record: bool = True
) -> tuple[AgentPopulation, list[RoundReport]]:
    res = run_schedule(pop, "two-choices", pop.configuration(), params, stream, _ops, record)
    return res.state, res.reports


def run_memory_protocol(
    pop: AgentPopulation, params: ProtocolParams, stream: RngStream, record: bool = True
) -> tuple[AgentPopulation, list[RoundReport]]:
    res = run_schedule(pop, "memory", pop.configuration(), params, stream, _ops, record)
    return res.state, res.reports


def run_single(
    cfg: Configuration, protocol: str, params: ProtocolParams, stream: RngStream, record: bool
) -> ScheduleResult:
    pop = AgentPopulation.from_configuration(cfg)
    return run_schedule(pop, protocol, cfg, params, stream, _ops, record)


def run_batch(
    cfg: Configuration, protocol: str, trials: int, params: ProtocolParams, stream: RngStream
) -> ScheduleResult:
    """Run ``trials`` independent copies in lockstep from one stream."""
    pop = AgentPopulation.from_configuration(cfg, batch=trials)
    return run_schedule(pop, protocol, cfg, params, stream, _ops, record=False)


# asynchronous protocol

@njit(cache=True, nogil=True)
def _async_chunk(
    colors, bits, pcs, counts, halted, n_phases, nodes, s1, s2, include_self, stop_on_unanimity
):
    """Execute activations until the chunk ends, all halt, or unanimity.

    Returns the number of activations consumed, or -1 if the whole chunk
    was used without reaching a stopping condition.
    """
    n = colors.size
    for idx in range(nodes.size):
        v = nodes[idx]
        if pcs[v, 0] >= n_phases:
            continue
        u1 = s1[idx]
        if not include_self and u1 >= v:
            u1 += 1
        old = colors[v]
        if pcs[v, 1] == 0:  # two-choices step; steps 1 and 2 are propagation ticks
            u2 = s2[idx]
            if not include_self and u2 >= v:
                u2 += 1
            if colors[u1] == colors[u2]:
                colors[v] = colors[u1]
                bits[v] = True
            else:
                bits[v] = False
            pcs[v, 1] = 1
        else:
            if bits[u1]:
                colors[v] = colors[u1]
                bits[v] = True
            pcs[v, 1] += 1
            if pcs[v, 1] == 3:
                pcs[v, 1] = 0
                pcs[v, 0] += 1
                if pcs[v, 0] >= n_phases:
                    halted[0] += 1
        new = colors[v]
        if new != old:
            counts[old] -= 1
            counts[new] += 1
            if stop_on_unanimity and counts[new] == n:
                return idx + 1
        if halted[0] == n:
            return idx + 1
    return -1


def run_async_protocol(
    pop: AgentPopulation,
    stream: RngStream,
    include_self: bool = True,
    max_time_units: Optional[float] = None,
    stop_on_unanimity: bool = True,
    chunk: int = 1 << 18,
) -> tuple[AgentPopulation, int]:
    """Sequentialized asynchronous protocol: one uniform node per activation.

    Each node runs ``10 * ceil(log2 n)`` phases of [two-choices step, two
    propagation ticks] and then halts. Stops when every node has halted,
    the colors are unanimous, or ``max_time_units * n`` activations have
    elapsed. Returns the final population and the activation count; one
    time unit is ``n`` activations.
    """
    if pop.colors.ndim != 1:
        raise ValueError("asynchronous protocol runs one trial at a time")
    n = pop.n
    colors = pop.colors.astype(np.int64).copy()
    bits = pop.bits.copy()
    pcs = np.zeros((n, 2), dtype=np.int64) if pop.pcs is None else pop.pcs.astype(np.int64).copy()
    n_phases = async_phases(n)
    counts_arr = np.bincount(colors, minlength=pop.k).astype(np.int64)
    halted = np.array([int(np.sum(pcs[:, 0] >= n_phases))], dtype=np.int64)
    limit = None if max_time_units is None else int(np.ceil(max_time_units * n))

    ticks = 0
    block = 0
    done = (stop_on_unanimity and counts_arr.max() == n) or halted[0] == n
    while not done:
        size = chunk if limit is None else min(chunk, limit - ticks)
        if size <= 0:
            break
        gen = stream.generator(block)
        block += 1
        hi = n if include_self or n == 1 else n - 1
        nodes = gen.integers(0, n, size=size)
        s1 = gen.integers(0, hi, size=size)
        s2 = gen.integers(0, hi, size=size)
        used = _async_chunk(
            colors, bits, pcs, counts_arr, halted, n_phases, nodes, s1, s2,
            include_self or n == 1, stop_on_unanimity,
        )
        if used >= 0:
            ticks += used
            done = True
        else:
            ticks += size
    return AgentPopulation(colors, bits, pop.k, pcs), ticks
