"""Round/phase driver shared by the agent and aggregate engines.

An engine is any object (in practice, the engine module) exposing
``counts``, ``set_counts``, ``two_choices``, ``memory_two_choices`` and
``propagate`` over its state type. States may be batched; unanimous
states are fixed points, so converged trials keep stepping harmlessly
until the whole batch is done.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    Configuration,
    ProtocolParams,
    RngStream,
    RoundReport,
    ValidationError,
    phase_cap,
    propagation_rounds,
    two_choices_cap,
)

PROTOCOLS = ("two-choices", "memory", "async")


@dataclass
class ScheduleResult:
    state: object
    rounds: np.ndarray
    converged: np.ndarray
    winners: np.ndarray
    reports: list[RoundReport] = field(default_factory=list)


def run_schedule(
    state,
    protocol: str,
    cfg: Configuration,
    params: ProtocolParams,
    stream: RngStream,
    ops,
    record: bool = True,
) -> ScheduleResult:
    if protocol not in ("two-choices", "memory"):
        raise ValidationError(f"synchronous schedule cannot run protocol {protocol!r}")
    n = cfg.n
    memory = protocol == "memory"
    counts = ops.counts(state)
    converged = counts.max(axis=-1) == n
    rounds = np.where(converged, 0, -1)
    reports: list[RoundReport] = []

    def observe(t: int, phase=None, step=None) -> bool:
        nonlocal counts, converged
        counts = ops.counts(state)
        now = counts.max(axis=-1) == n
        rounds[now & (rounds < 0)] = t
        converged = now | converged
        if record:
            reports.append(
                RoundReport(
                    t=t,
                    counts=counts.copy(),
                    converged=bool(np.all(now)),
                    set_counts=ops.set_counts(state).copy() if memory else None,
                    phase=phase,
                    step=step,
                )
            )
        return bool(np.all(converged))

    if record:
        reports.append(
            RoundReport(
                t=0,
                counts=counts.copy(),
                converged=bool(np.all(converged)),
                set_counts=ops.set_counts(state).copy() if memory else None,
                phase=0 if memory else None,
                step=None,
            )
        )

    t = 0
    done = bool(np.all(converged))
    if not done and not memory:
        for t in range(1, two_choices_cap(n, cfg.k, params) + 1):
            state = ops.two_choices(state, stream.generator(t), params)
            if observe(t):
                break
    elif not done:
        n_prop = propagation_rounds(n, cfg.k, params)
        for phase in range(1, phase_cap(cfg, params) + 1):
            for step in range(n_prop + 1):
                t += 1
                step_fn = ops.memory_two_choices if step == 0 else ops.propagate
                state = step_fn(state, stream.generator(t), params)
                if observe(t, phase, step):
                    done = True
                    break
            if done:
                break

    rounds = np.where(rounds < 0, t, rounds)
    winners = np.where(converged, counts.argmax(axis=-1), -1)
    return ScheduleResult(state, rounds, converged, winners, reports)
