"""Core domain types, seeded random streams and sampling primitives.

Counts are plain numpy int64 arrays wherever performance matters; the
``Configuration`` value object exists for validated, hashable snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MAX_POPULATION = 2**62


class ValidationError(ValueError):
    """Raised for malformed configurations, parameters or sampler inputs."""


@dataclass(frozen=True)
class Configuration:
    """Color counts ``c_1..c_k`` in input order (not sorted)."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.counts) == 0:
            raise ValidationError("configuration needs at least one color")
        if any(c < 0 for c in self.counts):
            raise ValidationError(f"negative color count in {list(self.counts)}")
        total = sum(self.counts)
        if total < 1:
            raise ValidationError("configuration needs at least one node")
        if total > MAX_POPULATION:
            raise ValidationError(f"population {total} exceeds 2**62")

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def k(self) -> int:
        return len(self.counts)

    def array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    def sorted_desc(self) -> tuple[int, ...]:
        return tuple(sorted(self.counts, reverse=True))

    def leader(self) -> int:
        """Index of the largest color (lowest index on ties)."""
        return int(np.argmax(self.counts))

    def is_unanimous(self) -> bool:
        return max(self.counts) == self.n


def make_configuration(counts: Sequence[int]) -> Configuration:
    try:
        values = tuple(int(c) for c in counts)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"counts must be integers: {counts!r}") from exc
    if any(int(c) != c for c in counts):
        raise ValidationError(f"counts must be integers: {counts!r}")
    return Configuration(values)


def bincount_rows(colors: np.ndarray, k: int) -> np.ndarray:
    """Per-row color histogram of an integer array with leading batch axes."""
    colors = np.asarray(colors)
    lead = colors.shape[:-1]
    rows = int(np.prod(lead)) if lead else 1
    flat = colors.reshape(rows, -1).astype(np.int64)
    offsets = (np.arange(rows, dtype=np.int64) * k)[:, None]
    out = np.bincount((flat + offsets).ravel(), minlength=rows * k)
    return out.reshape(lead + (k,)).astype(np.int64)


@dataclass
class AgentPopulation:
    """Per-node state. ``colors``/``bits`` may carry leading batch axes.

    ``pcs`` holds ``(phase, step)`` program counters per node and is only
    used by the asynchronous protocol.
    """

    colors: np.ndarray
    bits: np.ndarray
    k: int
    pcs: Optional[np.ndarray] = None

    @classmethod
    def from_configuration(
        cls, cfg: Configuration, batch: Optional[int] = None, with_pcs: bool = False
    ) -> "AgentPopulation":
        colors = np.repeat(np.arange(cfg.k, dtype=np.int64), cfg.array())
        if batch is not None:
            colors = np.broadcast_to(colors, (batch, cfg.n)).copy()
        bits = np.zeros(colors.shape, dtype=bool)
        pcs = np.zeros((cfg.n, 2), dtype=np.int64) if with_pcs else None
        return cls(colors=colors, bits=bits, k=cfg.k, pcs=pcs)

    @property
    def n(self) -> int:
        return self.colors.shape[-1]

    def counts(self) -> np.ndarray:
        return bincount_rows(self.colors, self.k)

    def set_counts(self) -> np.ndarray:
        masked = np.where(self.bits, self.colors, self.k)
        return bincount_rows(masked, self.k + 1)[..., : self.k]

    def configuration(self) -> Configuration:
        if self.colors.ndim != 1:
            raise ValidationError("configuration() requires an unbatched population")
        return Configuration(tuple(int(c) for c in self.counts()))


@dataclass
class AggregateState:
    """Node counts per (color, bit) class; arrays may carry batch axes."""

    set_counts: np.ndarray
    unset_counts: np.ndarray

    @classmethod
    def from_configuration(cls, cfg: Configuration, batch: Optional[int] = None) -> "AggregateState":
        unset = cfg.array()
        if batch is not None:
            unset = np.broadcast_to(unset, (batch, cfg.k)).copy()
        return cls(set_counts=np.zeros_like(unset), unset_counts=unset.copy())

    @property
    def k(self) -> int:
        return self.set_counts.shape[-1]

    @property
    def n(self) -> int:
        return int(self.counts().reshape(-1, self.k)[0].sum())

    def counts(self) -> np.ndarray:
        return self.set_counts + self.unset_counts

    def x(self) -> np.ndarray:
        return self.set_counts.sum(axis=-1)

    def configuration(self) -> Configuration:
        if self.set_counts.ndim != 1:
            raise ValidationError("configuration() requires an unbatched state")
        return Configuration(tuple(int(c) for c in self.counts()))


@dataclass(frozen=True)
class ProtocolParams:
    ell: int = 10
    u_override: Optional[float] = None
    propagation_rounds_override: Optional[int] = None
    max_rounds: int = 100_000
    sample_includes_self: bool = True
    log_base: int = field(default=2, init=False)

    def __post_init__(self) -> None:
        if self.ell < 1:
            raise ValidationError("ell must be >= 1")
        if self.max_rounds < 1:
            raise ValidationError("max_rounds must be >= 1")
        if self.u_override is not None and not self.u_override > 0:
            raise ValidationError("U must be positive")
        if self.propagation_rounds_override is not None and self.propagation_rounds_override < 0:
            raise ValidationError("propagation rounds must be >= 0")


@dataclass(frozen=True)
class RoundReport:
    """State after round ``t``; ``set_counts`` only for the memory protocol.

    ``phase`` is 1-based; ``step`` is 0 for a two-choices round and
    1..R for propagation rounds.
    """

    t: int
    counts: np.ndarray
    converged: bool
    set_counts: Optional[np.ndarray] = None
    phase: Optional[int] = None
    step: Optional[int] = None

    @property
    def x(self) -> Optional[int]:
        return None if self.set_counts is None else int(self.set_counts.sum())


@dataclass(frozen=True)
class RngStream:
    """Seeded PCG64 streams keyed by ``(seed, trial, round)``.

    Every round (or async chunk) draws from its own child generator, so a
    round's randomness depends only on its key.
    """

    seed: int
    trial: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def generator(self, index: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.trial, index))
        return np.random.Generator(np.random.PCG64(ss))

    def for_trial(self, trial: int) -> "RngStream":
        return RngStream(self.seed, trial)


def sample_categorical(weights, rng: np.random.Generator, size=None):
    """Draw index ``i`` with probability ``weights[i] / sum(weights)``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite and non-negative")
    cum = np.cumsum(w)
    total = cum[-1]
    if total <= 0:
        raise ValidationError("weights sum to zero")
    u = rng.random(size) * total
    idx = np.searchsorted(cum, u, side="right")
    # u * total can round up to total; fall back to the last positive weight
    last = int(np.flatnonzero(w > 0)[-1])
    idx = np.minimum(idx, last)
    return int(idx) if size is None else idx


def sample_multinomial(m: int, probs, rng: np.random.Generator) -> np.ndarray:
    """Exact multinomial draw (numpy's sequential conditional binomials)."""
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValidationError("probabilities must lie in [0, 1]")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
    if m < 0:
        raise ValidationError("number of trials must be >= 0")
    return rng.multinomial(int(m), p).astype(np.int64)


# Round budgets. Logs are base 2 with ceilings; arguments are clamped so
# that iterated logs stay defined.


def _loglog2(n: int) -> float:
    return math.log2(math.log2(max(n, 4)))


def propagation_rounds(n: int, k: int, params: ProtocolParams = ProtocolParams()) -> int:
    if params.propagation_rounds_override is not None:
        return params.propagation_rounds_override
    return math.ceil(2 * math.log2(max(k, 2)) + 2 * _loglog2(n))


def imbalance_bound(cfg: Configuration, params: ProtocolParams = ProtocolParams()) -> float:
    """``U``: override, else ``c2 / (c1 - c2)`` clamped to ``[2, n]``."""
    if params.u_override is not None:
        u = params.u_override
    else:
        ordered = cfg.sorted_desc()
        c1 = ordered[0]
        c2 = ordered[1] if cfg.k > 1 else 0
        u = math.inf if c1 == c2 else c2 / (c1 - c2)
    return min(max(u, 2.0), max(cfg.n, 2))


def phase_cap(cfg: Configuration, params: ProtocolParams = ProtocolParams()) -> int:
    u = imbalance_bound(cfg, params)
    return max(1, math.ceil(params.ell * math.log2(u) + _loglog2(cfg.n)))


def two_choices_cap(n: int, k: int, params: ProtocolParams = ProtocolParams()) -> int:
    return max(params.max_rounds, math.ceil(k * math.log2(max(n, 2))))


def async_phases(n: int) -> int:
    return 10 * math.ceil(math.log2(max(n, 1)))
