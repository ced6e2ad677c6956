"""Closed-form moments, adversarial start configurations and exact kernels.

Everything here is computed in exact rational arithmetic and converted to
float at the boundary, so the values are independent of the samplers
they are used to check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

from .model import Configuration, ValidationError

EXACT_MAX_N = 8
EXACT_MAX_K = 3


def _check_pair(cfg: Configuration, i: int, j: int) -> None:
    if not (0 <= i < cfg.k and 0 <= j < cfg.k):
        raise ValidationError(f"color index out of range for k={cfg.k}")
    if i == j:
        raise ValidationError("flow is defined only between distinct colors")


def expected_flow(cfg: Configuration, i: int, j: int) -> float:
    """Mean number of color-i nodes switching to color j in one round."""
    _check_pair(cfg, i, j)
    c, n = cfg.counts, cfg.n
    return float(Fraction(c[i] * c[j] ** 2, n**2))


def flow_variance(cfg: Configuration, i: int, j: int) -> float:
    _check_pair(cfg, i, j)
    c, n = cfg.counts, cfg.n
    return float(Fraction(c[i] * c[j] ** 2 * (n - c[j]) * (n + c[j]), n**4))


def _expected_next_exact(cfg: Configuration, i: int) -> Fraction:
    c, n = cfg.counts, cfg.n
    others = sum(cj**2 for j, cj in enumerate(c) if j != i)
    return c[i] + Fraction((n - c[i]) * c[i] ** 2, n**2) - Fraction(c[i] * others, n**2)


def expected_next(cfg: Configuration, i: int | None = None):
    """Expected count of color ``i`` after one two-choices round.

    With ``i=None`` returns the list for every color.
    """
    if i is None:
        return [float(_expected_next_exact(cfg, j)) for j in range(cfg.k)]
    return float(_expected_next_exact(cfg, i))


def next_variance(cfg: Configuration, i: int) -> float:
    """Variance of ``c_i'``: inflow and outflow are independent binomials."""
    c, n = cfg.counts, cfg.n
    p_in = Fraction(c[i] ** 2, n**2)
    p_out = Fraction(sum(cj**2 for j, cj in enumerate(c) if j != i), n**2)
    return float((n - c[i]) * p_in * (1 - p_in) + c[i] * p_out * (1 - p_out))


def gap_growth_bound(cfg: Configuration) -> float:
    """Lower bound ``(a - b)(1 + a / 4n)`` on the next top-two gap."""
    if cfg.k < 2:
        raise ValidationError("gap needs at least two colors")
    a, b = cfg.sorted_desc()[:2]
    return float((a - b) * (1 + Fraction(a, 4 * cfg.n)))


def per_color_bit_expectation(cfg: Configuration, j: int) -> float:
    return float(Fraction(cfg.counts[j] ** 2, cfg.n))


def expected_bits_after_two_choices(cfg: Configuration) -> float:
    return float(Fraction(sum(c**2 for c in cfg.counts), cfg.n))


def bits_after_two_choices_variance(cfg: Configuration, j: int | None = None) -> float:
    """Binomial variance of ``x_j(1)`` (or of ``x(1)`` when ``j`` is None)."""
    n = cfg.n
    if j is None:
        p = Fraction(sum(c**2 for c in cfg.counts), n**2)
    else:
        p = Fraction(cfg.counts[j] ** 2, n**2)
    return float(n * p * (1 - p))


def bit_propagation_expectation(x: int, x_j: int, n: int) -> tuple[float, float]:
    """``(E[x(t+1)], E[x_j(t+1)])`` given ``x(t)`` and ``x_j(t)``."""
    if not 0 <= x_j <= x <= n or n < 1:
        raise ValidationError(f"need 0 <= x_j <= x <= n, got x_j={x_j}, x={x}, n={n}")
    grow = Fraction(n - x, n)
    return float(x + grow * x), float(x_j + grow * x_j)


def bit_propagation_variance(x: int, x_j: int, n: int) -> tuple[float, float]:
    """Exact variances of ``x(t+1)`` and ``x_j(t+1)`` after one pull round.

    ``x(t+1) - x`` is ``B(n - x, x/n)``. A node ends as a set node of
    color j either by pulling one (``B(n - x_j, x_j/n)`` over the other
    nodes) or by being a set j-node that does not pull another set color
    (``B(x_j, 1 - (x - x_j)/n)``); the two parts are independent.
    """
    bit_propagation_expectation(x, x_j, n)
    p, pj = Fraction(x, n), Fraction(x_j, n)
    var_x = (n - x) * p * (1 - p)
    other = p - pj
    var_j = (n - x_j) * pj * (1 - pj) + x_j * other * (1 - other)
    return float(var_x), float(var_j)


def theorem3_configuration(n: int, k: int, z_prime: float) -> Configuration:
    """Near-tie start ``(floor(n') + s, ceil(n') - s, 1, ..., 1)``.

    ``n' = (n - k + 2) / 2`` and ``s = floor(z' / 2 * sqrt(n))``.
    """
    if k < 2 or n < k:
        raise ValidationError("need k >= 2 and n >= k")
    half = Fraction(n - k + 2, 2)
    shift = math.floor(z_prime / 2 * math.sqrt(n))
    c1 = math.floor(half) + shift
    c2 = math.ceil(half) - shift
    if c2 < 1:
        raise ValidationError(f"bias too large: second color would have {c2} nodes")
    return Configuration((c1, c2) + (1,) * (k - 2))


def _split_evenly(total: int, parts: int) -> tuple[int, ...]:
    base, extra = divmod(total, parts)
    return tuple(base + 1 if i < extra else base for i in range(parts))


def equal_plus_bias(n: int, k: int, bias: int) -> Configuration:
    """``c_1 = ceil(n/k) + bias`` and the rest split as evenly as possible."""
    if k < 1 or n < 1 or bias < 0:
        raise ValidationError("need n >= 1, k >= 1, bias >= 0")
    if k == 1:
        return Configuration((n,))
    c1 = -(-n // k) + bias
    if c1 > n:
        raise ValidationError(f"bias {bias} exceeds the population for n={n}, k={k}")
    return Configuration((c1,) + _split_evenly(n - c1, k - 1))


def equal_plus_gap(n: int, k: int, gap: int) -> Configuration:
    """Top-two gap ``c_1 - c_2 = gap`` with ``c_2 >= c_3 >= ...`` near equal.

    For k = 2 the gap must share the parity of n; an odd remainder goes
    to the leader.
    """
    if k < 2 or gap < 0 or gap > n:
        raise ValidationError("need k >= 2 and 0 <= gap <= n")
    if k == 2:
        c2 = (n - gap) // 2
        return Configuration((n - c2, c2))
    c2 = -(-(n - gap) // k)
    rest = n - gap - 2 * c2
    if rest < 0:
        raise ValidationError(f"gap {gap} infeasible for n={n}, k={k}")
    return Configuration((c2 + gap, c2) + _split_evenly(rest, k - 2))


def theorem4_configuration(n: int, k: int, z: float) -> Configuration:
    """``c_1 = ceil(n/k + z sqrt(n ln n))``; remaining mass split evenly."""
    if k < 1 or n < 1:
        raise ValidationError("need n >= 1 and k >= 1")
    c1 = math.ceil(n / k + z * math.sqrt(n * math.log(n)))
    if c1 > n or c1 < 0:
        raise ValidationError(f"infeasible leading count {c1} for n={n}")
    if k == 1:
        return Configuration((n,))
    return Configuration((c1,) + _split_evenly(n - c1, k - 1))


@dataclass(frozen=True)
class TransitionDistribution:
    """Exact law of the next configuration, keyed by count tuples."""

    probs: dict

    def total(self) -> Fraction:
        return sum(self.probs.values(), Fraction(0))

    def probability(self, counts) -> Fraction:
        return self.probs.get(tuple(counts), Fraction(0))

    def mean(self, i: int) -> Fraction:
        return sum((c[i] * p for c, p in self.probs.items()), Fraction(0))

    def to_json(self) -> list:
        return [
            {"counts": list(c), "probability": float(p)}
            for c, p in sorted(self.probs.items(), reverse=True)
        ]


def _compositions(m: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (m,)
        return
    for first in range(m + 1):
        for rest in _compositions(m - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _factorial(m: int) -> int:
    return math.factorial(m)


def _multinomial_pmf(counts: tuple[int, ...], probs: tuple[Fraction, ...]) -> Fraction:
    coef = _factorial(sum(counts))
    for c in counts:
        coef //= _factorial(c)
    p = Fraction(coef)
    for c, q in zip(counts, probs):
        p *= q**c
    return p


def exact_transition(cfg: Configuration) -> TransitionDistribution:
    """One-round two-choices kernel by convolving per-color multinomial flows."""
    if cfg.n > EXACT_MAX_N or cfg.k > EXACT_MAX_K:
        raise ValidationError(
            f"exact enumeration limited to n <= {EXACT_MAX_N}, k <= {EXACT_MAX_K}"
        )
    n, k, c = cfg.n, cfg.k, cfg.counts
    q = [Fraction(cj**2, n**2) for cj in c]
    dist: dict[tuple[int, ...], Fraction] = {(0,) * k: Fraction(1)}
    for i in range(k):
        probs = tuple(q[j] if j != i else 1 - sum(q) + q[i] for j in range(k))
        step: dict[tuple[int, ...], Fraction] = {}
        for dest in _compositions(c[i], k):
            p = _multinomial_pmf(dest, probs)
            if p == 0:
                continue
            for acc, pa in dist.items():
                key = tuple(a + d for a, d in zip(acc, dest))
                step[key] = step.get(key, Fraction(0)) + pa * p
        dist = step
    return TransitionDistribution(dist)


def monotonicity_check(cfg: Configuration) -> bool:
    """Whether expected next counts are ordered like the current counts.

    Uses ``n^2 E[c_i'] = c_i (n^2 + c_i n - sum_j c_j^2)`` in integers.
    """
    n = cfg.n
    s = sum(c * c for c in cfg.counts)
    scaled = sorted((c, c * (n * n + c * n - s)) for c in cfg.counts)
    return all(e0 <= e1 for (_, e0), (_, e1) in itertools.pairwise(scaled))
