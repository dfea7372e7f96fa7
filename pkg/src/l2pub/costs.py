"""Cost primitives of the batch publishing decision problem.

Publishing a non-empty batch costs ``alpha`` gas per item plus a flat
``beta`` overhead, paid at the current gas price; publishing nothing is
free. Items waiting in the queue each accrue an age-dependent delay cost
per step. :func:`aggregated_delay_cost` totals the discounted delay built
up across an n-step gap between publications, and
:func:`check_sub_additivity` verifies the growth bound that the greedy
balancing policy's guarantee rests on.

All values are immutable after construction and every operation is pure,
so they are safe to share across threads or processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from . import kernels


class InvalidActionError(ValueError):
    """An action referenced ids that are not in the queue."""


class DelayRangeError(ValueError):
    """A tabulated delay cost was evaluated past its last entry."""


@dataclass(frozen=True)
class PublishingCostParams:
    """Affine gas cost of posting a batch: ``alpha`` per item, ``beta`` flat."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(
                f"publishing cost params must be non-negative, got alpha={self.alpha}, beta={self.beta}"
            )


@dataclass(frozen=True)
class LinearDelay:
    """Delay cost ``slope * age``."""

    slope: float

    def __post_init__(self):
        if self.slope < 0:
            raise ValueError(f"slope must be non-negative, got {self.slope}")

    def cost(self, age: int) -> float:
        return self.slope * age


@dataclass(frozen=True)
class ExponentialDelay:
    """Delay cost ``exp(rate * age)``; note the cost at age 0 is 1."""

    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"rate must be non-negative, got {self.rate}")

    def cost(self, age: int) -> float:
        return math.exp(self.rate * age)


@dataclass(frozen=True)
class TableDelay:
    """Delay cost read verbatim from a table indexed by age.

    Ages past the last entry raise :class:`DelayRangeError` rather than
    extrapolating; silent extrapolation could mask a mis-sized config.
    """

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ValueError("delay table must not be empty")
        if any(v < 0 or not math.isfinite(v) for v in self.values):
            raise ValueError("delay table entries must be finite and non-negative")

    def cost(self, age: int) -> float:
        if age >= len(self.values):
            raise DelayRangeError(
                f"delay table has {len(self.values)} entries, age {age} is out of range"
            )
        return self.values[age]


DelaySpec = Union[LinearDelay, ExponentialDelay, TableDelay]


@dataclass(frozen=True)
class Transaction:
    """One queued item: opaque unique id plus the step it was created."""

    id: str
    arrival_step: int
    delay_spec: DelaySpec

    def age(self, t: int) -> int:
        return t - self.arrival_step


class TxQueue:
    """Immutable queue of transactions, oldest first (ties by id)."""

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[Transaction] = ()):
        ordered = tuple(sorted(entries, key=lambda e: (e.arrival_step, e.id)))
        ids = [e.id for e in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate transaction ids in queue")
        object.__setattr__(self, "entries", ordered)

    def __setattr__(self, name, value):
        raise AttributeError("TxQueue is immutable")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> frozenset[str]:
        return frozenset(e.id for e in self.entries)

    def add(self, tx: Transaction) -> "TxQueue":
        return TxQueue(self.entries + (tx,))

    def without(self, ids: frozenset[str]) -> "TxQueue":
        return TxQueue(e for e in self.entries if e.id not in ids)

    def __repr__(self):
        return f"TxQueue({list(self.entries)!r})"


def publishing_cost(params: PublishingCostParams, count: int) -> float:
    """Gas units to publish ``count`` items; the empty batch is free."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if count == 0:
        return 0.0
    return params.alpha * count + params.beta


def delay_cost(spec: DelaySpec, age: int) -> float:
    """Delay cost of one item at the given age."""
    if age < 0:
        raise ValueError(f"age must be non-negative, got {age}")
    return spec.cost(age)


def step_cost(
    price: float,
    queue: TxQueue,
    published: frozenset[str],
    params: PublishingCostParams,
    t: int,
) -> float:
    """One step's total cost: priced gas for the batch plus delay for the rest."""
    published = frozenset(published)
    unknown = published - queue.ids()
    if unknown:
        raise InvalidActionError(f"published ids not in queue: {sorted(unknown)}")
    total = price * publishing_cost(params, len(published))
    for entry in queue:
        if entry.id not in published:
            total += delay_cost(entry.delay_spec, entry.age(t))
    return total


def _delay_values(spec: DelaySpec, count: int) -> np.ndarray:
    """Delay costs at ages ``0..count-1`` as a float array."""
    if isinstance(spec, LinearDelay):
        return spec.slope * np.arange(count, dtype=np.float64)
    if isinstance(spec, ExponentialDelay):
        return np.exp(spec.rate * np.arange(count, dtype=np.float64))
    if isinstance(spec, TableDelay):
        if count > len(spec.values):
            raise DelayRangeError(
                f"delay table has {len(spec.values)} entries, need ages up to {count - 1}"
            )
        return np.asarray(spec.values[:count], dtype=np.float64)
    raise TypeError(f"unknown delay spec: {spec!r}")


def aggregated_delay_table(spec: DelaySpec, n_max: int, gamma: float) -> np.ndarray:
    """Aggregated delay costs ``F[0..n_max]`` for gaps of every length up to n_max.

    ``F[n]`` is the discounted delay accumulated when n-1 consecutive arrivals
    wait out the gap, with weight ``gamma^(t-1)`` on the t-th step of the gap.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    values = _delay_values(spec, max(n_max, 1))
    return kernels.agg_delay_table(values, gamma, n_max)


def aggregated_delay_cost(spec: DelaySpec, n: int, gamma: float) -> float:
    """Total discounted delay of an n-step publication gap; zero for n = 1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return float(aggregated_delay_table(spec, n, gamma)[n])


@dataclass(frozen=True)
class Counterexample:
    """First (lexicographic) violation found by :func:`check_sub_additivity`."""

    n1: int
    n2: int
    lhs: float
    rhs: float


def check_sub_additivity(
    spec: DelaySpec, gamma: float, sigma: float, n_max: int
) -> Counterexample | None:
    """Exhaustively test ``F(n1+n2) <= sigma * (F(n1+1) + gamma^n1 * F(n2))``.

    Scans all ``1 <= n1, n2`` with ``n1 + n2 <= n_max`` in lexicographic
    order and returns the first violating pair, or ``None`` when the bound
    holds everywhere.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    table = aggregated_delay_table(spec, n_max, gamma)
    for n1 in range(1, n_max):
        g = gamma**n1
        for n2 in range(1, n_max - n1 + 1):
            lhs = table[n1 + n2]
            rhs = sigma * (table[n1 + 1] + g * table[n2])
            if lhs > rhs:
                return Counterexample(n1, n2, float(lhs), float(rhs))
    return None
