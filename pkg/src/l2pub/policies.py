"""Publishing decision rules.

A policy maps ``PolicyInput(t, price, queue)`` to the subset of queue ids
to publish this step. Besides the trivial publish-everything rule, the
module provides:

* :class:`FixedIntervalPolicy` with :func:`optimal_interval` picking the
  cheapest interval length for a constant gas price,
* :class:`GreedyBalancePolicy`, which publishes once the flat publication
  cost drops below the delay already aggregated in the queue, and
* :class:`ThresholdPolicy`, which publishes an item exactly when the price
  is at or below an age-indexed threshold; threshold families cover the
  martingale closed form, the numeric infimum for drifting log-normal
  prices, the optimistic one-step bound, and explicit tables.

Boundary convention throughout: equality publishes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

from .costs import (
    DelaySpec,
    TxQueue,
    aggregated_delay_table,
    delay_cost,
)
from .errors import ConfigError

DEFAULT_INF_N_MAX = 100_000
_MONOTONE_CHECK_AGES = 64
_INF_CHUNK = 4096


@dataclass(frozen=True)
class PolicyInput:
    t: int
    price: float
    queue: TxQueue

    def __post_init__(self):
        if self.price <= 0:
            raise ValueError(f"price must be positive, got {self.price}")


@dataclass(frozen=True)
class PolicyAction:
    publish_ids: frozenset[str]


@dataclass(frozen=True)
class RollupParams:
    """Constants of the linear-delay, per-item-cost publishing model.

    The delay cost is ``2*c*age``, each published item costs ``alpha`` gas,
    and log price factors have mean ``mu`` and deviation ``sigma``. The
    threshold derivation requires ``mu <= -sigma^2/2`` (prices must not
    drift upward in expectation).
    """

    c: float
    gamma: float
    mu: float
    sigma: float
    alpha: float = 1.0
    n_max: int = DEFAULT_INF_N_MAX

    def __post_init__(self):
        if self.c < 0:
            raise ConfigError(f"c must be non-negative, got {self.c}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        # same 1e-12 slack as prices.classify, so a hand-written martingale
        # boundary (mu = -sigma^2/2) is not rejected over the last float bit
        if self.mu + 0.5 * self.sigma * self.sigma > 1e-12:
            raise ConfigError(
                f"mu must satisfy mu <= -sigma^2/2, got mu={self.mu}, sigma={self.sigma}"
            )
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")


def one_minus_pow(gamma: float, n) -> np.ndarray:
    """``1 - gamma**n`` computed as ``-expm1(n*log(gamma))``.

    Naive power-and-subtract loses every significant digit once
    ``n*(1-gamma)`` is far below 1, which is the regime gamma = 1 - 1e-7
    lives in.
    """
    return -np.expm1(np.asarray(n, dtype=np.float64) * math.log(gamma))


def _threshold_inf(x: float, gamma: float, drift: float, n_max: int) -> tuple[float, int]:
    """Minimize the wait-n-steps cost ratio over ``n = 1..n_max``.

    The ratio is ``((1-g^n)*(x + g/(1-g)) - n*g^n) / (1 - g^n * e^(n*drift))``
    with ``g = gamma``. Its numerator is non-negative and strictly increasing
    in n while the denominator stays in (0, 1], so the scan stops as soon as
    the numerator alone exceeds the incumbent minimum. Returns the minimum
    and the first n attaining it.
    """
    lg = math.log(gamma)
    a = x + gamma / (1.0 - gamma)
    best = math.inf
    best_n = 0
    lo = 1
    while lo <= n_max:
        hi = min(n_max, lo + _INF_CHUNK - 1)
        n = np.arange(lo, hi + 1, dtype=np.float64)
        gn = np.exp(n * lg)
        num = -np.expm1(n * lg) * a - n * gn
        den = -np.expm1(n * (lg + drift))
        if np.any(den <= 0):
            raise ConfigError(
                "non-positive denominator in threshold search; drift exceeds the allowed range"
            )
        ratio = num / den
        i = int(np.argmin(ratio))
        if ratio[i] < best:
            best = float(ratio[i])
            best_n = lo + i
        if num[-1] >= best:
            break
        lo = hi + 1
    # the exact ratio is non-negative (numerator >= 0, denominator in (0, 1]);
    # cancellation at age 0 can leave a tiny negative residue
    return max(best, 0.0), best_n


def rollup_threshold_detail(params: RollupParams, age: int) -> tuple[float, int]:
    """Threshold value and the gap length attaining the infimum."""
    if age < 0:
        raise ValueError(f"age must be non-negative, got {age}")
    drift = min(params.mu + params.sigma * params.sigma / 2.0, 0.0)
    best, best_n = _threshold_inf(float(age), params.gamma, drift, params.n_max)
    scale = 2.0 * params.c / (params.alpha * (1.0 - params.gamma))
    return scale * best, best_n


def rollup_threshold(params: RollupParams, age: int) -> float:
    """Price threshold for an item of the given age under drifting prices."""
    return rollup_threshold_detail(params, age)[0]


def martingale_threshold(c: float, gamma: float, age: int) -> float:
    """Closed-form threshold ``2*c*age/(1-gamma)`` for martingale prices."""
    if not 0 < gamma < 1:
        raise ConfigError(f"gamma must be in (0, 1), got {gamma}")
    if age < 0:
        raise ValueError(f"age must be non-negative, got {age}")
    return 2.0 * c * age / (1.0 - gamma)


def one_step_threshold(c: float, gamma: float, mu: float, sigma: float, age: int) -> float:
    """Optimistic bound ``2*c*age/(1 - gamma*exp(mu + sigma^2/2))``.

    Considers waiting a single step as the only alternative to publishing;
    it upper-bounds the exact threshold.
    """
    if age < 0:
        raise ValueError(f"age must be non-negative, got {age}")
    den = 1.0 - gamma * math.exp(mu + sigma * sigma / 2.0)
    if den <= 0:
        raise ConfigError(
            f"gamma*exp(mu + sigma^2/2) must be < 1, got denominator {den}"
        )
    return 2.0 * c * age / den


def publish_criterion(
    n: int,
    price: float,
    age: int,
    alpha: float,
    spec: DelaySpec,
    gamma: float,
    expected_factor: Callable[[int], float],
) -> bool:
    """True when publishing now is no worse than waiting exactly n steps.

    Compares ``alpha*price`` against the discounted expected price after n
    steps plus the delay cost paid along the way.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if age < 0:
        raise ValueError(f"age must be non-negative, got {age}")
    wait = alpha * gamma**n * price * expected_factor(n)
    for i in range(n):
        wait += gamma**i * delay_cost(spec, age + i)
    return alpha * price <= wait


def optimal_interval(
    spec: DelaySpec, gamma: float, beta: float, price: float, n_max: int
) -> int:
    """Interval length minimizing average cost per cycle at a constant price.

    Scans ``(F(n) + gamma^(n-1)*beta*price) / (1 - gamma^n)`` over
    ``n = 1..n_max``, breaking ties toward the smaller n, and warns when the
    minimum sits on the ``n_max`` boundary (the true optimum may lie beyond).
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    if beta < 0 or price < 0:
        raise ValueError("beta and price must be non-negative")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    table = aggregated_delay_table(spec, n_max, gamma)
    ns = np.arange(1, n_max + 1, dtype=np.float64)
    objective = (table[1:] + gamma ** (ns - 1.0) * beta * price) / one_minus_pow(gamma, ns)
    best = int(np.argmin(objective)) + 1
    if objective[n_max - 1] <= objective[best - 1]:
        warnings.warn(
            f"optimal interval search hit the n_max={n_max} boundary; "
            "the minimum may lie beyond it",
            stacklevel=2,
        )
    return best


def interval_objective(
    spec: DelaySpec, gamma: float, beta: float, price: float, n: int
) -> float:
    """Average-cost objective value at one interval length."""
    table = aggregated_delay_table(spec, n, gamma)
    return float(
        (table[n] + gamma ** (n - 1) * beta * price) / one_minus_pow(gamma, n)
    )


def _check_threshold_fn(fn, n_check: int):
    prev = None
    for age in range(n_check + 1):
        v = fn(age)
        if v < 0 or not math.isfinite(v):
            raise ConfigError(f"threshold at age {age} must be finite and >= 0, got {v}")
        if prev is not None and v < prev * (1.0 - 1e-12) - 1e-300:
            raise ConfigError(
                f"threshold must be non-decreasing in age; drops at age {age} ({prev} -> {v})"
            )
        prev = v


class MartingaleThreshold:
    """Age threshold ``2*c*age/(1-gamma)``; exact for martingale prices."""

    def __init__(self, c: float, gamma: float):
        if c < 0:
            raise ConfigError(f"c must be non-negative, got {c}")
        if not 0 < gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {gamma}")
        self.c = c
        self.gamma = gamma

    def __call__(self, age: int) -> float:
        return martingale_threshold(self.c, self.gamma, age)


class RollupNumericThreshold:
    """Numeric-infimum threshold for log-normal prices with non-positive drift."""

    def __init__(self, params: RollupParams, n_check: int = _MONOTONE_CHECK_AGES):
        self.params = params
        self._cache: dict[int, float] = {}
        _check_threshold_fn(self._eval, n_check)

    def _eval(self, age: int) -> float:
        v = self._cache.get(age)
        if v is None:
            v = rollup_threshold(self.params, age)
            self._cache[age] = v
        return v

    def __call__(self, age: int) -> float:
        return self._eval(age)


class OneStepThreshold:
    """Optimistic one-step threshold ``2*c*age/(1 - gamma*e^drift)``."""

    def __init__(self, c: float, gamma: float, mu: float, sigma: float):
        if c < 0:
            raise ConfigError(f"c must be non-negative, got {c}")
        if not 0 < gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {gamma}")
        self.c = c
        self.gamma = gamma
        self.mu = mu
        self.sigma = sigma
        one_step_threshold(c, gamma, mu, sigma, 0)  # validates the denominator

    def __call__(self, age: int) -> float:
        return one_step_threshold(self.c, self.gamma, self.mu, self.sigma, age)


class TableThreshold:
    """Thresholds read from a table; ages past the end use the last entry.

    Thresholds are monotone, so clamping to the last entry is a conservative
    floor. Construct with ``clamp=False`` to raise instead.
    """

    def __init__(self, values, clamp: bool = True, n_check: int | None = None):
        self.values = tuple(float(v) for v in values)
        if not self.values:
            raise ConfigError("threshold table must not be empty")
        self.clamp = clamp
        checked = len(self.values) - 1 if n_check is None else n_check
        if not clamp:
            checked = min(checked, len(self.values) - 1)
        _check_threshold_fn(self, checked)

    def __call__(self, age: int) -> float:
        if age >= len(self.values):
            if self.clamp:
                return self.values[-1]
            raise ConfigError(
                f"threshold table has {len(self.values)} entries, age {age} is out of range"
            )
        return self.values[age]


ThresholdFn = Union[MartingaleThreshold, RollupNumericThreshold, OneStepThreshold, TableThreshold]


class TrivialPolicy:
    """Publish the entire queue at every step."""

    def __call__(self, inp: PolicyInput) -> PolicyAction:
        return PolicyAction(inp.queue.ids())


class FixedIntervalPolicy:
    """Publish the full queue whenever ``t % n == phase``, else nothing.

    With the default phase 0 and an initially empty queue, the first
    publication lands on the step where the queue size first reaches n.
    """

    def __init__(self, n: int, phase: int = 0):
        if n < 1:
            raise ConfigError(f"interval n must be >= 1, got {n}")
        if not 0 <= phase < n:
            raise ConfigError(f"phase must be in 0..n-1, got {phase}")
        self.n = n
        self.phase = phase

    def __call__(self, inp: PolicyInput) -> PolicyAction:
        if inp.t % self.n == self.phase:
            return PolicyAction(inp.queue.ids())
        return PolicyAction(frozenset())


class GreedyBalancePolicy:
    """Publish everything once the flat cost drops under the queued delay.

    Publishes the full queue exactly when
    ``gamma^(|Q|-1) * beta * price <= F(|Q|+1)``, where F is the aggregated
    delay cost of the configured global spec; equality publishes. All queue
    entries must share that spec.
    """

    def __init__(self, spec: DelaySpec, gamma: float, beta: float):
        if not 0 < gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {gamma}")
        if beta < 0:
            raise ConfigError(f"beta must be non-negative, got {beta}")
        self.spec = spec
        self.gamma = gamma
        self.beta = beta
        self._table = aggregated_delay_table(spec, 2, gamma)

    def _agg(self, n: int) -> float:
        if n >= len(self._table):
            self._table = aggregated_delay_table(self.spec, max(n, 2 * len(self._table)), self.gamma)
        return float(self._table[n])

    def should_publish(self, price: float, queue_size: int) -> bool:
        if queue_size == 0:
            return False
        return self.gamma ** (queue_size - 1) * self.beta * price <= self._agg(queue_size + 1)

    def __call__(self, inp: PolicyInput) -> PolicyAction:
        for entry in inp.queue:
            if entry.delay_spec != self.spec:
                raise ConfigError(
                    "greedy balance policy requires a global delay cost; "
                    f"queue entry {entry.id} has {entry.delay_spec!r}, policy has {self.spec!r}"
                )
        if self.should_publish(inp.price, len(inp.queue)):
            return PolicyAction(inp.queue.ids())
        return PolicyAction(frozenset())


class ThresholdPolicy:
    """Publish each item whose age-indexed threshold is at or above the price.

    ``thresholds`` is either a single threshold function applied to every
    item, or a mapping from delay spec to threshold function; items whose
    spec is missing from the mapping raise :class:`ConfigError`. Items with
    identical delay specs share one threshold function.
    """

    def __init__(self, thresholds: Mapping[DelaySpec, ThresholdFn] | ThresholdFn):
        if callable(thresholds):
            self.mapping = None
            self.global_fn = thresholds
        else:
            self.mapping = dict(thresholds)
            self.global_fn = None

    def threshold_for(self, spec: DelaySpec):
        if self.global_fn is not None:
            return self.global_fn
        fn = self.mapping.get(spec)
        if fn is None:
            raise ConfigError(f"no threshold configured for delay spec {spec!r}")
        return fn

    def __call__(self, inp: PolicyInput) -> PolicyAction:
        chosen = []
        for entry in inp.queue:
            fn = self.threshold_for(entry.delay_spec)
            if inp.price <= fn(entry.age(inp.t)):
                chosen.append(entry.id)
        return PolicyAction(frozenset(chosen))


Policy = Callable[[PolicyInput], PolicyAction]

trivial_policy: Policy = TrivialPolicy()
