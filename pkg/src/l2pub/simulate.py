"""Forward simulation of the publishing problem under a policy.

Each episode iterates steps ``t = 0..horizon-1``: the policy sees
``(t, price, queue)``, the step cost is charged (priced gas for the batch,
delay for everything left waiting), published items leave, one new item
arrives, and the price advances. The new arrival joins the queue *after*
the action, so it is first decidable one step later; ``initial_queue``
seeds the queue with age-0 items at t = 0.

Episodes under the built-in stationary policies with a single global delay
spec run through ``kernels.episode_kernel``; anything else (custom policies,
per-arrival delay specs) takes the generic Python path. Per-episode RNG
streams derive from ``(seed, episode_index)``, and :func:`compare` runs both
policies on the identical price path (common random numbers).

Waiting times count the decision steps an item stayed in the queue after it
first became publishable, so the trivial policy's waits are all zero. Items
still pending at the horizon are tallied separately by their final age.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import kernels
from .costs import (
    DelaySpec,
    InvalidActionError,
    PublishingCostParams,
    Transaction,
    TxQueue,
    _delay_values,
    aggregated_delay_table,
    delay_cost,
    publishing_cost,
)
from .errors import ConfigError
from .policies import (
    FixedIntervalPolicy,
    GreedyBalancePolicy,
    Policy,
    PolicyInput,
    ThresholdPolicy,
    TrivialPolicy,
)
from .prices import (
    PriceProcess,
    TraceExhausted,
    build_price_path,
    derive_rng,
)

DelayRule = Union[DelaySpec, Callable[[int], DelaySpec]]


@dataclass(frozen=True)
class SimConfig:
    gamma: float
    horizon: int
    seed: int
    price: PriceProcess
    publish: PublishingCostParams
    delay: DelayRule
    initial_queue: int = 1

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.initial_queue < 0:
            raise ConfigError(f"initial_queue must be >= 0, got {self.initial_queue}")

    def delay_for(self, arrival_step: int) -> DelaySpec:
        if callable(self.delay):
            return self.delay(arrival_step)
        return self.delay

    def global_delay(self) -> DelaySpec | None:
        return None if callable(self.delay) else self.delay


@dataclass(frozen=True)
class StepRecord:
    t: int
    price: float
    queue_size_before: int
    published_count: int
    publish_cost: float
    delay_cost: float
    discounted_step_cost: float


@dataclass
class EpisodeResult:
    records: list[StepRecord]
    total_discounted_cost: float
    max_wait: int
    wait_histogram: dict[int, int]
    pending_count: int
    pending_age_histogram: dict[int, int]

    def cumulative_discounted(self) -> np.ndarray:
        return np.cumsum([r.discounted_step_cost for r in self.records])


@dataclass
class MonteCarloSummary:
    episodes: int
    mean_cost: float
    std_err: float
    mean_max_wait: float
    wait_histogram: dict[int, int]
    pending_total: int
    max_waits: np.ndarray
    total_costs: np.ndarray
    max_step_cost: float  # undiscounted; bounds the truncated tail


@dataclass
class _Arrays:
    prices: np.ndarray
    queue_before: np.ndarray
    published: np.ndarray
    pub_costs: np.ndarray
    delay_costs: np.ndarray
    disc_costs: np.ndarray
    wait_hist: np.ndarray
    pending_hist: np.ndarray
    max_wait: int
    pending_count: int


def _episode_prices(config: SimConfig, episode: int) -> np.ndarray:
    rng = derive_rng(config.seed, episode)
    try:
        return build_price_path(config.price, config.horizon, rng)
    except TraceExhausted as exc:
        warnings.warn(
            f"historical trace ends after {exc.available} steps; "
            f"episode truncated from horizon {config.horizon}",
            stacklevel=3,
        )
        return build_price_path(config.price, exc.available, rng)


def _kernel_plan(policy: Policy, config: SimConfig, steps: int):
    """Map a (policy, config) pair onto episode_kernel arguments, or None."""
    spec = config.global_delay()
    if spec is None:
        return None
    empty = np.empty(0, dtype=np.float64)
    if isinstance(policy, TrivialPolicy):
        return kernels.POLICY_TRIVIAL, 1, 0, empty, empty
    if isinstance(policy, FixedIntervalPolicy):
        return kernels.POLICY_INTERVAL, policy.n, policy.phase, empty, empty
    if isinstance(policy, GreedyBalancePolicy):
        if policy.spec != spec or policy.gamma != config.gamma or policy.beta != config.publish.beta:
            return None
        f_table = aggregated_delay_table(
            spec, steps + config.initial_queue + 1, config.gamma
        )
        return kernels.POLICY_GREEDY, 1, 0, f_table, empty
    if isinstance(policy, ThresholdPolicy):
        try:
            fn = policy.threshold_for(spec)
        except ConfigError:
            return None
        lam = np.array([fn(age) for age in range(steps + 1)], dtype=np.float64)
        if np.any(np.diff(lam) < 0):  # kernel looks thresholds up by bisection
            return None
        return kernels.POLICY_THRESHOLD, 1, 0, empty, lam
    return None


def _padded_delay_tables(spec: DelaySpec, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Delay-by-age and its prefix sum, NaN-padded past a short table."""
    from .costs import TableDelay

    need = steps + 1
    if isinstance(spec, TableDelay) and len(spec.values) < need:
        by_age = np.full(need, np.nan)
        by_age[: len(spec.values)] = spec.values
    else:
        by_age = _delay_values(spec, need)
    prefix = np.empty(need, dtype=np.float64)
    prefix[0] = 0.0
    acc = 0.0
    for i in range(1, need):
        acc += by_age[i]
        prefix[i] = acc
    return by_age, prefix


def _run_kernel(policy, config, prices, plan) -> _Arrays:
    T = len(prices)
    code, n, phase, f_table, lam = plan
    spec = config.global_delay()
    by_age, prefix = _padded_delay_tables(spec, T)
    queue_before = np.zeros(T, dtype=np.int64)
    published = np.zeros(T, dtype=np.int64)
    pub_costs = np.zeros(T, dtype=np.float64)
    delay_costs = np.zeros(T, dtype=np.float64)
    disc_costs = np.zeros(T, dtype=np.float64)
    wait_hist = np.zeros(T + 2, dtype=np.int64)
    pending_hist = np.zeros(T + 2, dtype=np.int64)
    max_wait, pending_dyn, pending_seeds = kernels.episode_kernel(
        prices,
        config.gamma,
        config.publish.alpha,
        config.publish.beta,
        by_age,
        prefix,
        config.initial_queue,
        code,
        n,
        phase,
        f_table,
        lam,
        queue_before,
        published,
        pub_costs,
        delay_costs,
        disc_costs,
        wait_hist,
        pending_hist,
    )
    return _Arrays(
        prices=prices,
        queue_before=queue_before,
        published=published,
        pub_costs=pub_costs,
        delay_costs=delay_costs,
        disc_costs=disc_costs,
        wait_hist=wait_hist,
        pending_hist=pending_hist,
        max_wait=max(0, int(max_wait)),
        pending_count=int(pending_dyn + pending_seeds),
    )


def _run_generic(policy: Policy, config: SimConfig, prices: np.ndarray) -> _Arrays:
    T = len(prices)
    queue_before = np.zeros(T, dtype=np.int64)
    published = np.zeros(T, dtype=np.int64)
    pub_costs = np.zeros(T, dtype=np.float64)
    delay_costs = np.zeros(T, dtype=np.float64)
    disc_costs = np.zeros(T, dtype=np.float64)
    wait_hist = np.zeros(T + 2, dtype=np.int64)
    pending_hist = np.zeros(T + 2, dtype=np.int64)

    entry_step: dict[str, int] = {}
    queue = TxQueue(
        Transaction(f"init-{i}", 0, config.delay_for(0))
        for i in range(config.initial_queue)
    )
    for e in queue:
        entry_step[e.id] = 0

    disc = 1.0
    max_wait = -1
    for t in range(T):
        queue_before[t] = len(queue)
        action = policy(PolicyInput(t, float(prices[t]), queue))
        ids = frozenset(action.publish_ids)
        unknown = ids - queue.ids()
        if unknown:
            raise InvalidActionError(
                f"policy published unknown ids at step {t}: {sorted(unknown)}"
            )
        delay = 0.0
        for e in queue:
            if e.id in ids:
                w = t - entry_step.pop(e.id)
                wait_hist[w] += 1
                if w > max_wait:
                    max_wait = w
            else:
                delay += delay_cost(e.delay_spec, e.age(t))
        gas = publishing_cost(config.publish, len(ids))
        pub_cost = float(prices[t]) * gas
        published[t] = len(ids)
        pub_costs[t] = pub_cost
        delay_costs[t] = delay
        disc_costs[t] = disc * (pub_cost + delay)
        arrival = Transaction(f"tx-{t}", t, config.delay_for(t))
        queue = queue.without(ids).add(arrival)
        entry_step[arrival.id] = t + 1
        disc *= config.gamma

    for e in queue:
        pending_hist[T - e.arrival_step] += 1
    return _Arrays(
        prices=prices,
        queue_before=queue_before,
        published=published,
        pub_costs=pub_costs,
        delay_costs=delay_costs,
        disc_costs=disc_costs,
        wait_hist=wait_hist,
        pending_hist=pending_hist,
        max_wait=max(0, max_wait),
        pending_count=len(queue),
    )


def _run_arrays(policy: Policy, config: SimConfig, prices: np.ndarray) -> _Arrays:
    plan = _kernel_plan(policy, config, len(prices))
    if plan is not None:
        return _run_kernel(policy, config, prices, plan)
    return _run_generic(policy, config, prices)


def _hist_dict(hist: np.ndarray) -> dict[int, int]:
    return {int(i): int(c) for i, c in enumerate(hist) if c > 0}


def run_episode(policy: Policy, config: SimConfig) -> EpisodeResult:
    """Simulate one episode and return its full per-step ledger."""
    prices = _episode_prices(config, 0)
    arrays = _run_arrays(policy, config, prices)
    records = [
        StepRecord(
            t=t,
            price=float(arrays.prices[t]),
            queue_size_before=int(arrays.queue_before[t]),
            published_count=int(arrays.published[t]),
            publish_cost=float(arrays.pub_costs[t]),
            delay_cost=float(arrays.delay_costs[t]),
            discounted_step_cost=float(arrays.disc_costs[t]),
        )
        for t in range(len(prices))
    ]
    return EpisodeResult(
        records=records,
        total_discounted_cost=float(np.sum(arrays.disc_costs)),
        max_wait=arrays.max_wait,
        wait_histogram=_hist_dict(arrays.wait_hist),
        pending_count=arrays.pending_count,
        pending_age_histogram=_hist_dict(arrays.pending_hist),
    )


def compare(
    policy_a: Policy, policy_b: Policy, config: SimConfig, episodes: int
) -> np.ndarray:
    """Mean over episodes of cumulative cost of b minus cumulative cost of a.

    Both policies run on the identical per-episode price path (common random
    numbers), so a positive series means policy a is cheaper. Index t holds
    the mean cumulative difference through step t.
    """
    if episodes < 1:
        raise ConfigError(f"episodes must be >= 1, got {episodes}")
    total = None
    for e in range(episodes):
        prices = _episode_prices(config, e)
        a = _run_arrays(policy_a, config, prices)
        b = _run_arrays(policy_b, config, prices)
        diff = np.cumsum(b.disc_costs) - np.cumsum(a.disc_costs)
        total = diff if total is None else total + diff
    return total / episodes


def monte_carlo(policy: Policy, config: SimConfig, episodes: int) -> MonteCarloSummary:
    """Independent episodes via derived streams, with summary statistics."""
    if episodes < 2:
        raise ConfigError(f"episodes must be >= 2, got {episodes}")
    totals = np.empty(episodes, dtype=np.float64)
    max_waits = np.empty(episodes, dtype=np.int64)
    wait_hist = None
    pending_total = 0
    max_step = 0.0
    for e in range(episodes):
        prices = _episode_prices(config, e)
        arrays = _run_arrays(policy, config, prices)
        totals[e] = np.sum(arrays.disc_costs)
        max_waits[e] = arrays.max_wait
        wait_hist = (
            arrays.wait_hist.copy() if wait_hist is None else wait_hist + arrays.wait_hist
        )
        pending_total += arrays.pending_count
        max_step = max(max_step, float(np.max(arrays.pub_costs + arrays.delay_costs)))
    return MonteCarloSummary(
        episodes=episodes,
        mean_cost=float(np.mean(totals)),
        std_err=float(np.std(totals, ddof=1) / math.sqrt(episodes)),
        mean_max_wait=float(np.mean(max_waits)),
        wait_histogram=_hist_dict(wait_hist),
        pending_total=pending_total,
        max_waits=max_waits,
        total_costs=totals,
        max_step_cost=max_step,
    )
