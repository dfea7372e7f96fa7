"""Exact finite-horizon dynamic programming on small lattice instances.

Ground truth for checking the analytic policies: prices move on a finite
multiplicative lattice (factor/probability pairs, recombining through
factor-count node keys), and backward induction computes exact optimal
values. Two formulations are provided:

* the *count* formulation (:func:`solve_modified_mdp`): state is
  ``(t, price node, queue count)``, the action a publish count, valid when
  all items share one global, monotone delay cost so the oldest always go
  first;
* the *subset* formulation (:func:`solve_full_mdp`): per-item delay specs
  and explicit subset actions, tractable only for tiny instances, used to
  verify structural properties (all-or-nothing under flat publishing cost,
  oldest-first under global monotone delay) by comparing the unrestricted
  optimum against action-restricted variants.

Terminal values at the horizon are zero: items still queued at the end
incur no further penalty. That truncation creates an end-of-horizon
"never publish" region, so structural checks should stay away from the
last quarter of the horizon.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .costs import (
    DelaySpec,
    PublishingCostParams,
    _delay_values,
    delay_cost,
)
from .errors import ConfigError, StateSpaceError

MODIFIED_STATE_GUARD = 1_000_000
FULL_OPS_GUARD = 4_000_000
VALUE_TOL = 1e-10


@dataclass(frozen=True)
class LatticePriceProcess:
    """Finite-support multiplicative price process on a recombining lattice."""

    initial_price: float
    factors: tuple[tuple[float, float], ...]  # (ratio, probability)

    def __post_init__(self):
        object.__setattr__(
            self,
            "factors",
            tuple((float(r), float(p)) for r, p in self.factors),
        )
        if self.initial_price <= 0:
            raise ConfigError(f"initial_price must be positive, got {self.initial_price}")
        if not self.factors:
            raise ConfigError("lattice needs at least one factor")
        if any(r <= 0 for r, _ in self.factors):
            raise ConfigError("lattice ratios must be positive")
        if any(p < 0 for _, p in self.factors):
            raise ConfigError("lattice probabilities must be non-negative")
        total = sum(p for _, p in self.factors)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"lattice probabilities must sum to 1, got {total}")

    @property
    def mean_factor(self) -> float:
        return sum(r * p for r, p in self.factors)

    @staticmethod
    def constant(p0: float) -> "LatticePriceProcess":
        return LatticePriceProcess(p0, ((1.0, 1.0),))

    @staticmethod
    def two_point(p0: float, u: float, p: float | None = None) -> "LatticePriceProcess":
        """Up factor ``u``, down factor ``1/u``; default ``p`` makes it a martingale."""
        if u <= 1:
            raise ConfigError(f"up factor must exceed 1, got {u}")
        d = 1.0 / u
        if p is None:
            p = (1.0 - d) / (u - d)  # mean factor exactly 1
        if not 0 <= p <= 1:
            raise ConfigError(f"up probability must be in [0, 1], got {p}")
        return LatticePriceProcess(p0, ((u, p), (d, 1.0 - p)))


@dataclass(frozen=True)
class _Levels:
    offsets: np.ndarray  # level t nodes are offsets[t]..offsets[t+1]-1
    prices: np.ndarray  # flat node prices, ascending within each level
    trans: np.ndarray  # (total_nodes, n_factors) successor node ids
    probs: np.ndarray

    def level_slice(self, t: int) -> slice:
        return slice(int(self.offsets[t]), int(self.offsets[t + 1]))

    def level_prices(self, t: int) -> np.ndarray:
        return self.prices[self.level_slice(t)]


def build_levels(lattice: LatticePriceProcess, horizon: int) -> _Levels:
    """Enumerate reachable nodes per step, keyed by factor counts."""
    n_f = len(lattice.factors)
    ratios = [r for r, _ in lattice.factors]

    def price_of(key) -> float:
        v = lattice.initial_price
        for f, c in enumerate(key):
            v *= ratios[f] ** c
        return v

    level_keys: list[list[tuple[int, ...]]] = [[(0,) * n_f]]
    for _ in range(horizon):
        nxt = set()
        for key in level_keys[-1]:
            for f in range(n_f):
                nk = list(key)
                nk[f] += 1
                nxt.add(tuple(nk))
        level_keys.append(sorted(nxt, key=lambda k: (price_of(k), k)))

    offsets = np.zeros(horizon + 2, dtype=np.int64)
    for t, keys in enumerate(level_keys):
        offsets[t + 1] = offsets[t] + len(keys)
    total = int(offsets[-1])
    prices = np.empty(total, dtype=np.float64)
    trans = np.zeros((total, n_f), dtype=np.int64)
    for t, keys in enumerate(level_keys):
        base = int(offsets[t])
        for i, key in enumerate(keys):
            prices[base + i] = price_of(key)
        if t < horizon:
            nxt_index = {k: j for j, k in enumerate(level_keys[t + 1])}
            nxt_base = int(offsets[t + 1])
            for i, key in enumerate(keys):
                for f in range(n_f):
                    nk = list(key)
                    nk[f] += 1
                    trans[base + i, f] = nxt_base + nxt_index[tuple(nk)]
    probs = np.array([p for _, p in lattice.factors], dtype=np.float64)
    return _Levels(offsets=offsets, prices=prices, trans=trans, probs=probs)


@dataclass(frozen=True)
class ModifiedMdpConfig:
    gamma: float
    horizon: int
    lattice: LatticePriceProcess
    publish: PublishingCostParams
    delay: DelaySpec
    q_max: int
    q0: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.q0 < 0:
            raise ConfigError(f"q0 must be >= 0, got {self.q0}")
        if self.q0 + self.horizon > self.q_max:
            raise StateSpaceError(
                f"queue count can reach q0 + horizon = {self.q0 + self.horizon}, "
                f"past the q_max = {self.q_max} cap; counts are never clipped"
            )


@dataclass
class ModifiedMdpSolution:
    config: ModifiedMdpConfig
    levels: _Levels
    value: np.ndarray  # (total_nodes, q_max + 1)
    action: np.ndarray

    def initial_value(self) -> float:
        return float(self.value[0, self.config.q0])

    def value_at(self, t: int, node: int, q: int) -> float:
        return float(self.value[int(self.levels.offsets[t]) + node, q])

    def action_at(self, t: int, node: int, q: int) -> int:
        return int(self.action[int(self.levels.offsets[t]) + node, q])

    def rows(self):
        """Yield ``(t, price, queue_count, action, value)`` for every state."""
        for t in range(self.config.horizon):
            sl = self.levels.level_slice(t)
            for node, price in enumerate(self.levels.prices[sl]):
                flat = sl.start + node
                for q in range(self.config.q_max + 1):
                    yield t, float(price), q, int(self.action[flat, q]), float(
                        self.value[flat, q]
                    )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,price,queue,action,value\n")
            for t, price, q, a, v in self.rows():
                fh.write(f"{t},{price!r},{q},{a},{v!r}\n")

    def publication_steps(self) -> list[int]:
        """Publication times when following the policy on a deterministic lattice."""
        if len(self.config.lattice.factors) != 1:
            raise ConfigError("publication schedule is defined for deterministic lattices only")
        steps = []
        q = self.config.q0
        for t in range(self.config.horizon):
            a = self.action_at(t, 0, q)
            if a > 0:
                steps.append(t)
            q = q - a + 1
        return steps


def _modified_tables(cfg: ModifiedMdpConfig):
    levels = build_levels(cfg.lattice, cfg.horizon)
    states = int(levels.offsets[-1]) * (cfg.q_max + 1)
    if states > MODIFIED_STATE_GUARD:
        raise StateSpaceError(
            f"instance has ~{states} states, over the {MODIFIED_STATE_GUARD} guard; "
            "shrink horizon, lattice branching, or q_max"
        )
    by_age = _delay_values(cfg.delay, cfg.q_max + 1)
    delay_cum = np.concatenate(([0.0], np.cumsum(by_age[1:])))
    return levels, delay_cum


def solve_modified_mdp(cfg: ModifiedMdpConfig) -> ModifiedMdpSolution:
    """Backward induction over (step, price node, queue count) states.

    Returns exact minimal expected discounted cost and the minimizing
    publish count per state, ties broken toward publishing more.
    """
    levels, delay_cum = _modified_tables(cfg)
    value, action = kernels.modified_mdp_kernel(
        levels.offsets,
        levels.prices,
        levels.trans,
        levels.probs,
        cfg.gamma,
        cfg.publish.alpha,
        cfg.publish.beta,
        delay_cum,
        cfg.q_max,
        cfg.horizon,
    )
    return ModifiedMdpSolution(config=cfg, levels=levels, value=value, action=action)


def evaluate_modified_policy(
    cfg: ModifiedMdpConfig, decide: Callable[[int, float, int], int]
) -> float:
    """Exact expected discounted cost of ``decide(t, price, queue_count)``."""
    levels, delay_cum = _modified_tables(cfg)
    total = int(levels.offsets[-1])
    action = np.zeros((total, cfg.q_max + 1), dtype=np.int64)
    for t in range(cfg.horizon):
        sl = levels.level_slice(t)
        for node in range(sl.start, sl.stop):
            price = float(levels.prices[node])
            for q in range(cfg.q_max + 1):
                a = int(decide(t, price, q))
                if not 0 <= a <= q:
                    raise ConfigError(
                        f"policy returned publish count {a} for queue {q} at step {t}"
                    )
                if q == cfg.q_max and a == 0:
                    a = 1  # unreachable under the cap guard; keep the table total
                action[node, q] = a
    value = kernels.eval_modified_policy_kernel(
        levels.offsets,
        levels.prices,
        levels.trans,
        levels.probs,
        cfg.gamma,
        cfg.publish.alpha,
        cfg.publish.beta,
        delay_cum,
        cfg.q_max,
        cfg.horizon,
        action,
    )
    return float(value[0, cfg.q0])


def interval_decider(n: int, phase: int = 0) -> Callable[[int, float, int], int]:
    def decide(t: int, price: float, q: int) -> int:
        return q if t % n == phase else 0

    return decide


def greedy_decider(cfg: ModifiedMdpConfig) -> Callable[[int, float, int], int]:
    from .costs import aggregated_delay_table

    table = aggregated_delay_table(cfg.delay, cfg.q_max + 2, cfg.gamma)
    beta = cfg.publish.beta
    gamma = cfg.gamma

    def decide(t: int, price: float, q: int) -> int:
        if q > 0 and gamma ** (q - 1) * beta * price <= table[q + 1]:
            return q
        return 0

    return decide


# --- subset-action formulation -------------------------------------------------


@dataclass(frozen=True)
class FullMdpConfig:
    """Tiny instance with per-item delay specs and subset actions.

    ``seed_specs`` are items already queued at t = 0 (created at step 0);
    ``arrival_specs[t]`` is the spec of the item created at step t.
    """

    gamma: float
    horizon: int
    lattice: LatticePriceProcess
    publish: PublishingCostParams
    seed_specs: tuple[DelaySpec, ...]
    arrival_specs: tuple[DelaySpec, ...]

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.horizon < 0:
            raise ConfigError(f"horizon must be >= 0, got {self.horizon}")
        if len(self.arrival_specs) < self.horizon:
            raise ConfigError(
                f"need {self.horizon} arrival specs, got {len(self.arrival_specs)}"
            )

    def estimated_ops(self) -> int:
        n_f = len(self.lattice.factors)
        ops = 0
        nodes = 1
        for t in range(self.horizon):
            ops += nodes * 4 ** (len(self.seed_specs) + t)
            nodes = min(nodes * n_f, nodes + n_f * (t + 1))  # loose recombining bound
        return ops


@dataclass
class FullMdpSolution:
    value: float
    policy: dict  # (t, node, queue) -> chosen frozenset of item ids
    states: int


def _subsets(ids: tuple[int, ...]):
    for r in range(len(ids) + 1):
        yield from itertools.combinations(ids, r)


def solve_full_mdp(cfg: FullMdpConfig, restrict: str | None = None) -> FullMdpSolution:
    """Exact optimum with subset actions; optionally restrict the action set.

    ``restrict`` is ``None`` (all subsets), ``"all_or_nothing"`` (empty or
    full queue) or ``"fifo_prefix"`` (oldest-first prefixes). Item ids are
    negative for seeds and the creation step for arrivals; ordering by
    ``(arrival step, id)`` defines prefix order. Ties between equal-cost
    subsets break toward more items, then toward older ones.
    """
    if restrict not in (None, "all_or_nothing", "fifo_prefix"):
        raise ConfigError(f"unknown restriction {restrict!r}")
    est = cfg.estimated_ops()
    if est > FULL_OPS_GUARD:
        raise StateSpaceError(
            f"subset-action instance needs ~{est} operations, over the "
            f"{FULL_OPS_GUARD} guard; shrink horizon or seeds"
        )
    if cfg.horizon == 0:
        return FullMdpSolution(value=0.0, policy={}, states=0)

    levels = build_levels(cfg.lattice, cfg.horizon)
    probs = levels.probs
    n_f = len(probs)
    alpha, beta = cfg.publish.alpha, cfg.publish.beta

    def arrival_of(item: int) -> int:
        return 0 if item < 0 else item

    def spec_of(item: int) -> DelaySpec:
        return cfg.seed_specs[-item - 1] if item < 0 else cfg.arrival_specs[item]

    def ordered(queue: frozenset) -> tuple[int, ...]:
        return tuple(sorted(queue, key=lambda i: (arrival_of(i), i)))

    def actions(queue: frozenset):
        ids = ordered(queue)
        if restrict == "all_or_nothing":
            yield ()
            if ids:
                yield ids
        elif restrict == "fifo_prefix":
            for r in range(len(ids) + 1):
                yield ids[:r]
        else:
            yield from _subsets(ids)

    memo: dict = {}
    policy: dict = {}

    def solve(t: int, node: int, queue: frozenset) -> float:
        if t == cfg.horizon:
            return 0.0
        key = (t, node, queue)
        hit = memo.get(key)
        if hit is not None:
            return hit
        price = float(levels.prices[node])
        best = math.inf
        best_key = None
        best_set = None
        for chosen in actions(queue):
            n_pub = len(chosen)
            gas = alpha * n_pub + (beta if n_pub else 0.0)
            cost = price * gas
            chosen_set = frozenset(chosen)
            for item in queue:
                if item not in chosen_set:
                    cost += delay_cost(spec_of(item), t - arrival_of(item))
            nxt_queue = frozenset((queue - chosen_set) | {t})
            fut = 0.0
            for f in range(n_f):
                fut += probs[f] * solve(t + 1, int(levels.trans[node, f]), nxt_queue)
            v = cost + cfg.gamma * fut
            # tie-break: publish more, then older items first
            tie = (-n_pub, tuple(sorted((arrival_of(i), i) for i in chosen)))
            if v < best or (v == best and tie < best_key):
                best = v
                best_key = tie
                best_set = chosen_set
        memo[key] = best
        policy[key] = best_set
        return best

    root_queue = frozenset(-(i + 1) for i in range(len(cfg.seed_specs)))
    value = solve(0, 0, root_queue)
    return FullMdpSolution(value=value, policy=policy, states=len(memo))


def _values_close(a: float, b: float) -> bool:
    return abs(a - b) <= VALUE_TOL * max(1.0, abs(a), abs(b))


def verify_all_or_nothing(cfg: FullMdpConfig) -> bool:
    """True when restricting actions to {empty, full queue} loses nothing.

    Only meaningful for flat publishing costs, so ``alpha`` must be zero.
    """
    if cfg.publish.alpha != 0:
        raise ConfigError(
            f"all-or-nothing check requires alpha = 0, got alpha={cfg.publish.alpha}"
        )
    full = solve_full_mdp(cfg).value
    restricted = solve_full_mdp(cfg, "all_or_nothing").value
    return _values_close(full, restricted)


def _global_monotone_spec(cfg: FullMdpConfig) -> DelaySpec:
    specs = set(cfg.seed_specs) | set(cfg.arrival_specs[: cfg.horizon])
    if len(specs) != 1:
        raise ConfigError("oldest-first check requires one global delay spec")
    (spec,) = specs
    values = [delay_cost(spec, a) for a in range(cfg.horizon + 1)]
    if any(b < a for a, b in zip(values, values[1:])):
        raise ConfigError("oldest-first check requires a monotone delay cost")
    return spec


def verify_fifo(cfg: FullMdpConfig) -> bool:
    """True when oldest-first prefixes attain the unrestricted optimum.

    Requires a global, monotonically non-decreasing delay cost.
    """
    _global_monotone_spec(cfg)
    full = solve_full_mdp(cfg).value
    restricted = solve_full_mdp(cfg, "fifo_prefix").value
    return _values_close(full, restricted)


def modified_matches_full(cfg: FullMdpConfig, q_max: int | None = None) -> bool:
    """Count formulation equals subset formulation under a global monotone spec."""
    spec = _global_monotone_spec(cfg)
    if cfg.seed_specs:
        raise ConfigError("count-state comparison requires an initially empty queue")
    mcfg = ModifiedMdpConfig(
        gamma=cfg.gamma,
        horizon=cfg.horizon,
        lattice=cfg.lattice,
        publish=cfg.publish,
        delay=spec,
        q_max=cfg.horizon if q_max is None else q_max,
        q0=0,
    )
    return _values_close(solve_modified_mdp(mcfg).initial_value(), solve_full_mdp(cfg).value)


# --- threshold structure -------------------------------------------------------


@dataclass(frozen=True)
class ThresholdStructureConfig:
    """Per-item publish/wait cut extraction on a lattice.

    Homogeneous publishing cost (``alpha`` per item, no flat part), one
    global delay spec; decisions for an item of age ``x`` at step ``t`` come
    from the item-level publish-or-wait recursion for the arrival ``t - x``.
    """

    lattice: LatticePriceProcess
    gamma: float
    alpha: float
    delay: DelaySpec
    horizon: int
    eval_steps: tuple[int, ...]
    ages: tuple[int, ...]

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        for t in self.eval_steps:
            if not 0 <= t < self.horizon:
                raise ConfigError(f"eval step {t} outside 0..{self.horizon - 1}")
        for x in self.ages:
            if x < 0:
                raise ConfigError(f"age must be >= 0, got {x}")


@dataclass
class ThresholdStructureReport:
    is_threshold: bool  # single publish-below/wait-above cut at every (t, age)
    monotone_in_age: bool
    cuts: dict  # (t, age) -> (highest publish price or 0.0, lowest wait price or inf)

    @property
    def passed(self) -> bool:
        return self.is_threshold and self.monotone_in_age


def verify_threshold_structure(cfg: ThresholdStructureConfig) -> ThresholdStructureReport:
    """Check the optimal per-item rule is a price cut, monotone in age."""
    levels = build_levels(cfg.lattice, cfg.horizon)
    taus = sorted(
        {t - x for t in cfg.eval_steps for x in cfg.ages if t - x >= 0}
    )
    flags_by_tau = {}
    for tau in taus:
        wait_cost = np.zeros(cfg.horizon, dtype=np.float64)
        for t in range(tau, cfg.horizon):
            wait_cost[t] = delay_cost(cfg.delay, t - tau)
        _, publish = kernels.single_tx_mdp_kernel(
            levels.offsets,
            levels.prices,
            levels.trans,
            levels.probs,
            cfg.gamma,
            cfg.alpha,
            wait_cost,
            cfg.horizon,
            tau,
        )
        flags_by_tau[tau] = publish

    is_threshold = True
    cuts = {}
    for t in cfg.eval_steps:
        for x in cfg.ages:
            tau = t - x
            if tau < 0:
                continue
            sl = levels.level_slice(t)
            prices = levels.prices[sl]
            flags = flags_by_tau[tau][sl]
            n_pub = int(flags.sum())
            if not (flags[:n_pub].all() and not flags[n_pub:].any()):
                is_threshold = False
            cut = float(prices[n_pub - 1]) if n_pub > 0 else 0.0
            above = float(prices[n_pub]) if n_pub < len(prices) else math.inf
            cuts[(t, x)] = (cut, above)

    monotone = True
    for t in cfg.eval_steps:
        prev = None
        for x in sorted(cfg.ages):
            if (t, x) not in cuts:
                continue
            cut = cuts[(t, x)][0]
            if prev is not None and cut < prev:
                monotone = False
            prev = cut
    return ThresholdStructureReport(
        is_threshold=is_threshold, monotone_in_age=monotone, cuts=cuts
    )
