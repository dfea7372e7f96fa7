"""Hot numeric loops, JIT-compiled with numba when available.

Set ``L2PUB_NUMBA=0`` (or ``false``/``no``/``off``) to force the pure
Python/NumPy fallback. The fallback runs the very same functions
uncompiled, so both paths execute identical floating-point operations in
identical order and produce identical results. ``benchmarks/bench_kernels.py``
times one path against the other.

Kernels are written scalar-loop style on flat arrays; all shaping,
validation and table construction happens in the calling modules.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "py_func",
    "agg_delay_table",
    "episode_kernel",
    "modified_mdp_kernel",
    "eval_modified_policy_kernel",
    "single_tx_mdp_kernel",
    "POLICY_TRIVIAL",
    "POLICY_INTERVAL",
    "POLICY_GREEDY",
    "POLICY_THRESHOLD",
]


def _numba_requested() -> bool:
    flag = os.environ.get("L2PUB_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def _jit(fn):
    if NUMBA_ENABLED:
        return _njit(cache=True)(fn)
    return fn


def py_func(kernel):
    """Uncompiled form of a kernel (the kernel itself when numba is off)."""
    return getattr(kernel, "py_func", kernel)


# Policy codes understood by episode_kernel.
POLICY_TRIVIAL = 0
POLICY_INTERVAL = 1
POLICY_GREEDY = 2
POLICY_THRESHOLD = 3


@_jit
def agg_delay_table(delay_by_age, gamma, n_max):
    """Cumulative discounted delay cost of an n-step publication gap.

    Returns ``F`` of length ``n_max + 1`` where
    ``F[n] = sum_{t=1..n-1} gamma^(t-1) * sum_{i=1..t} delay_by_age[i]``,
    so ``F[0] = F[1] = 0``. ``delay_by_age`` must have length >= n_max.
    The outer sum is Kahan-compensated: for gamma close to 1 the terms are
    near-equal and naive accumulation loses digits.
    """
    out = np.zeros(n_max + 1)
    inner = 0.0  # sum_{i=1..t} C(i)
    total = 0.0
    comp = 0.0
    w = 1.0  # gamma^(t-1)
    for t in range(1, n_max):
        inner += delay_by_age[t]
        term = w * inner
        y = term - comp
        s = total + y
        comp = (s - total) - y
        total = s
        out[t + 1] = total
        w *= gamma
    return out


@_jit
def episode_kernel(
    prices,
    gamma,
    alpha,
    beta,
    delay_by_age,
    delay_prefix,
    q0,
    policy_code,
    interval_n,
    interval_phase,
    f_table,
    lam_table,
    queue_before,
    published,
    pub_costs,
    delay_costs,
    disc_costs,
    wait_hist,
    pending_hist,
):
    """Run one episode under a stationary all-or-suffix policy.

    Queue state is exploited: under trivial/interval/greedy (all-or-nothing)
    and monotone-threshold (oldest-suffix) decisions, the dynamic part of the
    queue always holds ages ``1..k`` exactly, plus ``seeds`` initial items of
    age ``t``. Per-step delay is then two table lookups.

    ``delay_by_age[a]`` is the delay cost at age ``a`` and ``delay_prefix[k]``
    is its prefix sum over ages ``1..k``; NaN entries mark ages past the end
    of a tabulated delay spec and abort the episode if ever charged.
    ``lam_table`` must be non-decreasing (threshold at age ``a``); publishing
    happens at prices less than or equal to the threshold. Waits count the
    decision steps an item stayed in the queue after it first became
    publishable. Returns ``(max_wait, pending_dynamic, pending_seeds)`` with
    ``max_wait = -1`` when nothing was published.
    """
    T = prices.shape[0]
    seeds = q0
    k = 0
    disc = 1.0
    max_wait = -1
    for t in range(T):
        P = prices[t]
        qsize = seeds + k
        queue_before[t] = qsize

        # pub_from: publish dynamic ages >= pub_from (k+1 means none)
        publish_seeds = False
        pub_from = k + 1
        if policy_code == POLICY_TRIVIAL:
            publish_seeds = seeds > 0
            pub_from = 1
        elif policy_code == POLICY_INTERVAL:
            if t % interval_n == interval_phase:
                publish_seeds = seeds > 0
                pub_from = 1
        elif policy_code == POLICY_GREEDY:
            if qsize > 0 and gamma ** (qsize - 1) * beta * P <= f_table[qsize + 1]:
                publish_seeds = seeds > 0
                pub_from = 1
        else:  # POLICY_THRESHOLD
            a_star = np.searchsorted(lam_table, P)  # min age with lam >= P
            if seeds > 0 and t >= a_star:
                publish_seeds = True
            lo = a_star
            if lo < 1:
                lo = 1
            if lo <= k:
                pub_from = lo

        m = 0
        if pub_from <= k:
            for age in range(pub_from, k + 1):
                w = age - 1
                wait_hist[w] += 1
                if w > max_wait:
                    max_wait = w
            m += k - pub_from + 1
            k_next = pub_from - 1
        else:
            k_next = k
        if publish_seeds:
            wait_hist[t] += seeds
            if seeds > 0 and t > max_wait:
                max_wait = t
            m += seeds
            seeds_next = 0
        else:
            seeds_next = seeds

        delay = delay_prefix[k_next]
        if seeds_next > 0:
            delay += seeds_next * delay_by_age[t]
        if math.isnan(delay):
            raise ValueError("tabulated delay cost exhausted: age past last entry")

        gas = 0.0
        if m > 0:
            gas = alpha * m + beta
        pub_cost = P * gas

        published[t] = m
        pub_costs[t] = pub_cost
        delay_costs[t] = delay
        disc_costs[t] = disc * (pub_cost + delay)

        # transition: one new item arrives after the action
        k = k_next + 1
        seeds = seeds_next
        disc *= gamma

    # pending items observed at the horizon (one step past the last decision)
    for age in range(1, k + 1):
        pending_hist[age] += 1
    if seeds > 0:
        pending_hist[T] += seeds
    return max_wait, k, seeds


@_jit
def modified_mdp_kernel(
    offsets,
    prices,
    trans,
    probs,
    gamma,
    alpha,
    beta,
    delay_cum,
    q_max,
    horizon,
):
    """Backward induction over (step, price node, queue count) states.

    Levels ``t = 0..horizon`` hold nodes ``offsets[t]..offsets[t+1]-1``;
    ``trans[node, f]`` is the successor node index under factor ``f``.
    Terminal values at ``t = horizon`` are zero (no penalty for items left
    in the queue). ``delay_cum[j]`` is the delay charged when ``j`` items
    stay behind. Ties between publish counts break toward publishing more.
    Returns ``(value, action)`` arrays of shape ``(total_nodes, q_max+1)``.
    """
    n_total = offsets[horizon + 1]
    n_factors = probs.shape[0]
    value = np.zeros((n_total, q_max + 1))
    action = np.zeros((n_total, q_max + 1), np.int64)
    for t in range(horizon - 1, -1, -1):
        for node in range(offsets[t], offsets[t + 1]):
            P = prices[node]
            for q in range(q_max + 1):
                best = np.inf
                best_a = -1
                a_lo = 0
                if q == q_max:  # waiting would push the count past the cap
                    a_lo = 1
                for a in range(q, a_lo - 1, -1):
                    gas = 0.0
                    if a > 0:
                        gas = alpha * a + beta
                    qn = q - a + 1
                    fut = 0.0
                    for f in range(n_factors):
                        fut += probs[f] * value[trans[node, f], qn]
                    v = P * gas + delay_cum[q - a] + gamma * fut
                    if v < best:
                        best = v
                        best_a = a
                value[node, q] = best
                action[node, q] = best_a
    return value, action


@_jit
def eval_modified_policy_kernel(
    offsets,
    prices,
    trans,
    probs,
    gamma,
    alpha,
    beta,
    delay_cum,
    q_max,
    horizon,
    action,
):
    """Exact expected cost of a fixed action table on the lattice.

    Same state layout as :func:`modified_mdp_kernel`, but the publish count
    at every state comes from ``action`` instead of a minimization.
    """
    n_total = offsets[horizon + 1]
    n_factors = probs.shape[0]
    value = np.zeros((n_total, q_max + 1))
    for t in range(horizon - 1, -1, -1):
        for node in range(offsets[t], offsets[t + 1]):
            P = prices[node]
            for q in range(q_max + 1):
                a = action[node, q]
                if a < 0 or a > q:
                    raise ValueError("policy action outside 0..queue_count")
                gas = 0.0
                if a > 0:
                    gas = alpha * a + beta
                qn = q - a + 1
                if qn > q_max:
                    raise ValueError("policy action drives queue count past cap")
                fut = 0.0
                for f in range(n_factors):
                    fut += probs[f] * value[trans[node, f], qn]
                value[node, q] = P * gas + delay_cum[q - a] + gamma * fut
    return value


@_jit
def single_tx_mdp_kernel(
    offsets,
    prices,
    trans,
    probs,
    gamma,
    alpha,
    wait_cost_at_t,
    horizon,
    tau,
):
    """Publish-or-wait value iteration for one item arriving at step ``tau``.

    At step ``t`` the item can be published for ``alpha * price`` or held for
    ``wait_cost_at_t[t]`` plus the discounted continuation. Equality publishes.
    Returns ``(value, publish_flag)`` indexed by flat node id.
    """
    n_total = offsets[horizon + 1]
    n_factors = probs.shape[0]
    value = np.zeros(n_total)
    publish = np.zeros(n_total, np.uint8)
    for t in range(horizon - 1, tau - 1, -1):
        for node in range(offsets[t], offsets[t + 1]):
            P = prices[node]
            pub = alpha * P
            fut = 0.0
            for f in range(n_factors):
                fut += probs[f] * value[trans[node, f]]
            wait = wait_cost_at_t[t] + gamma * fut
            if pub <= wait:
                value[node] = pub
                publish[node] = 1
            else:
                value[node] = wait
    return value, publish
