import warnings

import numpy as np
import pytest

from l2pub.costs import (
    ExponentialDelay,
    InvalidActionError,
    LinearDelay,
    PublishingCostParams,
    TableDelay,
)
from l2pub.errors import ConfigError
from l2pub.policies import (
    FixedIntervalPolicy,
    GreedyBalancePolicy,
    MartingaleThreshold,
    PolicyAction,
    TableThreshold,
    ThresholdPolicy,
    TrivialPolicy,
    trivial_policy,
)
from l2pub.prices import ConstantPrice, HistoricalTrace, LogNormalWalk
from l2pub.simulate import (
    SimConfig,
    _episode_prices,
    _kernel_plan,
    _run_generic,
    _run_kernel,
    compare,
    monte_carlo,
    run_episode,
)

LIN6 = LinearDelay(6.0)
PUB_A1 = PublishingCostParams(1.0, 0.0)


def cfg(**kw):
    base = dict(
        gamma=0.9,
        horizon=3,
        seed=1,
        price=ConstantPrice(10.0),
        publish=PUB_A1,
        delay=LIN6,
        initial_queue=1,
    )
    base.update(kw)
    return SimConfig(**base)


class ForceGeneric:
    """Wrapper hiding the policy's type so the kernel fast path is skipped."""

    def __init__(self, inner):
        self.inner = inner

    def __call__(self, inp):
        return self.inner(inp)


class TestRunEpisode:
    def test_trivial_constant_price_hand_trace(self):
        res = run_episode(trivial_policy, cfg())
        # one item published at every step: 10*(1 + g + g^2)
        assert res.total_discounted_cost == pytest.approx(10 * (1 + 0.9 + 0.81), rel=1e-14)
        assert [r.queue_size_before for r in res.records] == [1, 1, 1]
        assert [r.published_count for r in res.records] == [1, 1, 1]

    def test_single_step_empty_queue_costs_nothing(self):
        res = run_episode(trivial_policy, cfg(horizon=1, initial_queue=0))
        assert res.total_discounted_cost == 0.0
        assert res.records[0].published_count == 0

    def test_greedy_with_free_publication_matches_trivial_exactly(self):
        c = cfg(horizon=60, price=LogNormalWalk(5.0, -0.005, 0.1), gamma=0.98)
        greedy = run_episode(GreedyBalancePolicy(LIN6, 0.98, 0.0), c)
        triv = run_episode(trivial_policy, c)
        assert greedy.records == triv.records
        assert greedy.total_discounted_cost == triv.total_discounted_cost

    def test_trivial_waits_are_zero(self):
        res = run_episode(trivial_policy, cfg(horizon=20))
        assert res.max_wait == 0
        assert set(res.wait_histogram) == {0}

    def test_step_record_consistency(self):
        c = cfg(horizon=40, price=LogNormalWalk(2.0, -0.005, 0.1), gamma=0.95)
        res = run_episode(ThresholdPolicy(MartingaleThreshold(0.05, 0.95)), c)
        for r in res.records:
            assert r.publish_cost >= 0 and r.delay_cost >= 0
            want = 0.95**r.t * (r.publish_cost + r.delay_cost)
            assert r.discounted_step_cost == pytest.approx(want, rel=1e-12, abs=1e-300)
        assert res.total_discounted_cost == pytest.approx(
            sum(r.discounted_step_cost for r in res.records), rel=1e-12
        )

    def test_invalid_action_aborts(self):
        class Rogue:
            def __call__(self, inp):
                return PolicyAction(frozenset({"not-there"}))

        with pytest.raises(InvalidActionError):
            run_episode(Rogue(), cfg())

    def test_determinism_bit_identical(self):
        c = cfg(horizon=200, price=LogNormalWalk(3.0, -0.005, 0.1), gamma=0.99)
        pol = ThresholdPolicy(MartingaleThreshold(0.1, 0.99))
        a = run_episode(pol, c)
        b = run_episode(pol, c)
        assert a.records == b.records
        assert a.total_discounted_cost == b.total_discounted_cost
        assert a.wait_histogram == b.wait_histogram

    def test_zero_costs_zero_total(self):
        c = cfg(
            horizon=30,
            publish=PublishingCostParams(0.0, 0.0),
            delay=LinearDelay(0.0),
            price=LogNormalWalk(1.0, -0.005, 0.1),
        )
        res = run_episode(trivial_policy, c)
        assert res.total_discounted_cost == 0.0

    def test_trace_truncates_with_warning(self):
        c = cfg(horizon=10, price=HistoricalTrace((1.0, 2.0, 3.0)))
        with pytest.warns(UserWarning, match="truncated"):
            res = run_episode(trivial_policy, c)
        assert len(res.records) == 3

    def test_table_delay_exhaustion_raises(self):
        # never publishes, so the age outgrows the 3-entry table
        class Never:
            def __call__(self, inp):
                return PolicyAction(frozenset())

        c = cfg(horizon=10, delay=TableDelay((0.0, 1.0, 2.0)))
        with pytest.raises(ValueError):
            run_episode(Never(), c)
        with pytest.raises(ValueError):
            run_episode(FixedIntervalPolicy(8), c)


class TestConservation:
    @pytest.mark.parametrize("q0", [0, 1, 3])
    @pytest.mark.parametrize(
        "make",
        [
            lambda: TrivialPolicy(),
            lambda: FixedIntervalPolicy(5),
            lambda: GreedyBalancePolicy(LIN6, 0.97, 2.0),
            lambda: ThresholdPolicy(MartingaleThreshold(0.02, 0.97)),
        ],
    )
    def test_every_arrival_published_or_pending(self, q0, make):
        c = cfg(
            gamma=0.97,
            horizon=100,
            price=LogNormalWalk(2.0, -0.005, 0.1),
            initial_queue=q0,
        )
        res = run_episode(make(), c)
        published = sum(r.published_count for r in res.records)
        assert published + res.pending_count == q0 + c.horizon
        assert res.max_wait <= c.horizon
        assert sum(res.wait_histogram.values()) == published
        assert sum(res.pending_age_histogram.values()) == res.pending_count


class TestKernelGenericParity:
    @pytest.mark.parametrize("q0", [0, 1, 3])
    @pytest.mark.parametrize(
        "make",
        [
            lambda: TrivialPolicy(),
            lambda: FixedIntervalPolicy(4, phase=1),
            lambda: GreedyBalancePolicy(LIN6, 0.98, 2.0),
            lambda: ThresholdPolicy(MartingaleThreshold(0.05, 0.98)),
        ],
    )
    def test_same_results_both_paths(self, q0, make):
        pol = make()
        c = cfg(
            gamma=0.98,
            horizon=150,
            price=LogNormalWalk(3.0, -0.005, 0.1),
            publish=PublishingCostParams(1.0, 2.0),
            initial_queue=q0,
            seed=11,
        )
        prices = _episode_prices(c, 0)
        plan = _kernel_plan(pol, c, len(prices))
        assert plan is not None
        k = _run_kernel(pol, c, prices, plan)
        g = _run_generic(ForceGeneric(pol), c, prices)
        assert np.allclose(k.disc_costs, g.disc_costs, rtol=1e-12, atol=1e-300)
        assert np.array_equal(k.published, g.published)
        assert np.array_equal(k.queue_before, g.queue_before)
        assert np.array_equal(k.wait_hist, g.wait_hist)
        assert np.array_equal(k.pending_hist, g.pending_hist)
        assert k.max_wait == g.max_wait
        assert k.pending_count == g.pending_count

    def test_exponential_and_table_delay_specs(self):
        for spec in (ExponentialDelay(0.05), TableDelay(tuple(float(i) for i in range(200)))):
            pol = GreedyBalancePolicy(spec, 0.98, 1.0)
            c = cfg(
                gamma=0.98,
                horizon=120,
                delay=spec,
                price=LogNormalWalk(2.0, -0.02, 0.2),
                publish=PublishingCostParams(1.0, 1.0),
                seed=3,
            )
            prices = _episode_prices(c, 0)
            k = _run_kernel(pol, c, prices, _kernel_plan(pol, c, len(prices)))
            g = _run_generic(ForceGeneric(pol), c, prices)
            assert np.allclose(k.disc_costs, g.disc_costs, rtol=1e-12, atol=1e-300)
            assert np.array_equal(k.published, g.published)

    def test_custom_policy_takes_generic_path(self):
        c = cfg()
        assert _kernel_plan(ForceGeneric(trivial_policy), c, 3) is None

    def test_per_arrival_delay_rule_takes_generic_path(self):
        c = cfg(delay=lambda t: LIN6)
        assert _kernel_plan(TrivialPolicy(), c, 3) is None
        res = run_episode(trivial_policy, c)
        assert res.total_discounted_cost == pytest.approx(10 * (1 + 0.9 + 0.81), rel=1e-14)

    def test_non_monotone_custom_threshold_takes_generic_path(self):
        # the kernel bisects the threshold table, which needs monotonicity
        pol = ThresholdPolicy(lambda age: 5.0 if age % 2 else 1.0)
        c = cfg(horizon=12, price=ConstantPrice(3.0))
        assert _kernel_plan(pol, c, c.horizon) is None
        res = run_episode(pol, c)
        published = sum(r.published_count for r in res.records)
        assert published + res.pending_count == 1 + c.horizon


class TestCompare:
    def test_identical_policies_zero_series(self):
        c = cfg(horizon=50, price=LogNormalWalk(2.0, -0.005, 0.1), gamma=0.99)
        series = compare(trivial_policy, TrivialPolicy(), c, episodes=5)
        assert np.all(series == 0.0)

    def test_threshold_vs_trivial_constant_price_deterministic(self):
        # threshold(age) = age at price 1: the first item waits one step,
        # afterwards every step publishes; the gap stays at 1 - gamma
        gamma = 0.9
        c = cfg(gamma=gamma, horizon=6, price=ConstantPrice(1.0))
        thr = ThresholdPolicy(TableThreshold(tuple(float(x) for x in range(10))))
        series = compare(thr, trivial_policy, c, episodes=1)
        want = np.cumsum([1.0, gamma - 2 * gamma, 0, 0, 0, 0]) + 0.0
        assert series == pytest.approx(want, rel=1e-12)
        assert series[-1] == pytest.approx(1 - gamma, rel=1e-12)

    def test_shared_price_paths(self):
        # difference of a policy with itself through different instances is 0
        c = cfg(horizon=80, price=LogNormalWalk(2.0, -0.005, 0.1), gamma=0.99, seed=5)
        a = GreedyBalancePolicy(LIN6, 0.99, 0.0)
        series = compare(a, trivial_policy, c, episodes=7)
        assert np.allclose(series, 0.0, atol=1e-300)

    def test_episode_validation(self):
        with pytest.raises(ConfigError):
            compare(trivial_policy, trivial_policy, cfg(), episodes=0)


class TestMonteCarlo:
    def test_deterministic_config_zero_stderr(self):
        c = cfg(horizon=20)
        s = monte_carlo(trivial_policy, c, episodes=5)
        assert s.std_err == 0.0
        assert s.mean_cost == pytest.approx(
            run_episode(trivial_policy, c).total_discounted_cost, rel=1e-14
        )

    def test_trivial_mean_max_wait_zero(self):
        c = cfg(horizon=50, price=LogNormalWalk(2.0, -0.005, 0.1), gamma=0.99)
        s = monte_carlo(trivial_policy, c, episodes=4)
        assert s.mean_max_wait == 0.0

    def test_needs_two_episodes(self):
        with pytest.raises(ConfigError):
            monte_carlo(trivial_policy, cfg(), episodes=1)

    def test_pooled_histogram_counts_everything(self):
        c = cfg(horizon=60, price=LogNormalWalk(1.0, -0.005, 0.1), gamma=0.99)
        pol = ThresholdPolicy(MartingaleThreshold(0.005, 0.99))
        s = monte_carlo(pol, c, episodes=6)
        published = sum(s.wait_histogram.values())
        assert published + s.pending_total == 6 * (c.horizon + 1)


class TestValidation:
    def test_gamma_range(self):
        with pytest.raises(ConfigError, match="gamma"):
            cfg(gamma=1.0)

    def test_horizon_positive(self):
        with pytest.raises(ConfigError, match="horizon"):
            cfg(horizon=0)

    def test_initial_queue_non_negative(self):
        with pytest.raises(ConfigError, match="initial_queue"):
            cfg(initial_queue=-1)
