import math
import warnings

import numpy as np
import pytest

from l2pub.costs import (
    ExponentialDelay,
    LinearDelay,
    TableDelay,
    Transaction,
    TxQueue,
    aggregated_delay_cost,
)
from l2pub.errors import ConfigError
from l2pub.policies import (
    FixedIntervalPolicy,
    GreedyBalancePolicy,
    MartingaleThreshold,
    OneStepThreshold,
    PolicyAction,
    PolicyInput,
    RollupNumericThreshold,
    RollupParams,
    TableThreshold,
    ThresholdPolicy,
    TrivialPolicy,
    interval_objective,
    martingale_threshold,
    one_minus_pow,
    one_step_threshold,
    optimal_interval,
    publish_criterion,
    rollup_threshold,
    rollup_threshold_detail,
    trivial_policy,
)

LIN6 = LinearDelay(6.0)


def queue_of_ages(t, ages, spec=LIN6):
    return TxQueue(
        Transaction(f"t{i}", t - age, spec) for i, age in enumerate(ages)
    )


def interval_objective_brute(spec, gamma, beta, price, n):
    """Direct evaluation of the average-cost-per-cycle objective."""
    f = aggregated_delay_cost(spec, n, gamma)
    return (f + gamma ** (n - 1) * beta * price) / -math.expm1(n * math.log(gamma))


def rollup_inf_brute(c, gamma, mu, sigma, alpha, age, n_max=300_000):
    """Dense scan of the wait-n cost ratio, no early exit."""
    drift = mu + sigma * sigma / 2.0
    lg = math.log(gamma)
    a = age + gamma / (1.0 - gamma)
    best, best_n = math.inf, 0
    for n in range(1, n_max + 1):
        gn = math.exp(n * lg)
        num = -math.expm1(n * lg) * a - n * gn
        den = -math.expm1(n * (lg + drift))
        ratio = num / den
        if ratio < best:
            best, best_n = ratio, n
        if num >= best:  # numerator increasing; nothing later can win
            break
    return 2.0 * c / (alpha * (1.0 - gamma)) * best, best_n


class TestTrivialPolicy:
    def test_publishes_everything(self):
        q = queue_of_ages(5, [1, 2, 3])
        act = trivial_policy(PolicyInput(5, 3.0, q))
        assert act.publish_ids == q.ids()

    def test_empty_queue(self):
        assert trivial_policy(PolicyInput(0, 1.0, TxQueue())).publish_ids == frozenset()

    def test_single(self):
        q = queue_of_ages(2, [1])
        assert trivial_policy(PolicyInput(2, 999.0, q)).publish_ids == q.ids()


class TestFixedIntervalPolicy:
    def test_n1_equals_trivial(self):
        pol = FixedIntervalPolicy(1)
        for t in range(5):
            q = queue_of_ages(t + 3, [1, 2])
            assert pol(PolicyInput(t, 2.0, q)).publish_ids == q.ids()

    def test_waits_off_phase(self):
        pol = FixedIntervalPolicy(3)
        q = queue_of_ages(2, [1, 2])
        assert pol(PolicyInput(2, 2.0, q)).publish_ids == frozenset()

    def test_publishes_on_phase(self):
        pol = FixedIntervalPolicy(3)
        q = queue_of_ages(3, [1, 2, 3])
        assert pol(PolicyInput(3, 2.0, q)).publish_ids == q.ids()

    def test_validation(self):
        with pytest.raises(ConfigError):
            FixedIntervalPolicy(0)
        with pytest.raises(ConfigError):
            FixedIntervalPolicy(3, phase=3)


class TestOptimalInterval:
    def test_free_publishing_publishes_every_step(self):
        assert optimal_interval(LIN6, 0.9, 0.0, 5.0, 50) == 1

    def test_beta_price_2000(self):
        assert optimal_interval(LIN6, 1 - 1e-6, 1.0, 2000.0, 200) == 10

    def test_beta_price_16(self):
        assert optimal_interval(LIN6, 1 - 1e-6, 1.0, 16.0, 200) == 2

    def test_matches_brute_force_argmin(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            gamma = float(rng.uniform(0.9, 0.9999))
            beta_price = float(rng.uniform(1, 5000))
            spec = LinearDelay(float(rng.uniform(0.5, 8)))
            n_max = 80
            got = optimal_interval(spec, gamma, 1.0, beta_price, n_max)
            objs = [interval_objective_brute(spec, gamma, 1.0, beta_price, n) for n in range(1, n_max + 1)]
            assert got == int(np.argmin(objs)) + 1
            assert interval_objective(spec, gamma, 1.0, beta_price, got) == pytest.approx(
                min(objs), rel=1e-12
            )

    def test_cube_root_law(self):
        for bp in (16, 250, 2000, 16000, 128000):
            n_star = optimal_interval(LIN6, 1 - 1e-6, 1.0, bp, 500)
            assert abs(n_star - round((bp / 2) ** (1 / 3))) <= 1

    def test_boundary_warning(self):
        with pytest.warns(UserWarning, match="boundary"):
            assert optimal_interval(LIN6, 0.9, 1.0, 2000.0, 1) == 1

    def test_no_warning_in_interior(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            optimal_interval(LIN6, 0.99, 1.0, 16.0, 100)


class TestGreedyBalancePolicy:
    def test_free_publication_always_publishes(self):
        pol = GreedyBalancePolicy(LIN6, 1 - 1e-9, 0.0)
        q = queue_of_ages(4, [1, 2])
        assert pol(PolicyInput(4, 1e9, q)).publish_ids == q.ids()

    def test_publishes_when_cheap(self):
        # F(2) = 6 >= beta*price = 5
        pol = GreedyBalancePolicy(LIN6, 1 - 1e-12, 1.0)
        q = queue_of_ages(3, [1])
        assert pol(PolicyInput(3, 5.0, q)).publish_ids == q.ids()

    def test_waits_when_expensive(self):
        pol = GreedyBalancePolicy(LIN6, 1 - 1e-12, 1.0)
        q = queue_of_ages(3, [1])
        assert pol(PolicyInput(3, 7.0, q)).publish_ids == frozenset()

    def test_equality_publishes(self):
        pol = GreedyBalancePolicy(LIN6, 1.0, 1.0)
        q = queue_of_ages(3, [1])
        assert pol(PolicyInput(3, 6.0, q)).publish_ids == q.ids()

    def test_heterogeneous_queue_rejected(self):
        pol = GreedyBalancePolicy(LIN6, 0.99, 1.0)
        q = TxQueue(
            [
                Transaction("a", 0, LIN6),
                Transaction("b", 1, ExponentialDelay(0.1)),
            ]
        )
        with pytest.raises(ConfigError):
            pol(PolicyInput(2, 1.0, q))


class TestPublishCriterion:
    def test_zero_price_always_true(self):
        assert publish_criterion(3, 0.0, 0, 1.0, LIN6, 0.9, lambda n: 1.0)

    def test_young_item_waits(self):
        # 5 <= 0.9*5 + 0 is false
        assert not publish_criterion(1, 5.0, 0, 1.0, LinearDelay(1.0), 0.9, lambda n: 1.0)

    def test_old_item_publishes(self):
        # 5 <= 4.5 + 10 is true
        assert publish_criterion(1, 5.0, 10, 1.0, LinearDelay(1.0), 0.9, lambda n: 1.0)


class TestMartingaleThreshold:
    def test_identity_calibration(self):
        # c = (1-gamma)/2 makes the threshold equal the age
        gamma = 0.5
        assert martingale_threshold((1 - gamma) / 2, gamma, 10) == 10.0

    def test_age_zero(self):
        assert martingale_threshold(3.0, 0.9, 0) == 0.0

    def test_by_hand(self):
        assert martingale_threshold(1.0, 0.99, 5) == pytest.approx(1000.0, rel=1e-12)


class TestOneStepThreshold:
    def test_reduces_to_martingale(self):
        sigma = 0.1
        got = one_step_threshold(1.0, 0.99, -sigma * sigma / 2, sigma, 5)
        assert got == pytest.approx(martingale_threshold(1.0, 0.99, 5), rel=1e-12)

    def test_age_zero(self):
        assert one_step_threshold(1.0, 0.99, -0.02, 0.1, 0) == 0.0

    def test_negative_drift_by_hand(self):
        got = one_step_threshold(1.0, 0.99, -0.02, 0.1, 5)
        want = 10.0 / (1.0 - 0.99 * math.exp(-0.015))
        assert got == pytest.approx(want, rel=1e-14)
        assert got == pytest.approx(404.21711971398685, rel=1e-12)

    def test_explosive_denominator_rejected(self):
        with pytest.raises(ConfigError):
            one_step_threshold(1.0, 0.999, 0.5, 0.1, 3)


class TestRollupThreshold:
    def test_martingale_matches_closed_form(self):
        params = RollupParams(c=1.0, gamma=0.99, mu=-0.005, sigma=0.1)
        value, n = rollup_threshold_detail(params, 5)
        assert n == 1
        assert value == pytest.approx(1000.0, rel=1e-9)

    def test_age_zero_is_zero(self):
        params = RollupParams(c=1.0, gamma=0.99, mu=-0.005, sigma=0.1)
        assert rollup_threshold(params, 0) == pytest.approx(0.0, abs=1e-9)

    def test_negative_drift_below_martingale(self):
        params = RollupParams(c=1.0, gamma=0.999, mu=-0.02, sigma=0.1)
        got = rollup_threshold(params, 10)
        assert got < martingale_threshold(1.0, 0.999, 10)
        want, _ = rollup_inf_brute(1.0, 0.999, -0.02, 0.1, 1.0, 10)
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(1259.987580047835, rel=1e-12)

    def test_alpha_scales_inversely(self):
        base = RollupParams(c=1.0, gamma=0.99, mu=-0.02, sigma=0.1)
        double = RollupParams(c=1.0, gamma=0.99, mu=-0.02, sigma=0.1, alpha=2.0)
        assert rollup_threshold(double, 7) == pytest.approx(rollup_threshold(base, 7) / 2, rel=1e-12)

    def test_monotone_in_age(self):
        params = RollupParams(c=0.7, gamma=0.995, mu=-0.01, sigma=0.1)
        vals = [rollup_threshold(params, x) for x in range(501)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_at_most_one_step_bound(self):
        for mu, sigma in ((-0.02, 0.1), (-0.005, 0.1), (-0.05, 0.2)):
            params = RollupParams(c=1.0, gamma=0.99, mu=mu, sigma=sigma)
            for age in (0, 1, 5, 20, 100):
                lo = rollup_threshold(params, age)
                hi = one_step_threshold(1.0, 0.99, mu, sigma, age)
                assert lo <= hi * (1 + 1e-9) + 1e-12

    def test_matches_dense_scan(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            sigma = float(rng.uniform(0.02, 0.3))
            mu = -sigma * sigma / 2 - float(rng.uniform(0, 0.05))
            gamma = float(rng.uniform(0.9, 0.9999))
            c = float(rng.uniform(0.1, 3))
            age = int(rng.integers(0, 60))
            params = RollupParams(c=c, gamma=gamma, mu=mu, sigma=sigma)
            want, want_n = rollup_inf_brute(c, gamma, mu, sigma, 1.0, age)
            got, got_n = rollup_threshold_detail(params, age)
            assert got == pytest.approx(want, rel=1e-11, abs=1e-12)
            assert got_n == want_n

    def test_drift_hypothesis_enforced(self):
        with pytest.raises(ConfigError):
            RollupParams(c=1.0, gamma=0.99, mu=0.01, sigma=0.1)

    def test_age_zero_never_negative_under_extreme_discount(self):
        # cancellation at age 0 used to leave a ~1e-9 negative residue
        params = RollupParams(c=5e-8, gamma=1 - 1e-7, mu=-0.005, sigma=0.1)
        assert rollup_threshold(params, 0) == 0.0
        RollupNumericThreshold(params)  # construction re-checks non-negativity

    def test_martingale_boundary_not_rejected_over_rounding(self):
        RollupParams(c=1.0, gamma=0.99, mu=-0.005, sigma=0.1)


class TestDecreasingWaitWeight:
    @pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99, 1 - 1e-6])
    def test_n_gamma_n_ratio_strictly_decreasing(self, gamma):
        # log-space evaluation of n*g^n/(1-g^n); direct floats underflow to
        # exact ties for small gamma long before n = 1e4
        n = np.arange(1, 10_001, dtype=np.float64)
        log_f = np.log(n) + n * math.log(gamma) - np.log(one_minus_pow(gamma, n))
        assert np.all(np.diff(log_f) < 0)


class TestThresholdFns:
    def test_monotonicity_checked_on_construction(self):
        with pytest.raises(ConfigError):
            TableThreshold((5.0, 3.0, 1.0))

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            TableThreshold((-1.0, 2.0))

    def test_table_clamps_past_end(self):
        fn = TableThreshold((0.0, 1.0, 2.0))
        assert fn(10) == 2.0

    def test_table_error_mode(self):
        fn = TableThreshold((0.0, 1.0, 2.0), clamp=False)
        with pytest.raises(ConfigError):
            fn(10)


class TestThresholdPolicy:
    def test_publishes_only_old_enough(self):
        pol = ThresholdPolicy(TableThreshold(tuple(float(x) for x in range(20))))
        q = queue_of_ages(15, [3, 12])
        act = pol(PolicyInput(15, 10.0, q))
        assert act.publish_ids == frozenset({"t1"})  # only the age-12 item

    def test_price_above_everything(self):
        pol = ThresholdPolicy(TableThreshold(tuple(float(x) for x in range(20))))
        q = queue_of_ages(15, [3, 12])
        assert pol(PolicyInput(15, 1e6, q)).publish_ids == frozenset()

    def test_boundary_equality_publishes(self):
        pol = ThresholdPolicy(TableThreshold(tuple(float(x) for x in range(20))))
        q = queue_of_ages(15, [7])
        assert pol(PolicyInput(15, 7.0, q)).publish_ids == frozenset({"t0"})

    def test_missing_spec_mapping_rejected(self):
        pol = ThresholdPolicy({LIN6: MartingaleThreshold(1.0, 0.9)})
        q = TxQueue([Transaction("a", 0, ExponentialDelay(0.1))])
        with pytest.raises(ConfigError):
            pol(PolicyInput(1, 1.0, q))

    def test_shared_spec_shares_threshold(self):
        pol = ThresholdPolicy({LIN6: TableThreshold((0.0, 5.0, 5.0))})
        q = queue_of_ages(9, [1, 2])
        act = pol(PolicyInput(9, 5.0, q))
        assert act.publish_ids == q.ids()


class TestPolicyContract:
    @pytest.mark.parametrize(
        "make",
        [
            lambda: TrivialPolicy(),
            lambda: FixedIntervalPolicy(3),
            lambda: GreedyBalancePolicy(LIN6, 0.95, 2.0),
            lambda: ThresholdPolicy(MartingaleThreshold(0.5, 0.95)),
        ],
    )
    def test_action_is_subset_and_pure(self, make):
        rng = np.random.default_rng(31)
        pol = make()
        for _ in range(50):
            t = int(rng.integers(0, 30))
            ages = rng.integers(0, t + 1, size=int(rng.integers(0, 6)))
            q = queue_of_ages(t, list(ages))
            inp = PolicyInput(t, float(rng.uniform(0.1, 50)), q)
            act = pol(inp)
            assert act.publish_ids <= q.ids()
            assert pol(inp) == act  # same input, same action
