import math

import numpy as np
import pytest

from l2pub.costs import (
    Counterexample,
    DelayRangeError,
    ExponentialDelay,
    InvalidActionError,
    LinearDelay,
    PublishingCostParams,
    TableDelay,
    Transaction,
    TxQueue,
    aggregated_delay_cost,
    check_sub_additivity,
    delay_cost,
    publishing_cost,
    step_cost,
)


def agg_brute(spec, n, gamma):
    """Independent double-sum oracle for the aggregated delay cost."""
    total = 0.0
    for t in range(1, n):
        inner = sum(delay_cost(spec, i) for i in range(1, t + 1))
        total += gamma ** (t - 1) * inner
    return total


def subadd_brute(spec, gamma, sigma, n_max):
    """Independent exhaustive scan for the first sub-additivity violation."""
    f = {n: agg_brute(spec, n, gamma) for n in range(1, n_max + 1)}
    for n1 in range(1, n_max):
        for n2 in range(1, n_max - n1 + 1):
            lhs = f[n1 + n2]
            rhs = sigma * (f[n1 + 1] + gamma**n1 * f[n2])
            if lhs > rhs:
                return (n1, n2, lhs, rhs)
    return None


class TestPublishingCost:
    def test_pure_linear_term(self):
        assert publishing_cost(PublishingCostParams(1.0, 0.0), 3) == 3.0

    def test_empty_batch_is_free(self):
        assert publishing_cost(PublishingCostParams(0.0, 1.0), 0) == 0.0

    def test_affine_by_hand(self):
        # 2*4 + 5
        assert publishing_cost(PublishingCostParams(2.0, 5.0), 4) == 13.0

    def test_empty_batch_free_for_any_params(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            params = PublishingCostParams(rng.uniform(0, 10), rng.uniform(0, 10))
            assert publishing_cost(params, 0) == 0.0

    def test_affine_increment_is_alpha(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            params = PublishingCostParams(rng.uniform(0, 10), rng.uniform(0, 10))
            for k in range(1, 6):
                inc = publishing_cost(params, k + 1) - publishing_cost(params, k)
                assert inc == pytest.approx(params.alpha, rel=1e-12)

    def test_negative_params_rejected(self):
        with pytest.raises(ValueError):
            PublishingCostParams(-1.0, 0.0)
        with pytest.raises(ValueError):
            PublishingCostParams(0.0, -0.5)

    def test_degenerate_free_publishing_allowed(self):
        assert publishing_cost(PublishingCostParams(0.0, 0.0), 7) == 0.0


class TestDelayCost:
    def test_linear(self):
        assert delay_cost(LinearDelay(6.0), 2) == 12.0
        assert delay_cost(LinearDelay(6.0), 0) == 0.0

    def test_exponential_rate_zero(self):
        assert delay_cost(ExponentialDelay(0.0), 7) == 1.0

    def test_exponential(self):
        assert delay_cost(ExponentialDelay(0.5), 2) == pytest.approx(math.e, rel=1e-15)
        assert delay_cost(ExponentialDelay(0.3), 0) == 1.0

    def test_table_verbatim(self):
        spec = TableDelay((0.0, 2.5, 9.0))
        assert delay_cost(spec, 1) == 2.5
        assert delay_cost(spec, 2) == 9.0

    def test_table_out_of_range(self):
        with pytest.raises(DelayRangeError):
            delay_cost(TableDelay((0.0, 1.0)), 2)

    def test_negative_age_rejected(self):
        with pytest.raises(ValueError):
            delay_cost(LinearDelay(1.0), -1)

    def test_finite_non_negative(self):
        rng = np.random.default_rng(2)
        specs = [LinearDelay(3.3), ExponentialDelay(0.2), TableDelay(tuple(rng.uniform(0, 5, 40)))]
        for spec in specs:
            for age in range(30):
                v = delay_cost(spec, age)
                assert math.isfinite(v) and v >= 0


def _queue(*entries):
    return TxQueue(entries)


class TestStepCost:
    def test_publish_everything_no_delay(self):
        q = _queue(Transaction("a", 0, LinearDelay(6.0)))
        got = step_cost(10.0, q, frozenset({"a"}), PublishingCostParams(1.0, 0.0), 0)
        assert got == 10.0

    def test_wait_at_age_zero_is_free_for_linear(self):
        q = _queue(Transaction("a", 0, LinearDelay(6.0)))
        got = step_cost(10.0, q, frozenset(), PublishingCostParams(1.0, 0.0), 0)
        assert got == 0.0

    def test_mixed_by_hand(self):
        # publish the age-1 item at price 5, leave the age-2 one: 5*1 + 6*2
        q = _queue(
            Transaction("t1", 1, LinearDelay(6.0)),
            Transaction("t2", 0, LinearDelay(6.0)),
        )
        got = step_cost(5.0, q, frozenset({"t1"}), PublishingCostParams(1.0, 0.0), 2)
        assert got == 17.0

    def test_unknown_id_rejected(self):
        q = _queue(Transaction("a", 0, LinearDelay(6.0)))
        with pytest.raises(InvalidActionError):
            step_cost(5.0, q, frozenset({"zzz"}), PublishingCostParams(1.0, 0.0), 0)

    def test_always_non_negative(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(0, 6))
            entries = [
                Transaction(f"t{i}", int(rng.integers(0, 4)), LinearDelay(float(rng.uniform(0, 8))))
                for i in range(n)
            ]
            q = TxQueue(entries)
            ids = list(q.ids())
            chosen = frozenset(rng.choice(ids, size=int(rng.integers(0, n + 1)), replace=False)) if n else frozenset()
            params = PublishingCostParams(float(rng.uniform(0, 3)), float(rng.uniform(0, 3)))
            assert step_cost(float(rng.uniform(0.1, 20)), q, chosen, params, 5) >= 0.0


class TestTxQueue:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            TxQueue([Transaction("a", 0, LinearDelay(1.0)), Transaction("a", 1, LinearDelay(1.0))])

    def test_ordered_by_arrival_then_id(self):
        q = TxQueue(
            [
                Transaction("b", 1, LinearDelay(1.0)),
                Transaction("a", 1, LinearDelay(1.0)),
                Transaction("c", 0, LinearDelay(1.0)),
            ]
        )
        assert [e.id for e in q] == ["c", "a", "b"]

    def test_immutable(self):
        q = TxQueue()
        with pytest.raises(AttributeError):
            q.entries = ()


class TestAggregatedDelayCost:
    def test_empty_gap(self):
        assert aggregated_delay_cost(LinearDelay(6.0), 1, 0.7) == 0.0

    def test_undiscounted_linear_identity(self):
        # closed form n*(n^2-1) for slope 6; cross-check 6 + 18 = 24 at n=3
        assert aggregated_delay_cost(LinearDelay(6.0), 3, 1.0) == 24.0
        for n in range(1, 101):
            got = aggregated_delay_cost(LinearDelay(6.0), n, 1.0)
            assert got == n * (n * n - 1)

    def test_discounted_against_brute_force(self):
        got = aggregated_delay_cost(LinearDelay(6.0), 4, 0.9)
        assert got == pytest.approx(51.36, abs=1e-12)  # 6 + 0.9*18 + 0.81*36
        assert got == pytest.approx(agg_brute(LinearDelay(6.0), 4, 0.9), rel=1e-14)

    @pytest.mark.parametrize("gamma", [1.0, 0.99, 0.9, 0.5])
    @pytest.mark.parametrize(
        "spec",
        [LinearDelay(6.0), ExponentialDelay(0.3), TableDelay(tuple(range(30)))],
    )
    def test_matches_brute_force(self, spec, gamma):
        for n in (1, 2, 5, 13, 25):
            assert aggregated_delay_cost(spec, n, gamma) == pytest.approx(
                agg_brute(spec, n, gamma), rel=1e-12, abs=1e-300
            )

    def test_monotone_in_gap_length(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            spec = LinearDelay(float(rng.uniform(0, 5)))
            gamma = float(rng.uniform(0.5, 1.0))
            vals = [aggregated_delay_cost(spec, n, gamma) for n in range(1, 40)]
            assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_table_too_short(self):
        with pytest.raises(DelayRangeError):
            aggregated_delay_cost(TableDelay((0.0, 1.0)), 5, 1.0)


class TestSubAdditivity:
    def test_linear_slope6_is_4_sub_additive(self):
        assert check_sub_additivity(LinearDelay(6.0), 1.0, 4.0, 200) is None

    def test_sigma_one_first_violation(self):
        got = check_sub_additivity(LinearDelay(6.0), 1.0, 1.0, 10)
        assert got == Counterexample(n1=1, n2=2, lhs=24.0, rhs=12.0)
        assert (got.n1, got.n2, got.lhs, got.rhs) == subadd_brute(LinearDelay(6.0), 1.0, 1.0, 10)

    def test_huge_sigma_always_ok(self):
        assert check_sub_additivity(ExponentialDelay(0.4), 0.95, 1e9, 20) is None

    def test_monotone_in_sigma(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            spec = LinearDelay(float(rng.uniform(0.5, 8)))
            gamma = float(rng.uniform(0.8, 1.0))
            sigma = float(rng.uniform(0.5, 6))
            if check_sub_additivity(spec, gamma, sigma, 40) is None:
                for mult in (1.5, 3.0, 10.0):
                    assert check_sub_additivity(spec, gamma, sigma * mult, 40) is None

    def test_n_max_validation(self):
        with pytest.raises(ValueError):
            check_sub_additivity(LinearDelay(1.0), 1.0, 2.0, 1)
