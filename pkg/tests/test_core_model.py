import numpy as np
import pytest

from modules.core_model import (
    GroupState,
    InvalidInputError,
    PolicyConfig,
    PolicyKind,
    UserState,
    apply_queue_update,
    fairness_indicator,
    lyapunov_value,
    padding_overhead,
    required_duration,
    serve_group,
    slot_energy,
    total_throughput,
)


class TestRequiredDuration:
    def test_empty_queue(self):
        assert required_duration(0, 1e6) == 0.0

    @pytest.mark.parametrize("bits,rate,expected", [(1000, 1e6, 1.0), (4000, 2e6, 2.0)])
    def test_queue_over_rate(self, bits, rate, expected):
        assert required_duration(bits, rate) == pytest.approx(expected)

    @pytest.mark.parametrize("rate", [0.0, -1e6])
    def test_non_positive_rate(self, rate):
        with pytest.raises(InvalidInputError):
            required_duration(1000, rate)


class TestApplyQueueUpdate:
    def test_over_served_clamps_at_zero(self):
        user, served = apply_queue_update(UserState(queue_bits=500, rate_bps=1e6), 1.0, True, 0)
        assert user.queue_bits == 0
        assert served == 500

    def test_not_scheduled_only_adds_arrivals(self):
        user, served = apply_queue_update(UserState(queue_bits=500, rate_bps=1e6), 1.0, False, 200)
        assert user.queue_bits == 700
        assert served == 0

    def test_partial_drain(self):
        user, served = apply_queue_update(UserState(queue_bits=4000, rate_bps=2e6), 1.0, True, 100)
        assert user.queue_bits == pytest.approx(2100)
        assert served == pytest.approx(2000)

    def test_queue_never_negative_and_conserves(self):
        rng = np.random.default_rng(3)
        user = UserState(queue_bits=0.0, rate_bps=1e6)
        for _ in range(500):
            before = user.queue_bits
            ts = float(rng.uniform(0, 3))
            user = UserState(queue_bits=before, rate_bps=float(rng.uniform(1e5, 1e7)))
            updated, served = apply_queue_update(user, ts, bool(rng.integers(2)), float(rng.uniform(0, 5000)))
            assert updated.queue_bits >= 0
            assert served <= before + 1e-9
            assert served <= user.rate_bps * ts / 1000.0 + 1e-9
            user = updated


class TestPaddingAndFairness:
    @pytest.mark.parametrize("ts,t_k,expected", [(1.0, 1.0, 0.0), (1.5, 1.0, 0.5), (0.5, 1.0, 0.0)])
    def test_padding(self, ts, t_k, expected):
        assert padding_overhead(ts, t_k) == pytest.approx(expected)

    @pytest.mark.parametrize("ts,t_k,expected", [(1.0, 1.0, True), (0.9, 1.0, False), (0.0, 0.0, True), (3.2, 0.0, True)])
    def test_fairness_indicator(self, ts, t_k, expected):
        assert fairness_indicator(ts, t_k) is expected

    def test_padding_plus_served_time_fills_slot(self):
        for ts, t_k in [(2.0, 0.5), (1.0, 1.0), (5.484, 0.01)]:
            assert padding_overhead(ts, t_k) + min(ts, t_k) == pytest.approx(ts)
        assert padding_overhead(0.7, 1.2) == 0.0


class TestSlotEnergy:
    @pytest.mark.parametrize("ts,expected", [(0.0, 0.0), (1.0, 0.31), (2.0, 0.62)])
    def test_energy(self, ts, expected):
        assert slot_energy(ts, 0.31) == pytest.approx(expected)


class TestTotalThroughput:
    users = [UserState(queue_bits=1000, rate_bps=1e6), UserState(queue_bits=4000, rate_bps=2e6)]

    def test_at_t_max(self):
        assert total_throughput(self.users, 2.0) == pytest.approx(2.5e6)

    def test_at_t_min(self):
        assert total_throughput(self.users, 1.0) == pytest.approx(3.0e6)

    def test_empty_queues(self):
        empty = [UserState(queue_bits=0, rate_bps=1e6)] * 2
        assert total_throughput(empty, 1.0) == 0.0
        assert total_throughput(empty, 0.0) == 0.0

    def test_zero_duration_with_backlog(self):
        with pytest.raises(InvalidInputError):
            total_throughput(self.users, 0.0)

    def test_t_min_matches_sum_of_rates(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            rates = rng.uniform(1e6, 1e8, size=4)
            durations = rng.uniform(0.1, 3.0, size=4)
            users = [UserState(queue_bits=float(t * r / 1000), rate_bps=float(r)) for t, r in zip(durations, rates)]
            expected = sum(u.queue_bits / (t / 1000) for u, t in zip(users, durations))
            assert total_throughput(users, float(durations.min())) == pytest.approx(expected, rel=1e-9)


class TestUserState:
    def test_rejects_invalid_target(self):
        with pytest.raises(InvalidInputError):
            UserState(fairness_target=0.0)
        with pytest.raises(InvalidInputError):
            UserState(fairness_target=1.2)

    def test_rejects_negative_queue(self):
        with pytest.raises(InvalidInputError):
            UserState(queue_bits=-1.0)


class TestPolicyConfig:
    def test_default_grid_is_valid(self):
        config = PolicyConfig()
        assert config.validate() == []
        grid = config.grid_array()
        assert grid[0] == 0.05 and grid[-1] == 12.0 and grid.size == 240

    def test_grid_above_ts_max(self):
        errors = PolicyConfig(ts_grid=(1.0, 6.0), ts_max_ms=5.484).validate()
        assert any('TS_MAX_MS' in e for e in errors)

    def test_fixed_ts_off_grid(self):
        errors = PolicyConfig(kind=PolicyKind.FIXED, fixed_ts_ms=0.69).validate()
        assert any('FIXED_TS_MS' in e for e in errors)

    def test_non_positive_v(self):
        errors = PolicyConfig(kind=PolicyKind.DPPDU, v_param=0.0).validate()
        assert any('V' in e for e in errors)


class TestServeGroup:
    def test_outcomes_follow_formulas(self):
        users = (UserState(queue_bits=1e5, rate_bps=1e8), UserState(queue_bits=2e5, rate_bps=1e8))
        group = GroupState(group_id=1, users=users)
        new_group, decision = serve_group(group, [1.0, 2.0], 1.5, carry_over=True)
        first, second = decision.per_user
        assert first.padding_ms == pytest.approx(0.5) and first.emptied
        assert second.padding_ms == 0.0 and not second.emptied
        assert second.served_bits == pytest.approx(1.5e5)
        assert new_group.users[1].queue_bits == pytest.approx(0.5e5)
        assert decision.padding_total_ms == pytest.approx(0.5)
        assert decision.emptied_count == 1
        assert first.energy_mj == pytest.approx(1.5 * 0.31)

    def test_residual_dropped_without_carry_over(self):
        group = GroupState(group_id=1, users=(UserState(queue_bits=2e5, rate_bps=1e8),))
        new_group, decision = serve_group(group, [2.0], 1.0, carry_over=False)
        assert new_group.users[0].queue_bits == 0.0
        assert decision.per_user[0].dropped_bits == pytest.approx(1e5)


def test_lyapunov_value():
    assert lyapunov_value([1.0, 2.0]) == pytest.approx(2.5)
    assert lyapunov_value([]) == 0.0
