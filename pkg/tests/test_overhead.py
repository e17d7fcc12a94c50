import pytest

from modules.core_model import InvalidInputError, PolicyKind
from modules.overhead import (
    DEFAULT_TIMING,
    MacTimingConfig,
    breakeven_threshold_us,
    dppdu_breakeven,
    exchange_time_delta,
    total_exchange_time,
    trigger_frame_time,
)


class TestTriggerFrame:
    def test_single_user(self):
        assert trigger_frame_time(1) == 58.6

    def test_five_users(self):
        assert trigger_frame_time(5) == 69.0

    def test_zero_users(self):
        with pytest.raises(InvalidInputError):
            trigger_frame_time(0)

    def test_affine_in_user_count(self):
        for y in range(1, 40):
            assert trigger_frame_time(y + 1) - trigger_frame_time(y) == pytest.approx(2.6)


class TestExchangeTime:
    def test_dppdu_example(self):
        assert total_exchange_time(PolicyKind.DPPDU, 0.59, 5) == 833.2

    def test_fppdu_example(self):
        assert total_exchange_time(PolicyKind.FIXED, 0.69, 5) == 775.0

    def test_zero_duration_keeps_control_frames(self):
        assert total_exchange_time(PolicyKind.FIXED, 0.0, 1) == pytest.approx(74.6)

    def test_all_dynamic_kinds_use_dppdu_form(self):
        expected = total_exchange_time(PolicyKind.DPPDU, 1.2, 5)
        for kind in (PolicyKind.THROUGHPUT_OPTIMAL, PolicyKind.EADPPDU, 'dppdu'):
            assert total_exchange_time(kind, 1.2, 5) == expected

    def test_negative_duration(self):
        with pytest.raises(InvalidInputError):
            total_exchange_time(PolicyKind.FIXED, -0.1, 5)

    @pytest.mark.parametrize("y", [1, 5, 9, 37])
    def test_delta_is_exact(self, y):
        assert exchange_time_delta(y) == 158.2
        for ts in (0.05, 0.69, 1.15, 5.484, 12.0):
            dynamic = total_exchange_time(PolicyKind.DPPDU, ts, y)
            fixed = total_exchange_time(PolicyKind.FIXED, ts, y)
            assert dynamic - fixed == pytest.approx(158.2, abs=1e-9)

    def test_custom_timing(self):
        timing = MacTimingConfig(sifs_us=10.0, pifs_us=19.0)
        assert exchange_time_delta(1, timing) == pytest.approx(10.0 + 19.0 + 2 * 58.6)
        assert timing.validate() == []
        assert MacTimingConfig(sifs_us=0.0).validate() != []


class TestBreakeven:
    def test_threshold(self):
        assert breakeven_threshold_us(DEFAULT_TIMING) == 158.2

    @pytest.mark.parametrize("ts_fixed,t_min,expected", [
        (0.69, 0.5, True),
        (0.69, 0.69, False),
        (1.0, 0.9, False),
        (1.0, 0.8418, False),
        (1.0, 0.8417, True),
    ])
    def test_examples(self, ts_fixed, t_min, expected):
        assert dppdu_breakeven(ts_fixed, t_min) is expected

    def test_negative_input(self):
        with pytest.raises(InvalidInputError):
            dppdu_breakeven(-1.0, 0.5)
