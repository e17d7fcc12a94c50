from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from modules.core_model import SlotDecision, UserSlotOutcome
from modules.metrics import (
    TRACE_COLUMNS,
    MetricsAccumulator,
    constraint_slack,
    energy_gain,
    stability_check,
    stability_ratio,
    sweep_series,
    windowed_mean,
    worst_violation,
)


def _decision(ts, required, power=0.31):
    outcomes = []
    for t_k in required:
        served = min(ts, t_k) * 1e5
        outcomes.append(UserSlotOutcome(served_bits=served, padding_ms=max(ts - t_k, 0.0),
                                        emptied=ts >= t_k, energy_mj=ts * power))
    return SlotDecision(group_id=1, ts_chosen=ts, required_ms=tuple(required), per_user=tuple(outcomes))


def _record(acc, slot, decision, measured=True):
    k = acc.num_users
    acc.record(slot=slot, decision=decision, fairness_vq=np.full(k, 0.5), energy_vq=np.zeros(k),
               backlog_bits=np.zeros(k), exchange_us=1000.0, breakeven=slot % 2 == 0, measured=measured)


class TestMetricsAccumulator:
    def test_averages_over_measured_slots_only(self):
        acc = MetricsAccumulator(group_id=1, num_users=2, keep_trace=True)
        _record(acc, 0, _decision(4.0, [1.0, 1.0]), measured=False)
        _record(acc, 1, _decision(1.0, [1.0, 2.0]))
        _record(acc, 2, _decision(2.0, [1.0, 2.0]))
        summary = acc.summary()
        assert summary['scheduled_slots'] == 3
        assert summary['measured_slots'] == 2
        assert summary['avg_Ts_ms'] == pytest.approx(1.5)
        assert summary['avg_H_tot_ms'] == pytest.approx(0.5)
        assert summary['avg_S_tot'] == pytest.approx(1.5)
        assert summary['avg_F'] == pytest.approx([1.0, 0.5])
        assert summary['avg_E_mJ'] == pytest.approx([0.465, 0.465])
        assert summary['breakeven_share'] == pytest.approx(0.5)

    def test_overhead_share(self):
        acc = MetricsAccumulator(group_id=1, num_users=1)
        _record(acc, 1, _decision(0.8, [0.8]))
        assert acc.summary()['overhead_share'] == pytest.approx(0.2)

    def test_throughput(self):
        acc = MetricsAccumulator(group_id=1, num_users=2)
        _record(acc, 1, _decision(1.0, [1.0, 2.0]))
        assert acc.summary()['avg_D_tot_bps'] == pytest.approx(2e8)

    def test_empty_summary_is_zero(self):
        summary = MetricsAccumulator(group_id=3, num_users=2).summary()
        assert summary['avg_H_tot_ms'] == 0.0
        assert summary['avg_F'].tolist() == [0.0, 0.0]

    def test_trace_keeps_every_slot(self):
        acc = MetricsAccumulator(group_id=1, num_users=2, keep_trace=True)
        for slot in range(5):
            _record(acc, slot, _decision(1.0, [0.5, 1.0]), measured=slot >= 3)
        trace = acc.trace_frame()
        assert list(trace.columns) == ['group'] + TRACE_COLUMNS
        assert trace['group_slot'].tolist() == [0, 1, 2, 3, 4]
        assert trace['sum_X'].tolist() == [1.0] * 5
        assert trace['lyapunov_X'].iloc[0] == pytest.approx(0.25)
        assert trace['backlog_bits'].tolist() == [0.0] * 5

    def test_no_trace_by_default(self):
        acc = MetricsAccumulator(group_id=2, num_users=1)
        _record(acc, 0, _decision(1.0, [1.0]))
        assert acc.trace_frame().empty


class TestStability:
    def test_windowed_mean(self):
        assert windowed_mean(range(8), 0.5, 1.0) == pytest.approx(5.5)
        assert windowed_mean([], 0.0, 1.0) == 0.0

    def test_bounded_series(self):
        rng = np.random.default_rng(1)
        values = 10 + rng.uniform(-1, 1, size=4000)
        assert stability_ratio(values) < 2.0

    def test_growing_series(self):
        assert stability_ratio(np.arange(1, 4001, dtype=float) ** 2) > 2.0

    def test_zero_series(self):
        assert stability_ratio(np.zeros(100)) == 0.0


def _trace(backlog):
    n = len(backlog)
    return pd.DataFrame({'backlog_bits': backlog, 'sum_X': np.ones(n), 'sum_Y': np.zeros(n)})


class TestStabilityCheck:
    def test_growing_backlog_is_diverging(self):
        result = stability_check(_trace(np.arange(4000, dtype=float) * 1e5), served_bits_per_slot=1e5)
        assert result['diverging'] is True
        assert result['backlog_ratio'] > 2.0
        assert result['sum_X_ratio'] == pytest.approx(1.0)

    def test_small_growing_backlog_is_not_diverging(self):
        backlog = np.linspace(0.0, 5e5, 4000)
        assert stability_check(_trace(backlog), served_bits_per_slot=1e5)['diverging'] is False

    def test_bounded_backlog(self):
        rng = np.random.default_rng(2)
        backlog = rng.uniform(0, 1e7, size=4000)
        result = stability_check(_trace(backlog), served_bits_per_slot=1e5)
        assert result['diverging'] is False
        assert result['backlog_ratio'] < 2.0

    def test_empty_trace(self):
        assert stability_check(_trace([]), served_bits_per_slot=0.0)['diverging'] is False


def _report(v, h, ts, s, f):
    headline = {'avg_H_tot_ms': h, 'avg_Ts_ms': ts, 'avg_S_tot': s, 'avg_F': np.array(f)}
    return SimpleNamespace(v_param=v, headline=headline)


class TestSweepSeries:
    def test_sorted_by_v(self):
        reports = [_report(3000.0, 1.6, 1.2, 3.0, [1.0, 0.7]), _report(100.0, 3.0, 1.5, 3.5, [1.0, 0.9])]
        series = sweep_series(reports)
        assert series['V'].tolist() == [100.0, 3000.0]
        assert series['avg_F_2'].tolist() == [0.9, 0.7]
        assert list(series.columns[:4]) == ['V', 'avg_H_tot_ms', 'avg_Ts_ms', 'avg_S_tot']


class TestEnergyGain:
    def test_gain(self):
        a = _report(1.0, 0, 0.9, 0, [])
        b = _report(1.0, 0, 1.2, 0, [])
        assert energy_gain(a, b) == pytest.approx(0.25)

    def test_zero_base(self):
        a = _report(1.0, 0, 0.9, 0, [])
        b = _report(1.0, 0, 0.0, 0, [])
        assert energy_gain(a, b) == 0.0


class TestConstraintSlack:
    def test_lower_bound(self):
        assert constraint_slack([0.7, 0.6], [0.65, 0.65]) == pytest.approx([0.05, -0.05])

    def test_upper_bound(self):
        assert constraint_slack([0.3, 0.4], [0.35, 0.35], upper=True) == pytest.approx([0.05, -0.05])

    def test_worst_violation(self):
        assert worst_violation([np.array([0.1, -0.02]), np.array([-0.05])]) == pytest.approx(0.05)
        assert worst_violation([np.array([0.1])]) == 0.0
        assert worst_violation([]) is None
