"""
性能指標計算モジュール
時間平均の集計・トレース・V スイープ系列・エネルギー利得
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from modules.core_model import SlotDecision, lyapunov_value
from utils.helpers import safe_divide, safe_divide_array

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['slot', 'group_slot', 'ts_ms', 'sum_X', 'sum_Y', 'lyapunov_X', 'backlog_bits']

# 最終四半期のバックログがスロットあたり送信量のこの倍数を超え、かつ増加していれば発散
DIVERGENCE_BACKLOG_SLOTS = 10.0


class MetricsAccumulator:
    """
    グループ単位の時間平均集計

    平均はそのグループがスケジュールされたスロットのうち、計測対象
    （ウォームアップ後）のものだけで取る。トレースは全スロットを保持する。
    """

    def __init__(self, group_id: int, num_users: int, keep_trace: bool = False):
        self.group_id = group_id
        self.num_users = num_users
        self.keep_trace = keep_trace

        self.scheduled_slots = 0
        self.measured_slots = 0

        self.padding_total_sum = 0.0
        self.ts_sum = 0.0
        self.emptied_total_sum = 0.0
        self.throughput_sum = 0.0
        self.exchange_us_sum = 0.0
        self.breakeven_hits = 0

        self.emptied_sum = np.zeros(num_users)
        self.energy_sum = np.zeros(num_users)
        self.padding_sum = np.zeros(num_users)
        self.served_sum = np.zeros(num_users)
        self.dropped_sum = np.zeros(num_users)
        self.backlog_sum = np.zeros(num_users)

        self._trace: Dict[str, List[float]] = {col: [] for col in TRACE_COLUMNS}

    def record(self, slot: int, decision: SlotDecision, fairness_vq: np.ndarray,
               energy_vq: np.ndarray, backlog_bits: np.ndarray, exchange_us: float,
               breakeven: bool, measured: bool) -> None:
        """
        1スロット分の結果を記録

        Args:
            slot: 全体のスロット番号 t
            decision: スロット結果
            fairness_vq: 更新後の X_k
            energy_vq: 更新後の Y_k
            backlog_bits: スロット終了時のキュー長
            exchange_us: フレーム交換時間 (µs)
            breakeven: D-PPDU の損益分岐条件が成立したか
            measured: 時間平均の対象か
        """
        if self.keep_trace:
            self._trace['slot'].append(slot)
            self._trace['group_slot'].append(self.scheduled_slots)
            self._trace['ts_ms'].append(decision.ts_chosen)
            self._trace['sum_X'].append(float(fairness_vq.sum()))
            self._trace['sum_Y'].append(float(energy_vq.sum()))
            self._trace['lyapunov_X'].append(lyapunov_value(fairness_vq))
            self._trace['backlog_bits'].append(float(np.sum(backlog_bits)))
        self.scheduled_slots += 1
        if not measured:
            return

        self.measured_slots += 1
        emptied = decision.emptied_array()
        ts = decision.ts_chosen
        served = np.array([o.served_bits for o in decision.per_user])
        padding = np.array([o.padding_ms for o in decision.per_user])

        self.padding_total_sum += float(padding.sum())
        self.ts_sum += ts
        self.emptied_total_sum += float(emptied.sum())
        if ts > 0:
            self.throughput_sum += float(served.sum()) / (ts / 1000.0)
        self.exchange_us_sum += exchange_us
        self.breakeven_hits += int(breakeven)

        self.emptied_sum += emptied
        self.energy_sum += decision.energy_array()
        self.padding_sum += padding
        self.served_sum += served
        self.dropped_sum += np.array([o.dropped_bits for o in decision.per_user])
        self.backlog_sum += backlog_bits

    def summary(self) -> Dict[str, object]:
        """
        時間平均の要約

        Returns:
            dict: グループのスカラー指標とユーザー別配列
        """
        n = self.measured_slots
        avg_ts = safe_divide(self.ts_sum, n)
        avg_exchange = safe_divide(self.exchange_us_sum, n)
        return {
            'group_id': self.group_id,
            'scheduled_slots': self.scheduled_slots,
            'measured_slots': n,
            'avg_H_tot_ms': safe_divide(self.padding_total_sum, n),
            'avg_Ts_ms': avg_ts,
            'avg_S_tot': safe_divide(self.emptied_total_sum, n),
            'avg_D_tot_bps': safe_divide(self.throughput_sum, n),
            'avg_exchange_us': avg_exchange,
            'overhead_share': safe_divide(avg_exchange - avg_ts * 1000.0, avg_exchange),
            'breakeven_share': safe_divide(self.breakeven_hits, n),
            'avg_F': safe_divide_array(self.emptied_sum, n),
            'avg_E_mJ': safe_divide_array(self.energy_sum, n),
            'avg_H_ms': safe_divide_array(self.padding_sum, n),
            'avg_served_bits': safe_divide_array(self.served_sum, n),
            'avg_dropped_bits': safe_divide_array(self.dropped_sum, n),
            'avg_backlog_bits': safe_divide_array(self.backlog_sum, n),
        }

    def trace_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self._trace, columns=TRACE_COLUMNS)
        frame.insert(0, 'group', self.group_id)
        return frame


def windowed_mean(values: Sequence[float], start_fraction: float, end_fraction: float) -> float:
    """系列の [start, end) 割合区間の平均"""
    values = np.asarray(values, dtype=float)
    n = values.size
    lo, hi = int(n * start_fraction), int(n * end_fraction)
    if hi <= lo:
        return 0.0
    return float(values[lo:hi].mean())


def stability_ratio(values: Sequence[float]) -> float:
    """
    仮想キュー安定性の指標

    最終四半期の平均 / 第2四半期の平均。有界なら 2 以下に収まる。

    Args:
        values: Σ X_k などの時系列

    Returns:
        float: 比率（第2四半期の平均が0なら 0 または inf）
    """
    second = windowed_mean(values, 0.25, 0.5)
    last = windowed_mean(values, 0.75, 1.0)
    if second == 0:
        return 0.0 if last == 0 else float('inf')
    return last / second


def stability_check(trace: pd.DataFrame, served_bits_per_slot: float) -> Dict[str, object]:
    """
    実キューと仮想キューの発散判定（事後）

    最終四半期の平均バックログが第2四半期の2倍を超え、かつスロットあたり
    送信量の DIVERGENCE_BACKLOG_SLOTS 倍を超えていれば発散とみなす。

    Args:
        trace: グループ1のトレース（backlog_bits, sum_X, sum_Y 列）
        served_bits_per_slot: スロットあたり合計送信量の平均 (bit)

    Returns:
        dict: 各系列の安定性比率、最終四半期の平均バックログ、発散フラグ
    """
    if trace.empty:
        return {'backlog_ratio': 0.0, 'sum_X_ratio': 0.0, 'sum_Y_ratio': 0.0,
                'final_backlog_bits': 0.0, 'diverging': False}
    backlog = trace['backlog_bits'].to_numpy()
    backlog_ratio = stability_ratio(backlog)
    final_backlog = windowed_mean(backlog, 0.75, 1.0)
    diverging = backlog_ratio > 2.0 and final_backlog > DIVERGENCE_BACKLOG_SLOTS * served_bits_per_slot
    return {
        'backlog_ratio': backlog_ratio,
        'sum_X_ratio': stability_ratio(trace['sum_X'].to_numpy()),
        'sum_Y_ratio': stability_ratio(trace['sum_Y'].to_numpy()),
        'final_backlog_bits': final_backlog,
        'diverging': bool(diverging),
    }


def sweep_series(reports: Sequence) -> pd.DataFrame:
    """
    V スイープ結果を図示用の系列に整形

    Args:
        reports: RunReport のリスト

    Returns:
        pd.DataFrame: V ごとの平均 H_tot, T_s, F_k, S_tot
    """
    rows = []
    for report in reports:
        row = {
            'V': report.v_param,
            'avg_H_tot_ms': report.headline['avg_H_tot_ms'],
            'avg_Ts_ms': report.headline['avg_Ts_ms'],
            'avg_S_tot': report.headline['avg_S_tot'],
        }
        for k, value in enumerate(report.headline['avg_F'], start=1):
            row[f'avg_F_{k}'] = float(value)
        rows.append(row)
    return pd.DataFrame(rows).sort_values('V').reset_index(drop=True)


def energy_gain(report_a, report_b) -> float:
    """
    送信電力一定での B に対する A のエネルギー利得 1 − avgTs_A / avgTs_B

    Args:
        report_a: 評価対象の RunReport
        report_b: 基準の RunReport

    Returns:
        float: 利得（正なら A が省エネ）
    """
    base = report_b.headline['avg_Ts_ms']
    if base == 0:
        logger.warning("基準の平均スケジューリング時間が0のためエネルギー利得を計算できません")
        return 0.0
    return 1.0 - report_a.headline['avg_Ts_ms'] / base


def constraint_slack(avg_values: np.ndarray, targets: np.ndarray, upper: bool = False) -> np.ndarray:
    """制約の余裕。下限制約は avg − target、上限制約は target − avg"""
    avg_values = np.asarray(avg_values, dtype=float)
    targets = np.asarray(targets, dtype=float)
    return targets - avg_values if upper else avg_values - targets


def worst_violation(slacks: Sequence[np.ndarray]) -> Optional[float]:
    """全グループ・全ユーザーで最大の違反量（違反なしなら 0）"""
    if not slacks:
        return None
    merged = np.concatenate([np.asarray(s, dtype=float) for s in slacks])
    return float(max(0.0, -merged.min()))
