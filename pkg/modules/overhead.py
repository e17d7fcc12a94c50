"""
プロトコルオーバーヘッド計算
F-PPDU / D-PPDU のフレーム交換時間と損益分岐判定

時間計算は Decimal で行い、定数の和を10進表記どおりに保つ。
"""

import logging
from dataclasses import dataclass
from decimal import Decimal
from typing import List, Union

from modules.core_model import InvalidInputError, PolicyKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MacTimingConfig:
    """
    MAC タイミング定数 (µs)

    Attributes:
        sifs_us: SIFS
        pifs_us: PIFS
        mac_phy_preamble_us: トリガーフレームの MAC/PHY プリアンブル
        per_user_info_us: ユーザー情報1件あたりの時間
        basic_rate_note: 説明用（計算には使わない）
    """
    sifs_us: float = 16.0
    pifs_us: float = 25.0
    mac_phy_preamble_us: float = 56.0
    per_user_info_us: float = 2.6
    basic_rate_note: str = "制御フレームは基本レートで送信"

    def validate(self) -> List[str]:
        errors = []
        for name in ('sifs_us', 'pifs_us', 'mac_phy_preamble_us', 'per_user_info_us'):
            if not getattr(self, name) > 0:
                errors.append(f"{name.upper()} は正の値である必要があります")
        return errors


DEFAULT_TIMING = MacTimingConfig()


def _dec(value: float) -> Decimal:
    return Decimal(repr(float(value)))


def _trigger_frame_decimal(num_users: int, timing: MacTimingConfig) -> Decimal:
    if num_users < 1:
        raise InvalidInputError(f"ユーザー数は1以上である必要があります: {num_users}")
    return _dec(timing.mac_phy_preamble_us) + num_users * _dec(timing.per_user_info_us)


def trigger_frame_time(num_users: int, timing: MacTimingConfig = DEFAULT_TIMING) -> float:
    """
    トリガーフレーム長 56 + 2.6·y µs

    Args:
        num_users: フレームに含むユーザー情報の数 y
        timing: MAC タイミング定数

    Returns:
        float: フレーム長 (µs)
    """
    return float(_trigger_frame_decimal(num_users, timing))


def _is_dynamic(policy_kind: Union[PolicyKind, str]) -> bool:
    # 固定以外はバッファ状態報告と最適時間通知のフレームを伴う
    return PolicyKind(policy_kind) != PolicyKind.FIXED


def _exchange_decimal(policy_kind: Union[PolicyKind, str], ts_ms: float, num_users: int,
                      timing: MacTimingConfig) -> Decimal:
    if ts_ms < 0:
        raise InvalidInputError(f"スケジューリング時間が負です: {ts_ms}")
    sifs = _dec(timing.sifs_us)
    total = _dec(ts_ms) * 1000 + _trigger_frame_decimal(num_users, timing)
    if _is_dynamic(policy_kind):
        status_report = _trigger_frame_decimal(1, timing)
        duration_notice = _trigger_frame_decimal(1, timing)
        return total + status_report + duration_notice + 2 * sifs + _dec(timing.pifs_us)
    return total + sifs


def total_exchange_time(policy_kind: Union[PolicyKind, str], ts_ms: float, num_users: int,
                        timing: MacTimingConfig = DEFAULT_TIMING) -> float:
    """
    1回のフレーム交換に要する総時間

    D-PPDU: T_s + T_TF + T_BS + T_OT + 2·SIFS + PIFS
    F-PPDU: T_s + T_TF + SIFS

    Args:
        policy_kind: ポリシー種別（FIXED 以外は D-PPDU 形式）
        ts_ms: スケジューリング時間 (ms)
        num_users: スケジュールされたユーザー数
        timing: MAC タイミング定数

    Returns:
        float: 総時間 (µs)
    """
    return float(_exchange_decimal(policy_kind, ts_ms, num_users, timing))


def exchange_time_delta(num_users: int, timing: MacTimingConfig = DEFAULT_TIMING) -> float:
    """D-PPDU と F-PPDU の交換時間の差 (µs)"""
    delta = (_exchange_decimal(PolicyKind.DPPDU, 0.0, num_users, timing)
             - _exchange_decimal(PolicyKind.FIXED, 0.0, num_users, timing))
    return float(delta)


def breakeven_threshold_us(timing: MacTimingConfig = DEFAULT_TIMING) -> float:
    """SIFS + PIFS + T_BS + T_OT"""
    threshold = (_dec(timing.sifs_us) + _dec(timing.pifs_us)
                 + 2 * _trigger_frame_decimal(1, timing))
    return float(threshold)


def dppdu_breakeven(ts_fixed_ms: float, t_min_ms: float,
                    timing: MacTimingConfig = DEFAULT_TIMING) -> bool:
    """
    D-PPDU の追加制御フレームを短縮分が上回るか

    Args:
        ts_fixed_ms: 固定スケジューリング時間 (ms)
        t_min_ms: 当該スロットの T_min (ms)
        timing: MAC タイミング定数

    Returns:
        bool: (T_s − T_min) > SIFS + PIFS + T_BS + T_OT
    """
    if ts_fixed_ms < 0 or t_min_ms < 0:
        raise InvalidInputError("時間は非負である必要があります")
    saving = (_dec(ts_fixed_ms) - _dec(t_min_ms)) * 1000
    threshold = (_dec(timing.sifs_us) + _dec(timing.pifs_us)
                 + 2 * _trigger_frame_decimal(1, timing))
    return saving > threshold
