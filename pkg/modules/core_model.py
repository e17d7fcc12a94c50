"""
コアモデル
OFDMA上りリンクのドメイン型とスロット単位の計算式

単位: 時間は ms、キュー長は bit、レートは bps、エネルギーは mJ
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from utils.units import parse_grid

logger = logging.getLogger(__name__)

# 802.11ac/ax の最大 PPDU 長 (ms)
MAX_PPDU_DURATION_MS = 5.484

DEFAULT_TS_GRID = tuple(parse_grid("0.05:0.05:12").tolist())
DEFAULT_TS_MAX_MS = 12.0

OBJECTIVE_SCALES = {'ms': 1.0, 's': 1e-3}


class InvalidInputError(ValueError):
    """計算式への不正な入力"""


class ConfigError(ValueError):
    """
    設定エラー

    Attributes:
        errors: 違反した項目ごとのメッセージ
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("設定エラー: " + "; ".join(self.errors))


class PolicyKind(str, Enum):
    FIXED = 'fixed'
    THROUGHPUT_OPTIMAL = 'throughput_optimal'
    DPPDU = 'dppdu'
    EADPPDU = 'eadppdu'


@dataclass(frozen=True)
class UserState:
    """
    ユーザー単位の状態

    Attributes:
        queue_bits: バッファ内のデータ量 Q_k (bit)
        rate_bps: 現在の伝送レート R_k (bps)
        fairness_vq: 公平性の仮想キュー X_k
        energy_vq: エネルギーの仮想キュー Y_k (mJ)
        fairness_target: 公平性の目標値 C_k
        energy_budget: スロットあたりのエネルギー予算 E_k^tot (mJ)
        tx_power_watts: 送信電力 P (W)
    """
    queue_bits: float = 0.0
    rate_bps: float = 1e8
    fairness_vq: float = 0.0
    energy_vq: float = 0.0
    fairness_target: float = 0.65
    energy_budget: float = 1.0
    tx_power_watts: float = 0.31

    def __post_init__(self):
        if self.queue_bits < 0:
            raise InvalidInputError(f"キュー長が負です: {self.queue_bits}")
        if self.rate_bps <= 0:
            raise InvalidInputError(f"レートは正の値である必要があります: {self.rate_bps}")
        if self.fairness_vq < 0 or self.energy_vq < 0:
            raise InvalidInputError("仮想キューが負です")
        if not 0 < self.fairness_target <= 1:
            raise InvalidInputError(f"公平性目標は (0, 1] の範囲である必要があります: {self.fairness_target}")


@dataclass(frozen=True)
class GroupState:
    group_id: int
    users: Tuple[UserState, ...]

    @property
    def size(self) -> int:
        return len(self.users)

    def queues(self) -> np.ndarray:
        return np.array([u.queue_bits for u in self.users], dtype=float)

    def rates(self) -> np.ndarray:
        return np.array([u.rate_bps for u in self.users], dtype=float)

    def powers(self) -> np.ndarray:
        return np.array([u.tx_power_watts for u in self.users], dtype=float)


@dataclass(frozen=True)
class UserSlotOutcome:
    served_bits: float
    padding_ms: float
    emptied: bool
    energy_mj: float
    dropped_bits: float = 0.0


@dataclass(frozen=True)
class SlotDecision:
    """
    1スロット分のスケジューリング結果

    Attributes:
        group_id: スケジュールされたグループ
        ts_chosen: 選択されたスケジューリング時間 T_s (ms)
        required_ms: 各ユーザーの必要送信時間 T_k (ms)
        per_user: ユーザー別の結果
    """
    group_id: int
    ts_chosen: float
    required_ms: Tuple[float, ...]
    per_user: Tuple[UserSlotOutcome, ...]

    @property
    def padding_total_ms(self) -> float:
        return float(sum(o.padding_ms for o in self.per_user))

    @property
    def emptied_count(self) -> int:
        return int(sum(o.emptied for o in self.per_user))

    @property
    def served_total_bits(self) -> float:
        return float(sum(o.served_bits for o in self.per_user))

    def emptied_array(self) -> np.ndarray:
        return np.array([o.emptied for o in self.per_user], dtype=float)

    def energy_array(self) -> np.ndarray:
        return np.array([o.energy_mj for o in self.per_user], dtype=float)


@dataclass(frozen=True)
class PolicyConfig:
    """
    ポリシー設定

    Attributes:
        kind: ポリシー種別
        v_param: ドリフト＋ペナルティの重み V
        ts_grid: 候補スケジューリング時間 (ms, 昇順)
        ts_max_ms: スケジューリング時間の上限 (ms)
        fixed_ts_ms: 固定ポリシーのスケジューリング時間 (ms)
        objective_unit: 目的関数内のパディング・エネルギーの単位 ('ms' → ms/mJ, 's' → s/J)
    """
    kind: PolicyKind = PolicyKind.DPPDU
    v_param: float = 1000.0
    ts_grid: Tuple[float, ...] = DEFAULT_TS_GRID
    ts_max_ms: float = DEFAULT_TS_MAX_MS
    fixed_ts_ms: float = 1.0
    objective_unit: str = 'ms'

    @property
    def objective_scale(self) -> float:
        return OBJECTIVE_SCALES[self.objective_unit]

    def grid_array(self) -> np.ndarray:
        return np.asarray(self.ts_grid, dtype=float)

    def validate(self) -> List[str]:
        errors = []
        grid = self.grid_array()
        if grid.size == 0:
            errors.append("TS_GRID が空です")
        else:
            if np.any(np.diff(grid) <= 0):
                errors.append("TS_GRID は狭義単調増加である必要があります")
            if np.any(grid <= 0):
                errors.append("TS_GRID の値は正である必要があります")
            if np.any(grid > self.ts_max_ms):
                errors.append(f"TS_GRID の値が TS_MAX_MS={self.ts_max_ms} を超えています")
        if self.ts_max_ms <= 0:
            errors.append("TS_MAX_MS は正の値である必要があります")
        if self.objective_unit not in OBJECTIVE_SCALES:
            errors.append(f"OBJECTIVE_UNIT は {sorted(OBJECTIVE_SCALES)} のいずれかです: {self.objective_unit!r}")
        if self.kind in (PolicyKind.DPPDU, PolicyKind.EADPPDU) and not self.v_param > 0:
            errors.append(f"V は正の値である必要があります: {self.v_param}")
        if self.kind == PolicyKind.FIXED and grid.size and not np.any(np.isclose(grid, self.fixed_ts_ms, rtol=0, atol=1e-9)):
            errors.append(f"FIXED_TS_MS={self.fixed_ts_ms} が TS_GRID に含まれていません")
        return errors


def required_duration(queue_bits: float, rate_bps: float) -> float:
    """
    バッファを空にするのに必要な送信時間 T_k = Q_k / R_k

    Args:
        queue_bits: キュー長 (bit)
        rate_bps: 伝送レート (bps)

    Returns:
        float: 必要送信時間 (ms)
    """
    if rate_bps <= 0:
        raise InvalidInputError(f"レートは正の値である必要があります: {rate_bps}")
    return queue_bits * 1000.0 / rate_bps


def apply_queue_update(user: UserState, ts: float, scheduled: bool,
                       arrivals_bits: float) -> Tuple[UserState, float]:
    """
    キュー長の更新 Q' = max(Q - R·T_s·1{scheduled}, 0) + A

    Args:
        user: 更新前のユーザー状態
        ts: スケジューリング時間 (ms)
        scheduled: このスロットでグループがスケジュールされたか
        arrivals_bits: 到着データ量 (bit)

    Returns:
        Tuple[UserState, float]: (更新後の状態, 送信済みデータ量)
    """
    capacity = user.rate_bps * ts / 1000.0 if scheduled else 0.0
    served = min(user.queue_bits, capacity)
    new_queue = max(user.queue_bits - capacity, 0.0) + arrivals_bits
    return replace(user, queue_bits=new_queue), served


def padding_overhead(ts: float, t_k: float) -> float:
    return max(ts - t_k, 0.0)


def fairness_indicator(ts: float, t_k: float) -> bool:
    return ts >= t_k


def slot_energy(ts: float, power_watts: float) -> float:
    """送信エネルギー E_k = T_s × P（ms × W = mJ）"""
    return ts * power_watts


def total_throughput(users: Sequence[UserState], ts: float) -> float:
    """
    グループの合計スループット

    Args:
        users: スケジュールされたユーザー
        ts: スケジューリング時間 (ms)

    Returns:
        float: 合計スループット (bps)
    """
    queues = np.array([u.queue_bits for u in users], dtype=float)
    if ts <= 0:
        if np.any(queues > 0):
            raise InvalidInputError("データが残っているのにスケジューリング時間が0です")
        return 0.0
    rates = np.array([u.rate_bps for u in users], dtype=float)
    served = np.minimum(queues, rates * ts / 1000.0)
    return float(served.sum() / (ts / 1000.0))


def padding_matrix(candidates: np.ndarray, required: np.ndarray) -> np.ndarray:
    """候補 × ユーザーのパディング時間 H_k(ts)"""
    return np.maximum(candidates[:, None] - required[None, :], 0.0)


def emptied_matrix(candidates: np.ndarray, required: np.ndarray) -> np.ndarray:
    """候補 × ユーザーのバッファ空指標 F_k(ts)"""
    return (candidates[:, None] >= required[None, :]).astype(float)


def lyapunov_value(queues: Sequence[float]) -> float:
    """二次リアプノフ関数 ½ Σ q²"""
    q = np.asarray(queues, dtype=float)
    return float(0.5 * np.dot(q, q))


def serve_group(group: GroupState, required_ms: Sequence[float], ts: float,
                carry_over: bool = True) -> Tuple[GroupState, SlotDecision]:
    """
    スケジュールされたグループに T_s を適用し、各ユーザーの結果を計算

    Args:
        group: 到着データ反映済みのグループ状態
        required_ms: 各ユーザーの必要送信時間 T_k (ms)
        ts: 選択されたスケジューリング時間 (ms)
        carry_over: 送り切れなかったデータを次回へ持ち越すか（False なら破棄）

    Returns:
        Tuple[GroupState, SlotDecision]: (更新後のグループ, スロット結果)
    """
    users = []
    outcomes = []
    for user, t_k in zip(group.users, required_ms):
        updated, served = apply_queue_update(user, ts, True, 0.0)
        dropped = 0.0
        if not carry_over and updated.queue_bits > 0:
            dropped = updated.queue_bits
            updated = replace(updated, queue_bits=0.0)
        users.append(updated)
        outcomes.append(UserSlotOutcome(
            served_bits=served,
            padding_ms=padding_overhead(ts, t_k),
            emptied=fairness_indicator(ts, t_k),
            energy_mj=slot_energy(ts, user.tx_power_watts),
            dropped_bits=dropped,
        ))
    decision = SlotDecision(
        group_id=group.group_id,
        ts_chosen=ts,
        required_ms=tuple(float(t) for t in required_ms),
        per_user=tuple(outcomes),
    )
    return replace(group, users=tuple(users)), decision
