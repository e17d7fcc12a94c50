"""
スケジューリング時間決定ポリシー
固定 (F-PPDU)・スループット最適・D-PPDU・EAD-PPDU と仮想キュー更新
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np

from modules.core_model import (
    ConfigError,
    InvalidInputError,
    PolicyConfig,
    PolicyKind,
    emptied_matrix,
    padding_matrix,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolicyState:
    """
    グループ単位のポリシー状態

    Attributes:
        config: ポリシー設定
        fairness_vq: 公平性仮想キュー X_k
        energy_vq: エネルギー仮想キュー Y_k (mJ)
        fairness_targets: 公平性目標 C_k
        energy_budgets: エネルギー予算 E_k^tot (mJ)
    """
    config: PolicyConfig
    fairness_vq: np.ndarray
    energy_vq: np.ndarray
    fairness_targets: np.ndarray
    energy_budgets: np.ndarray


def init_policy_state(config: PolicyConfig, fairness_targets: Sequence[float],
                      energy_budgets: Sequence[float]) -> PolicyState:
    k = len(fairness_targets)
    return PolicyState(
        config=config,
        fairness_vq=np.zeros(k),
        energy_vq=np.zeros(k),
        fairness_targets=np.asarray(fairness_targets, dtype=float),
        energy_budgets=np.asarray(energy_budgets, dtype=float),
    )


def _active(required: Sequence[float]) -> np.ndarray:
    required = np.asarray(required, dtype=float)
    return required[required > 0]


def grid_ceiling_index(grid: np.ndarray, value: float) -> int:
    """value 以上で最小のグリッド点のインデックス（存在しなければ len(grid)）"""
    return int(np.searchsorted(grid, value, side='left'))


def dppdu_candidates(required: Sequence[float], config: PolicyConfig) -> np.ndarray:
    """
    D-PPDU の候補集合 [T_min, T_max] ∩ グリッド

    T_max がグリッド点の間にある場合は、T_max 以上で最小のグリッド点まで含める。

    Args:
        required: 各ユーザーの必要送信時間 (ms)
        config: ポリシー設定

    Returns:
        np.ndarray: 候補時間（空の場合あり）
    """
    active = _active(required)
    grid = config.grid_array()
    grid = grid[grid <= config.ts_max_ms]
    if active.size == 0 or grid.size == 0:
        return grid[:0]
    lo = grid_ceiling_index(grid, active.min())
    hi = min(grid_ceiling_index(grid, active.max()), grid.size - 1)
    return grid[lo:hi + 1]


def fixed_ts(config: PolicyConfig) -> float:
    """
    固定スケジューリング時間（キュー状態に依存しない）

    Args:
        config: ポリシー設定 (kind=FIXED)

    Returns:
        float: fixed_ts_ms
    """
    if config.kind != PolicyKind.FIXED:
        raise InvalidInputError(f"固定ポリシー以外の設定です: {config.kind.value}")
    grid = config.grid_array()
    matches = np.flatnonzero(np.isclose(grid, config.fixed_ts_ms, rtol=0, atol=1e-9))
    if matches.size == 0:
        raise ConfigError([f"FIXED_TS_MS={config.fixed_ts_ms} が TS_GRID に含まれていません"])
    return float(grid[matches[0]])


def throughput_optimal_ts(required: Sequence[float], ts_grid: Optional[Sequence[float]] = None) -> float:
    """
    合計スループットを最大化するスケジューリング時間 T_min

    グリッド指定時は T_min 以上で最小のグリッド点を返す（グリッド超過時は最大点）。

    Args:
        required: 各ユーザーの必要送信時間 (ms)
        ts_grid: 候補グリッド（None なら連続値）

    Returns:
        float: スケジューリング時間 (ms)、全キューが空なら 0
    """
    active = _active(required)
    if active.size == 0:
        return 0.0
    t_min = float(active.min())
    if ts_grid is None:
        return t_min
    grid = np.asarray(ts_grid, dtype=float)
    idx = min(grid_ceiling_index(grid, t_min), grid.size - 1)
    return float(grid[idx])


def dppdu_objective(candidates: np.ndarray, required: np.ndarray, state: PolicyState) -> np.ndarray:
    """候補ごとの Σ_k [H_k − (X_k/V) F_k]"""
    scale = state.config.objective_scale
    weights = state.fairness_vq / state.config.v_param
    terms = padding_matrix(candidates, required) * scale - emptied_matrix(candidates, required) * weights[None, :]
    return terms.sum(axis=1)


def dppdu_choose_ts(required: Sequence[float], state: PolicyState) -> float:
    """
    パディング最小化 (D-PPDU) のスケジューリング時間

    Args:
        required: 各ユーザーの必要送信時間 (ms)
        state: ポリシー状態

    Returns:
        float: 目的関数を最小化する候補（同値なら小さい方）
    """
    required = np.asarray(required, dtype=float)
    if _active(required).size == 0:
        return 0.0
    candidates = dppdu_candidates(required, state.config)
    if candidates.size == 0:
        logger.warning(f"T_min が TS_MAX_MS={state.config.ts_max_ms} を超えたため上限に丸めます")
        return float(state.config.ts_max_ms)
    objective = dppdu_objective(candidates, required, state)
    return float(candidates[int(np.argmin(objective))])


def eadppdu_objective(candidates: np.ndarray, required: np.ndarray, powers: np.ndarray,
                      state: PolicyState) -> np.ndarray:
    """候補ごとの Σ_k [F_k − (Y_k/V) E_k]"""
    scale = state.config.objective_scale
    weights = state.energy_vq * scale / state.config.v_param
    energy = candidates[:, None] * powers[None, :] * scale
    terms = emptied_matrix(candidates, required) - energy * weights[None, :]
    return terms.sum(axis=1)


def eadppdu_choose_ts(required: Sequence[float], state: PolicyState, powers: Sequence[float]) -> float:
    """
    エネルギー考慮 (EAD-PPDU) のスケジューリング時間

    候補は T_s^max 以下の全グリッド点で、T_min を下回ることもある。

    Args:
        required: 各ユーザーの必要送信時間 (ms)
        state: ポリシー状態
        powers: 各ユーザーの送信電力 (W)

    Returns:
        float: 目的関数を最大化する候補（同値なら小さい方）
    """
    required = np.asarray(required, dtype=float)
    if _active(required).size == 0:
        return 0.0
    grid = state.config.grid_array()
    candidates = grid[grid <= state.config.ts_max_ms]
    objective = eadppdu_objective(candidates, required, np.asarray(powers, dtype=float), state)
    return float(candidates[int(np.argmax(objective))])


def choose_ts(state: PolicyState, required: Sequence[float], powers: Sequence[float]) -> float:
    """ポリシー種別に応じたスケジューリング時間の決定"""
    kind = state.config.kind
    if kind == PolicyKind.FIXED:
        return fixed_ts(state.config)
    if kind == PolicyKind.THROUGHPUT_OPTIMAL:
        return throughput_optimal_ts(required, state.config.ts_grid)
    if kind == PolicyKind.DPPDU:
        return dppdu_choose_ts(required, state)
    if kind == PolicyKind.EADPPDU:
        return eadppdu_choose_ts(required, state, powers)
    raise ConfigError([f"未対応のポリシーです: {kind}"])


def update_fairness_vq(state: PolicyState, emptied: Sequence[float]) -> PolicyState:
    """X_k ← max(X_k − F_k, 0) + C_k"""
    emptied = np.asarray(emptied, dtype=float)
    queues = np.maximum(state.fairness_vq - emptied, 0.0) + state.fairness_targets
    return replace(state, fairness_vq=queues)


def update_energy_vq(state: PolicyState, energy: Sequence[float]) -> PolicyState:
    """Y_k ← max(Y_k − E_k^tot, 0) + E_k"""
    energy = np.asarray(energy, dtype=float)
    queues = np.maximum(state.energy_vq - state.energy_budgets, 0.0) + energy
    return replace(state, energy_vq=queues)


def drift_bound_constants(fairness_targets: Sequence[float], e_max: float, e_max_tot: float) -> Dict[str, float]:
    """
    ドリフト上界の定数

    B1 = (Σ C_k² + K) / 2,  B2 = K (E_max² + E_max_tot²) / 2

    Args:
        fairness_targets: 公平性目標 C_k
        e_max: 1スロットの最大エネルギー (T_s^max × P)
        e_max_tot: 最大エネルギー予算 max_k E_k^tot

    Returns:
        dict: {'B1': ..., 'B2': ...}
    """
    targets = np.asarray(fairness_targets, dtype=float)
    k = targets.size
    b1 = (float(np.dot(targets, targets)) + k) / 2.0
    b2 = k * (e_max ** 2 + e_max_tot ** 2) / 2.0
    return {'B1': b1, 'B2': b2}


def bound_constants_for(state: PolicyState, powers: Sequence[float]) -> Dict[str, float]:
    """ポリシー状態から目的関数単位の B1, B2 を計算"""
    scale = state.config.objective_scale
    e_max = state.config.ts_max_ms * float(np.max(powers)) * scale
    e_max_tot = float(np.max(state.energy_budgets)) * scale
    return drift_bound_constants(state.fairness_targets, e_max, e_max_tot)


def performance_bounds(bounds: Dict[str, float], v_param: float, num_users: int,
                       objective_scale: float = 1.0, padding_ref_ms: Optional[float] = None,
                       emptied_ref: Optional[float] = None,
                       epsilon: Optional[float] = None) -> Dict[str, Optional[float]]:
    """
    V に対する性能上界の診断値

    ε は計算できないため、指定時のみ仮想キュー長の上界を返す。

    Args:
        bounds: drift_bound_constants の結果
        v_param: V
        num_users: K
        objective_scale: ms → 目的関数単位の係数
        padding_ref_ms: 基準となる平均パディング H* (ms)
        emptied_ref: 基準となる平均 S_tot*
        epsilon: スレーター条件の余裕 ε

    Returns:
        dict: 上界・ギャップ項
    """
    padding_gap_ms = bounds['B1'] / v_param / objective_scale
    emptied_gap = bounds['B2'] / v_param
    result: Dict[str, Optional[float]] = {
        'padding_gap_ms': padding_gap_ms,
        'emptied_gap': emptied_gap,
        'padding_upper_ms': None,
        'emptied_lower': None,
        'fairness_backlog_upper': None,
        'energy_backlog_upper': None,
    }
    if padding_ref_ms is not None:
        result['padding_upper_ms'] = padding_ref_ms + padding_gap_ms
    if emptied_ref is not None:
        result['emptied_lower'] = emptied_ref - emptied_gap
    if epsilon is not None and epsilon > 0:
        if padding_ref_ms is not None:
            result['fairness_backlog_upper'] = (bounds['B1'] + v_param * padding_ref_ms * objective_scale) / epsilon
        result['energy_backlog_upper'] = (bounds['B2'] + v_param * num_users) / epsilon
    return result
