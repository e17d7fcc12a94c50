"""
シミュレーションエンジン
ラウンドロビンのスロット同期シミュレーション、固定時間の総当たり探索、V スイープ
"""

import logging
import multiprocessing
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from modules import __version__
from modules.config_loader import ExperimentConfig
from modules.core_model import (
    GroupState,
    InvalidInputError,
    PolicyKind,
    SlotDecision,
    UserState,
    serve_group,
)
from modules.metrics import MetricsAccumulator, constraint_slack, stability_check, worst_violation
from modules.overhead import dppdu_breakeven, total_exchange_time
from modules.policies import (
    PolicyState,
    bound_constants_for,
    choose_ts,
    init_policy_state,
    performance_bounds,
    update_energy_vq,
    update_fairness_vq,
)
from modules.traffic import RNG_NAME, create_group_rngs, sample_slot_demands
from utils.helpers import log_performance

logger = logging.getLogger(__name__)

SEARCH_PROBLEMS = ('padding', 'energy')


@dataclass
class SimRun:
    """1回のシミュレーション実行の可変状態"""
    config: ExperimentConfig
    groups: List[GroupState]
    policy_states: List[PolicyState]
    rngs: List[np.random.Generator]
    metrics: List[MetricsAccumulator]
    slot: int = 0

    @property
    def measure_from(self) -> int:
        return int(self.config.horizon_slots * self.config.warmup_fraction)


@dataclass
class RunReport:
    """
    実行結果

    Attributes:
        policy: ポリシー名
        v_param: V
        fixed_ts_ms: 固定ポリシーの時間（固定以外は None）
        headline: グループ1の要約（全グループは統計的に同一のため代表とする）
        group_summaries: グループ別のスカラー指標
        user_summary: グループ1のユーザー別指標と制約の余裕
        constraints: 制約充足フラグと最大違反量
        trace: グループ1のスロット別トレース
        bounds: ドリフト上界定数と V 依存のギャップ項
        metadata: シード・乱数生成器・設定ハッシュ等
        stability: グループ1の実キュー・仮想キューの安定性比率と発散フラグ
    """
    policy: str
    v_param: float
    fixed_ts_ms: Optional[float]
    headline: Dict[str, object]
    group_summaries: pd.DataFrame
    user_summary: pd.DataFrame
    constraints: Dict[str, object]
    trace: pd.DataFrame
    bounds: Dict[str, object]
    metadata: Dict[str, object] = field(default_factory=dict)
    stability: Dict[str, object] = field(default_factory=dict)

    @property
    def mean_H_tot_ms(self) -> float:
        return float(self.group_summaries['avg_H_tot_ms'].mean())

    @property
    def mean_S_tot(self) -> float:
        return float(self.group_summaries['avg_S_tot'].mean())

    def to_metrics_row(self) -> Dict[str, object]:
        """metrics.csv の1行分"""
        row: Dict[str, object] = {
            'policy': self.policy,
            'V': self.v_param,
            'fixed_ts_ms': self.fixed_ts_ms,
            'avg_H_tot_ms': self.headline['avg_H_tot_ms'],
            'avg_Ts_ms': self.headline['avg_Ts_ms'],
            'avg_S_tot': self.headline['avg_S_tot'],
        }
        for k, value in enumerate(self.headline['avg_F'], start=1):
            row[f'avg_F_{k}'] = float(value)
        for k, value in enumerate(self.headline['avg_E_mJ'], start=1):
            row[f'avg_E_{k}_mJ'] = float(value)
        for k, ok in enumerate(self.constraints['fairness_ok'], start=1):
            row[f'F_ok_{k}'] = bool(ok)
        for k, ok in enumerate(self.constraints['energy_ok'], start=1):
            row[f'E_ok_{k}'] = bool(ok)
        row.update({
            'all_fairness_ok': self.constraints['all_fairness_ok'],
            'all_energy_ok': self.constraints['all_energy_ok'],
            'diverging': bool(self.stability.get('diverging', False)),
            'mean_H_tot_ms_all_groups': self.mean_H_tot_ms,
            'mean_S_tot_all_groups': self.mean_S_tot,
            'avg_D_tot_bps': self.headline['avg_D_tot_bps'],
            'avg_exchange_us': self.headline['avg_exchange_us'],
            'overhead_share': self.headline['overhead_share'],
            'breakeven_share': self.headline['breakeven_share'],
            'measured_slots': self.headline['measured_slots'],
        })
        return row


def initialize_run(config: ExperimentConfig) -> SimRun:
    """
    全グループの初期状態・ポリシー状態・乱数生成器を準備

    Args:
        config: 実験設定

    Returns:
        SimRun: 初期化済みの実行状態
    """
    if config.horizon_slots < config.n_groups:
        raise InvalidInputError(f"HORIZON_SLOTS={config.horizon_slots} が N_GROUPS={config.n_groups} 未満です")
    k = config.group_size
    initial_rate = (config.traffic.reference_rate_bps if config.traffic.mode == 'duration'
                    else config.traffic.rate_set_bps[0])
    groups = []
    policy_states = []
    metrics = []
    for g in range(config.n_groups):
        users = tuple(
            UserState(
                queue_bits=0.0,
                rate_bps=initial_rate,
                fairness_target=config.fairness_targets[i],
                energy_budget=config.energy_budgets_mj[i],
                tx_power_watts=config.tx_power_w,
            )
            for i in range(k)
        )
        groups.append(GroupState(group_id=g + 1, users=users))
        policy_states.append(init_policy_state(config.policy, config.fairness_targets, config.energy_budgets_mj))
        metrics.append(MetricsAccumulator(group_id=g + 1, num_users=k, keep_trace=(g == 0)))
    return SimRun(
        config=config,
        groups=groups,
        policy_states=policy_states,
        rngs=create_group_rngs(config.seed, config.n_groups),
        metrics=metrics,
    )


def simulate_slot(group: GroupState, state: PolicyState, config: ExperimentConfig,
                  rng: np.random.Generator) -> Tuple[GroupState, PolicyState, SlotDecision]:
    """
    スケジュールされた1グループの1スロット処理

    需要生成 → T_s 決定 → 送信とキュー更新 → 仮想キュー更新

    Args:
        group: グループ状態
        state: ポリシー状態
        config: 実験設定
        rng: グループの乱数生成器

    Returns:
        Tuple[GroupState, PolicyState, SlotDecision]: 更新後の状態とスロット結果
    """
    group, demands = sample_slot_demands(group, config.traffic, rng)
    required = np.array([d.duration_ms for d in demands])
    ts = choose_ts(state, required, group.powers())
    group, decision = serve_group(group, required, ts, config.traffic.carry_over)

    state = update_fairness_vq(state, decision.emptied_array())
    state = update_energy_vq(state, decision.energy_array())
    users = tuple(
        replace(u, fairness_vq=float(x), energy_vq=float(y))
        for u, x, y in zip(group.users, state.fairness_vq, state.energy_vq)
    )
    return replace(group, users=users), state, decision


def advance(sim: SimRun) -> SlotDecision:
    """スロット t でグループ 1 + (t mod L) を処理し、指標を記録"""
    config = sim.config
    g = sim.slot % config.n_groups
    group, state, decision = simulate_slot(sim.groups[g], sim.policy_states[g], config, sim.rngs[g])
    sim.groups[g] = group
    sim.policy_states[g] = state

    exchange_us = total_exchange_time(config.policy.kind, decision.ts_chosen, group.size, config.timing)
    active = [t for t in decision.required_ms if t > 0]
    breakeven = bool(active) and dppdu_breakeven(config.policy.fixed_ts_ms, min(active), config.timing)
    sim.metrics[g].record(
        slot=sim.slot,
        decision=decision,
        fairness_vq=state.fairness_vq,
        energy_vq=state.energy_vq,
        backlog_bits=group.queues(),
        exchange_us=exchange_us,
        breakeven=breakeven,
        measured=sim.slot >= sim.measure_from,
    )
    logger.debug(f"slot={sim.slot} group={g + 1} ts={decision.ts_chosen:.3f}ms")
    sim.slot += 1
    return decision


def _constraint_flags(summaries: List[Dict[str, object]], config: ExperimentConfig) -> Dict[str, object]:
    tol = config.constraint_tolerance
    targets = np.asarray(config.fairness_targets)
    budgets = np.asarray(config.energy_budgets_mj)
    fairness_slacks = [constraint_slack(s['avg_F'], targets) for s in summaries]
    energy_slacks = [constraint_slack(s['avg_E_mJ'], budgets, upper=True) for s in summaries]
    return {
        'fairness_ok': [bool(v) for v in fairness_slacks[0] >= -tol],
        'energy_ok': [bool(v) for v in energy_slacks[0] >= -tol],
        'all_fairness_ok': bool(all((s >= -tol).all() for s in fairness_slacks)),
        'all_energy_ok': bool(all((s >= -tol).all() for s in energy_slacks)),
        'worst_fairness_violation': worst_violation(fairness_slacks),
        'worst_energy_violation': worst_violation(energy_slacks),
    }


def build_report(sim: SimRun) -> RunReport:
    """
    集計結果から RunReport を作成

    Args:
        sim: 実行済みの SimRun

    Returns:
        RunReport: 実行結果
    """
    config = sim.config
    summaries = [m.summary() for m in sim.metrics]
    scalar_keys = [key for key, value in summaries[0].items() if not isinstance(value, np.ndarray)]
    group_summaries = pd.DataFrame([{key: s[key] for key in scalar_keys} for s in summaries])

    headline = summaries[0]
    targets = np.asarray(config.fairness_targets)
    budgets = np.asarray(config.energy_budgets_mj)
    user_summary = pd.DataFrame({
        'user': np.arange(1, config.group_size + 1),
        'mean_duration_ms': np.asarray(config.traffic.duration_means_ms),
        'fairness_target': targets,
        'avg_F': headline['avg_F'],
        'fairness_slack': constraint_slack(headline['avg_F'], targets),
        'energy_budget_mJ': budgets,
        'avg_E_mJ': headline['avg_E_mJ'],
        'energy_slack_mJ': constraint_slack(headline['avg_E_mJ'], budgets, upper=True),
        'avg_H_ms': headline['avg_H_ms'],
        'avg_backlog_bits': headline['avg_backlog_bits'],
        'avg_dropped_bits': headline['avg_dropped_bits'],
    })
    constraints = _constraint_flags(summaries, config)

    kind = config.policy.kind
    if kind == PolicyKind.DPPDU and not constraints['all_fairness_ok']:
        logger.warning(f"公平性制約を満たしていないユーザーがあります (V={config.policy.v_param}, "
                       f"最大違反={constraints['worst_fairness_violation']:.4f})")
    if kind == PolicyKind.EADPPDU and not constraints['all_energy_ok']:
        logger.warning(f"エネルギー制約を満たしていないユーザーがあります (V={config.policy.v_param}, "
                       f"最大違反={constraints['worst_energy_violation']:.4f}mJ)")

    trace = sim.metrics[0].trace_frame()
    stability = stability_check(trace, float(np.sum(headline['avg_served_bits'])))
    if stability['diverging']:
        logger.warning(f"グループ1のキューが発散しています (V={config.policy.v_param}, "
                       f"バックログ比={stability['backlog_ratio']:.2f}, "
                       f"最終四半期の平均バックログ={stability['final_backlog_bits']:.3g}bit)")

    state = sim.policy_states[0]
    constants = bound_constants_for(state, sim.groups[0].powers())
    bounds = dict(constants)
    bounds.update(performance_bounds(constants, config.policy.v_param, config.group_size,
                                     config.policy.objective_scale))
    bounds['objective_unit'] = config.policy.objective_unit

    metadata = {
        'seed': config.seed,
        'rng': RNG_NAME,
        'config_hash': config.config_hash(),
        'software_version': __version__,
        'horizon_slots': config.horizon_slots,
        'warmup_fraction': config.warmup_fraction,
        'slots_run': sim.slot,
        'slots_per_group': sim.metrics[0].scheduled_slots,
    }
    return RunReport(
        policy=kind.value,
        v_param=config.policy.v_param,
        fixed_ts_ms=config.policy.fixed_ts_ms if kind == PolicyKind.FIXED else None,
        headline=headline,
        group_summaries=group_summaries,
        user_summary=user_summary,
        constraints=constraints,
        trace=trace,
        bounds=bounds,
        metadata=metadata,
        stability=stability,
    )


@log_performance
def run(config: ExperimentConfig) -> RunReport:
    """
    シミュレーションを1回実行

    Args:
        config: 実験設定

    Returns:
        RunReport: 時間平均・トレース・メタデータ
    """
    sim = initialize_run(config)
    logger.info(f"シミュレーション開始: policy={config.policy.kind.value}, V={config.policy.v_param}, "
                f"horizon={config.horizon_slots}, L={config.n_groups}, seed={config.seed}")
    for _ in range(config.horizon_slots):
        advance(sim)
    report = build_report(sim)
    logger.info(f"シミュレーション終了: 平均H_tot={report.headline['avg_H_tot_ms']:.4f}ms, "
                f"平均T_s={report.headline['avg_Ts_ms']:.4f}ms")
    return report


def run_many(configs: Sequence[ExperimentConfig], workers: int = 1) -> List[RunReport]:
    """
    独立な複数実行（workers > 1 ならプロセス並列）

    各実行は自身の設定のシードだけで決まるため、並列でも結果は逐次実行と同一。

    Args:
        configs: 実験設定のリスト
        workers: 並列プロセス数

    Returns:
        List[RunReport]: configs と同じ順序の結果
    """
    configs = list(configs)
    if workers <= 1 or len(configs) <= 1:
        return [run(c) for c in configs]
    context = multiprocessing.get_context('spawn')
    with context.Pool(processes=min(workers, len(configs))) as pool:
        return pool.map(run, configs)


def v_sweep(config: ExperimentConfig, v_values: Optional[Sequence[float]] = None,
            workers: Optional[int] = None) -> List[RunReport]:
    """
    V を変えた独立実行（同一シード）

    Args:
        config: 実験設定
        v_values: V のリスト（None なら設定の SWEEP_V_LIST）
        workers: 並列プロセス数（None なら設定値）

    Returns:
        List[RunReport]: V ごとの結果
    """
    v_values = list(config.sweep_v_values if v_values is None else v_values)
    if not v_values or any(not v > 0 for v in v_values):
        raise InvalidInputError(f"V のリストは正の値を1つ以上含む必要があります: {v_values}")
    configs = [config.with_policy(v_param=float(v)) for v in v_values]
    logger.info(f"V スイープ: {v_values}")
    return run_many(configs, config.workers if workers is None else workers)


@dataclass
class SearchResult:
    """
    固定時間の総当たり探索 (Hypo. F-PPDU) の結果

    Attributes:
        problem: 'padding' または 'energy'
        best_ts: 最良の固定時間（実行可能解がなければ None）
        best_report: 最良候補の RunReport
        table: 候補別の結果表
        diagnostic: 実行可能解がない場合の最小違反候補
    """
    problem: str
    best_ts: Optional[float]
    best_report: Optional[RunReport]
    table: pd.DataFrame
    diagnostic: Optional[Dict[str, object]] = None


def search_candidates(config: ExperimentConfig) -> np.ndarray:
    grid = config.policy.grid_array()
    mask = grid <= config.policy.ts_max_ms
    if config.search_ts_min_ms is not None:
        mask &= grid >= config.search_ts_min_ms
    if config.search_ts_max_ms is not None:
        mask &= grid <= config.search_ts_max_ms
    return grid[mask]


def hypothetical_fppdu_search(config: ExperimentConfig, problem: str = 'padding',
                              workers: Optional[int] = None) -> SearchResult:
    """
    固定ポリシーを候補ごとに実行し、制約を満たす最良の固定時間を探す

    padding: 全公平性制約を満たす候補のうち平均 H_tot 最小
    energy: 全エネルギー制約を満たす候補のうち平均 S_tot 最大
    同値の場合は小さい候補を選ぶ。

    Args:
        config: 実験設定
        problem: 'padding' または 'energy'
        workers: 並列プロセス数（None なら設定値）

    Returns:
        SearchResult: 探索結果
    """
    if problem not in SEARCH_PROBLEMS:
        raise InvalidInputError(f"problem は {SEARCH_PROBLEMS} のいずれかです: {problem!r}")
    candidates = search_candidates(config)
    if candidates.size == 0:
        raise InvalidInputError("探索候補のグリッドが空です")

    configs = [config.with_policy(kind=PolicyKind.FIXED, fixed_ts_ms=float(ts)) for ts in candidates]
    logger.info(f"固定時間探索 ({problem}): 候補{len(configs)}件")
    reports = run_many(configs, config.workers if workers is None else workers)

    feasibility_key = 'all_fairness_ok' if problem == 'padding' else 'all_energy_ok'
    violation_key = 'worst_fairness_violation' if problem == 'padding' else 'worst_energy_violation'
    rows = []
    for ts, report in zip(candidates, reports):
        rows.append({
            'fixed_ts_ms': float(ts),
            'mean_H_tot_ms': report.mean_H_tot_ms,
            'mean_S_tot': report.mean_S_tot,
            'avg_Ts_ms': report.headline['avg_Ts_ms'],
            'all_fairness_ok': report.constraints['all_fairness_ok'],
            'all_energy_ok': report.constraints['all_energy_ok'],
            'worst_fairness_violation': report.constraints['worst_fairness_violation'],
            'worst_energy_violation': report.constraints['worst_energy_violation'],
            'feasible': report.constraints[feasibility_key],
        })
    table = pd.DataFrame(rows)

    best_index = None
    for i, row in enumerate(rows):
        if not row['feasible']:
            continue
        if best_index is None:
            best_index = i
        elif problem == 'padding' and row['mean_H_tot_ms'] < rows[best_index]['mean_H_tot_ms']:
            best_index = i
        elif problem == 'energy' and row['mean_S_tot'] > rows[best_index]['mean_S_tot']:
            best_index = i

    if best_index is None:
        closest = int(np.argmin([row[violation_key] for row in rows]))
        diagnostic = {
            'message': '全ての制約を満たす候補がありません',
            'closest_ts_ms': rows[closest]['fixed_ts_ms'],
            'violation': rows[closest][violation_key],
        }
        logger.warning(f"{diagnostic['message']}: 最小違反 {diagnostic['violation']:.4f} "
                       f"(T_s={diagnostic['closest_ts_ms']}ms)")
        return SearchResult(problem=problem, best_ts=None, best_report=None, table=table, diagnostic=diagnostic)

    best_ts = rows[best_index]['fixed_ts_ms']
    logger.info(f"最良の固定時間: {best_ts}ms")
    return SearchResult(problem=problem, best_ts=best_ts, best_report=reports[best_index], table=table)
