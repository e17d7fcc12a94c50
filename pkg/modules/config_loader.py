"""
設定ローダーモジュール
KEY=VALUE 形式のシナリオファイルの読み込みとバリデーション
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values

from modules.core_model import ConfigError, PolicyConfig, PolicyKind
from modules.overhead import MacTimingConfig
from modules.traffic import (
    DEFAULT_DURATION_MEANS_MS,
    DEFAULT_DURATION_SHAPE,
    DEFAULT_REFERENCE_RATE_BPS,
    TrafficModel,
)
from utils.helpers import stable_hash, to_jsonable
from utils.units import (
    HE_20MHZ_RATES_BPS,
    dbm_to_watts,
    expand_per_user,
    parse_bool,
    parse_float_list,
    parse_grid,
)

logger = logging.getLogger(__name__)

ENV_PREFIX = 'OFDMA_'

REQUIRED_KEYS = ('N_USERS', 'N_GROUPS', 'GROUP_SIZE', 'POLICY')

DEFAULTS: Dict[str, str] = {
    'V': '1000',
    'FIXED_TS_MS': '1.0',
    'TS_GRID': '0.05:0.05:12',
    'TS_MAX_MS': '12.0',
    'OBJECTIVE_UNIT': 'ms',
    'FAIRNESS_TARGETS': '0.65',
    'ENERGY_BUDGET_FACTOR': '1.2',
    'TX_POWER_W': '0.31',
    'TRAFFIC_MODE': 'duration',
    'DURATION_MEANS_MS': ','.join(str(m) for m in DEFAULT_DURATION_MEANS_MS),
    'DURATION_SHAPES': str(DEFAULT_DURATION_SHAPE),
    'REFERENCE_RATE_BPS': str(DEFAULT_REFERENCE_RATE_BPS),
    'RATE_SET_BPS': ','.join(f"{r:.6g}" for r in HE_20MHZ_RATES_BPS),
    'ARRIVAL_MEAN_PACKETS': '1.0',
    'PACKET_BITS': '12000',
    'CARRY_OVER': 'true',
    'HORIZON_SLOTS': '200000',
    'WARMUP_FRACTION': '0.5',
    'SEED': '42',
    'OUTPUT_DIR': 'results',
    'TRACE': 'false',
    'TRACE_EVERY': '100',
    'CONSTRAINT_TOLERANCE': '0.0',
    'WORKERS': '1',
    'SWEEP_V_LIST': '100,500,1000,2000,3000',
    'SIFS_US': '16',
    'PIFS_US': '25',
    'PREAMBLE_US': '56',
    'PER_USER_INFO_US': '2.6',
}

OPTIONAL_KEYS = ('ENERGY_BUDGETS_MJ', 'TX_POWER_DBM', 'SEARCH_TS_MIN_MS', 'SEARCH_TS_MAX_MS')

KNOWN_KEYS = set(REQUIRED_KEYS) | set(DEFAULTS) | set(OPTIONAL_KEYS)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    実験設定（全項目解決済み）

    Attributes:
        n_users: 全ユーザー数 N
        n_groups: グループ数 L
        group_size: グループ内ユーザー数 K
        traffic: トラフィックモデル（シードを含む）
        policy: ポリシー設定
        fairness_targets: C_k
        energy_budgets_mj: E_k^tot (mJ)
        tx_power_w: 送信電力 P (W)
        timing: MAC タイミング定数
        horizon_slots: シミュレーションの総スロット数
        warmup_fraction: 平均から除外する先頭スロットの割合
    """
    n_users: int
    n_groups: int
    group_size: int
    traffic: TrafficModel = field(default_factory=TrafficModel)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    fairness_targets: Tuple[float, ...] = (0.65,) * 5
    energy_budgets_mj: Tuple[float, ...] = (1.0,) * 5
    tx_power_w: float = 0.31
    timing: MacTimingConfig = field(default_factory=MacTimingConfig)
    horizon_slots: int = 200000
    warmup_fraction: float = 0.5
    output_dir: str = 'results'
    trace: bool = False
    trace_every: int = 100
    constraint_tolerance: float = 0.0
    workers: int = 1
    sweep_v_values: Tuple[float, ...] = (100.0, 500.0, 1000.0, 2000.0, 3000.0)
    search_ts_min_ms: Optional[float] = None
    search_ts_max_ms: Optional[float] = None

    @property
    def seed(self) -> int:
        return self.traffic.rng_seed

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable(asdict(self))

    def config_hash(self) -> str:
        return stable_hash(self.to_dict())

    def with_policy(self, **changes) -> 'ExperimentConfig':
        return replace(self, policy=replace(self.policy, **changes))

    def with_traffic(self, **changes) -> 'ExperimentConfig':
        return replace(self, traffic=replace(self.traffic, **changes))

    def with_seed(self, seed: int) -> 'ExperimentConfig':
        return self.with_traffic(rng_seed=int(seed))


def _to_int(text: str) -> int:
    try:
        return int(str(text).strip())
    except ValueError:
        pass
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"整数ではありません: {text!r}")
    return int(value)


def _parse_policy_kind(text: str) -> PolicyKind:
    normalized = str(text).strip().lower().replace('-', '_')
    aliases = {'throughputoptimal': 'throughput_optimal', 'd_ppdu': 'dppdu', 'ead_ppdu': 'eadppdu'}
    return PolicyKind(aliases.get(normalized, normalized))


def merge_sources(file_values: Mapping[str, Optional[str]],
                  environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """
    ファイル値と環境変数 (OFDMA_<KEY>) をマージ

    Args:
        file_values: dotenv_values の結果
        environ: 環境変数（None なら os.environ）

    Returns:
        dict: マージ済みの生設定
    """
    environ = os.environ if environ is None else environ
    merged = {k.strip().upper(): v for k, v in file_values.items() if v is not None and str(v).strip() != ''}
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX) and key[len(ENV_PREFIX):] in KNOWN_KEYS:
            merged[key[len(ENV_PREFIX):]] = value
    return merged


def _parse_fields(raw: Mapping[str, Any]) -> Tuple[Dict[str, Any], List[str]]:
    """生設定を型変換する。変換できない項目はエラーとして集める"""
    errors: List[str] = []
    values: Dict[str, Any] = {}
    source = {k.upper(): str(v) for k, v in raw.items() if v is not None}

    missing = [key for key in REQUIRED_KEYS if key not in source]
    if missing:
        errors.append(f"必須項目が不足しています: {missing}")

    unknown = sorted(set(source) - KNOWN_KEYS)
    if unknown:
        logger.warning(f"未知の設定項目を無視します: {unknown}")

    def convert(key: str, parser: Callable[[str], Any]):
        text = source.get(key, DEFAULTS.get(key))
        if text is None:
            return
        try:
            values[key] = parser(text)
        except (ValueError, TypeError) as e:
            errors.append(f"{key}: 値 {text!r} を解釈できません（{e}）")

    for key in ('N_USERS', 'N_GROUPS', 'GROUP_SIZE', 'HORIZON_SLOTS', 'SEED', 'TRACE_EVERY', 'WORKERS'):
        convert(key, _to_int)
    for key in ('V', 'FIXED_TS_MS', 'TS_MAX_MS', 'ENERGY_BUDGET_FACTOR', 'TX_POWER_W', 'TX_POWER_DBM',
                'REFERENCE_RATE_BPS', 'PACKET_BITS', 'WARMUP_FRACTION', 'CONSTRAINT_TOLERANCE',
                'SIFS_US', 'PIFS_US', 'PREAMBLE_US', 'PER_USER_INFO_US',
                'SEARCH_TS_MIN_MS', 'SEARCH_TS_MAX_MS'):
        convert(key, float)
    for key in ('FAIRNESS_TARGETS', 'ENERGY_BUDGETS_MJ', 'DURATION_MEANS_MS', 'DURATION_SHAPES',
                'RATE_SET_BPS', 'ARRIVAL_MEAN_PACKETS', 'SWEEP_V_LIST'):
        convert(key, parse_float_list)
    for key in ('CARRY_OVER', 'TRACE'):
        convert(key, parse_bool)
    convert('POLICY', _parse_policy_kind)
    convert('TS_GRID', parse_grid)
    convert('TRAFFIC_MODE', lambda s: s.strip().lower())
    convert('OBJECTIVE_UNIT', lambda s: s.strip().lower())
    convert('OUTPUT_DIR', lambda s: s.strip())
    return values, errors


def _per_user(values: Dict[str, Any], key: str, group_size: int, errors: List[str]) -> Optional[List[float]]:
    if key not in values:
        return None
    try:
        return expand_per_user(values[key], group_size, key)
    except ValueError as e:
        errors.append(str(e))
        return None


def _assemble(values: Dict[str, Any], errors: List[str]) -> Optional[ExperimentConfig]:
    """型変換済みの値から ExperimentConfig を組み立て、意味的な制約を検証"""
    if any(key not in values for key in REQUIRED_KEYS):
        return None
    n, l, k = values['N_USERS'], values['N_GROUPS'], values['GROUP_SIZE']
    if n < 1 or l < 1 or k < 1:
        errors.append("N_USERS, N_GROUPS, GROUP_SIZE は1以上である必要があります")
        return None
    if n != l * k:
        errors.append(f"N_USERS={n} は N_GROUPS×GROUP_SIZE={l * k} と一致する必要があります")

    fairness = _per_user(values, 'FAIRNESS_TARGETS', k, errors)
    means = _per_user(values, 'DURATION_MEANS_MS', k, errors)
    shapes = _per_user(values, 'DURATION_SHAPES', k, errors)
    arrivals = _per_user(values, 'ARRIVAL_MEAN_PACKETS', k, errors)
    budgets = _per_user(values, 'ENERGY_BUDGETS_MJ', k, errors)

    power = values.get('TX_POWER_W', 0.31)
    if 'TX_POWER_DBM' in values:
        power = dbm_to_watts(values['TX_POWER_DBM'])
    if not power > 0:
        errors.append(f"送信電力は正の値である必要があります: {power}")

    if fairness is not None and any(not 0 < c <= 1 for c in fairness):
        errors.append("FAIRNESS_TARGETS は (0, 1] の範囲である必要があります")
    if budgets is None and means is not None:
        factor = values.get('ENERGY_BUDGET_FACTOR', 1.2)
        if not factor > 0:
            errors.append("ENERGY_BUDGET_FACTOR は正の値である必要があります")
        budgets = [factor * m * power for m in means]
    if budgets is not None and any(not b > 0 for b in budgets):
        errors.append("ENERGY_BUDGETS_MJ は正の値である必要があります")

    horizon = values.get('HORIZON_SLOTS', 0)
    if horizon < l:
        errors.append(f"HORIZON_SLOTS={horizon} は N_GROUPS={l} 以上である必要があります")
    warmup = values.get('WARMUP_FRACTION', 0.5)
    if not 0 <= warmup < 1:
        errors.append("WARMUP_FRACTION は [0, 1) の範囲である必要があります")
    if values.get('TRACE_EVERY', 1) < 1:
        errors.append("TRACE_EVERY は1以上である必要があります")
    if values.get('WORKERS', 1) < 1:
        errors.append("WORKERS は1以上である必要があります")
    if values.get('CONSTRAINT_TOLERANCE', 0.0) < 0:
        errors.append("CONSTRAINT_TOLERANCE は非負である必要があります")
    sweep = values.get('SWEEP_V_LIST', [])
    if not sweep or any(not v > 0 for v in sweep):
        errors.append("SWEEP_V_LIST は正の値を1つ以上含む必要があります")

    if any(x is None for x in (fairness, means, shapes, arrivals, budgets)) or errors:
        return None

    traffic = TrafficModel(
        mode=values['TRAFFIC_MODE'],
        duration_means_ms=tuple(means),
        duration_shapes=tuple(shapes),
        reference_rate_bps=values['REFERENCE_RATE_BPS'],
        rate_set_bps=tuple(values['RATE_SET_BPS']),
        arrival_mean_packets=tuple(arrivals),
        packet_bits=values['PACKET_BITS'],
        carry_over=values['CARRY_OVER'],
        rng_seed=values['SEED'],
    )
    policy = PolicyConfig(
        kind=values['POLICY'],
        v_param=values['V'],
        ts_grid=tuple(float(g) for g in values['TS_GRID']),
        ts_max_ms=values['TS_MAX_MS'],
        fixed_ts_ms=values['FIXED_TS_MS'],
        objective_unit=values['OBJECTIVE_UNIT'],
    )
    timing = MacTimingConfig(
        sifs_us=values['SIFS_US'],
        pifs_us=values['PIFS_US'],
        mac_phy_preamble_us=values['PREAMBLE_US'],
        per_user_info_us=values['PER_USER_INFO_US'],
    )
    errors.extend(traffic.validate(k))
    errors.extend(policy.validate())
    errors.extend(timing.validate())
    if errors:
        return None

    return ExperimentConfig(
        n_users=n,
        n_groups=l,
        group_size=k,
        traffic=traffic,
        policy=policy,
        fairness_targets=tuple(fairness),
        energy_budgets_mj=tuple(budgets),
        tx_power_w=power,
        timing=timing,
        horizon_slots=horizon,
        warmup_fraction=warmup,
        output_dir=values['OUTPUT_DIR'],
        trace=values['TRACE'],
        trace_every=values['TRACE_EVERY'],
        constraint_tolerance=values['CONSTRAINT_TOLERANCE'],
        workers=values['WORKERS'],
        sweep_v_values=tuple(sweep),
        search_ts_min_ms=values.get('SEARCH_TS_MIN_MS'),
        search_ts_max_ms=values.get('SEARCH_TS_MAX_MS'),
    )


def validate_config(raw: Mapping[str, Any]) -> Tuple[bool, List[str]]:
    """
    生設定のバリデーション

    Args:
        raw: KEY=VALUE の辞書

    Returns:
        Tuple[bool, List[str]]: (検証結果, エラーメッセージリスト)
    """
    values, errors = _parse_fields(raw)
    _assemble(values, errors)
    return len(errors) == 0, errors


def build_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """
    生設定から ExperimentConfig を構築

    Args:
        raw: KEY=VALUE の辞書（値は文字列または数値）

    Returns:
        ExperimentConfig: 検証済み設定

    Raises:
        ConfigError: 項目の不足・不正
    """
    values, errors = _parse_fields(raw)
    config = _assemble(values, errors)
    if errors or config is None:
        raise ConfigError(errors or ["設定を構築できませんでした"])
    return config


def parse_config(path: Union[str, Path], environ: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """
    シナリオファイルを読み込んで ExperimentConfig を返す

    Args:
        path: KEY=VALUE 形式の設定ファイル
        environ: 上書き用の環境変数（None なら os.environ）

    Returns:
        ExperimentConfig: 検証済み設定
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"設定ファイルが見つかりません: {path}"])
    raw = merge_sources(dotenv_values(path), environ)
    config = build_config(raw)
    logger.info(f"設定を読み込みました: {path} (N={config.n_users}, L={config.n_groups}, "
                f"K={config.group_size}, policy={config.policy.kind.value})")
    return config


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None, horizon: Optional[int] = None,
                    output_dir: Optional[str] = None, trace: Optional[bool] = None,
                    workers: Optional[int] = None, v_param: Optional[float] = None) -> ExperimentConfig:
    """
    CLI フラグによる上書き

    Returns:
        ExperimentConfig: 上書き後の設定（再検証済み）
    """
    errors = []
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            errors.append(f"--seed は 0 以上 2^64 未満の整数です: {seed}")
        else:
            config = config.with_seed(seed)
    if horizon is not None:
        if horizon < config.n_groups:
            errors.append(f"--horizon={horizon} は N_GROUPS={config.n_groups} 以上である必要があります")
        else:
            config = replace(config, horizon_slots=horizon)
    if output_dir is not None:
        config = replace(config, output_dir=output_dir)
    if trace is not None:
        config = replace(config, trace=trace)
    if workers is not None:
        if workers < 1:
            errors.append("--workers は1以上である必要があります")
        else:
            config = replace(config, workers=workers)
    if v_param is not None:
        if not v_param > 0 or not math.isfinite(v_param):
            errors.append(f"--v は正の値である必要があります: {v_param}")
        else:
            config = config.with_policy(v_param=v_param)
    if errors:
        raise ConfigError(errors)
    return config
