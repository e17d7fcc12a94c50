"""テスト用の設定ビルダー"""

from typing import Any, Dict

from modules.config_loader import ExperimentConfig, build_config

# 1グループ・5ユーザー、目的関数は秒単位、未送信データは次回へ持ち越し
BASE_RAW: Dict[str, Any] = {
    'N_USERS': 5,
    'N_GROUPS': 1,
    'GROUP_SIZE': 5,
    'POLICY': 'dppdu',
    'V': 100,
    'OBJECTIVE_UNIT': 's',
    'CARRY_OVER': 'true',
    'HORIZON_SLOTS': 2000,
    'SEED': 42,
}


def make_raw(**overrides: Any) -> Dict[str, str]:
    raw = dict(BASE_RAW)
    raw.update(overrides)
    return {key: str(value) for key, value in raw.items()}


def make_config(**overrides: Any) -> ExperimentConfig:
    return build_config(make_raw(**overrides))
