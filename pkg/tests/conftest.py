"""テスト共通のフィクスチャ"""

from typing import Any

import pytest

from tests.helpers import make_config, make_raw


@pytest.fixture
def config_factory():
    """KEY=VALUE の上書きから ExperimentConfig を作るファクトリ"""
    return make_config


@pytest.fixture
def single_user_raw():
    """決定的な 1 ms 需要を持つ1ユーザー・1グループの設定"""
    return dict(
        N_USERS=1, N_GROUPS=1, GROUP_SIZE=1,
        DURATION_MEANS_MS=1.0, DURATION_SHAPES='inf',
        WARMUP_FRACTION=0.0, HORIZON_SLOTS=100,
    )


@pytest.fixture
def env_file(tmp_path):
    """小規模シナリオの設定ファイルを書き出す"""
    def _write(**overrides: Any):
        raw = make_raw(**overrides)
        path = tmp_path / 'scenario.env'
        path.write_text('\n'.join(f"{k}={v}" for k, v in raw.items()) + '\n', encoding='utf-8')
        return path
    return _write
