from pathlib import Path

import pytest

from modules.config_loader import (
    apply_overrides,
    build_config,
    merge_sources,
    parse_config,
    validate_config,
)
from modules.core_model import ConfigError, PolicyKind
from tests.helpers import make_raw

SCENARIO = Path(__file__).resolve().parent.parent / 'config' / 'evaluation_scenario.env'


class TestShippedScenario:
    def test_values(self):
        config = parse_config(SCENARIO, environ={})
        assert (config.n_users, config.n_groups, config.group_size) == (100, 20, 5)
        assert config.fairness_targets == (0.65,) * 5
        assert config.tx_power_w == 0.31
        assert config.policy.kind == PolicyKind.DPPDU
        assert config.policy.v_param == 100.0
        assert config.policy.objective_unit == 's'
        assert config.traffic.carry_over is True
        assert config.traffic.duration_means_ms == (0.2, 0.4, 0.6, 0.8, 1.0)
        grid = config.policy.grid_array()
        assert grid.size == 240 and grid[0] == 0.05 and grid[-1] == 12.0

    def test_horizon_gives_each_group_two_hundred_thousand_slots(self):
        config = parse_config(SCENARIO, environ={})
        assert config.horizon_slots == 200000 * config.n_groups
        assert config.horizon_slots % config.n_groups == 0

    def test_default_energy_budgets(self):
        config = parse_config(SCENARIO, environ={})
        expected = [1.2 * m * 0.31 for m in (0.2, 0.4, 0.6, 0.8, 1.0)]
        assert config.energy_budgets_mj == pytest.approx(expected)

    def test_environment_overrides_file(self):
        config = parse_config(SCENARIO, environ={'OFDMA_V': '500', 'OFDMA_SEED': '7', 'UNRELATED': 'x'})
        assert config.policy.v_param == 500.0
        assert config.seed == 7

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config(tmp_path / 'missing.env', environ={})
        assert '見つかりません' in exc.value.errors[0]


class TestValidation:
    def test_base_is_valid(self):
        ok, errors = validate_config(make_raw())
        assert ok and errors == []

    def test_user_count_must_factor(self):
        ok, errors = validate_config(make_raw(N_USERS=101, N_GROUPS=20, GROUP_SIZE=5, HORIZON_SLOTS=100))
        assert not ok
        assert any('N_USERS=101' in e for e in errors)

    def test_empty_input_lists_required_fields(self):
        ok, errors = validate_config({})
        assert not ok
        for key in ('N_USERS', 'N_GROUPS', 'GROUP_SIZE', 'POLICY'):
            assert key in errors[0]

    def test_collects_several_errors(self):
        ok, errors = validate_config(make_raw(V='abc', WARMUP_FRACTION=1.5, FAIRNESS_TARGETS=0))
        assert not ok
        assert len(errors) >= 2

    def test_per_user_length_mismatch(self):
        ok, errors = validate_config(make_raw(FAIRNESS_TARGETS='0.6,0.7'))
        assert not ok
        assert any('FAIRNESS_TARGETS' in e for e in errors)

    def test_horizon_shorter_than_group_count(self):
        ok, errors = validate_config(make_raw(N_USERS=10, N_GROUPS=2, HORIZON_SLOTS=1))
        assert any('HORIZON_SLOTS' in e for e in errors)

    def test_fixed_ts_off_grid(self):
        ok, errors = validate_config(make_raw(POLICY='fixed', FIXED_TS_MS=0.69))
        assert not ok

    def test_build_raises_config_error(self):
        with pytest.raises(ConfigError) as exc:
            build_config(make_raw(POLICY='round_robin'))
        assert exc.value.errors


class TestParsing:
    def test_dbm_power(self):
        config = build_config(make_raw(TX_POWER_DBM=25))
        assert config.tx_power_w == pytest.approx(0.316, rel=1e-2)

    def test_policy_aliases(self):
        assert build_config(make_raw(POLICY='EAD-PPDU')).policy.kind == PolicyKind.EADPPDU
        assert build_config(make_raw(POLICY='ThroughputOptimal')).policy.kind == PolicyKind.THROUGHPUT_OPTIMAL

    def test_large_seed_keeps_precision(self):
        seed = 2 ** 64 - 1
        assert build_config(make_raw(SEED=seed)).seed == seed

    def test_explicit_budgets(self):
        config = build_config(make_raw(ENERGY_BUDGETS_MJ='0.1,0.2,0.3,0.4,0.5'))
        assert config.energy_budgets_mj == (0.1, 0.2, 0.3, 0.4, 0.5)

    def test_library_defaults_use_milliseconds_and_carry_over(self):
        raw = make_raw()
        del raw['OBJECTIVE_UNIT'], raw['CARRY_OVER']
        config = build_config(raw)
        assert config.policy.objective_unit == 'ms'
        assert config.policy.objective_scale == 1.0
        assert config.traffic.carry_over is True

    def test_merge_skips_blank_values(self):
        merged = merge_sources({'V': '', 'SEED': '3'}, environ={})
        assert merged == {'SEED': '3'}

    def test_config_hash_is_stable(self):
        first = build_config(make_raw())
        second = build_config(make_raw())
        assert first.config_hash() == second.config_hash()
        assert first.config_hash() != first.with_seed(43).config_hash()


class TestOverrides:
    def test_cli_values_win(self):
        config = build_config(make_raw())
        updated = apply_overrides(config, seed=9, horizon=500, output_dir='out', trace=True, workers=2, v_param=10.0)
        assert updated.seed == 9
        assert updated.horizon_slots == 500
        assert updated.output_dir == 'out'
        assert updated.trace is True
        assert updated.workers == 2
        assert updated.policy.v_param == 10.0

    def test_none_keeps_values(self):
        config = build_config(make_raw())
        assert apply_overrides(config) == config

    @pytest.mark.parametrize("kwargs", [{'seed': -1}, {'horizon': 0}, {'workers': 0}, {'v_param': 0.0}])
    def test_invalid_overrides(self, kwargs):
        with pytest.raises(ConfigError):
            apply_overrides(build_config(make_raw()), **kwargs)
