"""
結果エクスポートモジュール
metrics.csv / traces.csv / search_table.csv / run.json の書き出し
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from modules import __version__
from modules.config_loader import ExperimentConfig
from modules.engine import RunReport, SearchResult
from modules.overhead import breakeven_threshold_us, exchange_time_delta, trigger_frame_time
from modules.traffic import RNG_NAME
from utils.helpers import atomic_write_text, to_jsonable

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.10g'


class ResultsExporter:
    """
    実験結果の書き出し

    各ファイルは一時ファイルに書いてから置き換えるため、途中で失敗しても
    不完全なファイルは残らない。
    """

    def __init__(self, output_dir: str):
        """
        Args:
            output_dir: 出力ディレクトリ（なければ作成）
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _write_frame(self, frame: pd.DataFrame, name: str) -> Path:
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        path = atomic_write_text(self.output_dir / name, text)
        logger.info(f"{name} を保存しました: {path}")
        return path

    def write_metrics(self, reports: Sequence[RunReport]) -> Path:
        frame = pd.DataFrame([r.to_metrics_row() for r in reports])
        return self._write_frame(frame, 'metrics.csv')

    def write_traces(self, reports: Sequence[RunReport], every: int) -> Path:
        """
        グループ1のトレースを間引いて書き出す

        Args:
            reports: RunReport のリスト
            every: 間引き間隔（グループ内スロット数）

        Returns:
            Path: traces.csv のパス
        """
        frames = []
        for report in reports:
            trace = report.trace
            trace = trace[trace['group_slot'] % every == 0].copy()
            trace.insert(0, 'policy', report.policy)
            trace.insert(1, 'V', report.v_param)
            trace.insert(2, 'fixed_ts_ms', report.fixed_ts_ms)
            frames.append(trace)
        frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
        return self._write_frame(frame, 'traces.csv')

    def write_search_table(self, result: SearchResult) -> Path:
        return self._write_frame(result.table, 'search_table.csv')

    def write_user_summary(self, reports: Sequence[RunReport]) -> Path:
        frames = []
        for report in reports:
            frame = report.user_summary.copy()
            frame.insert(0, 'policy', report.policy)
            frame.insert(1, 'V', report.v_param)
            frames.append(frame)
        return self._write_frame(pd.concat(frames, ignore_index=True), 'users.csv')

    def write_run_metadata(self, config: ExperimentConfig, command: str, reports: Sequence[RunReport],
                           extra: Optional[Dict[str, Any]] = None) -> Path:
        """
        run.json（設定・シード・タイミング定数・バージョン）を書き出す

        Args:
            config: 解決済みの実験設定
            command: 実行したサブコマンド
            reports: 出力対象の RunReport
            extra: 追加情報（探索結果など）

        Returns:
            Path: run.json のパス
        """
        timing = config.timing
        metadata = {
            'software': {'name': 'ofdma-ppdu-sim', 'version': __version__},
            'command': command,
            'created_at': datetime.now().isoformat(),
            'seed': config.seed,
            'rng': RNG_NAME,
            'config_hash': config.config_hash(),
            'config': config.to_dict(),
            'timing_us': {
                'sifs': timing.sifs_us,
                'pifs': timing.pifs_us,
                'mac_phy_preamble': timing.mac_phy_preamble_us,
                'per_user_info': timing.per_user_info_us,
                'trigger_frame_group': trigger_frame_time(config.group_size, timing),
                'status_report': trigger_frame_time(1, timing),
                'dppdu_minus_fppdu': exchange_time_delta(config.group_size, timing),
                'breakeven_threshold': breakeven_threshold_us(timing),
            },
            'runs': [
                {
                    'policy': r.policy,
                    'V': r.v_param,
                    'fixed_ts_ms': r.fixed_ts_ms,
                    'bounds': r.bounds,
                    'constraints': r.constraints,
                    'stability': r.stability,
                    'metadata': r.metadata,
                }
                for r in reports
            ],
        }
        if extra:
            metadata.update(extra)
        text = json.dumps(to_jsonable(metadata), indent=2, ensure_ascii=False)
        path = atomic_write_text(self.output_dir / 'run.json', text + '\n')
        logger.info(f"run.json を保存しました: {path}")
        return path

    def export(self, config: ExperimentConfig, command: str, reports: List[RunReport],
               search: Optional[SearchResult] = None) -> Dict[str, Path]:
        """
        コマンドの成果物一式を書き出す

        Returns:
            dict: ファイル種別 → パス
        """
        paths = {}
        if reports:
            paths['metrics'] = self.write_metrics(reports)
            paths['users'] = self.write_user_summary(reports)
        if config.trace and reports:
            paths['traces'] = self.write_traces(reports, config.trace_every)
        extra = None
        if search is not None:
            paths['search_table'] = self.write_search_table(search)
            extra = {'search': {'problem': search.problem, 'best_ts_ms': search.best_ts,
                                'diagnostic': search.diagnostic}}
        paths['run'] = self.write_run_metadata(config, command, reports, extra)
        return paths
