"""
OFDMA 上りリンク スケジューリング時間シミュレータ
コマンドラインエントリポイント

    python app.py run    --config config/evaluation_scenario.env
    python app.py sweep  --v-list 25,50,100,200,3000
    python app.py search --problem padding
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from modules.config_loader import ExperimentConfig, apply_overrides, parse_config
from modules.core_model import ConfigError, InvalidInputError
from modules.engine import SEARCH_PROBLEMS, hypothetical_fppdu_search, run, v_sweep
from modules.metrics import sweep_series
from modules.results_exporter import ResultsExporter
from utils.units import parse_float_list

# 文字エンコーディングの設定（Windows コンソールでの文字化け回避）
if sys.platform == "win32":
    for stream in (sys.stdout, sys.stderr):
        try:
            stream.reconfigure(encoding="utf-8")
        except AttributeError:
            pass

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "config/evaluation_scenario.env"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INVALID_INPUT = 3
EXIT_OUTPUT = 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG, help="シナリオ設定ファイル (KEY=VALUE)")
    common.add_argument("--seed", type=int, help="乱数シード (U64)")
    common.add_argument("--out", help="出力ディレクトリ")
    common.add_argument("--horizon", type=int, help="総スロット数")
    common.add_argument("--trace", action="store_true", default=None, help="traces.csv を出力")
    common.add_argument("--workers", type=int, help="並列プロセス数")
    common.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="ログレベル")

    parser = argparse.ArgumentParser(
        prog="app.py",
        description="OFDMA 上りリンクのスケジューリング時間ポリシーを評価するシミュレータ",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", parents=[common], help="設定どおりに1回実行")
    run_parser.add_argument("--v", type=float, help="V の上書き")

    sweep_parser = sub.add_parser("sweep", parents=[common], help="V を変えて複数回実行")
    sweep_parser.add_argument("--v-list", help="V のリスト（カンマ区切り）。省略時は SWEEP_V_LIST")

    search_parser = sub.add_parser("search", parents=[common], help="最良の固定スケジューリング時間を探索")
    search_parser.add_argument("--problem", choices=SEARCH_PROBLEMS, default="padding",
                               help="padding: 公平性制約下でパディング最小 / energy: エネルギー制約下で S_tot 最大")
    return parser


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    config = parse_config(args.config)
    return apply_overrides(
        config,
        seed=args.seed,
        horizon=args.horizon,
        output_dir=args.out,
        trace=args.trace,
        workers=args.workers,
        v_param=getattr(args, "v", None),
    )


def cmd_run(config: ExperimentConfig, args: argparse.Namespace) -> int:
    report = run(config)
    ResultsExporter(config.output_dir).export(config, "run", [report])
    print(report.user_summary.to_string(index=False))
    print(f"avg_H_tot_ms={report.headline['avg_H_tot_ms']:.6g} avg_Ts_ms={report.headline['avg_Ts_ms']:.6g} "
          f"avg_S_tot={report.headline['avg_S_tot']:.6g}")
    return EXIT_OK


def cmd_sweep(config: ExperimentConfig, args: argparse.Namespace) -> int:
    v_values = parse_float_list(args.v_list) if args.v_list else None
    reports = v_sweep(config, v_values)
    ResultsExporter(config.output_dir).export(config, "sweep", reports)
    print(sweep_series(reports).to_string(index=False))
    return EXIT_OK


def cmd_search(config: ExperimentConfig, args: argparse.Namespace) -> int:
    result = hypothetical_fppdu_search(config, args.problem)
    reports = [result.best_report] if result.best_report is not None else []
    ResultsExporter(config.output_dir).export(config, "search", reports, search=result)
    print(result.table.to_string(index=False))
    if result.best_ts is None:
        print(f"実行可能な候補なし: {result.diagnostic}")
    else:
        print(f"best_ts_ms={result.best_ts}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "search": cmd_search}


def emit_error(kind: str, message: str, details: Optional[List[str]] = None) -> None:
    payload = {"error": kind, "message": message, "details": details or []}
    print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """
    CLI のメイン処理

    Args:
        argv: コマンドライン引数（None なら sys.argv）

    Returns:
        int: 終了コード
    """
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_experiment(args)
        return COMMANDS[args.command](config, args)
    except ConfigError as e:
        logger.error(f"設定エラー: {e}")
        emit_error("ConfigError", str(e), e.errors)
        return EXIT_CONFIG
    except InvalidInputError as e:
        logger.error(f"入力エラー: {e}")
        emit_error("InvalidInputError", str(e))
        return EXIT_INVALID_INPUT
    except OSError as e:
        logger.error(f"出力エラー: {e}")
        emit_error("OutputError", str(e))
        return EXIT_OUTPUT
    except Exception as e:
        logger.exception(f"予期しないエラー: {e}")
        emit_error(type(e).__name__, str(e))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
