"""
汎用ヘルパー関数
共通的に使用される機能
"""

import functools
import hashlib
import json
import logging
import os
import tempfile
import time
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Union

import numpy as np

logger = logging.getLogger(__name__)


def safe_divide(numerator: float, denominator: float, default: float = 0.0) -> float:
    """
    安全な除算（ゼロ除算回避）

    Args:
        numerator: 分子
        denominator: 分母
        default: デフォルト値

    Returns:
        float: 除算結果またはデフォルト値
    """
    if denominator == 0 or np.isnan(denominator):
        return default
    return float(numerator / denominator)


def safe_divide_array(numerator: np.ndarray, denominator: float) -> np.ndarray:
    """配列版の安全な除算。分母0ならゼロ配列を返す"""
    if denominator == 0:
        return np.zeros_like(numerator, dtype=float)
    return np.asarray(numerator, dtype=float) / denominator


def log_performance(func: Callable) -> Callable:
    """
    関数実行時間をログ出力するデコレータ

    Args:
        func: 対象関数

    Returns:
        関数: ラップした関数
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        try:
            result = func(*args, **kwargs)
            elapsed = time.perf_counter() - start_time
            logger.info(f"{func.__name__} 実行時間: {elapsed:.2f}秒")
            return result
        except Exception as e:
            elapsed = time.perf_counter() - start_time
            logger.error(f"{func.__name__} エラー（実行時間: {elapsed:.2f}秒）: {str(e)}")
            raise
    return wrapper


def to_jsonable(value: Any) -> Any:
    """numpy型・タプル・Enum を JSON 化可能な値に変換"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return to_jsonable(value.value)
    return value


def stable_hash(payload: Dict[str, Any]) -> str:
    """
    辞書の SHA-256 ハッシュ（キー順序に依存しない）

    Args:
        payload: ハッシュ対象の辞書

    Returns:
        str: 16進ダイジェスト
    """
    text = json.dumps(to_jsonable(payload), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """
    テキストを一時ファイル経由で書き込み、最後に置き換える

    Args:
        path: 出力先パス
        text: 書き込む内容

    Returns:
        Path: 書き込んだファイルのパス
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_name, target)
    except Exception:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
    return target
