"""
単位変換ユーティリティ
電力の単位換算と設定値の文字列パース
"""

import math
from typing import List, Sequence, Union

import numpy as np

# 802.11ax 20MHz / 1ストリーム / GI 0.8us の MCS0..11 データレート (bps)
HE_20MHZ_RATES_BPS = (
    8.6e6, 17.2e6, 25.8e6, 34.4e6, 51.6e6, 68.8e6,
    77.4e6, 86.0e6, 103.2e6, 114.7e6, 129.0e6, 143.4e6,
)

GRID_DECIMALS = 9

_TRUE_WORDS = {'1', 'true', 'yes', 'on'}
_FALSE_WORDS = {'0', 'false', 'no', 'off'}


def dbm_to_watts(dbm: float) -> float:
    """
    dBm をワットに変換

    Args:
        dbm: 送信電力 (dBm)

    Returns:
        float: 送信電力 (W)
    """
    return 10 ** (dbm / 10.0) / 1000.0


def parse_bool(text: Union[str, bool]) -> bool:
    """真偽値文字列のパース（true/false, 1/0, yes/no, on/off）"""
    if isinstance(text, bool):
        return text
    word = str(text).strip().lower()
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    raise ValueError(f"真偽値として解釈できません: {text!r}")


def parse_float_list(text: Union[str, float, Sequence[float]]) -> List[float]:
    """
    カンマ区切りの数値リストをパース

    Args:
        text: "0.2,0.4,0.6" 形式の文字列、単一の数値、または数値の列

    Returns:
        List[float]: 数値リスト（"inf" も許容）
    """
    if isinstance(text, (int, float)):
        return [float(text)]
    if not isinstance(text, str):
        return [float(v) for v in text]
    items = [item.strip() for item in text.split(',') if item.strip()]
    if not items:
        raise ValueError("数値リストが空です")
    return [float(item) for item in items]


def expand_per_user(values: Sequence[float], group_size: int, name: str) -> List[float]:
    """
    スカラーまたはK個の値をユーザー別リストに展開

    Args:
        values: 1個またはK個の値
        group_size: グループ内ユーザー数 K
        name: エラーメッセージ用のキー名

    Returns:
        List[float]: 長さKのリスト
    """
    values = list(values)
    if len(values) == 1:
        return values * group_size
    if len(values) != group_size:
        raise ValueError(f"{name} は1個または{group_size}個の値が必要です（{len(values)}個指定）")
    return values


def parse_grid(text: Union[str, Sequence[float]]) -> np.ndarray:
    """
    スケジューリング時間の候補グリッドをパース

    "start:step:stop"（stop を含む）またはカンマ区切りリストを受け付ける。
    値は小数点以下9桁に丸め、10進表記どおりの浮動小数点値に揃える。

    Args:
        text: グリッド指定

    Returns:
        np.ndarray: 候補時間 (ms)
    """
    if isinstance(text, str) and ':' in text:
        parts = [p.strip() for p in text.split(':')]
        if len(parts) != 3:
            raise ValueError(f"グリッドは start:step:stop 形式で指定してください: {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError(f"グリッドの刻み幅は正の値である必要があります: {step}")
        if stop < start:
            raise ValueError(f"グリッドの終点が始点より小さいです: {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = start + step * np.arange(count)
    else:
        grid = np.asarray(parse_float_list(text), dtype=float)
    return np.round(grid, GRID_DECIMALS)
