"""
トラフィックモデル
ユーザー別の必要送信時間・到着データ・レートのシード付き生成
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Tuple

import numpy as np

from modules.core_model import GroupState, required_duration
from utils.units import HE_20MHZ_RATES_BPS

logger = logging.getLogger(__name__)

RNG_NAME = "numpy.random.PCG64 (SeedSequence.spawn, 1ストリーム/グループ)"

DEFAULT_DURATION_MEANS_MS = (0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_DURATION_SHAPE = 4.0
DEFAULT_REFERENCE_RATE_BPS = 1e8

TRAFFIC_MODES = ('duration', 'rate_set')


class SlotDemand(NamedTuple):
    duration_ms: float
    queue_bits: float
    rate_bps: float


@dataclass(frozen=True)
class TrafficModel:
    """
    トラフィック生成パラメータ

    duration モードでは T_k ~ Gamma(shape_k, mean_k/shape_k) を直接生成し、
    参照レート R_ref でデータ量に換算する。rate_set モードではポアソン到着と
    レート集合からの一様抽選で Q_k, R_k を作る。

    Attributes:
        mode: 'duration' または 'rate_set'
        duration_means_ms: ユーザー別の平均送信時間 (ms)
        duration_shapes: ユーザー別のガンマ分布形状パラメータ（inf は分散0）
        reference_rate_bps: duration モードの参照レート
        rate_set_bps: rate_set モードのレート集合
        arrival_mean_packets: rate_set モードのスロットあたり平均到着パケット数
        packet_bits: パケットサイズ (bit)
        carry_over: 未送信データを次のスケジュール時まで持ち越すか
        rng_seed: 乱数シード
    """
    mode: str = 'duration'
    duration_means_ms: Tuple[float, ...] = DEFAULT_DURATION_MEANS_MS
    duration_shapes: Tuple[float, ...] = (DEFAULT_DURATION_SHAPE,) * 5
    reference_rate_bps: float = DEFAULT_REFERENCE_RATE_BPS
    rate_set_bps: Tuple[float, ...] = HE_20MHZ_RATES_BPS
    arrival_mean_packets: Tuple[float, ...] = (1.0,) * 5
    packet_bits: float = 12000.0
    carry_over: bool = True
    rng_seed: int = 42

    def means(self) -> np.ndarray:
        return np.asarray(self.duration_means_ms, dtype=float)

    def shapes(self) -> np.ndarray:
        return np.asarray(self.duration_shapes, dtype=float)

    def validate(self, group_size: int) -> List[str]:
        errors = []
        if self.mode not in TRAFFIC_MODES:
            errors.append(f"TRAFFIC_MODE は {TRAFFIC_MODES} のいずれかです: {self.mode!r}")
        for name, values in (('DURATION_MEANS_MS', self.duration_means_ms),
                             ('DURATION_SHAPES', self.duration_shapes),
                             ('ARRIVAL_MEAN_PACKETS', self.arrival_mean_packets)):
            if len(values) != group_size:
                errors.append(f"{name} は GROUP_SIZE={group_size} 個の値が必要です（{len(values)}個）")
        if any(not (m > 0 and math.isfinite(m)) for m in self.duration_means_ms):
            errors.append("DURATION_MEANS_MS は正の有限値である必要があります")
        elif any(b <= a for a, b in zip(self.duration_means_ms, self.duration_means_ms[1:])):
            errors.append("DURATION_MEANS_MS はユーザー番号に対して狭義単調増加である必要があります")
        if any(not s > 0 for s in self.duration_shapes):
            errors.append("DURATION_SHAPES は正の値である必要があります")
        if not self.reference_rate_bps > 0:
            errors.append("REFERENCE_RATE_BPS は正の値である必要があります")
        if not self.rate_set_bps or any(not r > 0 for r in self.rate_set_bps):
            errors.append("RATE_SET_BPS は正の値を1つ以上含む必要があります")
        if any(a < 0 for a in self.arrival_mean_packets):
            errors.append("ARRIVAL_MEAN_PACKETS は非負である必要があります")
        if not self.packet_bits > 0:
            errors.append("PACKET_BITS は正の値である必要があります")
        if not 0 <= self.rng_seed < 2 ** 64:
            errors.append(f"SEED は 0 以上 2^64 未満の整数です: {self.rng_seed}")
        return errors


def create_group_rngs(seed: int, n_groups: int) -> List[np.random.Generator]:
    """
    グループごとに独立した乱数生成器を作成

    グループ g の系列はシードと g だけで決まり、グループ数 L には依存しない。

    Args:
        seed: ルートシード
        n_groups: グループ数 L

    Returns:
        List[np.random.Generator]: グループ別の PCG64 生成器
    """
    children = np.random.SeedSequence(seed).spawn(n_groups)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def sample_durations(model: TrafficModel, rng: np.random.Generator) -> np.ndarray:
    """
    各ユーザーの新規必要送信時間をガンマ分布から生成

    Args:
        model: トラフィックモデル
        rng: グループの乱数生成器

    Returns:
        np.ndarray: 送信時間 (ms)
    """
    means = model.means()
    shapes = model.shapes()
    draws = means.copy()
    finite = np.isfinite(shapes)
    if finite.any():
        draws[finite] = rng.gamma(shapes[finite], means[finite] / shapes[finite])
    return draws


def sample_slot_demands(group: GroupState, model: TrafficModel,
                        rng: np.random.Generator) -> Tuple[GroupState, List[SlotDemand]]:
    """
    スケジュールされたグループの新規需要を生成し、キューに反映

    持ち越しデータがある場合は新規需要に加算した上で T_k を計算する。

    Args:
        group: グループ状態（持ち越しデータを含む）
        model: トラフィックモデル
        rng: グループの乱数生成器

    Returns:
        Tuple[GroupState, List[SlotDemand]]: (需要反映後のグループ, ユーザー別の (T_k, Q_k, R_k))
    """
    carried = group.queues()
    if model.mode == 'duration':
        rates = np.full(group.size, model.reference_rate_bps)
        fresh_bits = sample_durations(model, rng) * rates / 1000.0
    else:
        lam = np.asarray(model.arrival_mean_packets, dtype=float)
        fresh_bits = rng.poisson(lam).astype(float) * model.packet_bits
        rates = rng.choice(np.asarray(model.rate_set_bps, dtype=float), size=group.size)

    users = []
    demands = []
    for user, base, fresh, rate in zip(group.users, carried, fresh_bits, rates):
        queue = float(base + fresh)
        users.append(replace(user, queue_bits=queue, rate_bps=float(rate)))
        demands.append(SlotDemand(required_duration(queue, rate), queue, float(rate)))
    return replace(group, users=tuple(users)), demands
