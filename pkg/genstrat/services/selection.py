import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from genstrat.schemas.axes import AXIS_NAMES

logger = logging.getLogger(__name__)


@dataclass
class NormalizedPool:
    """軸ごとに [0, 1] へ min-max 正規化したプール

    Attributes:
        values (pd.DataFrame): index が seed、列が6軸
        bounds (pd.DataFrame): index が軸名、列が min / max
    """

    values: pd.DataFrame
    bounds: pd.DataFrame


class SelectionRow(BaseModel):
    rank: int
    seed: int
    vector: List[float]
    min_distance: float


def _scale(frame: pd.DataFrame, bounds: pd.DataFrame) -> pd.DataFrame:
    span = bounds["max"] - bounds["min"]
    scaled = (frame[AXIS_NAMES] - bounds["min"]) / span.where(span > 0, 1.0)
    # 最小値と最大値が等しい軸はすべて 0
    scaled.loc[:, span[span <= 0].index] = 0.0
    return scaled


def minmax_normalize(axis_table: pd.DataFrame) -> NormalizedPool:
    """軸テーブルを min-max 正規化する

    Args:
        axis_table (pd.DataFrame): seed 列と6軸の列を持つ表

    Returns:
        NormalizedPool: 正規化後の値と、再利用のための境界
    """
    if axis_table.empty:
        raise ValueError("axis table is empty")
    frame = axis_table.set_index("seed") if "seed" in axis_table.columns else axis_table
    bounds = pd.DataFrame({"min": frame[AXIS_NAMES].min(), "max": frame[AXIS_NAMES].max()})
    return NormalizedPool(values=_scale(frame, bounds), bounds=bounds)


def normalize_with(pool: NormalizedPool, axis_table: pd.DataFrame) -> Tuple[pd.DataFrame, pd.Series]:
    """保存済みの境界で新しいゲームを正規化する

    Returns:
        Tuple[pd.DataFrame, pd.Series]: [0, 1] にクリップした値と、クリップが起きたかのフラグ
    """
    frame = axis_table.set_index("seed") if "seed" in axis_table.columns else axis_table
    scaled = _scale(frame, pool.bounds)
    clipped = scaled.clip(0.0, 1.0)
    flags = (scaled != clipped).any(axis=1)
    if flags.any():
        logger.warning("%d game(s) fall outside the stored bounds and were clamped", int(flags.sum()))
    return clipped, flags


def farthest_point_sample(pool: NormalizedPool, k: int) -> List[SelectionRow]:
    """重心に最も近いゲームから始める最遠点サンプリング

    各ステップで選択済み集合への最小ユークリッド距離が最大のゲームを選ぶ。
    同点は seed の小さい方。

    Args:
        pool (NormalizedPool): 正規化済みプール
        k (int): 選ぶゲーム数

    Returns:
        List[SelectionRow]: 選んだ順の行

    Raises:
        ValueError: k がプールより大きい場合
    """
    values = pool.values.sort_index()
    if k > len(values):
        raise ValueError(f"cannot select {k} games from a pool of {len(values)}")
    if k < 1:
        return []
    seeds: List[int] = [int(s) for s in values.index]
    points: np.ndarray = values[AXIS_NAMES].to_numpy(dtype=float)

    # 同点は最初に現れる（= seed 最小の）添字が選ばれる
    to_mean = np.linalg.norm(points - points.mean(axis=0), axis=1)
    first = int(np.argmin(to_mean))
    chosen: List[int] = [first]
    rows: List[SelectionRow] = [
        SelectionRow(rank=1, seed=seeds[first], vector=points[first].tolist(), min_distance=float(to_mean[first]))
    ]
    nearest = np.linalg.norm(points - points[first], axis=1)
    nearest[first] = -np.inf
    for rank in range(2, k + 1):
        pick = int(np.argmax(nearest))
        chosen.append(pick)
        rows.append(
            SelectionRow(rank=rank, seed=seeds[pick], vector=points[pick].tolist(), min_distance=float(nearest[pick]))
        )
        nearest = np.minimum(nearest, np.linalg.norm(points - points[pick], axis=1))
        nearest[chosen] = -np.inf
    logger.info("selected %d of %d games", k, len(seeds))
    return rows
