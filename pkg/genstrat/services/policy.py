from typing import Dict, Optional, Protocol

import numpy as np

from genstrat.services.engine import InformationState


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """確率ベクトルから1つ添字を引く（確率1の要素なら乱数を消費しても結果は固定）"""
    cumulative = np.cumsum(probs)
    draw = rng.random() * cumulative[-1]
    index = int(np.searchsorted(cumulative, draw, side="right"))
    return min(index, len(probs) - 1)


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


class Policy(Protocol):
    def distribution(self, info: InformationState, n_options: int) -> np.ndarray: ...


class UniformPolicy:
    """L0: 合法手から一様に選ぶ"""

    def distribution(self, info: InformationState, n_options: int) -> np.ndarray:
        return uniform(n_options)


class TabularPolicy:
    """情報状態キーごとの確率表。未知の状態では一様分布に戻る

    Args:
        table (Optional[Dict[str, np.ndarray]]): 情報状態キーから確率ベクトルへの辞書
    """

    def __init__(self, table: Optional[Dict[str, np.ndarray]] = None) -> None:
        self.table: Dict[str, np.ndarray] = table or {}

    def __len__(self) -> int:
        return len(self.table)

    def distribution(self, info: InformationState, n_options: int) -> np.ndarray:
        probs = self.table.get(info.key())
        if probs is None or len(probs) != n_options:
            return uniform(n_options)
        return probs


class SimplexPolicy:
    """単体上の1点を方策とみなす

    メニューの長さが n のときは先頭 n 成分を正規化して使う。

    Args:
        point (np.ndarray): 単体上の点
    """

    def __init__(self, point: np.ndarray) -> None:
        self.point: np.ndarray = np.asarray(point, dtype=float)

    def distribution(self, info: InformationState, n_options: int) -> np.ndarray:
        head = self.point[:n_options]
        total = head.sum()
        if len(head) < n_options or total <= 0:
            return uniform(n_options)
        return head / total
