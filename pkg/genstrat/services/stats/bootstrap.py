import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from genstrat.errors import GenstratError

logger = logging.getLogger(__name__)

CLUSTER_COLUMNS: List[str] = ["game_seed", "pair_low", "pair_high", "run_id"]

Statistic = Callable[[pd.DataFrame], Union[float, Sequence[float], np.ndarray, pd.Series]]


def usable(slots: pd.DataFrame) -> pd.DataFrame:
    """集計に使う ok スロットだけを残す"""
    if "status" in slots.columns:
        slots = slots[slots["status"] == "ok"]
    return slots.reset_index(drop=True)


def with_clusters(slots: pd.DataFrame) -> pd.DataFrame:
    """クラスタ (g, m1, m2, r) の列を足す。席を入れ替えた兄弟は同じクラスタになる"""
    frame = slots.copy()
    alice = frame["model_alice"].astype(str)
    bob = frame["model_bob"].astype(str)
    low = np.where(alice <= bob, alice, bob)
    high = np.where(alice <= bob, bob, alice)
    frame["pair_low"] = low
    frame["pair_high"] = high
    return frame


@dataclass
class ClusterIndex:
    """クラスタごとの行位置

    Attributes:
        groups (List[np.ndarray]): クラスタごとの行位置（キーの昇順）
        strata (List[np.ndarray]): 層ごとのクラスタ番号。層化しない場合は1層
    """

    groups: List[np.ndarray]
    strata: List[np.ndarray]

    @classmethod
    def build(
        cls, slots: pd.DataFrame, cluster_columns: Sequence[str] = CLUSTER_COLUMNS, strata_columns: Sequence[str] = ()
    ) -> "ClusterIndex":
        frame = slots if set(cluster_columns) <= set(slots.columns) else with_clusters(slots)
        indices = frame.groupby(list(cluster_columns), sort=True).indices
        keys = sorted(indices)
        groups = [np.asarray(indices[k]) for k in keys]
        if not strata_columns:
            return cls(groups=groups, strata=[np.arange(len(groups))])
        positions = [list(cluster_columns).index(c) for c in strata_columns]
        labels = [tuple(k[p] for p in positions) if isinstance(k, tuple) else (k,) for k in keys]
        codes, _ = pd.factorize(pd.Series(labels, dtype=object), sort=True)
        strata = [np.flatnonzero(codes == c) for c in range(codes.max() + 1)]
        return cls(groups=groups, strata=strata)

    def resample(self, rng: np.random.Generator) -> np.ndarray:
        """層ごとにクラスタを復元抽出して行位置を返す"""
        picked: List[np.ndarray] = []
        for members in self.strata:
            draws = members[rng.integers(len(members), size=len(members))]
            picked.extend(self.groups[c] for c in draws)
        return np.concatenate(picked) if picked else np.array([], dtype=int)


def replicate_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """1つのブートストラップシードから複製ごとの独立ストリームを作る"""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def bootstrap_replicates(
    slots: pd.DataFrame,
    statistic: Statistic,
    B: int,
    seed: int = 0,
    cluster_columns: Sequence[str] = CLUSTER_COLUMNS,
    strata_columns: Sequence[str] = (),
    progress: bool = False,
) -> np.ndarray:
    """クラスタブートストラップの複製値

    識別できない複製（例: 比較グラフが切れた場合）は NaN 行になる。

    Returns:
        np.ndarray: (B, k) の複製値
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    frame = slots if set(cluster_columns) <= set(slots.columns) else with_clusters(slots)
    index = ClusterIndex.build(frame, cluster_columns, strata_columns)
    rows: List[np.ndarray] = []
    failures = 0
    width: Optional[int] = None
    for rng in tqdm(replicate_rngs(seed, B), disable=not progress, desc="bootstrap"):
        sample = frame.iloc[index.resample(rng)].reset_index(drop=True)
        try:
            value = np.atleast_1d(np.asarray(statistic(sample), dtype=float))
            width = len(value)
        except GenstratError:
            failures += 1
            value = np.array([])
        rows.append(value)
    if width is None:
        raise GenstratError("every bootstrap replicate failed")
    if failures:
        logger.warning("%d of %d bootstrap replicates were not identified", failures, B)
    return np.vstack([r if len(r) == width else np.full(width, np.nan) for r in rows])


def percentile_ci(replicates: np.ndarray, level: float = 0.95) -> Tuple[np.ndarray, np.ndarray]:
    tail = 100 * (1 - level) / 2
    lo = np.nanpercentile(replicates, tail, axis=0)
    hi = np.nanpercentile(replicates, 100 - tail, axis=0)
    return lo, hi


def reflected_ci(estimate: np.ndarray, replicates: np.ndarray, level: float = 0.95) -> Tuple[np.ndarray, np.ndarray]:
    """偏り補正区間 (2θ̂ − 上側分位, 2θ̂ − 下側分位)"""
    lo, hi = percentile_ci(replicates, level)
    estimate = np.asarray(estimate, dtype=float)
    return 2 * estimate - hi, 2 * estimate - lo


@dataclass
class CISet:
    estimate: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    replicates: np.ndarray
    method: str = "percentile"


def paired_cluster_bootstrap(
    slots: pd.DataFrame,
    B: int,
    statistic: Statistic,
    seed: int = 0,
    level: float = 0.95,
    bias_corrected: bool = False,
    strata_columns: Sequence[str] = (),
    progress: bool = False,
) -> CISet:
    """クラスタ (g, m1, m2, r) 単位の復元抽出で統計量の信頼区間を作る

    席を入れ替えた兄弟スロットは常に同じ複製に入る。

    Args:
        slots (pd.DataFrame): スロット表
        B (int): 複製数
        statistic (Statistic): スロット表から値（またはベクトル）を返す関数
        seed (int): ブートストラップシード
        level (float): 信頼水準
        bias_corrected (bool): True なら反転型の偏り補正区間

    Returns:
        CISet: 推定値・区間・複製値
    """
    frame = with_clusters(usable(slots))
    estimate = np.atleast_1d(np.asarray(statistic(frame), dtype=float))
    replicates = bootstrap_replicates(frame, statistic, B, seed, strata_columns=strata_columns, progress=progress)
    if bias_corrected:
        lo, hi = reflected_ci(estimate, replicates, level)
        method = "reflected"
    else:
        lo, hi = percentile_ci(replicates, level)
        method = "percentile"
    return CISet(estimate=estimate, lo=lo, hi=hi, replicates=replicates, method=method)
