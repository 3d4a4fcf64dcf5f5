import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from genstrat.errors import GenstratError, InsufficientDataError
from genstrat.schemas.axes import AXIS_NAMES
from genstrat.services.selection import minmax_normalize
from genstrat.services.stats.alpha import per_game_matrix, solve_alpha
from genstrat.services.stats.bootstrap import bootstrap_replicates, reflected_ci, usable, with_clusters

logger = logging.getLogger(__name__)

K_SWEEP: Sequence[int] = (2, 3, 4, 5, 7, 10, 15)


def stakes_scale(slots: pd.DataFrame) -> pd.Series:
    """ゲームごとの σ_g（ok スロットの符号付きマージンの母標準偏差）"""
    frame = usable(slots)
    return frame.groupby("game_seed", sort=True)["margin"].agg(lambda m: float(np.std(m.astype(float)))).rename("sigma_g")


def neighborhoods(axis_table: pd.DataFrame, K: int) -> Dict[int, List[int]]:
    """min-max 正規化した軸空間で各ゲームと K 近傍（同距離は seed 順）"""
    values = minmax_normalize(axis_table).values.sort_index()
    seeds = [int(s) for s in values.index]
    points = values[AXIS_NAMES].to_numpy(dtype=float)
    result: Dict[int, List[int]] = {}
    for i, seed in enumerate(seeds):
        distance = np.linalg.norm(points - points[i], axis=1)
        distance[i] = -1.0
        order = np.argsort(distance, kind="mergesort")
        result[seed] = [seeds[j] for j in order[: K + 1]]
    return result


def jaggedness_from_z(z: pd.DataFrame, hoods: Dict[int, List[int]]) -> pd.Series:
    """J_m = ゲーム平均（近傍内の z の母標準偏差）"""
    local = {}
    for game, members in hoods.items():
        cols = [g for g in members if g in z.columns]
        local[game] = z[cols].std(axis=1, ddof=0, skipna=True)
    return pd.DataFrame(local).mean(axis=1, skipna=True).rename("J")


def studentized(per_game_alpha: pd.DataFrame, alpha: pd.Series, sigma: pd.Series) -> pd.DataFrame:
    """z_{m,g} = (α̂_{m,g} − α̂_m) / σ_g"""
    deviation = per_game_alpha.sub(alpha.reindex(per_game_alpha.index), axis=0)
    return deviation.div(sigma.reindex(per_game_alpha.columns), axis=1)


@dataclass
class JaggednessReport:
    J: pd.Series
    lo: pd.Series
    hi: pd.Series
    K: int
    z: pd.DataFrame
    sigma: pd.Series
    excluded: List[int] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"J": self.J, "lo": self.lo, "hi": self.hi}).rename_axis("model").reset_index()


def _j_statistic(slots: pd.DataFrame, models: List[str], games: List[int], hoods: Dict[int, List[int]]) -> np.ndarray:
    alpha = pd.Series(solve_alpha(slots, models), index=models)
    matrix = pd.DataFrame(per_game_matrix(slots, models, games), index=models, columns=games)
    sigma = stakes_scale(slots).reindex(games)
    if (sigma.fillna(0) <= 0).any():
        raise GenstratError("replicate has a game without margin spread")
    return jaggedness_from_z(studentized(matrix, alpha, sigma), hoods).reindex(models).to_numpy()


def jaggedness(
    per_game_alpha: pd.DataFrame,
    alpha: pd.Series,
    slots: pd.DataFrame,
    axis_table: pd.DataFrame,
    K: int = 3,
    B: int = 500,
    seed: int = 0,
    progress: bool = False,
) -> JaggednessReport:
    """近傍での標準化強さのばらつき J_m

    σ_g = 0 のゲームは除外して警告する。B が正なら反転型の偏り補正区間を付ける。

    Args:
        per_game_alpha (pd.DataFrame): α̂_{m,g}（index モデル、列ゲームシード）
        alpha (pd.Series): 全体の α̂_m
        slots (pd.DataFrame): σ_g とブートストラップに使うスロット表
        axis_table (pd.DataFrame): seed と6軸の表
        K (int): 近傍数
        B (int): 複製数

    Returns:
        JaggednessReport: J_m と区間・z・σ_g

    Raises:
        InsufficientDataError: 使えるゲームが K + 1 未満の場合
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    sigma = stakes_scale(slots)
    games = [g for g in per_game_alpha.columns if sigma.get(g, 0.0) > 0]
    excluded = [g for g in per_game_alpha.columns if g not in games]
    if excluded:
        logger.warning("excluded %d game(s) with zero margin spread: %s", len(excluded), excluded)
    if len(games) < K + 1:
        raise InsufficientDataError(f"jaggedness with K={K} needs at least {K + 1} games, have {len(games)}")
    table = axis_table.set_index("seed") if "seed" in axis_table.columns else axis_table
    hoods = neighborhoods(table.loc[games], K)
    z = studentized(per_game_alpha[games], alpha, sigma)
    J = jaggedness_from_z(z, hoods)
    lo = pd.Series(np.nan, index=J.index)
    hi = pd.Series(np.nan, index=J.index)
    if B > 0:
        models = list(per_game_alpha.index)
        frame = with_clusters(usable(slots))
        frame = frame[frame["game_seed"].isin(games)].reset_index(drop=True)
        replicates = bootstrap_replicates(frame, lambda s: _j_statistic(s, models, games, hoods), B, seed, progress=progress)
        lo_v, hi_v = reflected_ci(J.reindex(models).to_numpy(), replicates)
        lo = pd.Series(np.maximum(lo_v, 0.0), index=models)
        hi = pd.Series(hi_v, index=models)
    return JaggednessReport(J=J, lo=lo, hi=hi, K=K, z=z, sigma=sigma, excluded=excluded)


def k_sweep(
    per_game_alpha: pd.DataFrame,
    alpha: pd.Series,
    slots: pd.DataFrame,
    axis_table: pd.DataFrame,
    ks: Sequence[int] = K_SWEEP,
    reference_k: int = 3,
) -> pd.DataFrame:
    """K を変えたときの J_m と、基準 K との Spearman ρ

    ゲーム数が足りない K は飛ばす。
    """
    results: Dict[int, pd.Series] = {}
    for K in ks:
        try:
            results[K] = jaggedness(per_game_alpha, alpha, slots, axis_table, K=K, B=0).J
        except InsufficientDataError:
            logger.info("skipping K=%d: not enough games", K)
    table = pd.DataFrame(results)
    if reference_k in table.columns:
        rho = {K: float(spearmanr(table[reference_k], table[K]).statistic) for K in table.columns}
        table.loc["spearman_vs_reference"] = pd.Series(rho)
    return table


def subset_robustness(
    per_game_alpha: pd.DataFrame,
    alpha: pd.Series,
    slots: pd.DataFrame,
    axis_table: pd.DataFrame,
    K: int = 3,
) -> pd.DataFrame:
    """モデル部分集合で J_m を計算し直したときの全体順位との Spearman ρ

    1モデル除外、上位3除外、下位3除外、中位3除外を比べる。
    """
    full = jaggedness(per_game_alpha, alpha, slots, axis_table, K=K, B=0).J
    ranked = list(alpha.sort_values(ascending=False).index)
    subsets: Dict[str, List[str]] = {f"drop:{m}": [x for x in ranked if x != m] for m in ranked}
    if len(ranked) > 3:
        middle = (len(ranked) - 3) // 2
        subsets["drop_top3"] = ranked[3:]
        subsets["drop_bottom3"] = ranked[:-3]
        subsets["drop_middle3"] = ranked[:middle] + ranked[middle + 3:]
    rows = []
    frame = usable(slots)
    for name, keep in subsets.items():
        if len(keep) < 2:
            continue
        subset = frame[frame["model_alice"].isin(keep) & frame["model_bob"].isin(keep)]
        try:
            sub_alpha = pd.Series(solve_alpha(subset, keep), index=keep)
            games = list(per_game_alpha.columns)
            sub_matrix = pd.DataFrame(per_game_matrix(subset, keep, games), index=keep, columns=games)
            J = jaggedness(sub_matrix, sub_alpha, subset, axis_table, K=K, B=0).J
        except GenstratError as exc:
            logger.warning("subset %s skipped: %s", name, exc)
            continue
        rho = float(spearmanr(full.reindex(keep), J.reindex(keep)).statistic) if len(keep) > 2 else float("nan")
        rows.append({"subset": name, "models": len(keep), "spearman": rho})
    return pd.DataFrame(rows)
