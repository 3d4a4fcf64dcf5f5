import logging
from typing import Dict, Literal, Sequence

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.stats import kendalltau, spearmanr

from genstrat.errors import GenstratError
from genstrat.schemas.axes import AXIS_NAMES
from genstrat.services.selection import minmax_normalize
from genstrat.services.stats.alpha import StrengthFit, refit_subset
from genstrat.services.stats.bootstrap import usable

logger = logging.getLogger(__name__)

AXIS_CLUSTERS: int = 6


def rank_correlation(
    ranking_a: pd.Series, ranking_b: pd.Series, kind: Literal["kendall", "spearman"] = "kendall"
) -> float:
    """同じ項目集合に対する2つのスコアの順位相関

    Raises:
        ValueError: 項目集合が異なる場合
    """
    if set(ranking_a.index) != set(ranking_b.index):
        raise ValueError("rankings must cover the same items")
    b = ranking_b.reindex(ranking_a.index)
    if kind == "kendall":
        return float(kendalltau(ranking_a.to_numpy(), b.to_numpy()).statistic)
    return float(spearmanr(ranking_a.to_numpy(), b.to_numpy()).statistic)


def leave_one_game_out(slots: pd.DataFrame, full: StrengthFit) -> pd.DataFrame:
    """ゲームを1つずつ抜いた再推定と全体順位との Kendall τ"""
    frame = usable(slots)
    games = sorted(int(g) for g in frame["game_seed"].unique())
    rows = []
    for game in games:
        try:
            fit = refit_subset(frame, games=[g for g in games if g != game])
        except GenstratError as exc:
            logger.warning("leave-out game %d skipped: %s", game, exc)
            continue
        common = full.alpha.index.intersection(fit.alpha.index)
        rows.append({"game_seed": game, "tau": rank_correlation(full.alpha[common], fit.alpha[common])})
    return pd.DataFrame(rows, columns=["game_seed", "tau"])


def model_exclusion(slots: pd.DataFrame, full: StrengthFit, exclude: Sequence[str]) -> pd.DataFrame:
    """指定モデルを除いた再推定と全体順位との比較"""
    keep = [m for m in full.models if m not in set(exclude)]
    fit = refit_subset(slots, models=keep)
    table = pd.DataFrame({"full": full.alpha[keep], "refit": fit.alpha[keep]}).rename_axis("model").reset_index()
    table.attrs["tau"] = rank_correlation(full.alpha[keep], fit.alpha[keep])
    return table


def axis_clusters(axis_table: pd.DataFrame, n_clusters: int = AXIS_CLUSTERS) -> pd.Series:
    """min-max 正規化した軸空間の Ward 法クラスタ（ゲームシード → クラスタ番号）"""
    values = minmax_normalize(axis_table).values.sort_index()
    if len(values) < 2:
        return pd.Series(1, index=values.index, name="cluster")
    labels = fcluster(linkage(values[AXIS_NAMES].to_numpy(), method="ward"), t=n_clusters, criterion="maxclust")
    return pd.Series(labels, index=values.index, name="cluster")


def cluster_refits(slots: pd.DataFrame, full: StrengthFit, clusters: pd.Series) -> pd.DataFrame:
    """クラスタごとに再推定して全体順位との Spearman ρ を並べる"""
    rows = []
    for label, members in clusters.groupby(clusters, sort=True):
        games = [int(g) for g in members.index]
        try:
            fit = refit_subset(slots, games=games)
        except GenstratError as exc:
            logger.warning("cluster %s skipped: %s", label, exc)
            continue
        common = full.alpha.index.intersection(fit.alpha.index)
        rho = rank_correlation(full.alpha[common], fit.alpha[common], kind="spearman") if len(common) > 2 else np.nan
        rows.append({"cluster": int(label), "games": len(games), "models": len(common), "spearman": rho})
    return pd.DataFrame(rows, columns=["cluster", "games", "models", "spearman"])


def tertile_leaderboards(slots: pd.DataFrame, tertile: pd.Series) -> pd.DataFrame:
    """合成複雑度の3分位ごとに α̂ を推定し直したリーダーボード"""
    boards: Dict[str, pd.Series] = {}
    for name in ("low", "mid", "high"):
        games = [int(g) for g in tertile[tertile == name].index]
        if not games:
            continue
        try:
            boards[name] = refit_subset(slots, games=games).alpha
        except GenstratError as exc:
            logger.warning("tertile %s skipped: %s", name, exc)
    return pd.DataFrame(boards).rename_axis("model").reset_index()
