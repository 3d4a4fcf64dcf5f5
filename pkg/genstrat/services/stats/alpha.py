import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from genstrat.errors import IdentifiabilityError, InsufficientDataError
from genstrat.services.stats.bootstrap import (
    bootstrap_replicates,
    percentile_ci,
    reflected_ci,
    usable,
    with_clusters,
)

logger = logging.getLogger(__name__)


@dataclass
class StrengthFit:
    """和ゼロ制約付きの強さ推定

    Attributes:
        alpha (pd.Series): モデルごとの α̂（チップ/ゲーム）
        lo (pd.Series): 95% 区間の下限（ブートストラップしない場合は NaN）
        hi (pd.Series): 95% 区間の上限
        n_rows (int): 使ったスロット数
        constraint (str): 識別制約
    """

    alpha: pd.Series
    lo: pd.Series
    hi: pd.Series
    n_rows: int
    constraint: str = "sum_to_zero"

    @property
    def models(self) -> List[str]:
        return list(self.alpha.index)

    def leaderboard(self) -> pd.DataFrame:
        table = pd.DataFrame({"alpha": self.alpha, "lo": self.lo, "hi": self.hi})
        table = table.sort_values("alpha", ascending=False, kind="mergesort")
        table.insert(0, "rank", np.arange(1, len(table) + 1))
        return table.rename_axis("model").reset_index()


def comparison_components(slots: pd.DataFrame, models: Sequence[str]) -> List[List[str]]:
    """比較グラフの連結成分（モデルID順）"""
    position = {m: i for i, m in enumerate(models)}
    a = slots["model_alice"].map(position).to_numpy()
    b = slots["model_bob"].map(position).to_numpy()
    graph = csr_matrix((np.ones(len(a)), (a, b)), shape=(len(models), len(models)))
    count, labels = connected_components(graph, directed=False)
    return [sorted(m for m, lab in zip(models, labels) if lab == c) for c in range(count)]


def solve_alpha(slots: pd.DataFrame, models: Sequence[str]) -> np.ndarray:
    """y_s = α_alice − α_bob + ε を和ゼロ制約で最小二乗推定する

    正規方程式を擬似逆行列で解く。連結なら零空間は定数ベクトルだけなので、
    最小ノルム解がそのまま和ゼロ解になる。

    Raises:
        IdentifiabilityError: 比較グラフが連結でない場合
    """
    components = comparison_components(slots, models)
    if len(components) > 1:
        raise IdentifiabilityError(components)
    position = {m: i for i, m in enumerate(models)}
    rows = np.arange(len(slots))
    X = np.zeros((len(slots), len(models)))
    X[rows, slots["model_alice"].map(position).to_numpy()] += 1.0
    X[rows, slots["model_bob"].map(position).to_numpy()] -= 1.0
    y = slots["margin"].to_numpy(dtype=float)
    alpha = np.linalg.pinv(X.T @ X) @ (X.T @ y)
    return alpha - alpha.mean()


def _models_in(slots: pd.DataFrame) -> List[str]:
    return sorted(set(slots["model_alice"]) | set(slots["model_bob"]))


def fit_alpha(
    slots: pd.DataFrame,
    models: Optional[Sequence[str]] = None,
    B: int = 0,
    seed: int = 0,
    progress: bool = False,
) -> StrengthFit:
    """全スロットから α̂ を推定する

    Args:
        slots (pd.DataFrame): スロット表（ok 以外は除外する）
        models (Optional[Sequence[str]]): モデル集合。省略時はスロットに現れるモデル
        B (int): 正ならクラスタブートストラップでパーセンタイル区間を付ける
        seed (int): ブートストラップシード

    Returns:
        StrengthFit: 推定結果

    Raises:
        InsufficientDataError: スロットがない場合
        IdentifiabilityError: 比較グラフが連結でない場合
    """
    frame = usable(slots)
    if frame.empty:
        raise InsufficientDataError("no usable slots to fit")
    models = list(models) if models is not None else _models_in(frame)
    alpha = pd.Series(solve_alpha(frame, models), index=models, name="alpha")
    lo = pd.Series(np.nan, index=models)
    hi = pd.Series(np.nan, index=models)
    if B > 0:
        replicates = bootstrap_replicates(
            with_clusters(frame), lambda s: solve_alpha(s, models), B, seed, progress=progress
        )
        lo_v, hi_v = percentile_ci(replicates)
        lo, hi = pd.Series(lo_v, index=models), pd.Series(hi_v, index=models)
    logger.info("fitted alpha on %d slots for %d models", len(frame), len(models))
    return StrengthFit(alpha=alpha, lo=lo, hi=hi, n_rows=len(frame))


def refit_subset(
    slots: pd.DataFrame,
    games: Optional[Sequence[int]] = None,
    models: Optional[Sequence[str]] = None,
    B: int = 0,
    seed: int = 0,
) -> StrengthFit:
    """ゲーム・モデルで絞り込んだスロットで α̂ を推定し直す

    models を指定した場合は両席ともその集合に入るスロットだけを使う。
    """
    frame = usable(slots)
    if games is not None:
        frame = frame[frame["game_seed"].isin(list(games))]
    if models is not None:
        keep = list(models)
        frame = frame[frame["model_alice"].isin(keep) & frame["model_bob"].isin(keep)]
    return fit_alpha(frame, B=B, seed=seed)


@dataclass
class PerGameAlpha:
    """ゲームごとの α̂_{m,g}

    Attributes:
        alpha (pd.DataFrame): index がモデル、列がゲームシード。識別できないセルは NaN
        se (Optional[pd.DataFrame]): セルごとのブートストラップ標準誤差
        replicates (Optional[np.ndarray]): (B, モデル, ゲーム) の複製値
    """

    alpha: pd.DataFrame
    se: Optional[pd.DataFrame] = None
    replicates: Optional[np.ndarray] = None
    pair_se: Dict[int, pd.DataFrame] = field(default_factory=dict)

    @property
    def mask(self) -> pd.DataFrame:
        return self.alpha.notna()

    @property
    def models(self) -> List[str]:
        return list(self.alpha.index)

    @property
    def games(self) -> List[int]:
        return list(self.alpha.columns)


def per_game_matrix(slots: pd.DataFrame, models: Sequence[str], games: Sequence[int]) -> np.ndarray:
    """ゲームごとに和ゼロ制約で推定した (モデル, ゲーム) 行列

    そのゲームに出ていないモデル、またはゲーム内の比較グラフが切れている場合は NaN。
    """
    matrix = np.full((len(models), len(games)), np.nan)
    by_game = dict(tuple(slots.groupby("game_seed", sort=True)))
    position = {m: i for i, m in enumerate(models)}
    for j, game in enumerate(games):
        rows = by_game.get(game)
        if rows is None or rows.empty:
            continue
        present = _models_in(rows)
        try:
            values = solve_alpha(rows, present)
        except IdentifiabilityError:
            continue
        for model, value in zip(present, values):
            matrix[position[model], j] = value
    return matrix


def fit_alpha_per_game(
    slots: pd.DataFrame,
    models: Optional[Sequence[str]] = None,
    B: int = 0,
    seed: int = 0,
    progress: bool = False,
) -> PerGameAlpha:
    """ゲームごとに α̂_{m,g} を推定する

    B が正ならゲームと対戦ペアで層化したクラスタブートストラップで
    セル標準誤差と、ペア差の標準誤差を付ける。
    """
    frame = usable(slots)
    if frame.empty:
        raise InsufficientDataError("no usable slots to fit")
    models = list(models) if models is not None else _models_in(frame)
    games = sorted(int(g) for g in frame["game_seed"].unique())
    matrix = per_game_matrix(frame, models, games)
    masked = int(np.isnan(matrix).sum())
    if masked:
        logger.warning("%d of %d (model, game) cells are not identified", masked, matrix.size)
    result = PerGameAlpha(alpha=pd.DataFrame(matrix, index=models, columns=games))
    if B > 0:
        flat = bootstrap_replicates(
            with_clusters(frame),
            lambda s: per_game_matrix(s, models, games).ravel(),
            B,
            seed,
            strata_columns=["game_seed", "pair_low", "pair_high"],
            progress=progress,
        )
        replicates = flat.reshape(B, len(models), len(games))
        result.replicates = replicates
        result.se = pd.DataFrame(np.nanstd(replicates, axis=0, ddof=1), index=models, columns=games)
        for j, game in enumerate(games):
            diffs = replicates[:, :, None, j] - replicates[:, None, :, j]
            result.pair_se[game] = pd.DataFrame(np.nanstd(diffs, axis=0, ddof=1), index=models, columns=models)
    return result


@dataclass
class VarianceDecomposition:
    sigma2_model: float
    sigma2_interaction: float
    ratio: float
    lo: Dict[str, float] = field(default_factory=dict)
    hi: Dict[str, float] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        names = ["sigma2_model", "sigma2_interaction", "ratio"]
        return pd.DataFrame(
            {
                "component": names,
                "estimate": [getattr(self, n) for n in names],
                "lo": [self.lo.get(n, np.nan) for n in names],
                "hi": [self.hi.get(n, np.nan) for n in names],
            }
        )


def variance_components(matrix: np.ndarray) -> np.ndarray:
    """(σ²_M, σ²_MG, 比) を二重中心化で求める

    ゲーム主効果は和ゼロ制約から 0 になる。
    """
    column_means = np.nanmean(matrix, axis=0)
    if not np.allclose(column_means[~np.isnan(column_means)], 0.0, atol=1e-8):
        raise ValueError("per-game columns must sum to zero")
    grand = np.nanmean(matrix)
    row_means = np.nanmean(matrix, axis=1)
    sigma2_model = float(np.nanmean((row_means - grand) ** 2))
    residual = matrix - row_means[:, None] - column_means[None, :] + grand
    sigma2_interaction = float(np.nanmean(residual**2))
    ratio = sigma2_interaction / sigma2_model if sigma2_model > 0 else float("inf")
    return np.array([sigma2_model, sigma2_interaction, ratio])


def variance_decomposition(
    per_game: PerGameAlpha,
    slots: Optional[pd.DataFrame] = None,
    B: int = 2000,
    seed: int = 0,
    progress: bool = False,
) -> VarianceDecomposition:
    """モデル主効果と モデル×ゲーム交互作用の分散

    slots を渡すと、各セル（ゲーム × 対戦ペア）の中でクラスタを元のサイズに復元抽出し、
    3つの量を同じ複製で同時に計算して偏り補正区間を付ける。
    """
    estimate = variance_components(per_game.alpha.to_numpy())
    result = VarianceDecomposition(*estimate.tolist())
    if slots is not None and B > 0:
        models, games = per_game.models, per_game.games
        replicates = bootstrap_replicates(
            with_clusters(usable(slots)),
            lambda s: variance_components(per_game_matrix(s, models, games)),
            B,
            seed,
            strata_columns=["game_seed", "pair_low", "pair_high"],
            progress=progress,
        )
        finite = np.where(np.isfinite(replicates), replicates, np.nan)
        lo, hi = reflected_ci(estimate, finite)
        names = ["sigma2_model", "sigma2_interaction", "ratio"]
        result.lo = dict(zip(names, lo.tolist()))
        result.hi = dict(zip(names, hi.tolist()))
    return result
