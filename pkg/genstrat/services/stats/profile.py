import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from genstrat.errors import RankDeficientError
from genstrat.schemas.axes import AXIS_NAMES
from genstrat.services.stats.alpha import PerGameAlpha, per_game_matrix
from genstrat.services.stats.bootstrap import bootstrap_replicates, percentile_ci, usable, with_clusters
from genstrat.services.stats.diagnostics import variance_inflation
from genstrat.services.stats.multitest import bh_fdr

logger = logging.getLogger(__name__)

LENGTH_COLUMN: str = "log10_rulebook"


def zscore_axes(axis_table: pd.DataFrame) -> Tuple[pd.DataFrame, pd.Series, pd.Series]:
    """ベンチマーク集合の平均と母標準偏差で軸を z 化する

    標準偏差が 0 の軸はすべて 0。

    Returns:
        Tuple[pd.DataFrame, pd.Series, pd.Series]: (z 値, 平均, 標準偏差)
    """
    frame = axis_table.set_index("seed") if "seed" in axis_table.columns else axis_table
    values = frame[AXIS_NAMES].astype(float)
    mean = values.mean()
    std = values.std(ddof=0)
    z = (values - mean) / std.where(std > 0, 1.0)
    z.loc[:, std[std <= 0].index] = 0.0
    return z, mean, std


@dataclass
class ProfileFit:
    """モデルごとの能力プロファイル

    Attributes:
        coefs (pd.DataFrame): index がモデル、列が intercept と各軸（と任意で長さ制御）
        lo (pd.DataFrame): 95% 区間の下限
        hi (pd.DataFrame): 95% 区間の上限
        pvalues (pd.DataFrame): 傾きの両側ブートストラップ p 値
        reject (pd.DataFrame): 傾き全体に対する BH 棄却フラグ
        z (pd.DataFrame): 回帰に使った z 化済み軸（index はゲームシード）
        replicates (Optional[np.ndarray]): (B, モデル, 係数) の複製値
    """

    coefs: pd.DataFrame
    lo: pd.DataFrame
    hi: pd.DataFrame
    pvalues: pd.DataFrame
    reject: pd.DataFrame
    z: pd.DataFrame
    replicates: Optional[np.ndarray] = None
    q: float = 0.05

    @property
    def slopes(self) -> pd.DataFrame:
        return self.coefs[AXIS_NAMES]

    def to_long(self) -> pd.DataFrame:
        rows = []
        for model in self.coefs.index:
            for term in self.coefs.columns:
                rows.append(
                    {
                        "model": model,
                        "term": term,
                        "estimate": self.coefs.at[model, term],
                        "lo": self.lo.at[model, term],
                        "hi": self.hi.at[model, term],
                        "p": self.pvalues.at[model, term],
                        "bh_reject": bool(self.reject.at[model, term]),
                    }
                )
        return pd.DataFrame(rows)


def _design(z: pd.DataFrame, lengths: Optional[pd.Series]) -> pd.DataFrame:
    design = z.copy()
    design.insert(0, "intercept", 1.0)
    if lengths is not None:
        design[LENGTH_COLUMN] = np.log10(lengths.reindex(z.index).astype(float))
    return design


def _fit_matrix(matrix: np.ndarray, design: np.ndarray) -> np.ndarray:
    """行列 (モデル, ゲーム) の各行を design に回帰した係数 (モデル, 係数)"""
    coefs = np.full((matrix.shape[0], design.shape[1]), np.nan)
    for i, row in enumerate(matrix):
        present = ~np.isnan(row)
        if present.sum() < design.shape[1]:
            continue
        coefs[i] = np.linalg.lstsq(design[present], row[present], rcond=None)[0]
    return coefs


def _bootstrap_pvalues(replicates: np.ndarray) -> np.ndarray:
    below = np.nanmean(replicates <= 0, axis=0)
    above = np.nanmean(replicates >= 0, axis=0)
    return np.minimum(1.0, 2 * np.minimum(below, above))


def capability_profile(
    per_game: PerGameAlpha,
    axis_table: pd.DataFrame,
    slots: Optional[pd.DataFrame] = None,
    B: int = 500,
    seed: int = 0,
    q: float = 0.05,
    rulebook_lengths: Optional[pd.Series] = None,
    progress: bool = False,
) -> ProfileFit:
    """α̂_{m,g} をモデルごとに z 化した6軸へ回帰する

    Args:
        per_game (PerGameAlpha): ゲームごとの α̂
        axis_table (pd.DataFrame): seed と6軸の表
        slots (Optional[pd.DataFrame]): 渡すとクラスタブートストラップで区間と p 値を付ける
        B (int): 複製数
        seed (int): ブートストラップシード
        q (float): 傾き全体に対する BH の水準
        rulebook_lengths (Optional[pd.Series]): ゲームシードからルールブックの文字数。渡すと log10 を制御変数に加える

    Returns:
        ProfileFit: 係数・区間・棄却フラグ

    Raises:
        RankDeficientError: 軸の計画行列がランク落ちしている場合
    """
    games = per_game.games
    z, _, _ = zscore_axes(axis_table)
    z = z.loc[games]
    design = _design(z, rulebook_lengths)
    if np.linalg.matrix_rank(design.to_numpy()) < design.shape[1]:
        raise RankDeficientError(variance_inflation(z).to_dict())
    columns = list(design.columns)
    models = per_game.models
    coefs = _fit_matrix(per_game.alpha.to_numpy(), design.to_numpy())

    nan_frame = pd.DataFrame(np.nan, index=models, columns=columns)
    lo, hi, pvalues = nan_frame.copy(), nan_frame.copy(), nan_frame.copy()
    replicates: Optional[np.ndarray] = None
    if slots is not None and B > 0:
        design_values = design.to_numpy()
        flat = bootstrap_replicates(
            with_clusters(usable(slots)),
            lambda s: _fit_matrix(per_game_matrix(s, models, games), design_values).ravel(),
            B,
            seed,
            progress=progress,
        )
        replicates = flat.reshape(B, len(models), len(columns))
        lo_v, hi_v = percentile_ci(replicates)
        lo = pd.DataFrame(lo_v, index=models, columns=columns)
        hi = pd.DataFrame(hi_v, index=models, columns=columns)
        pvalues = pd.DataFrame(_bootstrap_pvalues(replicates), index=models, columns=columns)

    reject = pd.DataFrame(False, index=models, columns=columns)
    slope_p = pvalues[AXIS_NAMES].to_numpy().ravel()
    reject.loc[:, AXIS_NAMES] = bh_fdr(slope_p, q).reshape(len(models), len(AXIS_NAMES))
    logger.info("profile fit: %d models x %d terms, %d slope(s) significant", len(models), len(columns), int(reject.values.sum()))
    return ProfileFit(
        coefs=pd.DataFrame(coefs, index=models, columns=columns),
        lo=lo,
        hi=hi,
        pvalues=pvalues,
        reject=reject,
        z=z,
        replicates=replicates,
        q=q,
    )


def extreme_inputs(z: pd.DataFrame) -> pd.DataFrame:
    """軸ごとに、その軸だけ最大 z、他は中央値にした入力"""
    medians = z[AXIS_NAMES].median()
    rows = []
    for axis in AXIS_NAMES:
        point = medians.copy()
        point[axis] = z[axis].max()
        rows.append(point)
    return pd.DataFrame(rows, index=AXIS_NAMES)


def predicted_alpha_at_extremes(profile: ProfileFit, axis_table: Optional[pd.DataFrame] = None) -> pd.DataFrame:
    """各軸を極値に置いたときの予測 α

    区間はブートストラップ複製の係数を通して伝播させる。
    axis_table を渡した場合はその表で z 化し直した入力を使う。

    Returns:
        pd.DataFrame: model, axis, predicted, lo, hi の列
    """
    z = profile.z if axis_table is None else zscore_axes(axis_table)[0]
    inputs = extreme_inputs(z)
    slope_index = [list(profile.coefs.columns).index(a) for a in AXIS_NAMES]
    intercept_index = list(profile.coefs.columns).index("intercept")
    rows = []
    for i, model in enumerate(profile.coefs.index):
        coef = profile.coefs.loc[model].to_numpy()
        for axis, point in inputs.iterrows():
            x = point[AXIS_NAMES].to_numpy(dtype=float)
            predicted = float(coef[intercept_index] + coef[slope_index] @ x)
            lo = hi = np.nan
            if profile.replicates is not None:
                reps = profile.replicates[:, i, :]
                draws = reps[:, intercept_index] + reps[:, slope_index] @ x
                lo_v, hi_v = percentile_ci(draws[:, None])
                lo, hi = float(lo_v[0]), float(hi_v[0])
            rows.append({"model": model, "axis": axis, "predicted": predicted, "lo": lo, "hi": hi})
    return pd.DataFrame(rows)


@dataclass
class CompositeComplexity:
    weights: pd.Series
    scores: pd.Series
    tertile: pd.Series


def tertile_sizes(n: int) -> List[int]:
    """3分割のサイズ。余りは上位のグループに回す（50 → 16/17/17）"""
    base, rest = divmod(n, 3)
    return [base, base + (1 if rest >= 2 else 0), base + (1 if rest >= 1 else 0)]


def composite_complexity(profile: ProfileFit) -> CompositeComplexity:
    """傾き行列の第1主成分に z 化軸を射影した合成複雑度

    主成分の符号は重みの和が正になるように決める。
    """
    slopes = profile.slopes.dropna()
    centered = slopes.to_numpy() - slopes.to_numpy().mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    weights = vt[0]
    if weights.sum() < 0:
        weights = -weights
    weight_series = pd.Series(weights, index=AXIS_NAMES, name="weight")
    scores = pd.Series(profile.z[AXIS_NAMES].to_numpy() @ weights, index=profile.z.index, name="cmplx")
    order = scores.sort_values(kind="mergesort").index
    labels: List[str] = []
    for name, size in zip(("low", "mid", "high"), tertile_sizes(len(order))):
        labels.extend([name] * size)
    tertile = pd.Series(labels, index=order, name="tertile").reindex(scores.index)
    return CompositeComplexity(weights=weight_series, scores=scores, tertile=tertile)
