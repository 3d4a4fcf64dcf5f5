import logging
from collections import defaultdict
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np
import pandas as pd

from genstrat.errors import InsufficientDataError
from genstrat.schemas.axes import AXIS_NAMES
from genstrat.services.stats.bootstrap import bootstrap_replicates, percentile_ci, usable, with_clusters

logger = logging.getLogger(__name__)

MIN_DIAGNOSTIC_GAMES: int = 8
COLLINEAR_TOLERANCE: float = 1e-10


def _axis_values(axis_table: pd.DataFrame) -> pd.DataFrame:
    frame = axis_table.set_index("seed") if "seed" in axis_table.columns else axis_table
    columns = [c for c in AXIS_NAMES if c in frame.columns] or list(frame.columns)
    return frame[columns].astype(float)


def variance_inflation(axis_table: pd.DataFrame) -> pd.Series:
    """各軸を残りの軸（と切片）に回帰した VIF = 1 / (1 - R²)

    完全共線の軸は inf を返す。
    """
    values = _axis_values(axis_table)
    vifs: Dict[str, float] = {}
    for axis in values.columns:
        y = values[axis].to_numpy()
        others = values.drop(columns=axis).to_numpy()
        X = np.column_stack([np.ones(len(y)), others])
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        residual = y - X @ coef
        total = float(np.sum((y - y.mean()) ** 2))
        if total <= 0:
            vifs[axis] = float("inf")
            continue
        unexplained = float(np.sum(residual**2)) / total
        vifs[axis] = float("inf") if unexplained < COLLINEAR_TOLERANCE else 1.0 / unexplained
    return pd.Series(vifs, name="vif")


def axis_diagnostics(axis_table: pd.DataFrame) -> Tuple[pd.DataFrame, pd.Series]:
    """軸間の Pearson 相関行列と VIF

    Raises:
        InsufficientDataError: ゲームが MIN_DIAGNOSTIC_GAMES 未満の場合
    """
    values = _axis_values(axis_table)
    if len(values) < MIN_DIAGNOSTIC_GAMES:
        raise InsufficientDataError(f"axis diagnostics need at least {MIN_DIAGNOSTIC_GAMES} games")
    return values.corr(method="pearson"), variance_inflation(values)


def _seat_balanced_mean(rows: pd.DataFrame, row_model: str) -> float:
    as_alice = rows.loc[rows["model_alice"] == row_model, "margin"].astype(float)
    as_bob = -rows.loc[rows["model_bob"] == row_model, "margin"].astype(float)
    means = [s.mean() for s in (as_alice, as_bob) if len(s)]
    return float(np.mean(means)) if means else float("nan")


def head_to_head_matrix(
    slots: pd.DataFrame, B: int = 500, seed: int = 0, progress: bool = False
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """ペアごとの席バランス平均マージン（行 − 列）と有意フラグ

    有意性はペアのスロットに対するクラスタブートストラップの 95% 区間が 0 を含まないこと。

    Returns:
        Tuple[pd.DataFrame, pd.DataFrame]: (反対称なマージン行列, 有意フラグ行列)
    """
    frame = with_clusters(usable(slots))
    models = sorted(set(frame["model_alice"]) | set(frame["model_bob"]))
    matrix = pd.DataFrame(np.nan, index=models, columns=models)
    significant = pd.DataFrame(False, index=models, columns=models)
    for (low, high), rows in frame.groupby(["pair_low", "pair_high"], sort=True):
        value = _seat_balanced_mean(rows, low)
        matrix.at[low, high] = value
        matrix.at[high, low] = -value
        if B > 0:
            replicates = bootstrap_replicates(rows, lambda s: _seat_balanced_mean(s, low), B, seed)
            lo, hi = percentile_ci(replicates)
            flag = bool(lo[0] > 0 or hi[0] < 0)
            significant.at[low, high] = significant.at[high, low] = flag
    for m in models:
        matrix.at[m, m] = 0.0
    return matrix, significant


def coverage_table(slots: pd.DataFrame) -> pd.DataFrame:
    """モデルごとのゲーム数・対戦相手数・スロット数と対戦ペアの頻度の偏り"""
    frame = usable(slots)
    pair_frequencies: Dict[FrozenSet[str], int] = defaultdict(int)
    for a, b in zip(frame["model_alice"], frame["model_bob"]):
        pair_frequencies[frozenset((a, b))] += 1
    rows = []
    for model in sorted(set(frame["model_alice"]) | set(frame["model_bob"])):
        mine = frame[(frame["model_alice"] == model) | (frame["model_bob"] == model)]
        opponents = set(mine["model_alice"]) | set(mine["model_bob"])
        opponents.discard(model)
        per_game = mine.groupby("game_seed").apply(
            lambda rows: len((set(rows["model_alice"]) | set(rows["model_bob"])) - {model}), include_groups=False
        )
        frequencies = [n for pair, n in pair_frequencies.items() if model in pair]
        rows.append(
            {
                "model": model,
                "games": int(mine["game_seed"].nunique()),
                "opponents": len(opponents),
                "min_opponents_per_game": int(per_game.min()) if len(per_game) else 0,
                "slots": len(mine),
                "pair_mean": float(np.mean(frequencies)),
                "pair_std": float(np.std(frequencies)),
            }
        )
    return pd.DataFrame(rows)


def solver_baseline(slots: pd.DataFrame, solver_model: str) -> pd.DataFrame:
    """ソルバーの対戦相手別・ゲーム別の平均マージンと対応のある標準誤差

    run（席を入れ替えた2スロット）ごとにソルバー側から見たマージンを平均してから集計する。
    """
    frame = usable(slots)
    mine = frame[(frame["model_alice"] == solver_model) | (frame["model_bob"] == solver_model)].copy()
    if mine.empty:
        raise InsufficientDataError(f"no slots involve {solver_model}")
    mine["opponent"] = np.where(mine["model_alice"] == solver_model, mine["model_bob"], mine["model_alice"])
    mine["solver_margin"] = np.where(mine["model_alice"] == solver_model, mine["margin"], -mine["margin"]).astype(float)
    runs = mine.groupby(["game_seed", "opponent", "run_id"], sort=True)["solver_margin"].mean().reset_index()
    summary = runs.groupby(["game_seed", "opponent"], sort=True)["solver_margin"].agg(["mean", "std", "count"]).reset_index()
    summary["se"] = summary["std"] / np.sqrt(summary["count"])
    return summary.rename(columns={"count": "runs"}).drop(columns="std")


def per_game_table(
    axis_table: pd.DataFrame,
    sigma: pd.Series,
    per_game_alpha: pd.DataFrame,
    composite: Optional[pd.Series] = None,
) -> pd.DataFrame:
    """ゲームごとの6軸・合成複雑度・σ_g・モデル別 α̂_{m,g}

    composite を省略した場合は z 化した6軸の平均を cmplx とする。
    """
    values = _axis_values(axis_table)
    std = values.std(ddof=0)
    z = (values - values.mean()) / std.where(std > 0, 1.0)
    table = values.copy()
    table["cmplx"] = composite.reindex(values.index) if composite is not None else z.mean(axis=1)
    table["sigma_g"] = sigma.reindex(values.index)
    for model in per_game_alpha.index:
        table[f"alpha:{model}"] = per_game_alpha.loc[model].reindex(values.index)
    return table.rename_axis("seed").reset_index()

