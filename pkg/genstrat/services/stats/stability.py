import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import pandas as pd
from scipy.stats import norm

from genstrat.services.stats.alpha import PerGameAlpha
from genstrat.services.stats.multitest import bh_fdr, bh_qvalues

logger = logging.getLogger(__name__)


def reversal_probability(gap: float, se: float) -> float:
    """P_rev = Φ(−|gap| / SE)。SE = 0 なら gap = 0 のとき 0.5、それ以外は 0"""
    if not np.isfinite(se) or se <= 0:
        return 0.5 if gap == 0 else 0.0
    return float(norm.cdf(-abs(gap) / se))


@dataclass
class RankStabilityReport:
    """ゲームごとの順位逆転の検定

    Attributes:
        games (pd.DataFrame): game_seed, n_obs, expected, variance, z, p, q, reject_05, reject_10
        candidates (pd.DataFrame): 逆転セル候補 (game_seed, model_i, model_j, gap, p, q, reject)
        metadata (Dict[str, object]): 独立性近似などの注記
    """

    games: pd.DataFrame
    candidates: pd.DataFrame
    metadata: Dict[str, object] = field(default_factory=dict)


def rank_stability(
    per_game: PerGameAlpha,
    alpha: pd.Series,
    pair_se: Optional[Dict[int, pd.DataFrame]] = None,
    q_levels: tuple = (0.05, 0.10),
) -> RankStabilityReport:
    """全体順位に対するゲームごとの逆転数をポアソン二項の帰無分布と比べる

    N_obs はゲーム内で全体順位と符号が逆になったペア数、E_g = Σ P_rev、V_g = Σ P_rev (1 − P_rev)。
    V_g = 0 のとき z_g は N_obs > 0 なら +inf、そうでなければ −inf とする。
    逆転セルには per_game.replicates から片側ブートストラップ p 値を付ける。

    Args:
        per_game (PerGameAlpha): ゲームごとの α̂ と複製値
        alpha (pd.Series): 全体の α̂
        pair_se (Optional[Dict[int, pd.DataFrame]]): ゲームごとのペア差の標準誤差。省略時は per_game.pair_se

    Returns:
        RankStabilityReport: ゲーム表と候補セル表
    """
    pair_se = pair_se if pair_se is not None else per_game.pair_se
    models = per_game.models
    position = {m: i for i, m in enumerate(models)}
    game_rows = []
    candidate_rows = []
    for j, game in enumerate(per_game.games):
        column = per_game.alpha[game]
        present = [m for m in models if not np.isnan(column[m])]
        se_table = pair_se.get(game)
        n_obs = 0
        probs = []
        for a, b in itertools.combinations(present, 2):
            overall = alpha[a] - alpha[b]
            local = column[a] - column[b]
            se = float(se_table.at[a, b]) if se_table is not None else float("nan")
            probs.append(reversal_probability(overall, se))
            if overall * local < 0:
                n_obs += 1
                p_cell = float("nan")
                if per_game.replicates is not None:
                    reps = per_game.replicates[:, position[a], j] - per_game.replicates[:, position[b], j]
                    reps = reps[~np.isnan(reps)]
                    # 逆転が偶然なら複製は全体順位の向きに戻る
                    p_cell = float(np.mean(np.sign(reps) == np.sign(overall))) if len(reps) else float("nan")
                candidate_rows.append(
                    {"game_seed": game, "model_i": a, "model_j": b, "overall_gap": overall, "gap": local, "p": p_cell}
                )
        p_arr = np.asarray(probs)
        expected = float(p_arr.sum())
        variance = float((p_arr * (1 - p_arr)).sum())
        if variance > 0:
            z = (n_obs - expected) / np.sqrt(variance)
        else:
            z = float("inf") if n_obs > 0 else float("-inf")
        game_rows.append(
            {"game_seed": game, "n_obs": n_obs, "expected": expected, "variance": variance, "z": z, "p": float(norm.sf(z))}
        )
    games = pd.DataFrame(game_rows, columns=["game_seed", "n_obs", "expected", "variance", "z", "p"])
    games["q"] = bh_qvalues(games["p"].to_numpy())
    for level in q_levels:
        games[f"reject_{int(round(level * 100)):02d}"] = bh_fdr(games["p"].to_numpy(), level)
    candidates = pd.DataFrame(candidate_rows, columns=["game_seed", "model_i", "model_j", "overall_gap", "gap", "p"])
    candidates["q"] = bh_qvalues(candidates["p"].to_numpy())
    candidates["reject"] = bh_fdr(candidates["p"].to_numpy(), q_levels[0])
    logger.info("%d candidate reversal cell(s) across %d games", len(candidates), len(games))
    return RankStabilityReport(
        games=games,
        candidates=candidates,
        metadata={"independence": "pairwise reversals treated as independent (approximation)"},
    )
