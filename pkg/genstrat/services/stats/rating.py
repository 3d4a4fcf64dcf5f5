import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from genstrat.errors import IdentifiabilityError, InsufficientDataError
from genstrat.services.stats.alpha import comparison_components
from genstrat.services.stats.bootstrap import usable

logger = logging.getLogger(__name__)

SEPARATION_RIDGE: float = 1e-2


@dataclass
class BTFit:
    """勝率ベースの Bradley-Terry スコア

    Attributes:
        scores (pd.Series): 和ゼロのロジットスケール
        ties (int): 尤度から除いた引き分けスロット数
        ridge (float): 完全分離のときに入れたリッジ係数（0 なら無し）
    """

    scores: pd.Series
    ties: int
    ridge: float = 0.0

    @property
    def separated(self) -> bool:
        return self.ridge > 0


def _win_matrix(slots: pd.DataFrame, models: Sequence[str]) -> np.ndarray:
    position = {m: i for i, m in enumerate(models)}
    wins = np.zeros((len(models), len(models)))
    for alice, bob, margin in zip(slots["model_alice"], slots["model_bob"], slots["margin"]):
        if margin > 0:
            wins[position[alice], position[bob]] += 1
        elif margin < 0:
            wins[position[bob], position[alice]] += 1
    return wins


def bradley_terry(slots: pd.DataFrame, models: Optional[Sequence[str]] = None) -> BTFit:
    """ロジスティック対比較モデルの最尤推定

    勝敗は 1[margin > 0]。マージン 0 は尤度から除いて件数を返す。
    勝ちグラフが強連結でない（完全分離）場合は小さいリッジを入れてフラグを立てる。

    Args:
        slots (pd.DataFrame): スロット表
        models (Optional[Sequence[str]]): モデル集合

    Returns:
        BTFit: 推定結果

    Raises:
        IdentifiabilityError: 比較グラフが連結でない場合
    """
    frame = usable(slots)
    if frame.empty:
        raise InsufficientDataError("no usable slots to rate")
    models = list(models) if models is not None else sorted(set(frame["model_alice"]) | set(frame["model_bob"]))
    components = comparison_components(frame, models)
    if len(components) > 1:
        raise IdentifiabilityError(components)
    ties = int((frame["margin"] == 0).sum())
    wins = _win_matrix(frame, models)
    n = len(models)

    strong, _ = connected_components(csr_matrix(wins), directed=True, connection="strong")
    ridge = 0.0 if strong == 1 else SEPARATION_RIDGE
    if ridge:
        logger.warning("win graph is not strongly connected; using ridge %.3g", ridge)

    games = wins + wins.T

    def unpack(free: np.ndarray) -> np.ndarray:
        return np.append(free, -free.sum())

    def negative_log_likelihood(free: np.ndarray) -> float:
        s = unpack(free)
        diff = s[:, None] - s[None, :]
        return float(np.sum(wins * np.logaddexp(0.0, -diff)) + 0.5 * ridge * np.dot(s, s))

    def gradient(free: np.ndarray) -> np.ndarray:
        s = unpack(free)
        diff = s[:, None] - s[None, :]
        p = 1.0 / (1.0 + np.exp(-diff))
        full = (games * p).sum(axis=1) - wins.sum(axis=1) + ridge * s
        return full[:-1] - full[-1]

    result = minimize(negative_log_likelihood, np.zeros(n - 1), jac=gradient, method="BFGS", options={"gtol": 1e-10})
    scores = unpack(result.x)
    scores -= scores.mean()
    return BTFit(scores=pd.Series(scores, index=models, name="bt"), ties=ties, ridge=ridge)
