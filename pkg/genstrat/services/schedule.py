import itertools
import logging
from collections import defaultdict
from typing import Dict, FrozenSet, List, Literal, Sequence, Tuple

import numpy as np
import pulp

from genstrat.errors import ScheduleError

logger = logging.getLogger(__name__)

CoverageRule = Literal["rotation", "optimization", "round_robin"]
Pair = Tuple[str, str]


def canonical_pair(a: str, b: str) -> Pair:
    return (a, b) if a <= b else (b, a)


class BaseScheduler:
    """ゲームごとに対戦させるモデルのペアを決める基底クラス

    Args:
        models (Sequence[str]): モデルID
        games (Sequence[int]): ゲームシード
        min_opponents (int): (モデル, ゲーム) ごとの最小対戦相手数
        seed (int): スケジュールシード

    Attributes:
        floor (int): (モデル, ゲーム) ごとに課す相手数の下限
        pair_history (Dict[FrozenSet[str], int]): これまでのゲームで組んだ回数
    """

    def __init__(self, models: Sequence[str], games: Sequence[int], min_opponents: int = 2, seed: int = 0) -> None:
        unique = sorted(set(models))
        if len(unique) != len(models):
            raise ScheduleError("model ids must be unique")
        if len(unique) < 2:
            raise ScheduleError("at least two models are needed to schedule a matchup")
        if min_opponents < 1:
            raise ScheduleError("min_opponents must be at least 1")
        if len(unique) - 1 < min_opponents:
            raise ScheduleError(
                f"{len(unique)} model(s) cannot give each model {min_opponents} distinct opponent(s) per game"
            )
        self.models: List[str] = unique
        self.games: List[int] = list(games)
        self.floor: int = min_opponents
        self.seed: int = seed
        self.pair_history: Dict[FrozenSet[str], int] = defaultdict(int)
        # 回転順の基準。スケジュールシードだけで決まる
        rng = np.random.default_rng(seed)
        self.order: List[str] = [self.models[i] for i in rng.permutation(len(self.models))]

    def _rotation(self, game_index: int) -> List[str]:
        shift = game_index % len(self.order)
        return self.order[shift:] + self.order[:shift]

    def _record(self, pairs: List[Pair]) -> None:
        for a, b in pairs:
            self.pair_history[frozenset((a, b))] += 1

    def pairs_for_game(self, game_index: int) -> List[Pair]:
        raise NotImplementedError

    def generate(self) -> Dict[int, List[Pair]]:
        """全ゲームのペアを生成

        Returns:
            Dict[int, List[Pair]]: ゲームシードから正規順ペアのリスト
        """
        result: Dict[int, List[Pair]] = {}
        for index, game in enumerate(self.games):
            pairs = sorted(set(canonical_pair(a, b) for a, b in self.pairs_for_game(index)))
            self._record(pairs)
            result[game] = pairs
        check_coverage(result, self.models, self.floor)
        return result


class RoundRobinScheduler(BaseScheduler):
    """全ペアを全ゲームで対戦させる"""

    def pairs_for_game(self, game_index: int) -> List[Pair]:
        return list(itertools.combinations(self.models, 2))


class RotationScheduler(BaseScheduler):
    """ペア履歴を考慮した貪欲な回転スケジュール

    回転順に見て下限に満たないモデルに、これまで組んだ回数が最小の相手を足していく。
    同点は回転順で先に来る相手。
    """

    def _select_partner(self, model: str, rotation: List[str], opponents: Dict[str, set]) -> str:
        candidates = [m for m in rotation if m != model and m not in opponents[model]]
        position = {m: i for i, m in enumerate(rotation)}
        return min(
            candidates,
            key=lambda m: (
                self.pair_history[frozenset((model, m))],
                len(opponents[m]) >= self.floor,
                (position[m] - position[model]) % len(rotation),
            ),
        )

    def pairs_for_game(self, game_index: int) -> List[Pair]:
        rotation = self._rotation(game_index)
        opponents: Dict[str, set] = {m: set() for m in rotation}
        pairs: List[Pair] = []
        for model in rotation:
            while len(opponents[model]) < self.floor:
                partner = self._select_partner(model, rotation, opponents)
                opponents[model].add(partner)
                opponents[partner].add(model)
                pairs.append((model, partner))
        return pairs


class OptimizationScheduler(BaseScheduler):
    """数理最適化によるペア選択

    被覆下限を満たしつつ、マッチアップ数と過去に組んだペアの重複を最小化する。
    """

    def __init__(
        self,
        models: Sequence[str],
        games: Sequence[int],
        min_opponents: int = 2,
        seed: int = 0,
        repeat_penalty: float = 1.0,
    ) -> None:
        super().__init__(models, games, min_opponents, seed)
        self.repeat_penalty: float = repeat_penalty

    def pairs_for_game(self, game_index: int) -> List[Pair]:
        rotation = self._rotation(game_index)
        position = {m: i for i, m in enumerate(rotation)}
        pairs = list(itertools.combinations(self.models, 2))
        problem = pulp.LpProblem("Schedule_Game", pulp.LpMinimize)

        # 変数定義
        y = {p: pulp.LpVariable(f"y_{i}", 0, 1, pulp.LpBinary) for i, p in enumerate(pairs)}

        # 目的関数: マッチアップ数 + 過去の重複。回転順で近いペアをわずかに優先する
        n = len(self.models)
        problem += pulp.lpSum(
            (1.0 + self.repeat_penalty * self.pair_history[frozenset(p)] + ((position[p[1]] - position[p[0]]) % n) / (n * n * 10))
            * y[p]
            for p in pairs
        )

        # 制約 1: 各モデルは下限以上の相手と対戦する
        for m in self.models:
            problem += pulp.lpSum(y[p] for p in pairs if m in p) >= self.floor

        problem.solve(pulp.PULP_CBC_CMD(msg=False))

        if problem.status != pulp.LpStatusOptimal:
            raise ScheduleError("could not find a pairing that satisfies the opponent floor")
        return [p for p in pairs if pulp.value(y[p]) > 0.5]


def check_coverage(pairs_by_game: Dict[int, List[Pair]], models: Sequence[str], floor: int) -> None:
    """(モデル, ゲーム) ごとに floor 以上の相手がいることを確認する

    Raises:
        ScheduleError: 下限を満たさないセルがある場合
    """
    for game, pairs in pairs_by_game.items():
        for model in models:
            opponents = {b if a == model else a for a, b in pairs if model in (a, b)}
            if len(opponents) < floor:
                raise ScheduleError(f"model {model} has {len(opponents)} opponent(s) on game {game}, need {floor}")


def make_scheduler(
    rule: CoverageRule, models: Sequence[str], games: Sequence[int], min_opponents: int = 2, seed: int = 0
) -> BaseScheduler:
    schedulers = {
        "rotation": RotationScheduler,
        "optimization": OptimizationScheduler,
        "round_robin": RoundRobinScheduler,
    }
    if rule not in schedulers:
        raise ScheduleError(f"unknown coverage rule {rule!r}")
    return schedulers[rule](models, games, min_opponents, seed)
