import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pulp

from genstrat.errors import TractabilityError
from genstrat.schemas.game import PLAYERS, GameSpec
from genstrat.services import engine
from genstrat.services.engine import GameState, metric_strength

logger = logging.getLogger(__name__)

Level = Literal["default", "fine"]

HAND_BUCKETS: int = 8
MAX_DEALS: int = 20_000
MAX_NODES: int = 250_000
MAX_INFOSETS: Dict[str, int] = {"default": 5_000, "fine": 20_000}


def abstract_key(state: GameState, seat: str, level: Level = "default") -> str:
    """具体的な状態を抽象情報集合のキーへ写す

    default は (席, decision type, 手役バケット, チップビン)、
    fine はこれに可視の行動列を加える。
    """
    info = engine.observe(state, seat)
    strength = metric_strength(state.hand(seat) + state.piles["board"], state.spec)
    bucket = min(int(strength * HAND_BUCKETS), HAND_BUCKETS - 1)
    key = f"{seat}|{info.decision_type.key()}|b{bucket}|c{info.chip_bin}"
    if level == "fine":
        key += "|" + ",".join(info.action_path) + "|" + ",".join(info.signals)
    return key


@dataclass
class Terminal:
    value: float


@dataclass
class Decision:
    seat: int
    infoset: int
    actions: List[int]
    children: List["Node"] = field(default_factory=list)


Node = Union[Terminal, Decision]


@dataclass
class AbstractGame:
    """抽象化したゲーム木

    Attributes:
        keys (List[str]): 抽象情報集合のキー
        labels (List[List[str]]): 情報集合ごとの抽象行動ラベル（ラベルで同一視する）
        seats (List[int]): 情報集合の手番（0=Alice, 1=Bob）
        roots (List[Tuple[float, Node]]): 配札ごとの確率と根
    """

    spec: GameSpec
    level: str
    keys: List[str]
    labels: List[List[str]]
    seats: List[int]
    roots: List[Tuple[float, Node]]
    node_count: int = 0

    @property
    def infoset_count(self) -> int:
        return len(self.keys)

    def index_of(self, key: str) -> Optional[int]:
        try:
            return self.keys.index(key)
        except ValueError:
            return None


def max_draws(spec: GameSpec) -> int:
    """山札から引かれうる枚数の上限"""
    draws = 2 * spec.hand_size
    for phase in spec.phases:
        if phase.observation == "deal_public":
            draws += phase.count * spec.phase_visit_cap
        elif phase.observation == "deal_private":
            draws += 2 * phase.count * spec.phase_visit_cap
        elif phase.maneuver == "discard_draw":
            draws += 2 * spec.phase_visit_cap
    return min(draws, spec.deck.size)


def enumerate_deals(spec: GameSpec) -> List[Tuple[float, List[int]]]:
    """引かれうる先頭部分の順列を重み付きで列挙する

    Returns:
        List[Tuple[float, List[int]]]: (確率, 山札の並び)。先頭以外は正規順で埋める

    Raises:
        TractabilityError: 列挙数が MAX_DEALS を超えた場合
    """
    depth = max_draws(spec)
    counts = Counter(engine.full_deck(spec))
    total = sum(counts.values())
    deals: List[Tuple[float, List[int]]] = []

    def walk(prefix: List[int], weight: float, remaining: int) -> None:
        if len(deals) > MAX_DEALS:
            raise TractabilityError(f"more than {MAX_DEALS} deal prefixes")
        if len(prefix) == depth:
            rest = sorted(counts.elements())
            deals.append((weight, prefix + rest))
            return
        for card in sorted(counts):
            if counts[card] == 0:
                continue
            share = counts[card] / remaining
            counts[card] -= 1
            walk(prefix + [card], weight * share, remaining - 1)
            counts[card] += 1

    walk([], 1.0, total)
    return deals


class _TreeBuilder:
    def __init__(self, spec: GameSpec, level: Level) -> None:
        self.spec = spec
        self.level: Level = level
        self.keys: List[str] = []
        self.index: Dict[str, int] = {}
        self.labels: List[List[str]] = []
        self.seats: List[int] = []
        self.nodes = 0

    def _infoset(self, key: str, seat: int) -> int:
        if key not in self.index:
            if len(self.keys) >= MAX_INFOSETS[self.level]:
                raise TractabilityError(f"abstraction exceeds {MAX_INFOSETS[self.level]} information sets")
            self.index[key] = len(self.keys)
            self.keys.append(key)
            self.labels.append([])
            self.seats.append(seat)
        return self.index[key]

    def build(self, state: GameState) -> Node:
        self.nodes += 1
        if self.nodes > MAX_NODES:
            raise TractabilityError(f"game tree exceeds {MAX_NODES} nodes")
        if state.terminal:
            return Terminal(float(engine.terminal_payoff(state)[0]))
        seat, menu = engine.legal_actions(state)
        seat_index = PLAYERS.index(seat)
        infoset = self._infoset(abstract_key(state, seat, self.level), seat_index)
        labels = self.labels[infoset]
        actions: List[int] = []
        for choice in menu:
            if choice.label not in labels:
                labels.append(choice.label)
            actions.append(labels.index(choice.label))
        node = Decision(seat=seat_index, infoset=infoset, actions=actions)
        for choice in menu:
            node.children.append(self.build(engine.apply_action(state, choice)))
        return node


def abstract_game(spec: GameSpec, level: Level = "default") -> AbstractGame:
    """配札を列挙して抽象ゲーム木を作る

    Args:
        spec (GameSpec): 対象ゲーム
        level (Level): default または fine

    Returns:
        AbstractGame: 抽象化したゲーム木

    Raises:
        TractabilityError: 配札数・ノード数・情報集合数が上限を超えた場合
    """
    builder = _TreeBuilder(spec, level)
    roots: List[Tuple[float, Node]] = []
    for weight, order in enumerate_deals(spec):
        roots.append((weight, builder.build(engine.initial_state(spec, 0, deck_order=order))))
    logger.info(
        "abstracted seed %d (%s): %d deals, %d nodes, %d infosets",
        spec.seed, level, len(roots), builder.nodes, len(builder.keys),
    )
    return AbstractGame(
        spec=spec,
        level=level,
        keys=builder.keys,
        labels=builder.labels,
        seats=builder.seats,
        roots=roots,
        node_count=builder.nodes,
    )


Strategy = List[np.ndarray]


def uniform_strategy(game: AbstractGame) -> Strategy:
    return [np.full(len(labels), 1.0 / len(labels)) for labels in game.labels]


def _restrict(probs: np.ndarray, actions: List[int]) -> np.ndarray:
    sub = probs[actions]
    total = sub.sum()
    return sub / total if total > 0 else np.full(len(actions), 1.0 / len(actions))


class CFRPlusSolver:
    """交互更新・後悔値クリップ・線形平均の CFR+

    Args:
        game (AbstractGame): 抽象ゲーム

    Attributes:
        regrets (List[np.ndarray]): 累積後悔値（常に非負）
        strategy_sum (List[np.ndarray]): 累積戦略重み
        iteration (int): 完了した反復数
    """

    def __init__(self, game: AbstractGame) -> None:
        self.game: AbstractGame = game
        self.regrets: List[np.ndarray] = [np.zeros(len(l)) for l in game.labels]
        self.strategy_sum: List[np.ndarray] = [np.zeros(len(l)) for l in game.labels]
        self.iteration: int = 0
        self._delta: List[np.ndarray] = []

    def _current(self, node: Decision) -> np.ndarray:
        positive = self.regrets[node.infoset][node.actions]
        total = positive.sum()
        if total > 0:
            return positive / total
        return np.full(len(node.actions), 1.0 / len(node.actions))

    def _traverse(self, node: Node, player: int, reach_self: float, reach_other: float) -> float:
        if isinstance(node, Terminal):
            return node.value if player == 0 else -node.value
        strategy = self._current(node)
        if node.seat != player:
            return float(
                sum(
                    p * self._traverse(child, player, reach_self, reach_other * p)
                    for p, child in zip(strategy, node.children)
                )
            )
        values = np.array(
            [self._traverse(child, player, reach_self * p, reach_other) for p, child in zip(strategy, node.children)]
        )
        value = float(strategy @ values)
        self._delta[node.infoset][node.actions] += reach_other * (values - value)
        self.strategy_sum[node.infoset][node.actions] += self.iteration * reach_self * strategy
        return value

    def step(self) -> None:
        self.iteration += 1
        for player in (0, 1):
            self._delta = [np.zeros(len(l)) for l in self.game.labels]
            for weight, root in self.game.roots:
                self._traverse(root, player, 1.0, weight)
            for i, seat in enumerate(self.game.seats):
                if seat == player:
                    # CFR+: 負の累積後悔値は 0 に切り上げる
                    self.regrets[i] = np.maximum(self.regrets[i] + self._delta[i], 0.0)

    def average_strategy(self) -> Strategy:
        result: Strategy = []
        for weights in self.strategy_sum:
            total = weights.sum()
            result.append(weights / total if total > 0 else np.full(len(weights), 1.0 / len(weights)))
        return result


@dataclass
class SolveResult:
    strategy: Strategy
    iterations: int
    checkpoints: List[Tuple[int, float]]


def cfr_plus_solve(game: AbstractGame, iterations: int, checkpoint_every: int = 0) -> SolveResult:
    """CFR+ を指定回数回して平均戦略を返す

    Args:
        game (AbstractGame): 抽象ゲーム
        iterations (int): 反復数（1以上）
        checkpoint_every (int): 正なら一定間隔で exploitability を記録する

    Returns:
        SolveResult: 平均戦略と exploitability の推移
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    solver = CFRPlusSolver(game)
    checkpoints: List[Tuple[int, float]] = []
    for _ in range(iterations):
        solver.step()
        if checkpoint_every > 0 and solver.iteration % checkpoint_every == 0:
            value = exploitability(game, solver.average_strategy())
            checkpoints.append((solver.iteration, value))
            logger.debug("cfr+ iteration %d exploitability %.5f", solver.iteration, value)
    return SolveResult(strategy=solver.average_strategy(), iterations=iterations, checkpoints=checkpoints)


def _expected(node: Node, strategy: Strategy) -> float:
    if isinstance(node, Terminal):
        return node.value
    probs = _restrict(strategy[node.infoset], node.actions)
    return float(sum(p * _expected(child, strategy) for p, child in zip(probs, node.children)))


def expected_value(game: AbstractGame, strategy: Strategy) -> float:
    """戦略プロファイルの下での Alice の期待収支"""
    return float(sum(weight * _expected(root, strategy) for weight, root in game.roots))


def best_response_value(game: AbstractGame, strategy: Strategy, seat: int, max_passes: int = 100) -> float:
    """seat が strategy に最適応答したときの seat の期待収支

    情報集合ごとの反実仮想値から行動を選び直す操作を、選択が変わらなくなるまで繰り返す。
    完全記憶の抽象なら木の深さ回以内に厳密な最適応答に収束する。
    """
    sign = 1.0 if seat == 0 else -1.0
    previous: List[np.ndarray] = [np.zeros(len(l)) for l in game.labels]

    def walk(node: Node, reach: float, values: List[np.ndarray]) -> float:
        if isinstance(node, Terminal):
            return sign * node.value
        if node.seat != seat:
            probs = _restrict(strategy[node.infoset], node.actions)
            return float(sum(p * walk(child, reach * p, values) for p, child in zip(probs, node.children)))
        child_values = np.array([walk(child, reach, values) for child in node.children])
        values[node.infoset][node.actions] += reach * child_values
        scores = previous[node.infoset][node.actions]
        return float(child_values[int(np.argmax(scores))])

    result = 0.0
    for _ in range(max_passes):
        values = [np.zeros(len(l)) for l in game.labels]
        result = float(sum(walk(root, weight, values) for weight, root in game.roots))
        changed = any(
            int(np.argmax(values[i])) != int(np.argmax(previous[i]))
            for i, s in enumerate(game.seats)
            if s == seat
        )
        previous = values
        if not changed:
            break
    return result


def exploitability(game: AbstractGame, strategy: Strategy) -> float:
    """両席の最適応答値の和（抽象ゲームのナッシュ均衡で 0）"""
    return max(0.0, best_response_value(game, strategy, 0) + best_response_value(game, strategy, 1))


def sequence_form_value(game: AbstractGame) -> float:
    """系列形式 LP による Alice のゲーム値（完全記憶の抽象に限る）

    Raises:
        TractabilityError: 完全記憶でない、または LP が最適解に到達しない場合
    """
    parent: Dict[int, Tuple] = {}
    payoff: Dict[Tuple[Tuple, Tuple], float] = {}
    root_seq: Tuple = ()

    def walk(node: Node, weight: float, seqs: Tuple[Tuple, Tuple]) -> None:
        if isinstance(node, Terminal):
            payoff[seqs] = payoff.get(seqs, 0.0) + weight * node.value
            return
        own = seqs[node.seat]
        if parent.setdefault(node.infoset, own) != own:
            raise TractabilityError(f"abstraction is not perfect recall at {game.keys[node.infoset]}")
        for action, child in zip(node.actions, node.children):
            step = (node.infoset, action)
            nxt = (step, seqs[1]) if node.seat == 0 else (seqs[0], step)
            walk(child, weight, nxt)

    for weight, root in game.roots:
        walk(root, weight, (root_seq, root_seq))

    problem = pulp.LpProblem("sequence_form", pulp.LpMaximize)
    alice_seqs = [root_seq] + [(i, a) for i, s in enumerate(game.seats) if s == 0 for a in range(len(game.labels[i]))]
    bob_seqs = [root_seq] + [(i, a) for i, s in enumerate(game.seats) if s == 1 for a in range(len(game.labels[i]))]
    x = {seq: pulp.LpVariable(f"x_{n}", lowBound=0) for n, seq in enumerate(alice_seqs)}
    q_root = pulp.LpVariable("q_root")
    q = {i: pulp.LpVariable(f"q_{i}") for i, s in enumerate(game.seats) if s == 1}

    # 目的関数: Bob の最適応答に対する Alice の保証値
    problem += q_root

    # 制約 1: Alice の実現計画
    problem += x[root_seq] == 1
    for i, s in enumerate(game.seats):
        if s == 0 and i in parent:
            problem += pulp.lpSum(x[(i, a)] for a in range(len(game.labels[i]))) == x[parent[i]]

    # 制約 2: Bob の各系列について双対制約
    for seq in bob_seqs:
        lhs = q_root if seq == root_seq else q[seq[0]]
        children = [j for j, s in enumerate(game.seats) if s == 1 and parent.get(j) == seq]
        rhs = pulp.lpSum(w * x[a_seq] for (a_seq, b_seq), w in payoff.items() if b_seq == seq)
        problem += lhs - pulp.lpSum(q[j] for j in children) <= rhs

    problem.solve(pulp.PULP_CBC_CMD(msg=False))
    if problem.status != pulp.LpStatusOptimal:
        raise TractabilityError(f"sequence-form LP ended with status {pulp.LpStatus[problem.status]}")
    return float(pulp.value(q_root))


def strategy_rows(game: AbstractGame, strategy: Strategy) -> List[Dict[str, object]]:
    """戦略スナップショットの行（情報集合ID, 行動確率）"""
    return [
        {"infoset": key, "probabilities": {label: float(p) for label, p in zip(labels, probs)}}
        for key, labels, probs in zip(game.keys, game.labels, strategy)
    ]
