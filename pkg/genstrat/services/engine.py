import copy
import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from genstrat.errors import (
    GenstratError,
    IllegalActionError,
    NonTerminalStateError,
    SpecValidationError,
    TerminalStateError,
)
from genstrat.schemas.game import PLAYERS, SHOWDOWN, Condition, GameSpec, Phase, PileDecl
from genstrat.services.hashing import fnv1a_64

logger = logging.getLogger(__name__)

RANK_LABELS: str = "23456789TJQKA"
SUIT_LABELS: str = "shdc"
CHIP_BIN_WIDTH: int = 5
ALL_SEATS: FrozenSet[str] = frozenset(PLAYERS)
# エンジンが前提とする標準パイルの公開範囲
PILE_VISIBILITY: Dict[str, str] = {
    "deck": "hidden",
    "board": "public",
    "muck": "hidden",
    **{f"hand:{p}": "owner-only" for p in PLAYERS},
}


def other_seat(seat: str) -> str:
    return PLAYERS[1] if seat == PLAYERS[0] else PLAYERS[0]


def card_rank(card: int, spec: GameSpec) -> int:
    return card // spec.deck.suits


def card_suit(card: int, spec: GameSpec) -> int:
    return card % spec.deck.suits


def card_label(card: int, spec: GameSpec) -> str:
    """カード番号を "Kh" のようなラベルに変換する

    ランクは上位から割り当てるため、3ランクのデッキは J, Q, K になる。
    """
    offset: int = len(RANK_LABELS) - spec.deck.ranks
    return RANK_LABELS[offset + card_rank(card, spec)] + SUIT_LABELS[card_suit(card, spec)]


def full_deck(spec: GameSpec) -> List[int]:
    return [
        card
        for card in range(spec.deck.ranks * spec.deck.suits)
        for _ in range(spec.deck.copies)
    ]


def metric_key(cards: Sequence[int], spec: GameSpec) -> Tuple[int, ...]:
    """ショーダウン指標の比較キー（大きいほど強い）

    Args:
        cards (Sequence[int]): 手札と公開カードを合わせたカード
        spec (GameSpec): ゲーム仕様

    Returns:
        Tuple[int, ...]: 辞書式比較用のタプル
    """
    if not cards:
        return ()
    ranks: List[int] = sorted((card_rank(c, spec) for c in cards), reverse=True)
    metric = spec.showdown_metric
    if metric == "high_card":
        return tuple(ranks)
    if metric == "sum":
        return (sum(ranks),)
    if metric == "pairs":
        counts = Counter(ranks)
        groups = sorted(((n, r) for r, n in counts.items()), reverse=True)
        return tuple(x for group in groups for x in group)
    if metric == "suit_count":
        suits = Counter(card_suit(c, spec) for c in cards)
        return (max(suits.values()),) + tuple(ranks)
    # low_card: 低いランクほど強い
    return tuple(-r for r in sorted(ranks))


def metric_strength(cards: Sequence[int], spec: GameSpec) -> float:
    """ショーダウン指標を [0, 1] に正規化した強さ（ソルバーのバケット用）"""
    if not cards:
        return 0.0
    top: int = max(spec.deck.ranks - 1, 1)
    ranks: List[int] = [card_rank(c, spec) for c in cards]
    n: int = len(ranks)
    metric = spec.showdown_metric
    if metric == "high_card":
        value = max(ranks) / top
    elif metric == "sum":
        value = sum(ranks) / (n * top)
    elif metric == "pairs":
        multiplicity = max(Counter(ranks).values())
        value = ((multiplicity - 1) + max(ranks) / top) / n
    elif metric == "suit_count":
        suits = Counter(card_suit(c, spec) for c in cards)
        value = (max(suits.values()) - 1 + max(ranks) / top) / n
    else:
        value = 1.0 - min(ranks) / top
    return float(min(max(value, 0.0), 1.0))


class DecisionType(NamedTuple):
    """(フェーズ, 手の種類, 手の名前)。タプル比較で全順序になる"""

    phase: str
    move_type: str
    move_name: str

    def key(self) -> str:
        return f"{self.phase}|{self.move_type}|{self.move_name}"


TERMINAL_DT = DecisionType("terminal", "none", "none")


@dataclass(frozen=True)
class ActionChoice:
    decision_type: DecisionType
    index: int
    label: str
    payload: Optional[int] = None


@dataclass(frozen=True)
class InformationState:
    """プレイヤーから見える文脈 I_p

    Attributes:
        decision_type (DecisionType): 現在の手番の種類
        hand (Tuple[str, ...]): 自分の手札（正規順）
        action_path (Tuple[str, ...]): 見えている行動ラベルの列
        chip_bin (int): 自分のスタックを CHIP_BIN_WIDTH で量子化した値
        signals (Tuple[str, ...]): 見えている観測トークン（時系列順）
        roles (Tuple[str, ...]): 役割の割り当て
    """

    decision_type: DecisionType
    hand: Tuple[str, ...]
    action_path: Tuple[str, ...]
    chip_bin: int
    signals: Tuple[str, ...]
    roles: Tuple[str, ...]

    def key(self) -> str:
        return "/".join(
            (
                self.decision_type.key(),
                ",".join(self.hand),
                ",".join(self.action_path),
                str(self.chip_bin),
                ",".join(self.signals),
                ",".join(self.roles),
            )
        )

    def coarse_key(self) -> str:
        # signals と roles を落とした戦略文脈
        return "/".join(
            (
                self.decision_type.key(),
                ",".join(self.hand),
                ",".join(self.action_path),
                str(self.chip_bin),
            )
        )


@dataclass(frozen=True)
class Event:
    kind: str
    payload: Dict[str, Any]
    visible_to: FrozenSet[str]
    label: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"event": self.kind, "payload": self.payload, "visible_to": sorted(self.visible_to)}
        if self.label is not None:
            data["label"] = self.label
        return data


class ChanceStream:
    """play_seed とラベルをキーにしたカウンタベースの乱数ストリーム群

    ラベルごとに独立した Philox ジェネレータを持つため、
    評価順序に依存せず再現可能。

    Args:
        play_seed (int): 対局シード
    """

    def __init__(self, play_seed: int) -> None:
        self.play_seed: int = int(play_seed)
        self._generators: Dict[str, np.random.Generator] = {}

    def generator(self, label: str) -> np.random.Generator:
        if label not in self._generators:
            seq = np.random.SeedSequence([self.play_seed & ((1 << 64) - 1), fnv1a_64(label)])
            self._generators[label] = np.random.Generator(np.random.Philox(seq))
        return self._generators[label]


@dataclass
class GameState:
    spec: GameSpec
    piles: Dict[str, List[int]]
    stacks: Dict[str, int]
    contrib: Dict[str, int]
    rounds: Dict[str, int]
    leader: str
    chance: ChanceStream
    phase_id: Optional[str] = None
    step: int = 0
    pending: Dict[str, Any] = field(default_factory=dict)
    history: List[Event] = field(default_factory=list)
    action_log: List[int] = field(default_factory=list)
    moves: Dict[str, int] = field(default_factory=lambda: {p: 0 for p in PLAYERS})
    terminal: bool = False
    folded: Optional[str] = None

    @property
    def pot(self) -> int:
        return sum(self.contrib.values())

    def hand(self, seat: str) -> List[int]:
        return self.piles[f"hand:{seat}"]

    def stream(self, label: str) -> np.random.Generator:
        return self.chance.generator(label)

    def clone(self) -> "GameState":
        return GameState(
            spec=self.spec,
            piles={name: list(cards) for name, cards in self.piles.items()},
            stacks=dict(self.stacks),
            contrib=dict(self.contrib),
            rounds=dict(self.rounds),
            leader=self.leader,
            chance=copy.deepcopy(self.chance),
            phase_id=self.phase_id,
            step=self.step,
            pending=copy.deepcopy(self.pending),
            history=list(self.history),
            action_log=list(self.action_log),
            moves=dict(self.moves),
            terminal=self.terminal,
            folded=self.folded,
        )

    def chance_log(self) -> List[Dict[str, Any]]:
        """カード配布など偶然手番に由来するイベントだけを取り出す"""
        return [ev.to_dict() for ev in self.history if ev.kind in ("Shuffle", "Deal")]

    def match_log(self) -> List[Dict[str, Any]]:
        """可視性フラグ付きの全イベント（試合ログの書き出し用）"""
        return [ev.to_dict() for ev in self.history]


# ---------------------------------------------------------------------------
# 構造検証
# ---------------------------------------------------------------------------


def _check_condition(spec: GameSpec, phase: Phase, cond: Condition) -> None:
    variables = {v.name for v in spec.variables}
    piles = {p.name for p in spec.piles}
    if cond.family == "chips":
        if cond.ref not in variables or cond.ref.startswith("rounds:"):
            raise SpecValidationError("chip condition references an undeclared variable", phase.id, cond.describe())
        if cond.measure != "value":
            raise SpecValidationError("chip condition must use measure=value", phase.id, cond.describe())
    elif cond.family == "cards":
        if cond.ref not in piles:
            raise SpecValidationError("card condition references an undeclared pile", phase.id, cond.describe())
        if cond.measure == "value":
            raise SpecValidationError("card condition needs measure count or max_rank", phase.id, cond.describe())
    else:
        if cond.ref not in variables or not cond.ref.startswith("rounds:"):
            raise SpecValidationError("round condition references an undeclared counter", phase.id, cond.describe())


def _check_phase_fields(phase: Phase) -> None:
    required = {
        "action": phase.style,
        "observation": phase.observation,
        "simultaneous": phase.simultaneous,
        "position": phase.position,
    }
    if required[phase.kind] is None:
        raise SpecValidationError(f"{phase.kind} phase is missing its block parameters", phase.id)
    if phase.kind == "action" and phase.style == "betting":
        if not phase.bet_sizes or min(phase.bet_sizes) < 1:
            raise SpecValidationError("betting phase needs positive bet sizes", phase.id)
    if phase.kind == "action" and phase.style == "maneuver" and phase.maneuver is None:
        raise SpecValidationError("maneuver phase is missing its maneuver kind", phase.id)


def _check_pile(decl: PileDecl) -> None:
    if decl.visibility == "owner-only" and decl.owner not in PLAYERS:
        raise SpecValidationError(f"owner-only pile {decl.name} needs a seat as its owner")
    if decl.visibility != "owner-only" and decl.owner is not None:
        raise SpecValidationError(f"pile {decl.name} is {decl.visibility} and cannot have an owner")
    expected = PILE_VISIBILITY.get(decl.name)
    if expected is not None and decl.visibility != expected:
        raise SpecValidationError(f"pile {decl.name} must be {expected}, not {decl.visibility}")
    if decl.name.startswith("hand:") and decl.owner != decl.name.split(":", 1)[1]:
        raise SpecValidationError(f"pile {decl.name} must be owned by its seat")


@lru_cache(maxsize=1024)
def pile_viewers(spec: GameSpec, name: str) -> FrozenSet[str]:
    """パイル宣言の公開範囲から、そのパイルに置かれたカードを見られる席を返す"""
    decl = next(p for p in spec.piles if p.name == name)
    if decl.visibility == "public":
        return ALL_SEATS
    if decl.visibility == "owner-only":
        return frozenset({str(decl.owner)})
    return frozenset()


@lru_cache(maxsize=512)
def validate_spec(spec: GameSpec) -> None:
    """ゲーム仕様の構造検証

    Args:
        spec (GameSpec): 検証対象

    Raises:
        SpecValidationError: 問題のあるフェーズ・条件を含むエラー
    """
    if tuple(spec.players) != PLAYERS:
        raise SpecValidationError(f"players must be exactly {PLAYERS}")
    ids: List[str] = [p.id for p in spec.phases]
    if not ids:
        raise SpecValidationError("phase graph is empty")
    if len(set(ids)) != len(ids) or SHOWDOWN in ids:
        raise SpecValidationError("phase ids must be unique and must not shadow SHOWDOWN")
    if spec.start not in ids:
        raise SpecValidationError("start phase is not declared", spec.start)
    if spec.deck.size < 2 * spec.hand_size:
        raise SpecValidationError("deck is too small for the opening deal")
    variables = {v.name for v in spec.variables}
    for needed in ["pot"] + [f"stack:{p}" for p in PLAYERS] + [f"rounds:{i}" for i in ids]:
        if needed not in variables:
            raise SpecValidationError(f"variable {needed} is not declared")
    piles = {p.name for p in spec.piles}
    for needed in ["deck", "board", "muck"] + [f"hand:{p}" for p in PLAYERS]:
        if needed not in piles:
            raise SpecValidationError(f"pile {needed} is not declared")
    for decl in spec.piles:
        _check_pile(decl)

    for index, phase in enumerate(spec.phases):
        _check_phase_fields(phase)
        if not phase.transitions:
            raise SpecValidationError("phase has no outgoing transitions", phase.id)
        if phase.transitions[-1].condition is not None:
            raise SpecValidationError("last transition must be unconditional", phase.id)
        for tr in phase.transitions:
            if tr.target != SHOWDOWN and tr.target not in ids:
                raise SpecValidationError(f"transition to undeclared phase {tr.target}", phase.id)
            backward = tr.target != SHOWDOWN and ids.index(tr.target) <= index
            if tr.condition is None:
                if backward:
                    raise SpecValidationError("unconditional transition must move forward", phase.id)
                continue
            _check_condition(spec, phase, tr.condition)
            if backward and tr.condition.family != "rounds":
                raise SpecValidationError(
                    "back edge must be guarded by a round counter", phase.id, tr.condition.describe()
                )


# ---------------------------------------------------------------------------
# 状態遷移
# ---------------------------------------------------------------------------


def initial_state(
    spec: GameSpec, play_seed: int, deck_order: Optional[Sequence[int]] = None
) -> GameState:
    """初期状態を作る

    偶然手番はすべて最初のシャッフルに集約される。
    deck_order を渡すとシャッフルを置き換える（ソルバーの列挙用）。

    Args:
        spec (GameSpec): ゲーム仕様
        play_seed (int): 対局シード
        deck_order (Optional[Sequence[int]]): 山札の順序（先頭が一番上）

    Returns:
        GameState: 最初の意思決定点まで進めた状態

    Raises:
        SpecValidationError: 仕様が不正な場合
    """
    validate_spec(spec)
    chance = ChanceStream(play_seed)
    deck: List[int] = full_deck(spec)
    if deck_order is not None:
        if Counter(deck_order) != Counter(deck):
            raise GenstratError("deck_order is not a permutation of the deck")
        deck = list(deck_order)
    else:
        order = chance.generator("deal").permutation(len(deck))
        deck = [deck[i] for i in order]

    state = GameState(
        spec=spec,
        piles={p.name: [] for p in spec.piles},
        stacks={p: spec.initial_stack for p in PLAYERS},
        contrib={p: 0 for p in PLAYERS},
        rounds={p.id: 0 for p in spec.phases},
        leader=PLAYERS[0],
        chance=chance,
    )
    state.piles["deck"] = deck
    state.history.append(Event("Shuffle", {"cards": len(deck)}, frozenset()))
    for seat in PLAYERS:
        _contribute(state, seat, spec.ante, kind="Ante")
    for _ in range(spec.hand_size):
        for seat in PLAYERS:
            _deal_private(state, seat)
    _enter_phase(state, spec.start)
    _run_until_decision(state)
    return state


def _emit(state: GameState, kind: str, payload: Dict[str, Any], visible: FrozenSet[str], label: Optional[str] = None) -> None:
    state.history.append(Event(kind, payload, visible, label))


def _contribute(state: GameState, seat: str, amount: int, kind: str = "ChipTransfer") -> int:
    paid: int = max(0, min(amount, state.stacks[seat]))
    state.stacks[seat] -= paid
    state.contrib[seat] += paid
    _emit(state, kind, {"from": seat, "to": "pot", "amount": paid}, ALL_SEATS)
    return paid


def _transfer(state: GameState, payer: str, payee: str, amount: int) -> None:
    paid: int = max(0, min(amount, state.stacks[payer]))
    state.stacks[payer] -= paid
    state.stacks[payee] += paid
    _emit(state, "ChipTransfer", {"from": payer, "to": payee, "amount": paid}, ALL_SEATS)


def _draw(state: GameState) -> Optional[int]:
    deck = state.piles["deck"]
    if not deck:
        _emit(state, "DeckEmpty", {}, ALL_SEATS)
        return None
    return deck.pop(0)


def _deal_private(state: GameState, seat: str) -> None:
    card = _draw(state)
    if card is None:
        return
    state.hand(seat).append(card)
    state.hand(seat).sort()
    _emit(state, "Deal", {"to": seat, "card": card_label(card, state.spec)}, pile_viewers(state.spec, f"hand:{seat}"))


def _deal_public(state: GameState) -> None:
    card = _draw(state)
    if card is None:
        return
    state.piles["board"].append(card)
    label = card_label(card, state.spec)
    _emit(state, "Deal", {"to": "board", "card": label, "token": f"board:{label}"}, pile_viewers(state.spec, "board"))


def _signal(state: GameState, token: str, visible: FrozenSet[str]) -> None:
    _emit(state, "Signal", {"token": token}, visible)


def _current_phase(state: GameState) -> Phase:
    assert state.phase_id is not None
    return state.spec.phase(state.phase_id)


def _enter_phase(state: GameState, phase_id: str) -> None:
    phase = state.spec.phase(phase_id)
    state.rounds[phase_id] += 1
    state.phase_id = phase_id
    state.step = 0
    _emit(state, "PhaseEnter", {"phase": phase_id, "round": state.rounds[phase_id]}, ALL_SEATS)
    leader, follower = state.leader, other_seat(state.leader)

    if phase.kind == "action" and phase.style == "betting":
        state.pending = {"to_act": leader, "outstanding": 0, "raises": 0, "checks": 0, "done": False}
    elif phase.kind == "action":
        state.pending = {"queue": [leader, follower], "done": False}
    elif phase.kind == "observation":
        if phase.interactive:
            state.pending = {"queue": [leader], "done": False}
        else:
            _observe_effect(state, phase, ALL_SEATS)
            state.pending = {"done": True}
    elif phase.kind == "simultaneous":
        state.pending = {"queue": list(PLAYERS), "choices": {}, "done": False}
    else:
        _assign_position(state, phase)
        state.pending = {"queue": [state.leader], "done": False} if phase.defer else {"done": True}


def _observe_effect(state: GameState, phase: Phase, viewers: FrozenSet[str]) -> None:
    spec = state.spec
    kind = phase.observation
    if kind == "deal_public":
        for _ in range(phase.count):
            _deal_public(state)
    elif kind == "deal_private":
        for _ in range(phase.count):
            for seat in PLAYERS:
                _deal_private(state, seat)
    elif kind == "peek":
        # 非対話型ではリーダーだけが山札の上を覗く
        watchers = viewers if phase.interactive else frozenset({state.leader})
        for card in state.piles["deck"][: phase.count]:
            _signal(state, f"peek:{card_label(card, spec)}", watchers)
    elif kind == "reveal":
        for seat in PLAYERS:
            if state.hand(seat):
                top = max(state.hand(seat), key=lambda c: (card_rank(c, spec), card_suit(c, spec)))
                _signal(state, f"reveal:{seat}:{card_label(top, spec)}", ALL_SEATS)
    else:
        board = state.piles["board"]
        alice = metric_key(state.hand(PLAYERS[0]) + board, spec)
        bob = metric_key(state.hand(PLAYERS[1]) + board, spec)
        verdict = PLAYERS[0] if alice > bob else PLAYERS[1] if bob > alice else "tie"
        _signal(state, f"compare:{verdict}", viewers)


def _assign_position(state: GameState, phase: Phase) -> None:
    spec = state.spec
    board = state.piles["board"]
    alice, bob = PLAYERS
    kind = phase.position
    if kind == "alternate":
        state.leader = other_seat(state.leader)
    elif kind == "chip_lead":
        if state.stacks[alice] != state.stacks[bob]:
            state.leader = alice if state.stacks[alice] > state.stacks[bob] else bob
    else:
        a_top = max((card_rank(c, spec) for c in state.hand(alice) + board), default=-1)
        b_top = max((card_rank(c, spec) for c in state.hand(bob) + board), default=-1)
        if a_top != b_top:
            higher = alice if a_top > b_top else bob
            state.leader = higher if kind == "high_card" else other_seat(higher)
    _signal(state, f"leader:{state.leader}", ALL_SEATS)


def _condition_holds(state: GameState, cond: Condition) -> bool:
    spec = state.spec
    if cond.family == "chips":
        lhs = state.pot if cond.ref == "pot" else state.stacks[cond.ref.split(":", 1)[1]]
    elif cond.family == "cards":
        pile = state.piles[cond.ref]
        if cond.measure == "count":
            lhs = len(pile)
        else:
            lhs = max((card_rank(c, spec) for c in pile), default=-1)
    else:
        lhs = state.rounds[cond.ref.split(":", 1)[1]]
    return lhs >= cond.value if cond.op == ">=" else lhs < cond.value


def _advance(state: GameState) -> None:
    phase = _current_phase(state)
    cap = state.spec.phase_visit_cap
    for index, tr in enumerate(phase.transitions):
        if tr.target != SHOWDOWN and state.rounds[tr.target] >= cap:
            continue
        if tr.condition is not None and not _condition_holds(state, tr.condition):
            continue
        _emit(
            state,
            "Transition",
            {"phase": phase.id, "index": index, "target": tr.target, "conditional": tr.condition is not None},
            ALL_SEATS,
        )
        if tr.target == SHOWDOWN:
            _showdown(state)
        else:
            _enter_phase(state, tr.target)
        return
    _showdown(state)


def _run_until_decision(state: GameState) -> None:
    while not state.terminal and state.pending.get("done"):
        _advance(state)


def _showdown(state: GameState) -> None:
    spec = state.spec
    alice, bob = PLAYERS
    board = state.piles["board"]
    keys = {seat: metric_key(state.hand(seat) + board, spec) for seat in PLAYERS}
    winner: Optional[str] = None
    if keys[alice] != keys[bob]:
        winner = alice if keys[alice] > keys[bob] else bob
    matched = min(state.contrib[alice], state.contrib[bob])
    payout: Dict[str, int] = {}
    for seat in PLAYERS:
        # 相手と釣り合わない超過分は本人に返す
        payout[seat] = state.contrib[seat] - matched
        if winner is None:
            payout[seat] += matched
    if winner is not None:
        payout[winner] += 2 * matched
    _settle(state, payout)
    revealed = {seat: [card_label(c, spec) for c in state.hand(seat)] for seat in PLAYERS}
    _emit(state, "Showdown", {"hands": revealed, "winner": winner or "tie"}, ALL_SEATS)


def _fold(state: GameState, folder: str) -> None:
    winner = other_seat(folder)
    state.folded = folder
    _settle(state, {winner: state.pot, folder: 0})


def _settle(state: GameState, payout: Dict[str, int]) -> None:
    assert sum(payout.values()) == state.pot
    for seat, amount in payout.items():
        state.stacks[seat] += amount
        state.contrib[seat] = 0
    state.terminal = True
    state.phase_id = None
    state.pending = {"done": False}
    _emit(state, "Payout", {"payout": dict(payout)}, ALL_SEATS)


def _actor(state: GameState) -> str:
    if "to_act" in state.pending:
        return state.pending["to_act"]
    return state.pending["queue"][0]


def _decision_type(state: GameState) -> DecisionType:
    phase = _current_phase(state)
    if phase.kind == "action" and phase.style == "betting":
        return DecisionType(phase.id, "wager", "respond" if state.pending["outstanding"] > 0 else "open")
    if phase.kind == "action":
        return DecisionType(phase.id, "maneuver", str(phase.maneuver))
    if phase.kind == "observation":
        return DecisionType(phase.id, "observe", str(phase.observation))
    if phase.kind == "simultaneous":
        return DecisionType(phase.id, "simultaneous", str(phase.simultaneous))
    return DecisionType(phase.id, "position", "defer")


def _menu(state: GameState) -> List[Tuple[str, Optional[int]]]:
    phase = _current_phase(state)
    seat = _actor(state)
    stack = state.stacks[seat]
    options: List[Tuple[str, Optional[int]]] = []
    if phase.kind == "action" and phase.style == "betting":
        outstanding = state.pending["outstanding"]
        if outstanding == 0:
            options.append(("check", None))
            options.extend((f"bet:{s}", s) for s in phase.bet_sizes if 0 < s <= stack)
        else:
            options.append(("fold", None))
            options.append(("call", min(outstanding, stack)))
            if state.pending["raises"] < phase.max_raises:
                options.extend(
                    (f"raise:{s}", s) for s in phase.bet_sizes if stack >= outstanding + s
                )
    elif phase.kind == "action":
        options.append(("pass", None))
        own, opp = state.hand(seat), state.hand(other_seat(seat))
        if phase.maneuver == "steal" and own:
            options.extend((f"steal:{i}", i) for i in range(len(opp)))
        elif phase.maneuver == "swap" and state.piles["board"]:
            options.extend((f"swap:{i}", i) for i in range(len(own)))
        elif phase.maneuver == "discard_draw" and state.piles["deck"]:
            options.extend((f"discard:{i}", i) for i in range(len(own)))
    elif phase.kind == "observation":
        options.append(("pass", None))
        if stack >= phase.fee:
            options.append(("observe", phase.fee))
    elif phase.kind == "simultaneous":
        if phase.simultaneous == "side_bet":
            options.extend([("heads", 0), ("tails", 1)])
        else:
            levels = sorted(set(phase.bid_levels) | {0})
            options.extend((f"bid:{b}", b) for b in levels if b <= stack)
    else:
        options.extend([("lead", None), ("defer", None)])
    return options


def legal_actions(state: GameState) -> Tuple[str, List[ActionChoice]]:
    """手番のプレイヤーと合法手メニューを返す

    Args:
        state (GameState): 対象の状態

    Returns:
        Tuple[str, List[ActionChoice]]: (手番の席, 合法手リスト)

    Raises:
        TerminalStateError: 終局状態の場合
    """
    if state.terminal:
        raise TerminalStateError("no legal actions in a terminal state")
    dt = _decision_type(state)
    menu = [
        ActionChoice(dt, i, label, payload) for i, (label, payload) in enumerate(_menu(state))
    ]
    return _actor(state), menu


def apply_action(state: GameState, choice: ActionChoice, inplace: bool = False) -> GameState:
    """行動を適用して次の意思決定点まで進める

    Args:
        state (GameState): 現在の状態
        choice (ActionChoice): legal_actions が返したメニュー内の行動
        inplace (bool): True なら state を直接更新する

    Returns:
        GameState: 更新後の状態

    Raises:
        TerminalStateError: 終局状態の場合
        IllegalActionError: メニューにない行動の場合
    """
    seat, menu = legal_actions(state)
    labels = [m.label for m in menu]
    if not 0 <= choice.index < len(menu) or menu[choice.index].label != choice.label:
        raise IllegalActionError(f"{choice.label!r} (index {choice.index}) is not legal", labels)
    target = state if inplace else state.clone()
    _apply(target, seat, menu[choice.index])
    target.action_log.append(choice.index)
    target.moves[seat] += 1
    target.step += 1
    _run_until_decision(target)
    return target


def apply_index(state: GameState, index: int, inplace: bool = False) -> GameState:
    _, menu = legal_actions(state)
    if not 0 <= index < len(menu):
        raise IllegalActionError(f"index {index} is out of range", [m.label for m in menu])
    return apply_action(state, menu[index], inplace=inplace)


def _apply(state: GameState, seat: str, choice: ActionChoice) -> None:
    phase = _current_phase(state)
    spec = state.spec
    label = choice.label
    public_label = f"{seat}:{label}"
    opponent = other_seat(seat)

    if phase.kind == "simultaneous":
        # 同時手番の選択は公開まで本人にしか見えない
        _emit(state, "Action", {"seat": seat, "label": label}, frozenset({seat}), public_label)
        state.pending["queue"].pop(0)
        state.pending["choices"][seat] = choice
        if not state.pending["queue"]:
            _resolve_simultaneous(state, phase)
        return

    _emit(state, "Action", {"seat": seat, "label": label}, ALL_SEATS, public_label)
    if phase.kind == "action" and phase.style == "betting":
        pending = state.pending
        if label == "check":
            pending["checks"] += 1
            if pending["checks"] >= 2:
                pending["done"] = True
            else:
                pending["to_act"] = opponent
        elif label == "fold":
            _fold(state, seat)
        elif label == "call":
            _contribute(state, seat, pending["outstanding"])
            pending["done"] = True
        elif label.startswith("bet:"):
            _contribute(state, seat, int(choice.payload or 0))
            pending["outstanding"] = int(choice.payload or 0)
            pending["to_act"] = opponent
        else:
            size = int(choice.payload or 0)
            _contribute(state, seat, pending["outstanding"] + size)
            pending["outstanding"] = size
            pending["raises"] += 1
            pending["to_act"] = opponent
        return

    state.pending["queue"].pop(0)
    if phase.kind == "action":
        own = state.hand(seat)
        if label.startswith("steal:"):
            taken = state.hand(opponent).pop(int(choice.payload or 0))
            given = own.pop(0)
            own.append(taken)
            own.sort()
            state.hand(opponent).append(given)
            state.hand(opponent).sort()
            _emit(
                state,
                "Exchange",
                {"taker": seat, "took": card_label(taken, spec), "gave": card_label(given, spec)},
                ALL_SEATS,
            )
        elif label.startswith("swap:"):
            mine = own.pop(int(choice.payload or 0))
            board_card = state.piles["board"].pop()
            own.append(board_card)
            own.sort()
            state.piles["board"].append(mine)
            token = f"board:{card_label(mine, spec)}"
            payload = {"to": "board", "card": card_label(mine, spec), "token": token}
            _emit(state, "Deal", payload, pile_viewers(spec, "board"))
        elif label.startswith("discard:"):
            dropped = own.pop(int(choice.payload or 0))
            state.piles["muck"].append(dropped)
            _emit(
                state,
                "Discard",
                {"seat": seat, "card": card_label(dropped, spec)},
                frozenset({seat}) | pile_viewers(spec, "muck"),
            )
            _deal_private(state, seat)
    elif phase.kind == "observation":
        if label == "observe":
            _contribute(state, seat, phase.fee)
            _observe_effect(state, phase, frozenset({seat}))
    elif label == "defer":
        state.leader = opponent
        _signal(state, f"leader:{state.leader}", ALL_SEATS)

    if not state.pending["queue"]:
        state.pending["done"] = True


def _resolve_simultaneous(state: GameState, phase: Phase) -> None:
    alice, bob = PLAYERS
    choices: Dict[str, ActionChoice] = state.pending["choices"]
    _signal(
        state,
        f"sim:{alice}={choices[alice].label},{bob}={choices[bob].label}",
        ALL_SEATS,
    )
    if phase.simultaneous == "side_bet":
        if choices[alice].payload == choices[bob].payload:
            _transfer(state, bob, alice, phase.stake)
        else:
            _transfer(state, alice, bob, phase.stake)
    else:
        bids = {seat: int(choices[seat].payload or 0) for seat in PLAYERS}
        for seat in PLAYERS:
            if bids[seat] > 0:
                _contribute(state, seat, bids[seat])
        if bids[alice] != bids[bob]:
            state.leader = alice if bids[alice] > bids[bob] else bob
        _signal(state, f"leader:{state.leader}", ALL_SEATS)
    state.pending["done"] = True


# ---------------------------------------------------------------------------
# 観測と利得
# ---------------------------------------------------------------------------


def decision_type(state: GameState) -> DecisionType:
    return TERMINAL_DT if state.terminal else _decision_type(state)


def observe(state: GameState, seat: str) -> InformationState:
    """席から見える情報状態を返す

    Args:
        state (GameState): 現在の状態
        seat (str): 観測する席

    Returns:
        InformationState: seat に見えるイベントだけから構成した情報状態
    """
    spec = state.spec
    path: List[str] = []
    signals: List[str] = []
    for ev in state.history:
        if seat not in ev.visible_to:
            continue
        if ev.kind == "Action" and ev.label is not None:
            path.append(ev.label)
        elif "token" in ev.payload:
            signals.append(ev.payload["token"])
    hand = tuple(card_label(c, spec) for c in sorted(state.hand(seat)))
    return InformationState(
        decision_type=decision_type(state),
        hand=hand,
        action_path=tuple(path),
        chip_bin=state.stacks[seat] // CHIP_BIN_WIDTH,
        signals=tuple(signals),
        roles=(f"leader:{state.leader}",),
    )


def terminal_payoff(state: GameState) -> Tuple[int, int]:
    """終局時の (Alice の収支, Bob の収支)

    Raises:
        NonTerminalStateError: 終局前の場合
    """
    if not state.terminal:
        raise NonTerminalStateError("payoff requested before the game ended")
    initial = state.spec.initial_stack
    alice = state.stacks[PLAYERS[0]] - initial
    bob = state.stacks[PLAYERS[1]] - initial
    return alice, bob


def conserved(state: GameState) -> bool:
    chips_ok = sum(state.stacks.values()) + state.pot == 2 * state.spec.initial_stack
    cards = sum(len(pile) for pile in state.piles.values())
    return chips_ok and cards == state.spec.deck.size


Chooser = Callable[[GameState, str, List[ActionChoice]], int]


def play(spec: GameSpec, play_seed: int, chooser: Chooser, deck_order: Optional[Sequence[int]] = None) -> GameState:
    """chooser に手を選ばせて終局まで進める"""
    state = initial_state(spec, play_seed, deck_order=deck_order)
    while not state.terminal:
        seat, menu = legal_actions(state)
        index = chooser(state, seat, menu)
        apply_action(state, menu[index], inplace=True)
    return state


def replay(spec: GameSpec, play_seed: int, action_log: Sequence[int]) -> GameState:
    """記録された行動ログから対局を再現する"""
    state = initial_state(spec, play_seed)
    for index in action_log:
        apply_index(state, index, inplace=True)
    if not state.terminal:
        logger.warning("replayed action log ended before the terminal state")
    return state
