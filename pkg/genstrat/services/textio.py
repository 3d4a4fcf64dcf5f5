import json
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from genstrat.schemas.game import PLAYERS, SHOWDOWN, Condition, GameSpec, Phase
from genstrat.services import engine
from genstrat.services.engine import GameState, card_label, full_deck

REPLY_FORMAT: str = 'Reply with a single line of JSON of the form {"action": <option index>} and nothing else.'

METRIC_TEXT = {
    "high_card": "compare the highest rank first, then the next highest, and so on",
    "sum": "the larger sum of ranks wins (rank values count from 0 for the lowest rank)",
    "pairs": "more cards of one rank beat fewer; between equal groups the higher rank wins, then the remaining cards by rank",
    "suit_count": "more cards of a single suit win; ties are broken by highest rank",
    "low_card": "the lower cards win: compare the lowest rank first, lower is better",
}


def _condition_text(cond: Condition) -> str:
    op = "at least" if cond.op == ">=" else "less than"
    if cond.family == "chips":
        subject = "the pot" if cond.ref == "pot" else f"{cond.ref.split(':', 1)[1]}'s stack"
        return f"{subject} is {op} {cond.value} chips"
    if cond.family == "cards":
        pile = "the board" if cond.ref == "board" else f"{cond.ref.split(':', 1)[1]}'s hand"
        if cond.measure == "count":
            return f"{pile} holds {op} {cond.value} cards"
        return f"the highest rank index in {pile} is {op} {cond.value} (empty counts as -1)"
    return f"phase {cond.ref.split(':', 1)[1]} has been entered {op} {cond.value} times"


def _target_text(target: str) -> str:
    return "go to the showdown" if target == SHOWDOWN else f"go to phase {target}"


def _phase_text(phase: Phase) -> List[str]:
    lines: List[str] = []
    if phase.kind == "action" and phase.style == "betting":
        sizes = ", ".join(str(s) for s in phase.bet_sizes)
        lines.append(f"Betting round. The leader acts first. Allowed bet sizes: {sizes} chips.")
        lines.append(
            "With no bet outstanding you may check or bet. Facing a bet you may fold, call "
            "(matching it, or going all-in if you cannot), or raise by one of the bet sizes."
        )
        lines.append(f"At most {phase.max_raises} raise(s) are allowed in this round.")
        lines.append("The round ends when both players check in turn or a bet is called. A fold ends the game at once and the other player takes the pot.")
    elif phase.kind == "action":
        lines.append("Maneuver round. The leader acts once, then the other player acts once. Each may pass.")
        if phase.maneuver == "steal":
            lines.append("Steal: take the opponent's card at a chosen position and give them your lowest card. Both players see the exchanged cards.")
        elif phase.maneuver == "swap":
            lines.append("Swap: exchange one of your cards with the most recent board card. The swapped-in card is public.")
        elif phase.maneuver == "discard_draw":
            lines.append("Discard: discard one of your cards face down and draw the top card of the deck privately.")
    elif phase.kind == "observation":
        kinds = {
            "deal_public": f"{phase.count} card(s) are dealt face up to the board; both players see them.",
            "deal_private": f"{phase.count} card(s) are dealt face down to each player; only the owner sees them.",
            "peek": f"the top {phase.count} card(s) of the deck are shown privately without being drawn.",
            "reveal": "each player's highest card is shown to both players.",
            "compare": "the dealer announces which player's cards currently rank higher under the showdown rule.",
        }
        lines.append(f"Observation round: {kinds[str(phase.observation)]}")
        if phase.interactive:
            lines.append(f"The leader chooses to observe (paying {phase.fee} chip(s) into the pot, and seeing the result alone) or to pass.")
        elif phase.observation == "peek":
            lines.append("Only the leader sees the peeked cards.")
    elif phase.kind == "simultaneous":
        if phase.simultaneous == "side_bet":
            lines.append(
                f"Simultaneous side bet: both players secretly choose heads or tails. If the choices match, Bob pays Alice {phase.stake} chip(s); "
                f"otherwise Alice pays Bob {phase.stake} chip(s). Payments go directly between stacks."
            )
        else:
            bids = ", ".join(str(b) for b in sorted(set(phase.bid_levels) | {0}))
            lines.append(f"Sealed auction: both players secretly bid one of {bids} chips into the pot. The higher bidder becomes the leader; on a tie the leader is unchanged.")
        lines.append("Choices are revealed to both players once both have chosen.")
    else:
        rules = {
            "high_card": "the player whose cards (with the board) contain the higher rank becomes the leader",
            "low_card": "the player whose cards (with the board) contain the lower top rank becomes the leader",
            "chip_lead": "the player with the larger stack becomes the leader",
            "alternate": "the leader role passes to the other player",
        }
        lines.append(f"Position round: {rules[str(phase.position)]}. On a tie the leader is unchanged.")
        if phase.defer:
            lines.append("The new leader may then keep the lead or defer it to the other player.")
    for tr in phase.transitions:
        if tr.condition is None:
            lines.append(f"Otherwise, {_target_text(tr.target)}.")
        else:
            lines.append(f"If {_condition_text(tr.condition)}, {_target_text(tr.target)}.")
    return lines


def render_rulebook(spec: GameSpec) -> str:
    """フェーズグラフから自然言語のルールブックを生成する

    Args:
        spec (GameSpec): ゲーム仕様

    Returns:
        str: 決定的なルールブック本文
    """
    ranks = sorted({card_label(c, spec)[0] for c in full_deck(spec)}, key=lambda r: engine.RANK_LABELS.index(r))
    lines: List[str] = [
        f"# Rulebook for game {spec.name or spec.seed}",
        "",
        f"Two players, {PLAYERS[0]} and {PLAYERS[1]}, play one hand for chips. The game is zero-sum: whatever one player wins, the other loses.",
        "",
        "## Cards",
        f"The deck has {spec.deck.ranks} rank(s) ({', '.join(ranks)}, lowest to highest), {spec.deck.suits} suit(s) and {spec.deck.copies} cop(ies) of each card, {spec.deck.size} cards in total.",
        "The deck is shuffled once at the start; every later draw comes from the top of that shuffled deck.",
        f"Each player receives {spec.hand_size} private card(s). Alice is dealt first.",
        "",
        "## Piles and visibility",
    ]
    for pile in spec.piles:
        lines.append(f"- {pile.name}: {pile.visibility}")
    lines += [
        "",
        "## Chips",
        f"Each player starts with {spec.initial_stack} chips and posts an ante of {spec.ante} into the pot.",
        "No player can ever wager more than their remaining stack.",
        "",
        "## Phases",
        f"Play starts at phase {spec.start}; Alice starts as the leader. A phase can be entered at most {spec.phase_visit_cap} times; a transition to a phase that has reached that limit is skipped.",
        "Transitions are checked in the order listed and the first one that applies is taken.",
    ]
    for phase in spec.phases:
        lines.append("")
        lines.append(f"### Phase {phase.id}")
        lines.extend(_phase_text(phase))
    lines += [
        "",
        "## Showdown",
        f"At the showdown each player's private cards are combined with the board. Ranking: {METRIC_TEXT[spec.showdown_metric]}.",
        "The better hand wins the matched part of the pot; any unmatched excess goes back to whoever put it in. On a tie each player takes back their own contribution.",
        "",
        "## Replies",
        REPLY_FORMAT,
    ]
    return "\n".join(lines) + "\n"


def _event_text(ev: engine.Event, seat: str) -> Optional[str]:
    p = ev.payload
    if ev.kind == "Ante":
        return f"{p['from']} posts an ante of {p['amount']}."
    if ev.kind == "Deal":
        if p["to"] == "board":
            return f"Board card: {p['card']}."
        return f"You are dealt {p['card']}." if p["to"] == seat else None
    if ev.kind == "PhaseEnter":
        return f"Phase {p['phase']} begins (visit {p['round']})."
    if ev.kind == "Action":
        return f"{p['seat']} chooses {p['label']}."
    if ev.kind == "ChipTransfer":
        return f"{p['from']} pays {p['amount']} to {p['to']}."
    if ev.kind == "Signal":
        return f"Signal: {p['token']}."
    if ev.kind == "Exchange":
        return f"{p['taker']} takes {p['took']} and gives {p['gave']}."
    if ev.kind == "Discard":
        return f"You discard {p['card']}."
    if ev.kind == "DeckEmpty":
        return "The deck is empty; no card is drawn."
    return None


def render_observation(state: GameState, seat: str) -> str:
    """手番プレイヤーへのプロンプト（現在状態・可視イベント・意思決定）"""
    spec = state.spec
    actor, menu = engine.legal_actions(state)
    info = engine.observe(state, seat)
    board = ", ".join(card_label(c, spec) for c in state.piles["board"]) or "(empty)"
    lines: List[str] = [
        "== Current state ==",
        f"You are {seat}. Phase: {state.phase_id}.",
        f"Your hand: {', '.join(info.hand) or '(empty)'}",
        f"Board: {board}",
        f"Stacks: {PLAYERS[0]} {state.stacks[PLAYERS[0]]}, {PLAYERS[1]} {state.stacks[PLAYERS[1]]}. Pot: {state.pot}.",
        f"Roles: leader is {state.leader}.",
        "",
        "== Visible events ==",
    ]
    for ev in state.history:
        if seat in ev.visible_to:
            text = _event_text(ev, seat)
            if text is not None:
                lines.append(f"- {text}")
    lines += ["", "== Your decision ==", f"It is {actor}'s turn. Legal options:"]
    lines.extend(f"{choice.index}: {choice.label}" for choice in menu)
    lines.append(REPLY_FORMAT)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ParseResult:
    index: int
    path: str
    raw: str
    matched: Optional[str] = None


_OBJECT_RE = re.compile(r"\{[^{}]*\}")
_PARTIAL_RE = re.compile(r"""["']?action["']?\s*[:=]\s*["']?([A-Za-z0-9:_\-]+)""", re.IGNORECASE)


def _strict(text: str, n: int) -> Optional[int]:
    stripped = text.strip()
    if "\n" in stripped:
        return None
    try:
        data = json.loads(stripped)
    except ValueError:
        return None
    if not isinstance(data, dict) or set(data) != {"action"}:
        return None
    value = data["action"]
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < n:
        return None
    return value


def _match_value(value: object, labels: Sequence[str]) -> Optional[tuple]:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return (value, "index") if 0 <= value < len(labels) else None
    if not isinstance(value, str):
        return None
    token = value.strip()
    if re.fullmatch(r"-?\d+", token):
        return _match_value(int(token), labels)
    lowered = [label.lower() for label in labels]
    if token.lower() in lowered:
        return lowered.index(token.lower()), "label"
    # "bet" のようにサイズを省いたラベルは一意なら受け付ける
    heads = [i for i, label in enumerate(lowered) if label.split(":", 1)[0] == token.lower()]
    if len(heads) == 1:
        return heads[0], "label"
    return None


def _loads_loose(chunk: str) -> Optional[dict]:
    for candidate in (chunk, chunk.replace("'", '"'), re.sub(r"([{,]\s*)([A-Za-z_]+)\s*:", r'\1"\2":', chunk)):
        try:
            data = json.loads(candidate)
        except ValueError:
            continue
        if isinstance(data, dict):
            return data
    return None


def _lenient(text: str, labels: Sequence[str]) -> Optional[tuple]:
    for chunk in reversed(_OBJECT_RE.findall(text)):
        data = _loads_loose(chunk)
        if data is None:
            continue
        key = next((k for k in data if str(k).strip().lower() == "action"), None)
        if key is not None:
            hit = _match_value(data[key], labels)
            if hit is not None:
                return hit
    partial = _PARTIAL_RE.findall(text)
    if partial:
        hit = _match_value(partial[-1], labels)
        if hit is not None:
            return hit
    return _match_value(text.strip().strip('."\''), labels)


def parse_reply(text: str, labels: Sequence[str], rng: np.random.Generator) -> ParseResult:
    """返答から合法手を取り出す（strict → lenient → fallback）

    Args:
        text (str): エージェントの返答
        labels (Sequence[str]): 合法手ラベル
        rng (np.random.Generator): fallback 用の対局乱数ストリーム

    Returns:
        ParseResult: 必ず合法な添字を持つ
    """
    if not labels:
        raise ValueError("legal menu is empty")
    strict = _strict(text, len(labels))
    if strict is not None:
        return ParseResult(index=strict, path="strict", raw=text, matched="index")
    lenient = _lenient(text, labels)
    if lenient is not None:
        return ParseResult(index=lenient[0], path="lenient", raw=text, matched=lenient[1])
    return ParseResult(index=int(rng.integers(len(labels))), path="fallback", raw=text)
