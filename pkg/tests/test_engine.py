import numpy as np
import pytest

from genstrat.errors import IllegalActionError, NonTerminalStateError, SpecValidationError, TerminalStateError
from genstrat.schemas.game import SHOWDOWN, DeckConfig, Phase, PileDecl, Transition
from genstrat.services import engine
from genstrat.services.catalog import assemble_spec, fixture, fixture_names, to

# Kuhn のデッキ: 0=J, 1=Q, 2=K。先頭から Alice, Bob の順に配る
ALICE_KING = [2, 0, 1]
ALICE_JACK = [0, 2, 1]


def _labels(state):
    return [c.label for c in engine.legal_actions(state)[1]]


def _act(state, label):
    seat, menu = engine.legal_actions(state)
    choice = next(c for c in menu if c.label == label)
    return engine.apply_action(state, choice)


def test_kuhn_opening_menu(kuhn_spec):
    state = engine.initial_state(kuhn_spec, 1, deck_order=ALICE_KING)
    seat, menu = engine.legal_actions(state)
    assert seat == "Alice"
    assert [c.label for c in menu] == ["check", "bet:1"]
    assert state.pot == 2


@pytest.mark.parametrize(
    "deck, line, expected",
    [
        (ALICE_KING, ["check", "check"], (1, -1)),
        (ALICE_KING, ["bet:1", "fold"], (1, -1)),
        (ALICE_KING, ["bet:1", "call"], (2, -2)),
        (ALICE_JACK, ["bet:1", "call"], (-2, 2)),
        (ALICE_JACK, ["check", "bet:1", "fold"], (-1, 1)),
        (ALICE_JACK, ["check", "bet:1", "call"], (-2, 2)),
    ],
)
def test_kuhn_payoffs(kuhn_spec, deck, line, expected):
    state = engine.initial_state(kuhn_spec, 1, deck_order=deck)
    for label in line:
        state = _act(state, label)
    assert state.terminal
    assert engine.terminal_payoff(state) == expected


def test_terminal_state_has_no_actions(kuhn_spec):
    state = engine.initial_state(kuhn_spec, 1, deck_order=ALICE_KING)
    state = _act(_act(state, "check"), "check")
    with pytest.raises(TerminalStateError):
        engine.legal_actions(state)


def test_payoff_before_end_raises(kuhn_spec):
    state = engine.initial_state(kuhn_spec, 1)
    with pytest.raises(NonTerminalStateError):
        engine.terminal_payoff(state)


def test_illegal_action_carries_menu(kuhn_spec):
    state = engine.initial_state(kuhn_spec, 1)
    with pytest.raises(IllegalActionError) as info:
        engine.apply_index(state, 5)
    assert info.value.menu == ["check", "bet:1"]


def test_apply_action_does_not_mutate_by_default(kuhn_spec):
    state = engine.initial_state(kuhn_spec, 1)
    nxt = engine.apply_index(state, 0)
    assert state.action_log == []
    assert nxt.action_log == [0]


def test_observe_hides_opponent_card(kuhn_spec):
    state = engine.initial_state(kuhn_spec, 1, deck_order=ALICE_KING)
    alice = engine.observe(state, "Alice")
    bob = engine.observe(state, "Bob")
    assert alice.hand == ("Ks",)
    assert bob.hand == ("Js",)
    assert "Js" not in alice.key()


def test_play_seed_fixes_chance(kuhn_spec):
    first = engine.initial_state(kuhn_spec, 42)
    second = engine.initial_state(kuhn_spec, 42)
    assert first.hand("Alice") == second.hand("Alice")
    assert first.hand("Bob") == second.hand("Bob")


@pytest.mark.parametrize("name", fixture_names())
def test_random_play_is_zero_sum_and_conserves(name):
    spec = fixture(name)
    rng = np.random.default_rng(7)
    for play_seed in range(200):
        state = engine.play(spec, play_seed, lambda s, seat, menu: int(rng.integers(len(menu))))
        alice, bob = engine.terminal_payoff(state)
        assert alice + bob == 0
        assert engine.conserved(state)


@pytest.mark.parametrize("name", fixture_names())
def test_replay_reproduces_margin(name):
    spec = fixture(name)
    rng = np.random.default_rng(3)
    for play_seed in range(20):
        state = engine.play(spec, play_seed, lambda s, seat, menu: int(rng.integers(len(menu))))
        again = engine.replay(spec, play_seed, state.action_log)
        assert again.terminal
        assert engine.terminal_payoff(again) == engine.terminal_payoff(state)


def test_matching_pennies_resolves_simultaneously():
    spec = fixture("matching-pennies")
    state = engine.initial_state(spec, 0)
    assert _labels(state) == ["heads", "tails"]
    state = _act(state, "heads")
    # Bob の観測には Alice の選択がまだ現れない
    assert engine.observe(state, "Bob").action_path == ()
    state = _act(state, "heads")
    assert engine.terminal_payoff(state) == (1, -1)


def test_leduc_deals_board_between_rounds():
    spec = fixture("leduc-like")
    state = engine.initial_state(spec, 5)
    state = _act(_act(state, "check"), "check")
    assert len(state.piles["board"]) == 1
    assert engine.observe(state, "Alice").signals[0].startswith("board:")


def test_validation_rejects_unguarded_back_edge():
    phases = [
        Phase(id="a", kind="action", style="betting", bet_sizes=(1,), transitions=to("b")),
        Phase(id="b", kind="action", style="betting", bet_sizes=(1,), transitions=(Transition(target="a"),)),
    ]
    spec = assemble_spec(seed=9, phases=phases, deck=DeckConfig(ranks=3, suits=1))
    with pytest.raises(SpecValidationError):
        engine.initial_state(spec, 0)


def test_validation_rejects_undeclared_target():
    phases = [Phase(id="a", kind="action", style="betting", bet_sizes=(1,), transitions=to("nowhere"))]
    spec = assemble_spec(seed=9, phases=phases, deck=DeckConfig(ranks=3, suits=1))
    with pytest.raises(SpecValidationError):
        engine.validate_spec(spec)


def test_showdown_target_constant_is_reserved():
    assert SHOWDOWN not in [p.id for p in fixture("leduc-like").phases]


def test_play_seeds_diverge_at_the_deal(kuhn_spec):
    logs = {seed: engine.initial_state(kuhn_spec, seed).chance_log() for seed in range(7, 27)}
    assert logs[7] == engine.initial_state(kuhn_spec, 7).chance_log()
    assert logs[7][0]["event"] == "Shuffle"
    assert len({str(log) for log in logs.values()}) > 1


def test_match_log_marks_private_deals(kuhn_spec):
    state = engine.initial_state(kuhn_spec, 1, deck_order=ALICE_KING)
    deals = [e for e in state.match_log() if e["event"] == "Deal"]
    assert deals == [
        {"event": "Deal", "payload": {"to": "Alice", "card": "Ks"}, "visible_to": ["Alice"]},
        {"event": "Deal", "payload": {"to": "Bob", "card": "Js"}, "visible_to": ["Bob"]},
    ]


def test_board_deals_follow_the_pile_declaration():
    spec = fixture("leduc-like")
    state = engine.initial_state(spec, 5)
    while not any(e["payload"].get("to") == "board" for e in state.match_log() if e["event"] == "Deal"):
        state = _act(state, _labels(state)[0])
    board = [e for e in state.match_log() if e["event"] == "Deal" and e["payload"]["to"] == "board"]
    assert board[0]["visible_to"] == ["Alice", "Bob"]
    assert engine.pile_viewers(spec, "board") == frozenset({"Alice", "Bob"})
    assert engine.pile_viewers(spec, "hand:Bob") == frozenset({"Bob"})
    assert engine.pile_viewers(spec, "deck") == frozenset()


def _with_pile(spec, replacement):
    piles = tuple(replacement if p.name == replacement.name else p for p in spec.piles)
    return spec.model_copy(update={"piles": piles})


@pytest.mark.parametrize(
    "pile, message",
    [
        (PileDecl(name="board", visibility="hidden"), "must be public"),
        (PileDecl(name="hand:Alice", visibility="public"), "must be owner-only"),
        (PileDecl(name="hand:Alice", visibility="owner-only", owner="Bob"), "owned by its seat"),
        (PileDecl(name="muck", visibility="hidden", owner="Alice"), "cannot have an owner"),
    ],
)
def test_pile_declarations_must_match_engine_visibility(kuhn_spec, pile, message):
    with pytest.raises(SpecValidationError, match=message):
        engine.validate_spec(_with_pile(kuhn_spec, pile))
