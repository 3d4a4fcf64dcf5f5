from collections import Counter

import httpx
import pandas as pd
import pytest

from genstrat.errors import ScheduleError
from genstrat.schemas.game import SHOWDOWN, DeckConfig, Phase
from genstrat.schemas.tournament import AgentBinding, RemoteEndpoint, SlotRow
from genstrat.services import engine
from genstrat.services.agents import RemoteAgent
from genstrat.services.catalog import assemble_spec, to
from genstrat.services.stats.alpha import fit_alpha
from genstrat.services.tournament import (
    choose_anchors,
    derive_play_seed,
    fallback_report,
    run_ablation,
    run_slot,
    run_tournament,
    schedule,
    sibling_pairs,
    slot_frame,
)

RANDOM_A = AgentBinding(model_id="rand-a", kind="random")
RANDOM_B = AgentBinding(model_id="rand-b", kind="random")
RANDOM_C = AgentBinding(model_id="rand-c", kind="random")


def test_play_seed_ignores_pair_order():
    assert derive_play_seed(7, 0, "x", "y") == derive_play_seed(7, 0, "y", "x")
    assert derive_play_seed(7, 0, "x", "y") != derive_play_seed(7, 1, "x", "y")
    with pytest.raises(ValueError):
        derive_play_seed(7, 0, "x", "x")


def test_schedule_pairs_every_run_with_its_seat_swap():
    slots = schedule(["a", "b", "c"], [1, 2], matches_per_matchup=4, rule="round_robin")
    assert len(slots) == 3 * 2 * 2 * 2
    by_seed = Counter(s.matchup.play_seed for s in slots)
    assert set(by_seed.values()) == {2}
    for first, second in zip(slots[::2], slots[1::2]):
        assert first.matchup == second.matchup
        assert (first.model_alice, first.model_bob) == (second.model_bob, second.model_alice)


@pytest.mark.parametrize("count", [0, 3])
def test_odd_or_empty_match_count_is_rejected(count):
    with pytest.raises(ScheduleError):
        schedule(["a", "b"], [1], matches_per_matchup=count)


def test_slot_replays_to_the_same_margin(kuhn_spec):
    row = run_slot(kuhn_spec, RANDOM_A, RANDOM_B, play_seed=123)
    assert row.status == "ok"
    assert row.moves_alice + row.moves_bob == len(row.action_log)
    replayed = engine.replay(kuhn_spec, 123, row.action_log)
    assert engine.terminal_payoff(replayed)[0] == row.margin
    assert row.config_alice["model_id"] == "rand-a"


def test_remote_failure_discards_the_slot(kuhn_spec):
    endpoint = RemoteEndpoint(url="https://agents.test", snapshot_tag="m-20250101", attempts=1, backoff=0.0)
    binding = AgentBinding(model_id="remote", kind="remote", endpoint=endpoint)
    client = httpx.Client(transport=httpx.MockTransport(lambda request: httpx.Response(500)))
    agents = {"remote": RemoteAgent(binding, client=client)}
    row = run_slot(kuhn_spec, binding, RANDOM_B, play_seed=1, agents=agents)
    assert row.status == "discarded-timeout"
    assert row.margin == 0
    assert row.message


def test_tournament_runs_in_slot_order(kuhn_spec):
    slots = schedule(["rand-a", "rand-b"], [kuhn_spec.seed], matches_per_matchup=4, min_opponents=1)
    bindings = {"rand-a": RANDOM_A, "rand-b": RANDOM_B}
    rows = run_tournament({kuhn_spec.seed: kuhn_spec}, bindings, slots, workers=2)
    assert [(r.model_alice, r.play_seed) for r in rows] == [(s.model_alice, s.matchup.play_seed) for s in slots]
    frame = slot_frame(rows)
    assert len(frame) == 4
    assert (frame["status"] == "ok").all()


def test_tournament_needs_every_binding(kuhn_spec):
    slots = schedule(["rand-a", "ghost"], [kuhn_spec.seed], matches_per_matchup=2, min_opponents=1)
    with pytest.raises(ScheduleError):
        run_tournament({kuhn_spec.seed: kuhn_spec}, {"rand-a": RANDOM_A}, slots)


def _row(alice, bob, moves=(2, 2), fallbacks=(0, 0)):
    return SlotRow(
        game_seed=1,
        model_alice=alice,
        model_bob=bob,
        run_id=0,
        play_seed=1,
        margin=0,
        moves_alice=moves[0],
        moves_bob=moves[1],
        fallback_alice=fallbacks[0],
        fallback_bob=fallbacks[1],
    )


def test_fallback_report_combines_both_seats():
    rows = [_row("x", "y", fallbacks=(1, 0)), _row("y", "x", moves=(3, 2), fallbacks=(0, 0))]
    report = {r.model_id: r for r in fallback_report(rows)}
    assert report["x"].moves == 4
    assert report["x"].fallback_moves == 1
    assert report["x"].move_rate == pytest.approx(0.25)
    assert report["x"].slot_rate == pytest.approx(0.5)
    assert report["y"].fallback_moves == 0


def test_fallbacks_cannot_exceed_moves():
    with pytest.raises(ValueError):
        _row("x", "y", moves=(1, 1), fallbacks=(2, 0))


def test_anchors_are_top_and_bottom():
    alpha = pd.Series({"a": 0.5, "b": -0.2, "c": 0.1, "d": -0.4})
    assert choose_anchors(alpha) == ("a", "d")
    assert choose_anchors(alpha, exclude=["a", "d"]) == ("c", "b")
    with pytest.raises(ScheduleError):
        choose_anchors(alpha, exclude=["a", "b", "c"])


def test_ablation_siblings_share_seed_and_seat(kuhn_spec):
    low = AgentBinding(model_id="fam-low", kind="random")
    high = AgentBinding(model_id="fam-high", kind="mixture", epsilon=0.0, l1_episodes=300)
    rows = run_ablation("fam", low, high, [RANDOM_C], {kuhn_spec.seed: kuhn_spec}, runs=2)
    assert len(rows) == 8
    assert {r.variant for r in rows} == {"low", "high"}
    pairs = sibling_pairs(rows)
    assert len(pairs) == 4
    assert set(pairs["seat"]) == {"Alice", "Bob"}
    assert (pairs["anchor"] == "rand-c").all()


def test_low_and_high_need_distinct_ids(kuhn_spec):
    with pytest.raises(ScheduleError):
        run_ablation("fam", RANDOM_A, RANDOM_A, [RANDOM_C], {kuhn_spec.seed: kuhn_spec}, runs=1)


# (ランク数, ベット額, アンテ)
KUHN_VARIANTS = [
    (3, 1, 1), (4, 1, 1), (5, 1, 1), (6, 1, 1), (3, 2, 1),
    (4, 2, 1), (5, 2, 1), (3, 1, 2), (4, 1, 2), (6, 2, 2),
]

SCRIPTED = {
    "random": AgentBinding(model_id="random", kind="random"),
    "eps": AgentBinding(model_id="eps", kind="mixture", epsilon=0.3),
    "l1": AgentBinding(model_id="l1", kind="l1"),
    "cfr": AgentBinding(model_id="cfr", kind="cfr_plus", cfr_iterations=500),
}


def _kuhn_variant(index, ranks, bet, ante):
    betting = Phase(id="betting", kind="action", style="betting", bet_sizes=(bet,), transitions=to(SHOWDOWN))
    return assemble_spec(
        seed=-1000 - index,
        name=f"kuhn-{ranks}-b{bet}-a{ante}",
        phases=[betting],
        deck=DeckConfig(ranks=ranks, suits=1),
        ante=ante,
    )


@pytest.mark.slow
def test_scripted_agents_rank_by_policy_strength():
    specs = {spec.seed: spec for spec in (_kuhn_variant(i, *v) for i, v in enumerate(KUHN_VARIANTS))}
    slots = schedule(sorted(SCRIPTED), sorted(specs), matches_per_matchup=120, rule="round_robin", min_opponents=2)

    # 席の割り当ては (ゲーム, ペア) ごとに半々
    seats = Counter((s.matchup.game_seed, tuple(sorted(s.matchup.models)), s.model_alice) for s in slots)
    assert set(seats.values()) == {60}
    opponents = {}
    for s in slots:
        opponents.setdefault((s.matchup.game_seed, s.model_alice), set()).add(s.model_bob)
    assert len(opponents) == len(specs) * len(SCRIPTED)
    assert min(len(v) for v in opponents.values()) >= 2

    frame = slot_frame(run_tournament(specs, SCRIPTED, slots))
    assert (frame["status"] == "ok").all()
    alpha = fit_alpha(frame).alpha
    assert alpha["l1"] > alpha["eps"] > alpha["random"]
    assert alpha["cfr"] > alpha["random"]
