import pytest

from genstrat.errors import ScheduleError
from genstrat.services.schedule import (
    OptimizationScheduler,
    RotationScheduler,
    check_coverage,
    make_scheduler,
)

MODELS = [f"m{i}" for i in range(1, 10)]
GAMES = [101, 102, 103, 104]


def _opponents(pairs, model):
    return {b if a == model else a for a, b in pairs if model in (a, b)}


def test_round_robin_plays_every_pair():
    pairs = make_scheduler("round_robin", MODELS[:4], GAMES).generate()
    assert all(len(p) == 6 for p in pairs.values())


@pytest.mark.parametrize("rule", ["rotation", "optimization"])
def test_sparse_rules_meet_the_floor(rule):
    pairs = make_scheduler(rule, MODELS, GAMES, min_opponents=2, seed=3).generate()
    assert set(pairs) == set(GAMES)
    for game_pairs in pairs.values():
        assert len(game_pairs) < 36
        for model in MODELS:
            assert len(_opponents(game_pairs, model)) >= 2


def test_optimization_uses_fewest_matchups():
    scheduler = OptimizationScheduler(MODELS[:6], GAMES[:1], min_opponents=2)
    assert len(scheduler.generate()[GAMES[0]]) == 6


def test_optimization_spreads_pairs_across_games():
    pairs = OptimizationScheduler(MODELS[:6], GAMES[:2], min_opponents=2).generate()
    assert set(pairs[GAMES[0]]) != set(pairs[GAMES[1]])


def test_rotation_is_seeded():
    first = RotationScheduler(MODELS, GAMES, seed=8).generate()
    second = RotationScheduler(MODELS, GAMES, seed=8).generate()
    assert first == second


@pytest.mark.parametrize("rule", ["rotation", "optimization", "round_robin"])
def test_too_few_models_for_the_floor_is_an_error(rule):
    with pytest.raises(ScheduleError, match="2 distinct opponent"):
        make_scheduler(rule, ["a", "b"], GAMES, min_opponents=2)


def test_two_models_play_with_a_floor_of_one():
    scheduler = make_scheduler("rotation", ["a", "b"], GAMES, min_opponents=1)
    assert scheduler.floor == 1
    assert scheduler.generate()[GAMES[0]] == [("a", "b")]


@pytest.mark.parametrize("models", [["solo"], ["a", "a", "b"]])
def test_bad_model_lists_are_rejected(models):
    with pytest.raises(ScheduleError):
        make_scheduler("rotation", models, GAMES)


def test_unknown_rule_is_rejected():
    with pytest.raises(ScheduleError):
        make_scheduler("swiss", MODELS, GAMES)  # type: ignore[arg-type]


def test_coverage_check_reports_short_cells():
    with pytest.raises(ScheduleError, match="m3"):
        check_coverage({1: [("m1", "m2")]}, ["m1", "m2", "m3"], 1)
