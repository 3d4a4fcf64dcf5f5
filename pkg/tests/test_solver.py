import numpy as np
import pytest

from genstrat.errors import TractabilityError
from genstrat.schemas.game import SHOWDOWN, DeckConfig, Phase
from genstrat.services import solver
from genstrat.services.catalog import assemble_spec, fixture, to

KUHN_VALUE = -1.0 / 18.0


@pytest.fixture(scope="module")
def kuhn_game():
    return solver.abstract_game(fixture("kuhn"))


@pytest.fixture(scope="module")
def kuhn_solution(kuhn_game):
    return solver.cfr_plus_solve(kuhn_game, 2000, checkpoint_every=500)


def test_kuhn_tree_shape(kuhn_game):
    assert len(solver.enumerate_deals(fixture("kuhn"))) == 6
    assert len(kuhn_game.roots) == 6
    assert kuhn_game.infoset_count == 12
    assert sum(weight for weight, _ in kuhn_game.roots) == pytest.approx(1.0)


def test_cfr_plus_reaches_kuhn_value(kuhn_game, kuhn_solution):
    assert solver.expected_value(kuhn_game, kuhn_solution.strategy) == pytest.approx(KUHN_VALUE, abs=0.005)
    assert solver.exploitability(kuhn_game, kuhn_solution.strategy) < 0.01


def test_checkpoints_trend_down(kuhn_solution):
    iterations = [it for it, _ in kuhn_solution.checkpoints]
    values = [v for _, v in kuhn_solution.checkpoints]
    assert iterations == [500, 1000, 1500, 2000]
    assert values[-1] <= values[0]


def test_sequence_form_lp_matches_kuhn_value(kuhn_game):
    assert solver.sequence_form_value(kuhn_game) == pytest.approx(KUHN_VALUE, abs=1e-6)


def test_uniform_play_is_exploitable_in_kuhn(kuhn_game):
    assert solver.exploitability(kuhn_game, solver.uniform_strategy(kuhn_game)) > 0.1


def test_uniform_is_an_equilibrium_of_matching_pennies():
    game = solver.abstract_game(fixture("matching-pennies"))
    uniform = solver.uniform_strategy(game)
    assert solver.exploitability(game, uniform) == pytest.approx(0.0, abs=1e-12)
    assert solver.sequence_form_value(game) == pytest.approx(0.0, abs=1e-6)


def test_strategy_rows_are_distributions(kuhn_game, kuhn_solution):
    rows = solver.strategy_rows(kuhn_game, kuhn_solution.strategy)
    assert len(rows) == 12
    for row in rows:
        assert sum(row["probabilities"].values()) == pytest.approx(1.0)


def test_fine_level_keeps_action_path(kuhn_game):
    fine = solver.abstract_game(fixture("kuhn"), level="fine")
    assert fine.infoset_count == kuhn_game.infoset_count
    assert all(key.count("|") > 4 for key in fine.keys)


def test_large_deck_is_intractable():
    betting = Phase(id="bet", kind="action", style="betting", bet_sizes=(1,), transitions=to(SHOWDOWN))
    spec = assemble_spec(seed=5, phases=[betting], deck=DeckConfig(ranks=13, suits=4), hand_size=3)
    with pytest.raises(TractabilityError):
        solver.enumerate_deals(spec)


def test_zero_iterations_rejected(kuhn_game):
    with pytest.raises(ValueError):
        solver.cfr_plus_solve(kuhn_game, 0)


def test_bob_calls_with_king_and_folds_jack(kuhn_game, kuhn_solution):
    # Bob は K で相手のベットに必ずコールし、J では必ずフォールドする
    strategy = kuhn_solution.strategy
    respond = [i for i, key in enumerate(kuhn_game.keys) if key.startswith("Bob|betting|wager|respond")]
    calls = {kuhn_game.keys[i].split("|")[4]: strategy[i][kuhn_game.labels[i].index("call")] for i in respond}
    assert calls["b7"] == pytest.approx(1.0, abs=0.02)
    assert calls["b0"] == pytest.approx(0.0, abs=0.02)
    assert np.isfinite(list(calls.values())).all()
