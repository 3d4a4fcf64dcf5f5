import numpy as np
import pytest

from genstrat.errors import ReconstructionError
from genstrat.schemas.game import SHOWDOWN, BuilderConfig, Condition, DeckConfig, Phase, Transition
from genstrat.services import engine
from genstrat.services.builder import (
    BUILDER_VERSION,
    acceptance_check,
    build_game,
    generate_pool,
    resolve_conditions,
    spec_digest,
)
from genstrat.services.catalog import assemble_spec, fixture, to


def _rare_branch_spec():
    # pot は初期スタックの2倍を超えないので rare には決して入らない
    never = Condition(family="chips", ref="pot", op=">=", value=50)
    phases = [
        Phase(
            id="open",
            kind="action",
            style="betting",
            bet_sizes=(1,),
            transitions=(Transition(target="rare", condition=never), Transition(target="close")),
        ),
        Phase(id="rare", kind="action", style="maneuver", maneuver="pass", transitions=to("close")),
        Phase(id="close", kind="action", style="maneuver", maneuver="pass", transitions=to(SHOWDOWN)),
    ]
    return assemble_spec(seed=11, phases=phases, deck=DeckConfig(ranks=3, suits=1))


def _long_spec(n=12):
    ids = [f"m{i}" for i in range(n)]
    phases = [
        Phase(
            id=pid,
            kind="action",
            style="maneuver",
            maneuver="pass",
            transitions=to(ids[i + 1] if i + 1 < n else SHOWDOWN),
        )
        for i, pid in enumerate(ids)
    ]
    return assemble_spec(seed=12, phases=phases, deck=DeckConfig(ranks=3, suits=1))


def test_build_is_deterministic():
    config = BuilderConfig(dial=0.5)
    first = build_game(17, config)
    second = build_game(17, config)
    assert spec_digest(first) == spec_digest(second)
    assert first.builder_version == BUILDER_VERSION


def test_different_seeds_give_different_games():
    config = BuilderConfig(dial=0.8)
    digests = {spec_digest(build_game(seed, config)) for seed in range(10)}
    assert len(digests) > 1


@pytest.mark.parametrize("seed", range(25))
def test_built_games_validate(seed):
    spec = build_game(seed, BuilderConfig(dial=0.7))
    engine.validate_spec(spec)
    assert spec.phases


def test_zero_dial_builds_single_betting_phase():
    spec = build_game(3, BuilderConfig(dial=0.0))
    assert len(spec.phases) == 1
    assert spec.phases[0].style == "betting"
    assert spec.showdown_metric == "high_card"


def test_stale_builder_version_is_rejected():
    with pytest.raises(ReconstructionError):
        build_game(1, BuilderConfig(builder_version="000000000000"))


def test_resolve_conditions_drops_unreachable_phase():
    resolved = resolve_conditions(_rare_branch_spec())
    assert [p.id for p in resolved.phases] == ["open", "close"]
    assert resolved.phases[0].transitions == (Transition(target="close"),)


def test_kuhn_passes_acceptance(kuhn_spec):
    report = acceptance_check(kuhn_spec, episodes=300)
    assert report.accepted
    assert report.reasons == []
    assert report.dead_branch_fraction is None
    assert 1.0 <= report.avg_moves <= 1.5


def test_long_game_fails_move_gate():
    report = acceptance_check(_long_spec(), episodes=50)
    assert not report.accepted
    assert report.avg_moves == pytest.approx(12.0)
    assert report.reasons[0].startswith("avg_moves")


def test_rare_phase_fails_firing_and_branch_gates():
    report = acceptance_check(_rare_branch_spec(), episodes=200)
    assert not report.accepted
    assert report.phase_fire_fractions["rare"] == 0.0
    assert report.dead_branch_fraction == 1.0
    prefixes = {reason.split()[0] for reason in report.reasons}
    assert prefixes == {"phase_firing", "dead_branches"}


def test_acceptance_is_deterministic():
    spec = fixture("leduc-like")
    assert acceptance_check(spec, 100) == acceptance_check(spec, 100)


def test_acceptance_rejects_zero_episodes(kuhn_spec):
    with pytest.raises(ValueError):
        acceptance_check(kuhn_spec, 0)


def test_generate_pool_is_ordered_and_repeatable():
    config = BuilderConfig(dial=0.3)
    first = generate_pool(0, 3, config, episodes=100)
    second = generate_pool(0, 3, config, episodes=100)
    assert first.accepted_seeds == second.accepted_seeds
    assert [row.seed for row in first.rows] == list(range(len(first.rows)))
    assert len(first.accepted_seeds) == 3 or first.truncated


def test_generate_pool_truncates_at_candidate_cap():
    manifest = generate_pool(0, 50, BuilderConfig(dial=0.3), episodes=50, max_candidates=4)
    assert len(manifest.rows) == 4
    assert manifest.truncated


@pytest.mark.slow
def test_generated_games_are_zero_sum_and_conserve():
    config = BuilderConfig()
    manifest = generate_pool(0, 20, config, episodes=200)
    assert len(manifest.accepted_seeds) == 20
    rng = np.random.default_rng(11)
    for seed in manifest.accepted_seeds:
        spec = build_game(seed, config)
        for play_seed in range(500):
            state = engine.play(spec, play_seed, lambda s, seat, menu: int(rng.integers(len(menu))))
            alice, bob = engine.terminal_payoff(state)
            assert alice + bob == 0
            assert engine.conserved(state)
