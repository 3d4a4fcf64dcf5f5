import numpy as np
import pandas as pd
import pytest

from genstrat.errors import InsufficientDataError
from genstrat.services.stats.alpha import fit_alpha, fit_alpha_per_game
from genstrat.services.stats.jaggedness import (
    jaggedness,
    jaggedness_from_z,
    k_sweep,
    neighborhoods,
    stakes_scale,
    subset_robustness,
)

ALPHA = {"a": 1.0, "b": 0.5, "c": -0.5, "d": -1.0}
GAMES = [1, 2, 3, 4, 5, 6]


def _inputs(make_slots, make_axes, interaction=None, noise=0.0):
    slots = make_slots(ALPHA, games=GAMES, runs=3, noise=noise, seed=2, interaction=interaction)
    per_game = fit_alpha_per_game(slots).alpha
    alpha = fit_alpha(slots).alpha
    return per_game, alpha, slots, make_axes(GAMES, seed=1)


def test_stakes_scale_is_population_std(make_slots):
    sigma = stakes_scale(make_slots({"a": 1.0, "b": 0.0}, games=[1], runs=1))
    assert sigma[1] == pytest.approx(1.0)


def test_neighborhoods_start_with_the_game(make_axes):
    hoods = neighborhoods(make_axes(GAMES), K=2)
    assert set(hoods) == set(GAMES)
    for game, members in hoods.items():
        assert members[0] == game
        assert len(members) == 3
        assert len(set(members)) == 3


def test_constant_strength_surface_has_zero_jaggedness(make_slots, make_axes):
    report = jaggedness(*_inputs(make_slots, make_axes), K=2, B=0)
    assert np.allclose(report.J.to_numpy(), 0.0, atol=1e-9)
    assert report.excluded == []


def test_jaggedness_is_positively_homogeneous():
    z = pd.DataFrame([[0.5, -1.0, 2.0], [-0.5, 1.0, -2.0]], index=["x", "y"], columns=[1, 2, 3])
    hoods = {1: [1, 2], 2: [2, 3], 3: [3, 1]}
    base = jaggedness_from_z(z, hoods)
    assert jaggedness_from_z(3.0 * z, hoods).to_numpy() == pytest.approx(3.0 * base.to_numpy())
    assert base["x"] == pytest.approx(np.mean([0.75, 1.5, 0.75]))


def test_interaction_raises_the_affected_models(make_slots, make_axes):
    bumps = {1: {"a": 2.0, "d": -2.0}, 4: {"a": -2.0, "d": 2.0}}
    report = jaggedness(*_inputs(make_slots, make_axes, interaction=bumps), K=2, B=0)
    assert report.J["a"] > 0
    assert report.J["a"] > report.J["b"]


def test_bootstrap_interval_is_non_negative(make_slots, make_axes):
    report = jaggedness(*_inputs(make_slots, make_axes, noise=0.5), K=2, B=20)
    assert (report.lo >= 0).all()
    assert list(report.to_frame().columns) == ["model", "J", "lo", "hi"]


def test_too_few_games_for_k(make_slots, make_axes):
    with pytest.raises(InsufficientDataError):
        jaggedness(*_inputs(make_slots, make_axes), K=6, B=0)
    with pytest.raises(ValueError):
        jaggedness(*_inputs(make_slots, make_axes), K=0, B=0)


def test_zero_spread_games_are_excluded(make_slots, make_axes):
    per_game, alpha, slots, axes = _inputs(make_slots, make_axes, noise=0.3)
    flat = slots[slots["game_seed"] == 6].assign(margin=0.0)
    slots = pd.concat([slots[slots["game_seed"] != 6], flat], ignore_index=True)
    report = jaggedness(per_game, alpha, slots, axes, K=2, B=0)
    assert report.excluded == [6]
    assert 6 not in report.z.columns


def test_k_sweep_skips_large_k(make_slots, make_axes):
    table = k_sweep(*_inputs(make_slots, make_axes, noise=0.3), ks=(2, 3, 10))
    assert list(table.columns) == [2, 3]
    assert table.loc["spearman_vs_reference", 3] == pytest.approx(1.0)


def test_subset_robustness_lists_subsets(make_slots, make_axes):
    table = subset_robustness(*_inputs(make_slots, make_axes, noise=0.3), K=2)
    assert set(table["subset"]) == {"drop:a", "drop:b", "drop:c", "drop:d"}
    assert (table["models"] == 3).all()
