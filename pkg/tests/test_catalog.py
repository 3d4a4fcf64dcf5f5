import pytest

from genstrat.services import engine
from genstrat.services.catalog import fixture, fixture_by_seed, fixture_names
from genstrat.services.hashing import fnv1a_64


def test_fnv1a_reference_vectors():
    assert fnv1a_64("") == 0xCBF29CE484222325
    assert fnv1a_64("a") == 0xAF63DC4C8601EC8C


def test_fixture_names_and_seeds():
    assert fixture_names() == ["kuhn", "kuhn-like", "leduc-like", "matching-pennies"]
    seeds = {name: fixture(name).seed for name in fixture_names()}
    assert seeds == {"kuhn": -3, "kuhn-like": -5, "leduc-like": -100, "matching-pennies": -200}


@pytest.mark.parametrize("seed", [-3, -5, -100, -200])
def test_fixture_by_seed_round_trips(seed):
    assert fixture_by_seed(seed).seed == seed


def test_unknown_fixture_raises_key_error():
    with pytest.raises(KeyError):
        fixture("texas")
    with pytest.raises(KeyError):
        fixture_by_seed(-1)


def test_kuhn_deck_uses_top_ranks():
    spec = fixture("kuhn")
    assert [engine.card_label(c, spec) for c in engine.full_deck(spec)] == ["Js", "Qs", "Ks"]


@pytest.mark.parametrize("name", ["kuhn", "kuhn-like", "leduc-like", "matching-pennies"])
def test_fixtures_pass_validation(name):
    engine.validate_spec(fixture(name))
