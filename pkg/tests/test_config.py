import pytest
from pydantic import ValidationError

from genstrat.config import load_bindings, load_config
from genstrat.errors import ArtifactSchemaError


def test_defaults_without_file():
    config = load_config()
    assert config.k == 50
    assert config.matches_per_matchup == 40
    assert config.builder.dial == 0.5
    assert config.measurement_tier.name == "fast"


def test_yaml_values_and_overrides(tmp_path):
    path = tmp_path / "pipeline.yaml"
    path.write_text("k: 12\ntier: precise\nbuilder:\n  dial: 0.2\n  max_phases: 4\n", encoding="utf-8")
    config = load_config(path, overrides={"k": 8, "schedule_seed": None, "workers": 3})
    assert config.k == 8
    assert config.tier == "precise"
    assert config.builder.max_phases == 4
    assert config.schedule_seed == 0
    assert config.workers == 3


@pytest.mark.parametrize("overrides", [{"matches_per_matchup": 41}, {"tier": "slow"}, {"k": 0}])
def test_invalid_settings_are_rejected(overrides):
    with pytest.raises(ValidationError):
        load_config(overrides=overrides)


def test_missing_agents_file_is_rejected(tmp_path):
    with pytest.raises(ValidationError):
        load_config(overrides={"agents_file": tmp_path / "agents.yaml"})


def test_load_bindings(tmp_path):
    path = tmp_path / "agents.yaml"
    path.write_text(
        "- model_id: rand\n  kind: random\n- model_id: solver\n  kind: cfr_plus\n  cfr_iterations: 50\n",
        encoding="utf-8",
    )
    bindings = load_bindings(path)
    assert [b.model_id for b in bindings] == ["rand", "solver"]
    assert bindings[1].cfr_iterations == 50


def test_load_bindings_reports_every_problem(tmp_path):
    path = tmp_path / "agents.yaml"
    path.write_text(
        "- model_id: a\n  kind: random\n- model_id: a\n  kind: random\n- model_id: r\n  kind: remote\n",
        encoding="utf-8",
    )
    with pytest.raises(ArtifactSchemaError) as info:
        load_bindings(path)
    assert len(info.value.diagnostics) == 2
    assert info.value.diagnostics[0].startswith("entry 2:")
    assert info.value.diagnostics[1] == "model ids must be unique"


def test_load_bindings_needs_a_list(tmp_path):
    path = tmp_path / "agents.yaml"
    path.write_text("model_id: a\n", encoding="utf-8")
    with pytest.raises(ArtifactSchemaError):
        load_bindings(path)
