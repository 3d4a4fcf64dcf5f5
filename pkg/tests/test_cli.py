import json

import pytest

from genstrat.cli import build_arg_parser, main
from genstrat.schemas.tournament import AgentBinding, SlotRow
from genstrat.services.artifacts import Provenance, read_csv, write_csv, write_jsonl
from genstrat.services.tournament import derive_play_seed, run_slot


def _manifest(run_dir):
    return json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))


def _write_slots(run_dir, frame):
    rows = [SlotRow(**{**record, "margin": int(record["margin"])}) for record in frame.to_dict("records")]
    write_jsonl(run_dir / "slots.jsonl", rows, Provenance(kind="slots", schedule_seed=0))


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_arg_parser().parse_args([])


def test_render_fixture_to_file(tmp_path):
    target = tmp_path / "rules" / "kuhn.txt"
    assert main(["render", "--fixture", "kuhn", "--file", str(target)]) == 0
    assert target.read_text(encoding="utf-8").strip()


def test_render_needs_a_game(tmp_path):
    assert main(["render", "--out", str(tmp_path)]) == 1


def test_solve_writes_strategy_and_checkpoints(tmp_path):
    code = main(
        ["solve", "--fixture", "kuhn", "--iterations", "200", "--checkpoint-every", "100", "--out", str(tmp_path), "--quiet"]
    )
    assert code == 0
    entries = _manifest(tmp_path)
    assert entries["solver_-3"] == "solver_-3.jsonl"
    checkpoints, provenance = read_csv(tmp_path / entries["solver_-3_checkpoints"])
    assert checkpoints["iteration"].tolist() == [100, 200]
    assert provenance.extra["seed"] == -3
    assert provenance.extra["value"] == pytest.approx(-1 / 18, abs=0.02)


def test_invalid_configuration_exits_with_2(tmp_path):
    assert main(["tournament", "--matches", "3", "--out", str(tmp_path)]) == 2


def test_fit_on_empty_slot_table_fails(tmp_path):
    write_jsonl(tmp_path / "slots.jsonl", [], Provenance(kind="slots"))
    assert main(["fit", "--out", str(tmp_path), "--quiet"]) == 1


def test_missing_artifact_fails(tmp_path):
    assert main(["fit", "--out", str(tmp_path), "--quiet"]) == 1


def test_fit_writes_leaderboard(tmp_path, make_slots):
    _write_slots(tmp_path, make_slots({"a": 2.0, "b": 0.0, "c": -2.0}, games=[1, 2]))
    assert main(["fit", "--out", str(tmp_path), "--bootstrap", "0", "--quiet"]) == 0
    board, provenance = read_csv(tmp_path / "leaderboard.csv", required=["rank", "model", "alpha"])
    assert board["model"].tolist() == ["a", "b", "c"]
    assert board["alpha"].tolist() == pytest.approx([2.0, 0.0, -2.0])
    assert provenance.kind == "leaderboard"
    assert provenance.schedule_seed == 0


def test_select_keeps_k_games(tmp_path, make_axes):
    write_csv(tmp_path / "axes.csv", make_axes(range(10, 20), seed=3), Provenance(kind="axes"))
    assert main(["select", "--k", "4", "--out", str(tmp_path)]) == 0
    selection, provenance = read_csv(tmp_path / "selection.csv", required=["rank", "seed", "min_distance"])
    assert selection["rank"].tolist() == [1, 2, 3, 4]
    assert selection["seed"].is_unique
    assert provenance.extra["k"] == 4
    assert set(_manifest(tmp_path)) == {"selection", "bounds"}


def test_replay_exports_event_log(tmp_path, kuhn_spec):
    bindings = [AgentBinding(model_id="r1", kind="random"), AgentBinding(model_id="r2", kind="random")]
    row = run_slot(kuhn_spec, *bindings, play_seed=derive_play_seed(kuhn_spec.seed, 0, "r1", "r2"))
    write_jsonl(tmp_path / "slots.jsonl", [row], Provenance(kind="slots"))
    assert main(["replay", "--slot", "0", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / _manifest(tmp_path)["match_0"]).read_text(encoding="utf-8").splitlines()
    events = [json.loads(line) for line in lines[1:]]
    assert events[0]["event"] == "Shuffle"
    assert "Payout" in [e["event"] for e in events]
    assert {"Alice"} in [set(e["visible_to"]) for e in events if e["event"] == "Deal"]
    assert main(["replay", "--slot", "3", "--out", str(tmp_path)]) == 1
