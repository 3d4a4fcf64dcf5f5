import itertools

import pytest
from fastapi.testclient import TestClient

from genstrat.main import app

client = TestClient(app)


def _slots(alpha):
    rows = []
    for a, b in itertools.combinations(sorted(alpha), 2):
        gap = alpha[a] - alpha[b]
        for run_id in range(2):
            for alice, bob, margin in ((a, b, gap), (b, a, -gap)):
                rows.append(
                    {
                        "game_seed": 1,
                        "model_alice": alice,
                        "model_bob": bob,
                        "run_id": run_id,
                        "play_seed": 100 + run_id,
                        "margin": margin,
                    }
                )
    return rows


def test_health():
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_fixture_rulebook():
    response = client.get("/games/fixtures/kuhn/rulebook")
    assert response.status_code == 200
    body = response.json()
    assert body["seed"] == -3
    assert body["rulebook"]


def test_unknown_fixture_is_404():
    assert client.get("/games/fixtures/chess/rulebook").status_code == 404


def test_build_is_deterministic():
    first = client.post("/games/build", json={"seed": 11, "dial": 0.4})
    second = client.post("/games/build", json={"seed": 11, "dial": 0.4})
    assert first.status_code == 200
    assert first.json()["digest"] == second.json()["digest"]
    assert first.json()["spec"]["seed"] == 11


@pytest.mark.parametrize("payload", [{"seed": -1, "dial": 0.5}, {"seed": 1, "dial": 1.5}])
def test_build_rejects_bad_requests(payload):
    assert client.post("/games/build", json=payload).status_code == 400


def test_parse_reply():
    response = client.post("/textio/parse", json={"text": '{"action": 1}', "labels": ["fold", "call"]})
    assert response.status_code == 200
    assert response.json() == {"index": 1, "label": "call", "path": "strict", "matched": "index"}


@pytest.mark.parametrize("labels", [[], ["call", "call"]])
def test_parse_rejects_bad_menus(labels):
    assert client.post("/textio/parse", json={"text": "call", "labels": labels}).status_code == 400


def test_fit_returns_leaderboard_and_ratings():
    response = client.post("/stats/fit", json={"slots": _slots({"a": 2, "b": 0, "c": -2})})
    assert response.status_code == 200
    body = response.json()
    assert [row["model"] for row in body["leaderboard"]] == ["a", "b", "c"]
    assert body["leaderboard"][0]["alpha"] == pytest.approx(2.0)
    assert body["leaderboard"][0]["lo"] is None
    assert body["ties"] == 0
    assert body["bradley_terry"]["a"] > body["bradley_terry"]["c"]


def test_fit_rejects_bad_requests():
    assert client.post("/stats/fit", json={"slots": []}).status_code == 400
    slots = _slots({"a": 1, "b": 0})
    assert client.post("/stats/fit", json={"slots": slots, "bootstrap": -1}).status_code == 400


def test_fit_reports_disconnected_graph_as_422():
    slots = _slots({"a": 1, "b": 0}) + _slots({"c": 1, "d": 0})
    response = client.post("/stats/fit", json={"slots": slots})
    assert response.status_code == 422
