import numpy as np
import pandas as pd
import pytest

from genstrat.schemas.axes import AXIS_NAMES
from genstrat.services.stats.ablation import ABLATION_COLUMNS, ablation_delta
from genstrat.services.stats.alpha import fit_alpha
from genstrat.services.stats.robustness import (
    axis_clusters,
    cluster_refits,
    leave_one_game_out,
    model_exclusion,
    rank_correlation,
    tertile_leaderboards,
)

PLANTED = {"a": 1.0, "b": 0.25, "c": -0.5, "d": -0.75}


def test_rank_correlations():
    a = pd.Series([1, 2, 3, 4], index=list("wxyz"))
    b = pd.Series([1, 3, 2, 4], index=list("wxyz"))
    assert rank_correlation(a, b) == pytest.approx(2 / 3)
    assert rank_correlation(a, b, kind="spearman") == pytest.approx(0.8)
    # 並び順ではなくラベルで揃える
    assert rank_correlation(a, a[::-1]) == pytest.approx(1.0)


def test_rank_correlation_needs_same_items():
    with pytest.raises(ValueError):
        rank_correlation(pd.Series([1, 2], index=["a", "b"]), pd.Series([1, 2], index=["a", "c"]))


def test_leave_one_game_out_is_stable_without_noise(make_slots):
    slots = make_slots(PLANTED, games=[1, 2, 3])
    table = leave_one_game_out(slots, fit_alpha(slots))
    assert table["game_seed"].tolist() == [1, 2, 3]
    assert table["tau"].tolist() == pytest.approx([1.0, 1.0, 1.0])


def test_model_exclusion_recenters(make_slots):
    slots = make_slots(PLANTED, games=[1, 2])
    table = model_exclusion(slots, fit_alpha(slots), exclude=["d"])
    assert table["model"].tolist() == ["a", "b", "c"]
    assert table["refit"].sum() == pytest.approx(0.0, abs=1e-9)
    expected = table["full"] - table["full"].mean()
    assert table["refit"].to_numpy() == pytest.approx(expected.to_numpy())
    assert table.attrs["tau"] == pytest.approx(1.0)


def _two_blobs() -> pd.DataFrame:
    rng = np.random.default_rng(0)
    near = rng.normal(0.0, 0.01, size=(3, len(AXIS_NAMES)))
    far = rng.normal(10.0, 0.01, size=(3, len(AXIS_NAMES)))
    frame = pd.DataFrame(np.vstack([near, far]), columns=AXIS_NAMES)
    frame.insert(0, "seed", [1, 2, 3, 4, 5, 6])
    return frame


def test_axis_clusters_separate_blobs():
    clusters = axis_clusters(_two_blobs(), n_clusters=2)
    assert list(clusters.index) == [1, 2, 3, 4, 5, 6]
    assert clusters[1] == clusters[2] == clusters[3]
    assert clusters[4] == clusters[5] == clusters[6]
    assert clusters[1] != clusters[4]


def test_cluster_refits_agree_without_noise(make_slots):
    slots = make_slots(PLANTED, games=[1, 2, 3, 4, 5, 6])
    clusters = pd.Series([1, 1, 1, 2, 2, 2], index=[1, 2, 3, 4, 5, 6], name="cluster")
    table = cluster_refits(slots, fit_alpha(slots), clusters)
    assert table["cluster"].tolist() == [1, 2]
    assert table["games"].tolist() == [3, 3]
    assert table["models"].tolist() == [4, 4]
    assert table["spearman"].tolist() == pytest.approx([1.0, 1.0])


def test_tertile_leaderboards(make_slots):
    slots = make_slots(PLANTED, games=[1, 2, 3, 4, 5])
    tertile = pd.Series(["low", "low", "mid", "high", "high"], index=[1, 2, 3, 4, 5])
    boards = tertile_leaderboards(slots, tertile)
    assert list(boards.columns) == ["model", "low", "mid", "high"]
    for name in ("low", "mid", "high"):
        assert boards[name].to_numpy() == pytest.approx(list(PLANTED.values()), abs=1e-9)


def _pairs() -> pd.DataFrame:
    rows = []
    for game in (1, 2, 3, 4):
        for anchor, lift in (("x", 1.0), ("y", 3.0)):
            for seat in ("Alice", "Bob"):
                low = float(game % 3) - 1.0
                rows.append(
                    {
                        "family": "f",
                        "anchor": anchor,
                        "game_seed": game,
                        "run_id": 0,
                        "play_seed": 10 * game,
                        "seat": seat,
                        "low": low,
                        "high": low + lift,
                    }
                )
    return pd.DataFrame(rows)


def test_ablation_delta_per_anchor_and_pooled():
    table = ablation_delta(_pairs(), B=20, seed=1, families=["f", "g"])
    assert list(table.columns) == ABLATION_COLUMNS
    assert table["anchor"].tolist() == ["x", "y", "*"]
    assert table["delta"].tolist() == pytest.approx([1.0, 3.0, 2.0])
    assert table["n"].tolist() == [8, 8, 16]
    # 差が一定なのでどの複製も推定値と一致する
    assert table["lo"].tolist() == pytest.approx([1.0, 3.0, 2.0])
    assert table["hi"].tolist() == pytest.approx([1.0, 3.0, 2.0])
    assert "g" not in set(table["family"])


def test_ablation_delta_without_bootstrap_or_pairs():
    table = ablation_delta(_pairs(), B=0)
    assert table["lo"].isna().all()
    empty = ablation_delta(_pairs().iloc[0:0], B=0)
    assert empty.empty
    assert list(empty.columns) == ABLATION_COLUMNS
