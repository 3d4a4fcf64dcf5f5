import numpy as np
import pandas as pd
import pytest

from genstrat.errors import GenstratError
from genstrat.services.stats.bootstrap import (
    ClusterIndex,
    bootstrap_replicates,
    paired_cluster_bootstrap,
    with_clusters,
)

ALPHA = {"a": 1.0, "b": 0.0, "c": -1.0}


def _margin_sum(frame):
    return frame["margin"].sum()


def test_seat_swapped_siblings_share_a_cluster(make_slots):
    frame = with_clusters(make_slots(ALPHA, games=[1, 2]))
    index = ClusterIndex.build(frame)
    # 3 組 × 2 ゲーム × 2 回
    assert len(index.groups) == 12
    assert all(len(group) == 2 for group in index.groups)
    assert (frame["pair_low"] <= frame["pair_high"]).all()


def test_siblings_are_never_split(make_slots):
    ci = paired_cluster_bootstrap(make_slots(ALPHA, games=[1, 2]), B=50, statistic=_margin_sum, seed=3)
    assert ci.estimate == pytest.approx([0.0])
    assert np.allclose(ci.replicates, 0.0)
    assert ci.method == "percentile"


def test_failed_rows_are_left_out(make_slots):
    slots = make_slots(ALPHA, games=[1])
    failed = slots.iloc[[0]].assign(margin=100.0, status="error")
    ci = paired_cluster_bootstrap(pd.concat([slots, failed]), B=10, statistic=_margin_sum)
    assert ci.estimate == pytest.approx([0.0])


def test_reflected_interval_mirrors_percentiles(make_slots):
    slots = make_slots(ALPHA, games=[1, 2, 3], noise=0.5, seed=2)

    def mean_margin(frame):
        return frame.loc[frame["model_alice"] == "a", "margin"].mean()

    plain = paired_cluster_bootstrap(slots, B=40, statistic=mean_margin, seed=9)
    reflected = paired_cluster_bootstrap(slots, B=40, statistic=mean_margin, seed=9, bias_corrected=True)
    assert reflected.method == "reflected"
    assert reflected.lo == pytest.approx(2 * plain.estimate - plain.hi)
    assert reflected.hi == pytest.approx(2 * plain.estimate - plain.lo)


def test_replicates_need_a_positive_count(make_slots):
    with pytest.raises(ValueError):
        bootstrap_replicates(make_slots(ALPHA, games=[1]), _margin_sum, B=0)


def test_all_replicates_failing_is_an_error(make_slots):
    def broken(frame):
        raise GenstratError("not identified")

    with pytest.raises(GenstratError):
        bootstrap_replicates(make_slots(ALPHA, games=[1]), broken, B=5)
