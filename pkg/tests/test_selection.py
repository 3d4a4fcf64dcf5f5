import pandas as pd
import pytest

from genstrat.schemas.axes import AXIS_NAMES
from genstrat.services.selection import farthest_point_sample, minmax_normalize, normalize_with


def _line_pool(values):
    frame = pd.DataFrame({name: 0.0 for name in AXIS_NAMES}, index=range(len(values)))
    frame["state_space_log10"] = [v for _, v in values]
    frame.insert(0, "seed", [s for s, _ in values])
    return frame


LINE = [(10, 0.0), (11, 1.0), (12, 0.5), (13, 0.9), (14, 0.1)]


def test_constant_axes_normalize_to_zero():
    pool = minmax_normalize(_line_pool(LINE))
    assert (pool.values["risk"] == 0.0).all()
    assert pool.values.loc[11, "state_space_log10"] == 1.0


def test_fps_starts_at_centroid_and_breaks_ties_by_seed():
    rows = farthest_point_sample(minmax_normalize(_line_pool(LINE)), 5)
    assert [r.seed for r in rows] == [12, 10, 11, 13, 14]
    assert [r.rank for r in rows] == [1, 2, 3, 4, 5]
    assert rows[1].min_distance == pytest.approx(0.5)


def test_fps_is_order_independent():
    shuffled = _line_pool(list(reversed(LINE)))
    rows = farthest_point_sample(minmax_normalize(shuffled), 3)
    assert [r.seed for r in rows] == [12, 10, 11]


def test_fps_rejects_oversized_request():
    with pytest.raises(ValueError):
        farthest_point_sample(minmax_normalize(_line_pool(LINE)), 6)


def test_empty_table_is_rejected():
    with pytest.raises(ValueError):
        minmax_normalize(_line_pool([]))


def test_stored_bounds_clamp_new_games():
    pool = minmax_normalize(_line_pool(LINE))
    scaled, flags = normalize_with(pool, _line_pool([(99, 2.0), (98, 0.5)]))
    assert scaled.loc[99, "state_space_log10"] == 1.0
    assert bool(flags.loc[99]) and not bool(flags.loc[98])
