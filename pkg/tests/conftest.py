import itertools
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import pandas as pd
import pytest

from genstrat.schemas.axes import AXIS_NAMES, MeasurementTier
from genstrat.schemas.game import GameSpec
from genstrat.services.catalog import fixture

SlotFactory = Callable[..., pd.DataFrame]


@pytest.fixture
def kuhn_spec() -> GameSpec:
    return fixture("kuhn")


@pytest.fixture
def tiny_tier() -> MeasurementTier:
    return MeasurementTier(
        l0_episodes=400,
        sobol_global=8,
        playouts=8,
        brittleness_trials=4,
        brittleness_opponents=2,
        brittleness_playouts=3,
    )


def planted_slots(
    alpha: Dict[str, float],
    games: Sequence[int],
    runs: int = 2,
    noise: float = 0.0,
    seed: int = 0,
    interaction: Optional[Dict[int, Dict[str, float]]] = None,
) -> pd.DataFrame:
    """α を植え込んだ総当たりのスロット表（席を入れ替えた兄弟付き）"""
    rng = np.random.default_rng(seed)
    rows = []
    for game in games:
        offsets = (interaction or {}).get(game, {})
        for a, b in itertools.combinations(sorted(alpha), 2):
            gap = alpha[a] + offsets.get(a, 0.0) - alpha[b] - offsets.get(b, 0.0)
            for run_id in range(runs):
                play_seed = 1000 * game + run_id
                for alice, bob, sign in ((a, b, 1.0), (b, a, -1.0)):
                    rows.append(
                        {
                            "game_seed": game,
                            "model_alice": alice,
                            "model_bob": bob,
                            "run_id": run_id,
                            "play_seed": play_seed,
                            "margin": sign * gap + noise * rng.standard_normal(),
                            "status": "ok",
                        }
                    )
    return pd.DataFrame(rows)


@pytest.fixture
def make_slots() -> SlotFactory:
    return planted_slots


def axis_frame(seeds: Sequence[int], seed: int = 0) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame(rng.normal(size=(len(seeds), len(AXIS_NAMES))), columns=AXIS_NAMES)
    frame.insert(0, "seed", list(seeds))
    return frame


@pytest.fixture
def make_axes() -> Callable[..., pd.DataFrame]:
    return axis_frame
