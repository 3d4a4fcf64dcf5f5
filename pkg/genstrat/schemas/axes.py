from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field

AXIS_NAMES: List[str] = [
    "state_space_log10",
    "temporal_depth",
    "info_sensitivity",
    "opponent_modeling",
    "risk",
    "brittleness_log10",
]


class MeasurementTier(BaseModel):
    """軸推定のモンテカルロ予算"""

    model_config = ConfigDict(frozen=True)

    name: Literal["fast", "precise", "custom"] = "custom"
    l0_episodes: int = Field(ge=1)
    l1_episodes: int = Field(default=0, ge=0)
    sobol_global: int = Field(default=64, ge=1)
    sobol_refine: int = Field(default=0, ge=0)
    playouts: int = Field(default=32, ge=1)
    brittleness_trials: int = Field(default=20, ge=1)
    brittleness_opponents: int = Field(default=10, ge=1)
    brittleness_playouts: int = Field(default=15, ge=1)
    shift: float = Field(default=0.03, gt=0.0, le=1.0)
    refine_radius: float = Field(default=0.1, gt=0.0, le=1.0)
    unstable_share: float = Field(default=0.9, gt=0.0, le=1.0)

    @property
    def sobol_policies(self) -> int:
        return self.sobol_global + self.sobol_refine


PRECISE_TIER = MeasurementTier(
    name="precise",
    l0_episodes=3000,
    l1_episodes=1500,
    sobol_global=64,
    sobol_refine=256,
    playouts=32,
    brittleness_trials=20,
    brittleness_opponents=10,
    brittleness_playouts=15,
)

FAST_TIER = MeasurementTier(
    name="fast",
    l0_episodes=1000,
    l1_episodes=0,
    sobol_global=64,
    sobol_refine=0,
    playouts=32,
    brittleness_trials=10,
    brittleness_opponents=5,
    brittleness_playouts=8,
)


def tier_by_name(name: str) -> MeasurementTier:
    tiers = {"fast": FAST_TIER, "precise": PRECISE_TIER}
    if name not in tiers:
        raise KeyError(f"unknown measurement tier {name!r}")
    return tiers[name]


class AxisVector(BaseModel):
    seed: int
    state_space_log10: float
    temporal_depth: float = Field(ge=0.0)
    info_sensitivity: float = Field(ge=0.0, le=1.0)
    opponent_modeling: float = Field(ge=0.0, le=1.0)
    risk: float = Field(ge=0.0)
    brittleness_log10: float
    tier: str
    measurement_seed: int
    risk_seats: str = ""

    def values(self) -> List[float]:
        return [getattr(self, name) for name in AXIS_NAMES]
