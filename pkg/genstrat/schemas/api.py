from typing import Dict, List, Optional

from pydantic import BaseModel

from genstrat.schemas.axes import AxisVector
from genstrat.schemas.game import GameSpec
from genstrat.schemas.tournament import SlotRow


class BuildRequest(BaseModel):
    seed: int
    dial: float = 0.5


class BuildResponse(BaseModel):
    spec: GameSpec
    digest: str
    rulebook: str


class RulebookResponse(BaseModel):
    seed: int
    rulebook: str


class AxesRequest(BaseModel):
    seed: int
    dial: float = 0.5
    measurement_seed: int = 0


class AxesResponse(BaseModel):
    axes: AxisVector


class ParseRequest(BaseModel):
    text: str
    labels: List[str]
    seed: int = 0


class ParseResponse(BaseModel):
    index: int
    label: str
    path: str
    matched: Optional[str] = None


class FitRequest(BaseModel):
    slots: List[SlotRow]
    bootstrap: int = 0
    seed: int = 0


class LeaderboardRow(BaseModel):
    rank: int
    model: str
    alpha: float
    lo: Optional[float] = None
    hi: Optional[float] = None


class FitResponse(BaseModel):
    leaderboard: List[LeaderboardRow]
    bradley_terry: Dict[str, float]
    ties: int
