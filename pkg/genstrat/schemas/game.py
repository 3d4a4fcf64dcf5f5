from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

PLAYERS: Tuple[str, str] = ("Alice", "Bob")
SHOWDOWN: str = "SHOWDOWN"

PhaseKind = Literal["action", "observation", "simultaneous", "position"]
ActionStyle = Literal["betting", "maneuver"]
ManeuverKind = Literal["pass", "steal", "swap", "discard_draw"]
ObservationKind = Literal["deal_public", "deal_private", "peek", "reveal", "compare"]
SimultaneousKind = Literal["side_bet", "auction"]
PositionKind = Literal["high_card", "chip_lead", "alternate", "low_card"]
ShowdownMetric = Literal["high_card", "sum", "pairs", "suit_count", "low_card"]
ConditionFamily = Literal["chips", "cards", "rounds"]
Visibility = Literal["public", "owner-only", "hidden"]


class DeckConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    ranks: int = Field(ge=1, le=13)
    suits: int = Field(ge=1, le=4)
    copies: int = Field(default=1, ge=1)

    @property
    def size(self) -> int:
        return self.ranks * self.suits * self.copies


class PileDecl(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    visibility: Visibility
    owner: Optional[str] = None


class VariableDecl(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    initial: int = 0


class Condition(BaseModel):
    """遷移条件

    family ごとに参照先が異なる。
    chips は変数（pot, stack:<seat>）、cards はパイル（board, hand:<seat>）、
    rounds はラウンドカウンタ（rounds:<phase_id>）を参照する。

    Attributes:
        family (ConditionFamily): 条件の種類
        ref (str): 参照する変数名またはパイル名
        measure (str): cards の場合の集計方法（count / max_rank）、それ以外は value
        op (str): 比較演算子（>= または <）
        value (int): 閾値
    """

    model_config = ConfigDict(frozen=True)

    family: ConditionFamily
    ref: str
    measure: Literal["value", "count", "max_rank"] = "value"
    op: Literal[">=", "<"]
    value: int

    def describe(self) -> str:
        lhs = self.ref if self.measure == "value" else f"{self.measure}({self.ref})"
        return f"{lhs} {self.op} {self.value}"


class Transition(BaseModel):
    model_config = ConfigDict(frozen=True)

    target: str
    condition: Optional[Condition] = None


class Phase(BaseModel):
    """フェーズ定義

    kind に応じて使用するフィールドが変わる。使わないフィールドは既定値のまま。
    """

    model_config = ConfigDict(frozen=True)

    id: str
    kind: PhaseKind
    style: Optional[ActionStyle] = None
    bet_sizes: Tuple[int, ...] = ()
    max_raises: int = 0
    maneuver: Optional[ManeuverKind] = None
    observation: Optional[ObservationKind] = None
    count: int = 1
    interactive: bool = False
    fee: int = 0
    simultaneous: Optional[SimultaneousKind] = None
    stake: int = 1
    bid_levels: Tuple[int, ...] = ()
    position: Optional[PositionKind] = None
    defer: bool = False
    transitions: Tuple[Transition, ...] = ()

    @property
    def has_decision(self) -> bool:
        if self.kind in ("action", "simultaneous"):
            return True
        if self.kind == "observation":
            return self.interactive
        return self.defer


class GameSpec(BaseModel):
    """1つのゲームの完全なルール定義

    (seed, dial, builder_version) の純関数として生成され、生成後は不変。
    """

    model_config = ConfigDict(frozen=True)

    seed: int
    dial: float = 0.0
    builder_version: str
    name: str = ""
    players: Tuple[str, str] = PLAYERS
    deck: DeckConfig
    hand_size: int = Field(default=1, ge=0)
    ante: int = Field(default=1, ge=0)
    initial_stack: int = Field(default=10, ge=1)
    piles: Tuple[PileDecl, ...]
    variables: Tuple[VariableDecl, ...]
    phases: Tuple[Phase, ...]
    start: str
    showdown_metric: ShowdownMetric = "high_card"
    phase_visit_cap: int = Field(default=2, ge=1)

    def phase(self, phase_id: str) -> Phase:
        for phase in self.phases:
            if phase.id == phase_id:
                return phase
        raise KeyError(phase_id)

    def phase_index(self, phase_id: str) -> int:
        for i, phase in enumerate(self.phases):
            if phase.id == phase_id:
                return i
        raise KeyError(phase_id)


class BuilderConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dial: float = Field(default=0.5, ge=0.0, le=1.0)
    max_phases: int = Field(default=6, ge=1)
    max_deck: int = Field(default=24, ge=2)
    max_hand: int = Field(default=3, ge=1)
    builder_version: Optional[str] = None


class AcceptanceReport(BaseModel):
    seed: int
    episodes: int
    avg_moves: float
    phase_fire_fractions: Dict[str, float]
    dead_branch_fraction: Optional[float]
    accepted: bool
    reasons: List[str] = Field(default_factory=list)
