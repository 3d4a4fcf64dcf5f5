import re
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

AgentKind = Literal["random", "l1", "mixture", "cfr_plus", "remote"]
SlotStatus = Literal["ok", "discarded-timeout", "error"]

SNAPSHOT_PATTERN = re.compile(r"\d{4}-?\d{2}-?\d{2}")


class RemoteEndpoint(BaseModel):
    """リモートエージェントの接続設定

    API キーそのものは持たず、読み出す環境変数名だけを保持する。
    """

    model_config = ConfigDict(frozen=True)

    url: str
    api_key_env: Optional[str] = None
    snapshot_tag: str
    thinking_tier: str = "max_thinking"
    timeout: float = Field(default=60.0, gt=0.0)
    attempts: int = Field(default=3, ge=1)
    backoff: float = Field(default=2.0, ge=0.0)
    options: Dict[str, Any] = Field(default_factory=dict)


class AgentBinding(BaseModel):
    """モデルIDとエージェント実装の対応

    Attributes:
        model_id (str): 集計で使うモデルID
        kind (AgentKind): エージェントの種類
        epsilon (float): mixture で一様ランダムに切り替える確率
        l1_episodes (int): l1 / mixture が L1 を推定するエピソード数
        cfr_iterations (int): cfr_plus の反復数
        level (str): cfr_plus の抽象化レベル
        endpoint (Optional[RemoteEndpoint]): remote の接続設定
    """

    model_config = ConfigDict(frozen=True)

    model_id: str
    kind: AgentKind
    epsilon: float = Field(default=0.3, ge=0.0, le=1.0)
    l1_episodes: int = Field(default=2000, ge=1)
    cfr_iterations: int = Field(default=1000, ge=1)
    level: Literal["default", "fine"] = "default"
    endpoint: Optional[RemoteEndpoint] = None

    @model_validator(mode="after")
    def _remote_is_pinned(self) -> "AgentBinding":
        if self.kind == "remote":
            if self.endpoint is None:
                raise ValueError(f"remote binding {self.model_id!r} needs an endpoint")
            if not SNAPSHOT_PATTERN.search(self.endpoint.snapshot_tag):
                raise ValueError(f"remote binding {self.model_id!r} must pin a dated snapshot tag")
        return self

    def snapshot(self) -> Dict[str, Any]:
        """スロット行に残す設定（認証情報は含まない）"""
        data = self.model_dump(exclude={"endpoint"})
        if self.endpoint is not None:
            data["endpoint"] = self.endpoint.model_dump(exclude={"api_key_env", "options"})
        return data


class Matchup(BaseModel):
    model_config = ConfigDict(frozen=True)

    game_seed: int
    models: Tuple[str, str]
    run_id: int
    play_seed: int


class ScheduledSlot(BaseModel):
    """1つのマッチアップ × 座席割り当て"""

    model_config = ConfigDict(frozen=True)

    matchup: Matchup
    model_alice: str
    model_bob: str


class SlotRow(BaseModel):
    """1試合の結果行

    Attributes:
        margin (int): Alice から見た符号付きマージン（チップ）
        moves_alice / moves_bob (int): 各席の手数
        fallback_alice / fallback_bob (int): 各席のフォールバック手数
        action_log (List[int]): 再生用の行動添字列
    """

    game_seed: int
    model_alice: str
    model_bob: str
    run_id: int
    play_seed: int
    margin: int
    moves_alice: int = Field(default=0, ge=0)
    moves_bob: int = Field(default=0, ge=0)
    fallback_alice: int = Field(default=0, ge=0)
    fallback_bob: int = Field(default=0, ge=0)
    status: SlotStatus = "ok"
    config_alice: Dict[str, Any] = Field(default_factory=dict)
    config_bob: Dict[str, Any] = Field(default_factory=dict)
    action_log: List[int] = Field(default_factory=list)
    family: Optional[str] = None
    anchor: Optional[str] = None
    variant: Optional[Literal["low", "high"]] = None
    message: Optional[str] = None

    @model_validator(mode="after")
    def _fallbacks_bounded(self) -> "SlotRow":
        if self.fallback_alice > self.moves_alice or self.fallback_bob > self.moves_bob:
            raise ValueError("fallback count exceeds move count")
        return self


class FallbackRate(BaseModel):
    model_id: str
    moves: int
    fallback_moves: int
    slots: int
    fallback_slots: int
    move_rate: float
    slot_rate: float
