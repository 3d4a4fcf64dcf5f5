from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, Field, model_validator

from genstrat.errors import ArtifactSchemaError
from genstrat.schemas.axes import MeasurementTier, tier_by_name
from genstrat.schemas.game import BuilderConfig
from genstrat.schemas.tournament import AgentBinding


class PipelineConfig(BaseModel):
    """パイプライン全体の設定

    すべての乱数過程はここで名前の付いたシードを持つ。

    Attributes:
        builder (BuilderConfig): ビルダー設定
        tier (str): 計測ティア名（fast / precise）
        acceptance_episodes (int): 受理判定のエピソード数
        pool_target (int): プールの受理数目標
        seed_start (int): 候補シードの開始値
        k (int): ベンチマークのゲーム数
        matches_per_matchup (int): マッチアップあたりのスロット数
        coverage_rule (str): ペア選択の方式
        min_opponents (int): (モデル, ゲーム) ごとの最小対戦相手数
        measurement_seed / schedule_seed / bootstrap_seed (int): 各段のシード
        bootstrap_alpha / bootstrap_profile (int): ブートストラップ複製数
        agents_file (Optional[Path]): エージェントバインディングの YAML
    """

    builder: BuilderConfig = Field(default_factory=lambda: BuilderConfig(dial=0.5))
    tier: str = "fast"
    acceptance_episodes: int = Field(default=2000, ge=1)
    pool_target: int = Field(default=2000, ge=1)
    seed_start: int = 0
    k: int = Field(default=50, ge=1)
    matches_per_matchup: int = Field(default=40, ge=2)
    coverage_rule: str = "rotation"
    min_opponents: int = Field(default=2, ge=1)
    measurement_seed: int = 0
    schedule_seed: int = 0
    bootstrap_seed: int = 0
    bootstrap_alpha: int = Field(default=2000, ge=0)
    bootstrap_profile: int = Field(default=500, ge=0)
    jaggedness_k: int = Field(default=3, ge=1)
    workers: int = Field(default=1, ge=1)
    agents_file: Optional[Path] = None

    @model_validator(mode="after")
    def _check(self) -> "PipelineConfig":
        if self.matches_per_matchup % 2:
            raise ValueError("matches_per_matchup must be even")
        if self.tier not in ("fast", "precise"):
            raise ValueError(f"unknown measurement tier {self.tier!r}")
        if self.agents_file is not None and not self.agents_file.exists():
            raise ValueError(f"agents file {self.agents_file} does not exist")
        return self

    @property
    def measurement_tier(self) -> MeasurementTier:
        return tier_by_name(self.tier)


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """YAML の設定を読み、コマンドラインの値で上書きする

    Args:
        path (Optional[Path]): YAML ファイル
        overrides (Optional[Dict[str, Any]]): None でない値だけが上書きに使われる

    Returns:
        PipelineConfig: 検証済みの設定
    """
    data: Dict[str, Any] = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        data = dict(loaded or {})
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return PipelineConfig.model_validate(data)


def load_bindings(path: Path) -> List[AgentBinding]:
    """エージェントバインディングの YAML リストを読む

    Raises:
        ArtifactSchemaError: 形式が不正な場合
    """
    loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(loaded, list):
        raise ArtifactSchemaError(str(path), ["expected a list of agent bindings"])
    bindings: List[AgentBinding] = []
    diagnostics: List[str] = []
    for i, item in enumerate(loaded):
        try:
            bindings.append(AgentBinding.model_validate(item))
        except ValueError as exc:
            diagnostics.append(f"entry {i}: {exc}")
    ids = [b.model_id for b in bindings]
    if len(set(ids)) != len(ids):
        diagnostics.append("model ids must be unique")
    if diagnostics:
        raise ArtifactSchemaError(str(path), diagnostics)
    return bindings
