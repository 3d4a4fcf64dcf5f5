from typing import Dict, List, Optional, Sequence


class GenstratError(Exception):
    """パイプライン全体の基底例外"""


class SpecValidationError(GenstratError):
    """ゲーム仕様の構造検証エラー

    Args:
        message (str): エラー内容
        phase_id (Optional[str]): 問題のあるフェーズID
        condition (Optional[str]): 問題のある条件の文字列表現
    """

    def __init__(
        self,
        message: str,
        phase_id: Optional[str] = None,
        condition: Optional[str] = None,
    ) -> None:
        self.phase_id: Optional[str] = phase_id
        self.condition: Optional[str] = condition
        where: List[str] = []
        if phase_id is not None:
            where.append(f"phase={phase_id}")
        if condition is not None:
            where.append(f"condition={condition}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class TerminalStateError(GenstratError):
    """終局状態に対して手番の操作を要求した"""


class NonTerminalStateError(GenstratError):
    """終局前の状態に対して利得を要求した"""


class IllegalActionError(GenstratError):
    """合法手メニューに含まれない行動

    Args:
        message (str): エラー内容
        menu (Sequence[str]): その局面の合法手ラベル
    """

    def __init__(self, message: str, menu: Sequence[str]) -> None:
        self.menu: List[str] = list(menu)
        super().__init__(f"{message}; legal menu: {self.menu}")


class ReconstructionError(GenstratError):
    """ビルダーのバージョン不一致などで再構成できない"""


class TractabilityError(GenstratError):
    """抽象化後のゲームがソルバーの上限を超えた"""


class IdentifiabilityError(GenstratError):
    """比較グラフが非連結で強さが識別できない

    Args:
        components (List[List[str]]): 連結成分ごとのモデルID
    """

    def __init__(self, components: List[List[str]]) -> None:
        self.components: List[List[str]] = components
        super().__init__(f"comparison graph is disconnected: {components}")


class RankDeficientError(GenstratError):
    """説明変数行列のランク落ち

    Args:
        vifs (Dict[str, float]): 軸ごとの VIF
    """

    def __init__(self, vifs: Dict[str, float]) -> None:
        self.vifs: Dict[str, float] = vifs
        super().__init__(f"axis design matrix is rank deficient; VIF: {vifs}")


class InsufficientDataError(GenstratError):
    """統計量の計算に必要なデータが不足している"""


class ScheduleError(GenstratError):
    """対戦スケジュールが作成できない"""


class AgentTimeoutError(GenstratError):
    """リモートエージェントがリトライ上限まで応答しなかった"""


class ArtifactSchemaError(GenstratError):
    """成果物ファイルのスキーマ不一致

    Args:
        path (str): ファイルパス
        diagnostics (List[str]): 行単位の診断メッセージ
    """

    def __init__(self, path: str, diagnostics: List[str]) -> None:
        self.path: str = path
        self.diagnostics: List[str] = diagnostics
        super().__init__(f"{path}: {len(diagnostics)} invalid row(s)")
