import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Type, TypeVar

import pandas as pd
from pydantic import BaseModel, ValidationError

from genstrat.errors import ArtifactSchemaError

logger = logging.getLogger(__name__)

T = TypeVar("T", bound=BaseModel)

HEADER_PREFIX: str = "# "
MANIFEST_NAME: str = "manifest.json"


class Provenance(BaseModel):
    """すべての成果物の先頭に埋め込む由来情報"""

    kind: str
    builder_version: Optional[str] = None
    measurement_seed: Optional[int] = None
    schedule_seed: Optional[int] = None
    bootstrap_seed: Optional[int] = None
    extra: Dict[str, Any] = {}

    def header(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))


def _ensure_parent(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)


def write_csv(path: Path, frame: pd.DataFrame, provenance: Provenance) -> Path:
    """1行目に由来情報のコメント行を持つ CSV を書く"""
    path = Path(path)
    _ensure_parent(path)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n")
    path.write_text(HEADER_PREFIX + provenance.header() + "\n" + buffer.getvalue(), encoding="utf-8")
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def read_csv(path: Path, required: Iterable[str] = ()) -> Tuple[pd.DataFrame, Provenance]:
    """write_csv で書いた CSV を読む

    Raises:
        ArtifactSchemaError: 由来行がない、または必要な列が欠けている場合
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactSchemaError(str(path), ["file does not exist"])
    with path.open(encoding="utf-8") as handle:
        first = handle.readline()
        if not first.startswith(HEADER_PREFIX):
            raise ArtifactSchemaError(str(path), ["line 1: missing provenance header"])
        try:
            provenance = Provenance.model_validate_json(first[len(HEADER_PREFIX):])
        except ValidationError as exc:
            raise ArtifactSchemaError(str(path), [f"line 1: {exc.errors()[0]['msg']}"]) from exc
        frame = pd.read_csv(handle)
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ArtifactSchemaError(str(path), [f"missing column {c}" for c in missing])
    return frame, provenance


def _row_dict(row: Any) -> Dict[str, Any]:
    return row.model_dump(mode="json") if isinstance(row, BaseModel) else dict(row)


def write_jsonl(path: Path, rows: Iterable[Any], provenance: Provenance) -> Path:
    """1行目を {"provenance": ...} とする JSONL を書く"""
    path = Path(path)
    _ensure_parent(path)
    lines = [json.dumps({"provenance": provenance.model_dump()}, sort_keys=True, separators=(",", ":"))]
    lines.extend(json.dumps(_row_dict(r), sort_keys=True, separators=(",", ":")) for r in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("wrote %s (%d rows)", path, len(lines) - 1)
    return path


def read_jsonl(path: Path, model: Type[T]) -> Tuple[List[T], Provenance]:
    """JSONL を読んで各行を model で検証する

    Raises:
        ArtifactSchemaError: 行ごとの診断をまとめて返す
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactSchemaError(str(path), ["file does not exist"])
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ArtifactSchemaError(str(path), ["file is empty"])
    diagnostics: List[str] = []
    try:
        provenance = Provenance.model_validate(json.loads(lines[0])["provenance"])
    except (ValueError, KeyError, TypeError, ValidationError):
        raise ArtifactSchemaError(str(path), ["line 1: missing provenance record"])
    rows: List[T] = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rows.append(model.model_validate_json(line))
        except ValidationError as exc:
            for error in exc.errors():
                where = ".".join(str(p) for p in error["loc"]) or "row"
                diagnostics.append(f"line {number}: {where}: {error['msg']}")
    if diagnostics:
        raise ArtifactSchemaError(str(path), diagnostics)
    return rows, provenance


def write_manifest(run_dir: Path, entries: Dict[str, str]) -> Path:
    """実行ディレクトリの索引（成果物名 → 相対パス）を更新する"""
    run_dir = Path(run_dir)
    path = run_dir / MANIFEST_NAME
    index: Dict[str, str] = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    index.update(entries)
    _ensure_parent(path)
    path.write_text(json.dumps(index, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
