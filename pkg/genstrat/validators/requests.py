from typing import List

from fastapi import HTTPException

MAX_BOOTSTRAP: int = 5000


def validate_build_request(seed: int, dial: float) -> None:
    """ゲーム生成リクエストのバリデーション

    Args:
        seed (int): ゲームシード
        dial (float): 複雑さダイアル

    Raises:
        HTTPException: バリデーションエラー時
    """
    if seed < 0:
        raise HTTPException(status_code=400, detail="シードは0以上である必要があります")
    if not 0.0 <= dial <= 1.0:
        raise HTTPException(status_code=400, detail="ダイアルは0以上1以下である必要があります")


def validate_parse_request(text: str, labels: List[str]) -> None:
    """返答パースリクエストのバリデーション

    Raises:
        HTTPException: バリデーションエラー時
    """
    if not labels:
        raise HTTPException(status_code=400, detail="合法手のラベルを1つ以上指定してください")
    if len(set(labels)) != len(labels):
        raise HTTPException(status_code=400, detail="合法手のラベルが重複しています")


def validate_fit_request(slot_count: int, models: List[str], bootstrap: int) -> None:
    """強さ推定リクエストのバリデーション

    Raises:
        HTTPException: バリデーションエラー時
    """
    if slot_count < 1:
        raise HTTPException(status_code=400, detail="スロットを1つ以上指定してください")
    if len(set(models)) < 2:
        raise HTTPException(status_code=400, detail="モデルは2つ以上である必要があります")
    if not 0 <= bootstrap <= MAX_BOOTSTRAP:
        raise HTTPException(
            status_code=400, detail=f"ブートストラップ回数は0以上{MAX_BOOTSTRAP}以下である必要があります"
        )
