from typing import List

import numpy as np
from fastapi import APIRouter, HTTPException

from genstrat.errors import GenstratError
from genstrat.schemas.api import FitRequest, FitResponse, LeaderboardRow
from genstrat.services.stats.alpha import fit_alpha
from genstrat.services.stats.rating import bradley_terry
from genstrat.services.tournament import slot_frame
from genstrat.validators.requests import validate_fit_request

router = APIRouter(prefix="/stats", tags=["stats"])


def _optional(value: float):
    return None if np.isnan(value) else float(value)


@router.post("/fit", response_model=FitResponse)
async def fit(request: FitRequest) -> FitResponse:
    try:
        models: List[str] = [s.model_alice for s in request.slots] + [s.model_bob for s in request.slots]
        validate_fit_request(slot_count=len(request.slots), models=models, bootstrap=request.bootstrap)
        frame = slot_frame(request.slots)
        strength = fit_alpha(frame, B=request.bootstrap, seed=request.seed)
        rating = bradley_terry(frame)
        board = strength.leaderboard()
        return FitResponse(
            leaderboard=[
                LeaderboardRow(
                    rank=int(row["rank"]),
                    model=str(row["model"]),
                    alpha=float(row["alpha"]),
                    lo=_optional(row["lo"]),
                    hi=_optional(row["hi"]),
                )
                for _, row in board.iterrows()
            ],
            bradley_terry={str(k): float(v) for k, v in rating.scores.items()},
            ties=rating.ties,
        )
    except HTTPException:
        raise
    except GenstratError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except Exception:
        raise HTTPException(status_code=500, detail="内部サーバーエラーが発生しました")
