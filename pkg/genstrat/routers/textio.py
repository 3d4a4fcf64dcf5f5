import numpy as np
from fastapi import APIRouter, HTTPException

from genstrat.schemas.api import ParseRequest, ParseResponse
from genstrat.services.textio import parse_reply
from genstrat.validators.requests import validate_parse_request

router = APIRouter(prefix="/textio", tags=["textio"])


@router.post("/parse", response_model=ParseResponse)
async def parse(request: ParseRequest) -> ParseResponse:
    try:
        validate_parse_request(text=request.text, labels=request.labels)
        result = parse_reply(request.text, request.labels, np.random.default_rng(request.seed))
        return ParseResponse(
            index=result.index, label=request.labels[result.index], path=result.path, matched=result.matched
        )
    except HTTPException:
        raise
    except Exception:
        raise HTTPException(status_code=500, detail="内部サーバーエラーが発生しました")
