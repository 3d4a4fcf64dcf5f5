from fastapi import APIRouter, HTTPException

from genstrat.errors import GenstratError
from genstrat.schemas.api import AxesRequest, AxesResponse, BuildRequest, BuildResponse, RulebookResponse
from genstrat.schemas.axes import FAST_TIER
from genstrat.schemas.game import BuilderConfig
from genstrat.services.axes import measure_axes
from genstrat.services.builder import build_game, spec_digest
from genstrat.services.catalog import fixture, fixture_names
from genstrat.services.textio import render_rulebook
from genstrat.validators.requests import validate_build_request

router = APIRouter(prefix="/games", tags=["games"])


@router.post("/build", response_model=BuildResponse)
async def build(request: BuildRequest) -> BuildResponse:
    try:
        validate_build_request(seed=request.seed, dial=request.dial)
        spec = build_game(request.seed, BuilderConfig(dial=request.dial))
        return BuildResponse(spec=spec, digest=spec_digest(spec), rulebook=render_rulebook(spec))
    # FastAPI のエラーハンドリング
    except HTTPException:
        raise
    except GenstratError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except Exception:
        raise HTTPException(status_code=500, detail="内部サーバーエラーが発生しました")


@router.get("/fixtures/{name}/rulebook", response_model=RulebookResponse)
async def fixture_rulebook(name: str) -> RulebookResponse:
    try:
        if name not in fixture_names():
            raise HTTPException(status_code=404, detail=f"フィクスチャ {name} は存在しません")
        spec = fixture(name)
        return RulebookResponse(seed=spec.seed, rulebook=render_rulebook(spec))
    except HTTPException:
        raise
    except Exception:
        raise HTTPException(status_code=500, detail="内部サーバーエラーが発生しました")


@router.post("/axes", response_model=AxesResponse)
async def axes(request: AxesRequest) -> AxesResponse:
    try:
        validate_build_request(seed=request.seed, dial=request.dial)
        spec = build_game(request.seed, BuilderConfig(dial=request.dial))
        return AxesResponse(axes=measure_axes(spec, FAST_TIER, request.measurement_seed))
    except HTTPException:
        raise
    except GenstratError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except Exception:
        raise HTTPException(status_code=500, detail="内部サーバーエラーが発生しました")
