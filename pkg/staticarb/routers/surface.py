"""
API router for detection, repair and executable-arbitrage endpoints.
"""
from typing import List

from fastapi import APIRouter, HTTPException
from loguru import logger

from staticarb.models.errors import InputError, SolverFailure
from staticarb.models.schemas import (
    ArbitragePortfolio,
    RepairConfig,
    RepairRequest,
    RepairResponse,
    SurfaceRequest,
    ViolationReport,
)
from staticarb.services.constraint_service import constraint_service
from staticarb.services.normalizer_service import normalizer_service
from staticarb.services.repair_service import repair_service

router = APIRouter(prefix="/surface", tags=["surface"])


@router.post("/detect", response_model=ViolationReport)
def detect(request: SurfaceRequest):
    """
    Count static-arbitrage violations in the quoted mids.

    - **quotes**: Call quotes (premiums)
    - **curves**: One discount/forward point per expiry
    - **tolerance**: Optional violation threshold in normalized units
    """
    try:
        surface = normalizer_service.normalize_surface(request.quotes, request.curves)
        system = constraint_service.build_constraints(surface)
        return constraint_service.detect_violations(system, surface.flat_prices, request.tolerance)
    except InputError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Detection failed: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Detection failed: {str(e)}")


@router.post("/repair", response_model=RepairResponse)
def repair(request: RepairRequest):
    """
    Repair the quoted mids with the l1 or band-aware objective.

    Returns the repair result and the repaired premiums keyed by quote index.
    """
    try:
        surface = normalizer_service.normalize_surface(request.quotes, request.curves)
        config = RepairConfig(objective=request.objective, delta0_override=request.delta0_override)
        result = repair_service.repair_surface(surface, config)
        return RepairResponse(
            result=result,
            repaired_premiums=normalizer_service.denormalize_prices(surface, result.repaired),
        )
    except InputError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except SolverFailure as e:
        logger.error(f"Repair solver failure: {e} {e.diagnostics}")
        raise HTTPException(status_code=500, detail=f"Solver failure: {str(e)}")
    except Exception as e:
        logger.error(f"Repair failed: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Repair failed: {str(e)}")


@router.post("/arbitrage", response_model=List[ArbitragePortfolio])
def executable_arbitrage(request: SurfaceRequest):
    """
    List portfolios that lock in a profit at quoted bid and ask prices.

    Portfolios are sorted by descending immediate profit.
    """
    try:
        surface = normalizer_service.normalize_surface(request.quotes, request.curves)
        system = constraint_service.build_constraints(surface)
        return repair_service.extract_executable_arbitrage(system, surface)
    except InputError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Executable arbitrage scan failed: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Executable arbitrage scan failed: {str(e)}")
