"""
API router for the synthetic-noise stress protocol.
"""
from fastapi import APIRouter, HTTPException
from loguru import logger

from staticarb.models.errors import InputError, SolverFailure
from staticarb.models.schemas import StressReport, StressRequest
from staticarb.services.normalizer_service import normalizer_service
from staticarb.services.stress_service import stress_service

router = APIRouter(prefix="/stress", tags=["stress"])


@router.post("/run", response_model=StressReport, response_model_by_alias=True)
def run(request: StressRequest):
    """
    Pollute the (arbitrage-free) quoted surface, repair it and report recovery.

    - **noise**: lambda, sigma, seed and number of trials
    - **objective**: l1 or l1ba
    - **rescale_bands**: scale bid/ask bands with the noise factor
    """
    try:
        surface = normalizer_service.normalize_surface(request.quotes, request.curves)
        return stress_service.run_stress(surface, request.noise, request.objective, request.rescale_bands)
    except InputError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except SolverFailure as e:
        logger.error(f"Stress solver failure: {e} {e.diagnostics}")
        raise HTTPException(status_code=500, detail=f"Solver failure: {str(e)}")
    except Exception as e:
        logger.error(f"Stress run failed: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Stress run failed: {str(e)}")
