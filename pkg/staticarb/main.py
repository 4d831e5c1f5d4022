"""
Main FastAPI application for the staticarb toolkit, plus logging setup shared with the CLI.
"""
import sys
from datetime import datetime
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import RedirectResponse
from loguru import logger

from staticarb.config.settings import settings
from staticarb.models.schemas import HealthCheckResponse
from staticarb.routers import stress, surface

_CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
_FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """Send logs to stderr (stdout carries reports) and optionally to a rotating file."""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=_CONSOLE_FORMAT)
    if log_file:
        logger.add(log_file, level=level.upper(), format=_FILE_FORMAT, rotation="10 MB", retention="30 days")


# Create FastAPI app
app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="""
    Static-arbitrage detection and repair for European call option surfaces.

    ## Features

    * **Detection**: Check quotes against the reduced no-arbitrage constraint system
    * **Repair**: Minimal l1 or bid/ask-aware perturbations that remove arbitrage
    * **Executable arbitrage**: Portfolios profitable at quoted bid and ask prices
    * **Stress testing**: Pollute a clean surface with noise and measure recovery

    Quotes are premiums with one discount/forward point per expiry.
    """,
    license_info={
        "name": "MIT License",
        "url": "https://opensource.org/licenses/MIT",
    },
)

# Include routers
app.include_router(surface.router)
app.include_router(stress.router)


@app.get("/", include_in_schema=False)
async def root():
    """Redirect to API documentation."""
    return RedirectResponse(url="/docs")


@app.get("/health", response_model=HealthCheckResponse, tags=["system"])
async def health_check():
    """
    Health check endpoint.

    Returns application status and metadata.
    """
    return HealthCheckResponse(
        status="healthy",
        app_name=settings.app_name,
        app_version=settings.app_version,
        timestamp=datetime.utcnow(),
    )


@app.get("/info", tags=["system"])
async def app_info():
    """
    Get application information and numerical configuration.
    """
    return {
        "app_name": settings.app_name,
        "app_version": settings.app_version,
        "detection_tolerance": settings.detection_tolerance,
        "zero_tolerance": settings.zero_tolerance,
        "spread_floor": settings.spread_floor,
        "solver_form": settings.solver_form,
        "solver_feas_tol": settings.solver_feas_tol,
        "solver_opt_tol": settings.solver_opt_tol,
    }


@app.on_event("startup")
async def startup_event():
    """Log startup."""
    logger.info(f"Starting {settings.app_name} v{settings.app_version}")


@app.on_event("shutdown")
async def shutdown_event():
    """Clean up on shutdown."""
    logger.info(f"Shutting down {settings.app_name}")
