import logging
from typing import Any, Dict

import numpy as np
from fastapi import APIRouter, Body, HTTPException, status

from ..core.errors import ConfigError, DependencyError, ThinFlowError
from ..models.api_models import LimitSummaryResponse, ScenarioListResponse, ScenarioResponse
from ..models.scenario_models import ValidationReport
from ..services.cell_solver import section_mesh
from ..services.limit_solver import limit_residual, solve_limit_problem
from ..services.scenario_service import (config_from_dict, list_scenarios, require_valid, scenario_document,
                                         validate_assumptions)

router = APIRouter(
    prefix="/api",
    tags=["Scenarios"],
)

logger = logging.getLogger(__name__)


def _http_error(e: ThinFlowError) -> HTTPException:
    if isinstance(e, ConfigError):
        code = status.HTTP_422_UNPROCESSABLE_ENTITY
    elif isinstance(e, DependencyError):
        code = status.HTTP_409_CONFLICT
    else:
        code = status.HTTP_500_INTERNAL_SERVER_ERROR
    return HTTPException(status_code=code,
                         detail={"status": "error", "message": e.message, "error_details": e.diagnostic()})


@router.get("/scenarios", response_model=ScenarioListResponse)
async def get_scenarios():
    """Names of the built-in scenarios."""
    return {"scenarios": list_scenarios()}


@router.get("/scenarios/{name}", response_model=ScenarioResponse)
async def get_scenario(name: str):
    """Full document of one built-in scenario."""
    try:
        return {"name": name, "document": scenario_document(name)}
    except ConfigError as e:
        logger.warning(f"Unknown scenario requested: {name}")
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND,
                            detail={"status": "error", "message": e.message, "error_details": e.diagnostic()})


@router.post("/validate", response_model=ValidationReport)
def validate_scenario(document: Dict[str, Any] = Body(...)):
    """
    Check a scenario document against the model assumptions.

    The report is returned even when required conditions fail; schema errors give 422.
    """
    try:
        cfg = config_from_dict(document)
        report = validate_assumptions(cfg)
        logger.info(f"Validated scenario '{cfg.name}': passed={report.passed}")
        return report
    except ThinFlowError as e:
        logger.error(f"Validation failed: {e.message}", exc_info=True)
        raise _http_error(e)


@router.post("/limit/summary", response_model=LimitSummaryResponse)
def limit_summary(document: Dict[str, Any] = Body(...)):
    """Solve the limit problem of a scenario and report its horizon and size."""
    try:
        cfg = config_from_dict(document)
        require_valid(cfg)
        mesh = section_mesh(cfg)
        lim = solve_limit_problem(cfg, mesh)
        fan = lim.fan
        return {
            "scenario": cfg.name,
            "mode": lim.mode,
            "T": cfg.horizon,
            "T1": lim.T1,
            "truncated": lim.T1 < cfg.horizon,
            "max_w0": float(np.abs(lim.w0).max()),
            "residual": limit_residual(cfg, lim, mesh),
            "fan_curves": None if fan is None else int(len(fan.parameter)),
            "fan_min_spacing_ratio": None if fan is None else float(np.min(fan.min_spacing_ratio)),
        }
    except ThinFlowError as e:
        logger.error(f"Limit summary failed: {e.message}", exc_info=True)
        raise _http_error(e)
