from typing import Any, Dict, List, Optional

from pydantic import BaseModel


class ScenarioListResponse(BaseModel):
    scenarios: List[str]


class ScenarioResponse(BaseModel):
    name: str
    document: Dict[str, Any]


class LimitSummaryResponse(BaseModel):
    scenario: str
    mode: str
    T: float
    T1: float
    truncated: bool
    max_w0: float
    residual: float
    fan_curves: Optional[int] = None
    fan_min_spacing_ratio: Optional[float] = None


