from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


class CatalogRef(BaseModel):
    catalog: str
    params: Dict[str, float] = Field(default_factory=dict)


class CrossSectionSpec(BaseModel):
    kind: Literal["disk", "polygon"] = "disk"
    radius: Optional[float] = None
    vertices: Optional[List[Tuple[float, float]]] = None

    @model_validator(mode="after")
    def check_shape(self) -> "CrossSectionSpec":
        if self.kind == "disk":
            if self.radius is None or self.radius <= 0:
                raise ValueError("cross_section.radius must be positive for a disk")
            return self
        if not self.vertices or len(self.vertices) < 3:
            raise ValueError("cross_section.vertices needs at least three points")
        pts = np.asarray(self.vertices, dtype=float)
        if _signed_area(pts) == 0.0:
            raise ValueError("cross_section.vertices are degenerate")
        if not _is_simple(pts):
            raise ValueError("cross_section.vertices do not form a simple polygon")
        if not _contains_origin(pts):
            raise ValueError("cross_section.vertices must enclose the origin")
        return self

    def outer_radius(self) -> float:
        if self.kind == "disk":
            return float(self.radius)
        return float(np.max(np.hypot(*np.asarray(self.vertices, dtype=float).T)))


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0) and (orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def _is_simple(pts: np.ndarray) -> bool:
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            # adjacent edges share a vertex
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                return False
    return True


def _contains_origin(pts: np.ndarray) -> bool:
    from matplotlib.path import Path as PolygonPath

    return bool(PolygonPath(pts).contains_point((0.0, 0.0)))


class GridSpec(BaseModel):
    nx: int = Field(200, gt=0)
    nt: int = Field(50, gt=0)
    nxi: int = Field(16, ge=4)
    modes: int = Field(24, ge=1)
    lzeta: Optional[float] = Field(None, gt=0)
    nzeta: int = Field(2000, ge=10)
    fan_refinement: int = Field(1, ge=1)


class ReferenceSpec(BaseModel):
    nx: int = Field(400, ge=8)
    nr: int = Field(8, ge=8)
    scheme: Literal["backward-euler", "crank-nicolson"] = "crank-nicolson"
    picard_sweeps: int = Field(1, ge=1)
    grading: float = Field(1.1, ge=1.0)
    cfl: Optional[float] = Field(None, gt=0)


class ScenarioDocument(BaseModel):
    """JSON/YAML scenario document. Key names are part of the public interface."""

    name: str = "custom"
    length: float = Field(..., gt=0)
    horizon: float = Field(..., gt=0)
    delta1: float = Field(..., gt=0)
    cross_section: CrossSectionSpec
    velocity: CatalogRef
    interaction: CatalogRef
    boundary: CatalogRef
    epsilons: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    beta: float = Field(1.0, ge=1.0)
    grid: GridSpec = Field(default_factory=GridSpec)
    reference: ReferenceSpec = Field(default_factory=ReferenceSpec)
    s_max: Optional[float] = Field(None, gt=0)

    @field_validator("epsilons")
    @classmethod
    def check_epsilons(cls, value: List[float]) -> List[float]:
        if any(eps <= 0 or eps >= 1 for eps in value):
            raise ValueError("every epsilon must lie in (0, 1)")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        return value

    @model_validator(mode="after")
    def check_margin(self) -> "ScenarioDocument":
        if self.delta1 >= min(self.length / 2, self.horizon):
            raise ValueError("delta1 must be smaller than min(length/2, horizon)")
        return self


class ConditionResult(BaseModel):
    name: str
    passed: bool
    worst_value: Optional[float] = None
    worst_point: Optional[Dict[str, float]] = None
    required: bool = True
    note: Optional[str] = None


class ValidationReport(BaseModel):
    scenario: str
    passed: bool
    s_max: float
    conditions: List[ConditionResult]
    constants: Dict[str, float] = Field(default_factory=dict)

    def failures(self) -> List[ConditionResult]:
        return [c for c in self.conditions if c.required and not c.passed]
