from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

# CSV column order of the study table
TABLE_COLUMNS = ("epsilon", "sup_first", "sup_leading", "energy_first", "avg_leading")


class ErrorRow(BaseModel):
    epsilon: float
    sup_first: float
    sup_leading: float
    energy_first: float
    avg_leading: float
    T1: float

    @field_validator("sup_first", "sup_leading", "energy_first", "avg_leading")
    @classmethod
    def check_finite(cls, value: float) -> float:
        if not value >= 0.0 or value == float("inf"):
            raise ValueError("error values must be finite and non-negative")
        return value


class SlopeFit(BaseModel):
    kind: str
    slope: Optional[float] = None
    residual: Optional[float] = None
    reliable: bool = False
    epsilons: List[float] = Field(default_factory=list)
    note: Optional[str] = None


class ConvergenceTable(BaseModel):
    scenario: str
    beta: float
    mode: str
    horizon: float
    rows: List[ErrorRow]
    slopes: Dict[str, SlopeFit] = Field(default_factory=dict)
    metadata: Dict[str, float] = Field(default_factory=dict)
