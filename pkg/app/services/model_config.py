import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import List

import numpy as np

from ..core.config import settings
from ..models.scenario_models import CrossSectionSpec, GridSpec, ReferenceSpec, ScenarioDocument
from .catalog import (BoundaryData, Geometry, InteractionFunction, VelocityField, build_boundary,
                      build_interaction, build_velocity)


@dataclass(frozen=True)
class ModelConfig:
    """Resolved scenario: the validated document plus the catalog objects it names."""

    document: ScenarioDocument
    geometry: Geometry
    velocity: VelocityField = field(repr=False)
    interaction: InteractionFunction = field(repr=False)
    boundary: BoundaryData = field(repr=False)

    @classmethod
    def from_document(cls, document: ScenarioDocument) -> "ModelConfig":
        geometry = Geometry(
            length=document.length,
            horizon=document.horizon,
            delta1=document.delta1,
            radius=document.cross_section.outer_radius(),
        )
        return cls(
            document=document,
            geometry=geometry,
            velocity=build_velocity(document.velocity, geometry),
            interaction=build_interaction(document.interaction, geometry),
            boundary=build_boundary(document.boundary, geometry),
        )

    @property
    def name(self) -> str:
        return self.document.name

    @property
    def length(self) -> float:
        return self.document.length

    @property
    def horizon(self) -> float:
        return self.document.horizon

    @property
    def delta1(self) -> float:
        return self.document.delta1

    @property
    def cross_section(self) -> CrossSectionSpec:
        return self.document.cross_section

    @property
    def epsilons(self) -> List[float]:
        return list(self.document.epsilons)

    @property
    def beta(self) -> float:
        return self.document.beta

    @property
    def high_peclet(self) -> bool:
        return self.document.beta > 1.0

    @property
    def grid(self) -> GridSpec:
        return self.document.grid

    @property
    def reference(self) -> ReferenceSpec:
        return self.document.reference

    @property
    def s_max(self) -> float:
        return self.document.s_max if self.document.s_max is not None else settings.S_MAX

    @cached_property
    def right_floor(self) -> float:
        """Smallest right-end speed over the horizon (sampled)."""
        t = np.linspace(0.0, self.horizon, 257)
        return float(np.min(self.velocity.right_end_speed(t)))

    @property
    def lzeta(self) -> float:
        if self.grid.lzeta is not None:
            return self.grid.lzeta
        return 40.0 / max(self.right_floor, 1e-12)

    def layer_scale(self, eps: float) -> float:
        """Stretching factor of the layer variable: eps^((1+beta)/2)."""
        return eps ** ((1.0 + self.beta) / 2.0)

    def cache_key(self, stage: str) -> str:
        """Content hash of everything a pipeline stage depends on (the epsilon list is excluded)."""
        data = self.document.model_dump(exclude={"epsilons", "name", "reference"})
        data["s_max"] = self.s_max
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
        return f"{stage}-{digest}"
