"""
Assembly of the leading, first-order and full approximations from regular and layer parts.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..core.errors import ConfigError, DependencyError, NumericError
from .boundary_layer import LayerSet
from .cell_solver import CellField
from .cross_section import CrossSectionMesh
from .gridded import GriddedField, diff1
from .limit_solver import LimitSolution
from .model_config import ModelConfig

logger = logging.getLogger(__name__)

ORDERS = ("leading", "first", "full")


def cutoff_chi(x, length: float, delta1: float, nu: int = 0) -> np.ndarray:
    """
    Quintic smoothstep: 0 for x <= length - delta1, 1 for x >= length - delta1/2.

    ``nu`` selects the value (0) or the first derivative (1).
    """
    width = delta1 / 2.0
    z = np.clip((np.asarray(x, dtype=float) - (length - delta1)) / width, 0.0, 1.0)
    if nu == 0:
        return z ** 3 * (10.0 - 15.0 * z + 6.0 * z ** 2)
    return 30.0 * z ** 2 * (1.0 - z) ** 2 / width


@dataclass(frozen=True)
class ApproximationParts:
    """Everything assembly needs; ``u2`` and ``layers.pi2`` are only required for the full order."""

    mesh: CrossSectionMesh
    lim: LimitSolution
    w1: Optional[np.ndarray] = None
    u1: Optional[CellField] = None
    u2: Optional[CellField] = None
    layers: Optional[LayerSet] = None


class ApproximationField:
    """
    Evaluator of an assembled approximation at physical points (x1, xbar) of the thin cylinder.

    Cross-section points are passed in physical coordinates and rescaled by 1/eps internally.
    """

    def __init__(self, cfg: ModelConfig, eps: float, order: str, parts: ApproximationParts):
        if order not in ORDERS:
            raise ConfigError(f"unknown approximation order '{order}'", {"key": "order"})
        if not any(abs(eps - e) <= 1e-12 * e for e in cfg.epsilons):
            raise ConfigError("epsilon is not part of the scenario", {"key": "epsilons", "epsilon": eps})
        if 1.0 < cfg.beta < 3.0:
            raise ConfigError("beta in (1, 3) is not supported", {"key": "beta", "beta": cfg.beta})
        _require(parts, order)
        self.cfg = cfg
        self.eps = eps
        self.order = order
        self.parts = parts
        self.mesh = parts.mesh
        self.layer_scale = cfg.layer_scale(eps)
        lim = parts.lim
        self.T1 = lim.T1
        h = float(lim.x[1] - lim.x[0])
        self._w0 = GriddedField(lim.x, lim.axis, lim.w0)
        self._w0_x = GriddedField(lim.x, lim.axis, lim.w0_x)
        if order != "leading":
            self._w1 = GriddedField(lim.x, lim.axis, parts.w1)
            self._w1_x = GriddedField(lim.x, lim.axis, diff1(parts.w1, h, axis=0))

    @property
    def mode(self) -> str:
        return "high-peclet" if self.cfg.high_peclet else "standard"

    def _xi(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(points, dtype=float)) / self.eps

    def _cell(self, cell: CellField, x: np.ndarray, xi: np.ndarray, when: float,
              what: str = "value") -> np.ndarray:
        """Cell field at (x, xi) -> (len(x), len(xi)) or gradient (len(x), len(xi), 2)."""
        if what == "dx":
            slab = cell.axis.blend(cell.dx, when)
        else:
            slab = cell.axis.blend(cell.values, when)
        field = cell.field()
        if what == "grad":
            grads = self.mesh.recovered_gradient(slab)
            comps = [field.along_x(self.mesh.interpolate(grads[..., d], xi), x) for d in range(2)]
            return np.stack(comps, axis=-1)
        return field.along_x(self.mesh.interpolate(slab, xi), x)

    def _layer_terms(self):
        layers = self.parts.layers
        if self.order == "leading":
            return [(layers.pi0, 1.0)]
        terms = [(layers.pi0, 1.0), (layers.pi1_hat, self.eps), (layers.pi1_tilde, self.eps)]
        if self.order == "full":
            terms.append((layers.pi2, self.eps ** 2))
        return terms

    def evaluate(self, x, points, when: float) -> np.ndarray:
        """
        Approximation at the tensor product of axial positions and physical cross-section points.

        Args:
            x: axial positions in [0, length]
            points: (m, 2) physical transversal coordinates inside eps * section
            when: time in [0, T1]

        Returns:
            array (len(x), m)
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        xi = self._xi(points)
        eps, cfg, parts = self.eps, self.cfg, self.parts
        out = np.repeat(self._w0.at(x, when)[:, None], len(xi), axis=1)
        if self.order != "leading":
            out = out + eps * (self._w1.at(x, when)[:, None] + self._cell(parts.u1, x, xi, when))
        if self.order == "full":
            out = out + eps ** 2 * self._cell(parts.u2, x, xi, when)
        chi = cutoff_chi(x, cfg.length, cfg.delta1)
        active = chi > 0.0
        if np.any(active):
            zeta = (cfg.length - x[active]) / self.layer_scale
            layer = np.zeros((int(active.sum()), len(xi)))
            for term, weight in self._layer_terms():
                layer += weight * term.values(zeta, when, xi)
            out[active] += chi[active, None] * layer
        return out

    def gradient(self, x, points, when: float) -> np.ndarray:
        """
        Physical gradient (d/dx1, d/dx2, d/dx3); shape (len(x), m, 3).

        Gridded parts use their finite-difference x-derivative fields, layer terms and the
        cut-off are differentiated analytically. Transversal derivatives of cell and layer
        terms carry the 1/eps factor of the cross-section variable.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        xi = self._xi(points)
        self._check_inside(x, xi)
        eps, cfg, parts = self.eps, self.cfg, self.parts
        grad = np.zeros((len(x), len(xi), 3))
        grad[..., 0] = self._w0_x.at(x, when)[:, None]
        if self.order != "leading":
            grad[..., 0] += eps * (self._w1_x.at(x, when)[:, None] + self._cell(parts.u1, x, xi, when, "dx"))
            grad[..., 1:] += self._cell(parts.u1, x, xi, when, "grad")
        if self.order == "full":
            grad[..., 0] += eps ** 2 * self._cell(parts.u2, x, xi, when, "dx")
            grad[..., 1:] += eps * self._cell(parts.u2, x, xi, when, "grad")
        chi = cutoff_chi(x, cfg.length, cfg.delta1)
        dchi = cutoff_chi(x, cfg.length, cfg.delta1, nu=1)
        active = chi > 0.0
        if np.any(active):
            zeta = (cfg.length - x[active]) / self.layer_scale
            value = np.zeros((int(active.sum()), len(xi)))
            dzeta = np.zeros_like(value)
            gxi = np.zeros(value.shape + (2,))
            for term, weight in self._layer_terms():
                value += weight * term.values(zeta, when, xi)
                dzeta += weight * term.dzeta(zeta, when, xi)
                gxi += (weight / eps) * term.grad_xi(zeta, when, xi)
            grad[active, :, 0] += dchi[active, None] * value - chi[active, None] * dzeta / self.layer_scale
            grad[active, :, 1:] += chi[active, None, None] * gxi
        return grad

    def _check_inside(self, x: np.ndarray, xi: np.ndarray) -> None:
        radius = self.cfg.cross_section.outer_radius()
        if np.any(x < -1e-12) or np.any(x > self.cfg.length + 1e-12):
            raise NumericError("gradient requested outside the cylinder axis", {"x1": f"{x.min():.4g}..{x.max():.4g}"})
        if np.any(np.hypot(xi[:, 0], xi[:, 1]) > radius * (1.0 + 1e-9)):
            raise NumericError("gradient requested outside the cylinder cross-section")


def _require(parts: ApproximationParts, order: str) -> None:
    missing = []
    if parts.layers is None:
        missing.append("layers")
    if order in ("first", "full"):
        missing += [name for name in ("w1", "u1") if getattr(parts, name) is None]
    if order == "full":
        if parts.u2 is None:
            missing.append("u2")
        if parts.layers is not None and parts.layers.pi2 is None:
            missing.append("pi2")
    if missing:
        raise DependencyError(f"approximation of order '{order}' is missing parts", {"missing": ",".join(missing)})


def assemble(cfg: ModelConfig, eps: float, order: str, parts: ApproximationParts) -> ApproximationField:
    field = ApproximationField(cfg, eps, order, parts)
    logger.debug(f"Assembled {order} approximation for eps={eps} ({field.mode}, layer scale {field.layer_scale:.3e})")
    return field


def check_boundary_fit(field: ApproximationField, cfg: ModelConfig, eps: float,
                       points: Optional[np.ndarray] = None) -> Dict[str, float]:
    """
    Max |field| at t = 0 and at x1 = 0, and max |field - q| at x1 = length, over the limit
    grid and a set of cross-section points (the mesh nodes scaled to the physical section).
    """
    if points is None:
        points = field.mesh.nodes * eps
    lim = field.parts.lim
    initial = float(np.abs(field.evaluate(lim.x, points, 0.0)).max())
    left, right = 0.0, 0.0
    for tk in lim.t:
        ends = field.evaluate(np.array([0.0, cfg.length]), points, float(tk))
        left = max(left, float(np.abs(ends[0]).max()))
        right = max(right, float(np.abs(ends[1] - cfg.boundary.q(float(tk))).max()))
    report = {"initial": initial, "left": left, "right": right}
    logger.info(f"Boundary fit ({field.order}, eps={eps}): t=0 {initial:.2e}, x1=0 {left:.2e}, x1=length {right:.2e}")
    return report


def sample_axisymmetric(field: ApproximationField, x: np.ndarray, r: np.ndarray, when: float) -> np.ndarray:
    """Field on an (x1, r) grid along the xi2 axis; shape (len(x), len(r))."""
    points = np.column_stack([np.asarray(r, dtype=float), np.zeros(len(r))])
    return field.evaluate(x, points, when)
