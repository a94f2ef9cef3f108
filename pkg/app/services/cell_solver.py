"""
Cross-section Neumann problems: boundary-averaged interaction, the Neumann eigenbasis and the
cell correctors u1, u2 on the (x1, t) grid.
"""
import logging
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, cg, eigsh

from ..core.config import settings
from ..core.errors import CompatibilityError, ConvergenceError, NumericError
from ..models.scenario_models import CrossSectionSpec
from .cross_section import CrossSectionMesh, build_mesh
from .gridded import GriddedField, TimeAxis, diff1, diff1_from_rest
from .model_config import ModelConfig

if TYPE_CHECKING:
    from .limit_solver import LimitSolution

logger = logging.getLogger(__name__)


@lru_cache(maxsize=16)
def _cached_mesh(spec_json: str, resolution: int) -> CrossSectionMesh:
    return build_mesh(CrossSectionSpec.model_validate_json(spec_json), resolution)


def section_mesh(cfg: ModelConfig, resolution: Optional[int] = None) -> CrossSectionMesh:
    """Mesh of the scenario's cross-section, shared between callers."""
    return _cached_mesh(cfg.cross_section.model_dump_json(), resolution or cfg.grid.nxi)


def reduce_interaction(s, x, t, cfg: ModelConfig, mesh: CrossSectionMesh, derivative: str = "value"):
    """
    Boundary average (1/|section|) * integral of phi over the section boundary.

    Args:
        s, x, t: broadcastable arrays of state, axial position and time
        cfg: scenario
        mesh: cross-section mesh providing the boundary quadrature
        derivative: "value" for phi itself, "ds" for its s-derivative

    Returns:
        array of the broadcast shape of (s, x, t)
    """
    func = cfg.interaction.phi if derivative == "value" else cfg.interaction.dphi_ds
    s, x, t = (np.asarray(a, dtype=float) for a in (s, x, t))
    if cfg.interaction.xi_independent:
        q = mesh.quad_points[0]
        return func(s, x, q[0], q[1], t) * (mesh.perimeter / mesh.measure)
    q2, q3 = mesh.quad_points[:, 0], mesh.quad_points[:, 1]
    values = func(s[..., None], x[..., None], q2, q3, t[..., None])
    return mesh.boundary_integral(values) / mesh.measure


class NeumannSolver:
    """
    Conjugate-gradient solver for  Lap u = f + div G,  d_nu u = g + G.nu,  mean(u) = 0.

    The constant null space is removed by a projected Jacobi preconditioner and a final
    mean subtraction with the mesh area weights.
    """

    def __init__(self, mesh: CrossSectionMesh, rtol: Optional[float] = None,
                 compatibility_tol: Optional[float] = None):
        self.mesh = mesh
        self.rtol = rtol if rtol is not None else settings.CG_RTOL
        self.compatibility_tol = compatibility_tol if compatibility_tol is not None else settings.COMPATIBILITY_TOL
        n = mesh.n_nodes
        inv_diag = 1.0 / mesh.stiffness.diagonal()

        def precondition(r):
            r = np.asarray(r).ravel()
            r = r - r.mean()
            z = inv_diag * r
            return z - z.mean()

        self._preconditioner = LinearOperator((n, n), matvec=precondition, dtype=float)

    def solve(self, f, g, flux: Optional[Tuple[np.ndarray, np.ndarray]] = None,
              where: Optional[dict] = None) -> Tuple[np.ndarray, float]:
        """
        Args:
            f: interior source at the nodes (array or scalar)
            g: boundary flux at the boundary quadrature points (array or scalar)
            flux: optional vector field G given at the nodes
            where: parameter values attached to diagnostics

        Returns:
            (zero-mean nodal solution, compatibility defect)
        """
        mesh = self.mesh
        f = np.broadcast_to(np.asarray(f, dtype=float), (mesh.n_nodes,))
        g = np.broadcast_to(np.asarray(g, dtype=float), (len(mesh.edge_weights),))
        source = float(mesh.area_weights @ f)
        boundary = float(mesh.boundary_integral(g))
        defect = source - boundary
        scale = max(float(mesh.area_weights @ np.abs(f)), float(mesh.boundary_integral(np.abs(g))), 1e-300)
        if abs(defect) > self.compatibility_tol * scale:
            raise CompatibilityError("Neumann data violate the solvability condition", defect, where)

        load = mesh.boundary_load(g) - mesh.area_weights * f
        if flux is not None:
            load = load + mesh.flux_load(*flux)
        load = load - mesh.area_weights * (load.sum() / mesh.area_weights.sum())
        norm = np.linalg.norm(load)
        if norm == 0.0:
            return np.zeros(mesh.n_nodes), defect

        u, info = cg(mesh.stiffness, load, rtol=self.rtol, atol=0.0, maxiter=settings.CG_MAXITER,
                     M=self._preconditioner)
        if info != 0:
            raise ConvergenceError("conjugate gradients did not converge", {**(where or {}), "info": info})
        u = u - mesh.mean(u)
        return u, defect


def solve_neumann(mesh: CrossSectionMesh, f, g, flux: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
    """Zero-mean solution of the Neumann problem Lap u = f, d_nu u = g (plus optional div-form flux)."""
    u, _ = NeumannSolver(mesh).solve(f, g, flux)
    return u


@dataclass(frozen=True)
class NeumannEigenbasis:
    eigenvalues: np.ndarray
    modes: np.ndarray  # (P+1, N), mass-orthonormal

    @property
    def count(self) -> int:
        return len(self.eigenvalues) - 1

    def project(self, mesh: CrossSectionMesh, values: np.ndarray) -> np.ndarray:
        """Coefficients <values, Theta_p> over the last axis -> (..., P+1)."""
        weighted = (mesh.mass @ np.asarray(values).reshape(-1, mesh.n_nodes).T).T
        coeffs = weighted @ self.modes.T
        return coeffs.reshape(np.shape(values)[:-1] + (len(self.eigenvalues),))


def neumann_eigenbasis(mesh: CrossSectionMesh, modes: int) -> NeumannEigenbasis:
    """
    Lowest ``modes + 1`` Neumann eigenpairs of -Lap on the mesh by shift-invert Lanczos.

    Args:
        mesh: cross-section mesh
        modes: number P of non-constant modes

    Returns:
        NeumannEigenbasis with lambda_0 = 0 and the constant mode first
    """
    if modes < 1:
        raise NumericError("eigenbasis needs at least one non-constant mode", {"modes": modes})
    n = mesh.n_nodes
    if modes + 2 > n:
        raise NumericError("more eigenmodes requested than the mesh supports", {"modes": modes, "nodes": n})
    shift = 1e-2 / mesh.measure
    start = np.linspace(1.0, 2.0, n)
    try:
        values, vectors = eigsh(mesh.stiffness, k=modes + 1, M=mesh.mass, sigma=-shift, which="LM",
                                v0=start, tol=1e-12, maxiter=20 * n)
    except ArpackNoConvergence as exc:
        raise ConvergenceError("Neumann eigenproblem did not converge", {"modes": modes}) from exc
    order = np.argsort(values)
    values = values[order]
    vectors = vectors[:, order].T

    vectors[0] = 1.0 / np.sqrt(mesh.measure)
    values[0] = 0.0
    gram = vectors @ (mesh.mass @ vectors.T)
    factor = np.linalg.cholesky(gram)
    vectors = np.linalg.solve(factor, vectors)
    for row in vectors[1:]:
        pivot = np.flatnonzero(np.abs(row) > 1e-10 * np.abs(row).max())[0]
        if row[pivot] < 0:
            row *= -1.0
    logger.info(f"Neumann eigenbasis: lambda_1={values[1]:.6f}, lambda_{modes}={values[-1]:.6f}")
    return NeumannEigenbasis(eigenvalues=values, modes=vectors)


@dataclass(frozen=True)
class CellField:
    """Cell corrector on the (x1, node, t) grid with its parameter derivatives."""

    x: np.ndarray
    axis: TimeAxis
    values: np.ndarray
    dx: np.ndarray
    dt: Optional[np.ndarray]
    defects: np.ndarray
    coupling: Optional[np.ndarray] = None  # (1/|section|) * boundary integral of d_s phi(w0) * u

    def field(self) -> GriddedField:
        return GriddedField(self.x, self.axis, self.values)

    def dx_field(self) -> GriddedField:
        return GriddedField(self.x, self.axis, self.dx)

    def max_mean_defect(self, mesh: CrossSectionMesh) -> float:
        means = np.abs(np.einsum("xnt,n->xt", self.values, mesh.area_weights) / mesh.measure)
        norms = np.abs(self.values).max(axis=1)
        return float((means / (1.0 + norms)).max())


def _transversal(cfg: ModelConfig, mesh: CrossSectionMesh, x: float, t: float):
    return cfg.velocity.transversal(x, mesh.xi2, mesh.xi3, t)


def _boundary_normal_velocity(cfg: ModelConfig, mesh: CrossSectionMesh, x: float, t: float):
    v2, v3 = cfg.velocity.transversal(x, mesh.quad_points[:, 0], mesh.quad_points[:, 1], t)
    return v2 * mesh.normals[:, 0] + v3 * mesh.normals[:, 1]


def _finish(cfg: ModelConfig, mesh: CrossSectionMesh, lim: "LimitSolution", values: np.ndarray,
            defects: np.ndarray, with_dt: bool, coupling: Optional[np.ndarray] = None) -> CellField:
    h = float(lim.x[1] - lim.x[0])
    dx = diff1(values, h, axis=0)
    dt = diff1_from_rest(values, lim.axis.dt, axis=2) if with_dt else None
    cell = CellField(x=lim.x, axis=lim.axis, values=values, dx=dx, dt=dt, defects=defects, coupling=coupling)
    worst = cell.max_mean_defect(mesh)
    if worst > 1e-8:
        raise NumericError("cell field lost its zero cross-section mean", {"mean": f"{worst:.3e}"})
    return cell


def _coupling(cfg: ModelConfig, mesh: CrossSectionMesh, lim: "LimitSolution", values: np.ndarray) -> np.ndarray:
    out = np.zeros(lim.w0.shape)
    q2, q3 = mesh.quad_points[:, 0], mesh.quad_points[:, 1]
    for k, tk in enumerate(lim.t):
        trace = mesh.boundary_trace(values[:, :, k])
        dphi = cfg.interaction.dphi_ds(lim.w0[:, k][:, None], lim.x[:, None], q2, q3, tk)
        out[:, k] = (dphi * trace) @ mesh.edge_weights / mesh.measure
    return out


def build_u1(cfg: ModelConfig, lim: "LimitSolution", mesh: CrossSectionMesh) -> CellField:
    """
    First cell corrector: for every (x1, t) grid point solve
    Lap u1 = -phi_hat(w0) + div(w0 v_bar),  d_nu u1 = w0 v_bar.nu - phi(w0),  mean(u1) = 0.
    """
    started = time.perf_counter()
    solver = NeumannSolver(mesh)
    nx, nt = lim.w0.shape
    values = np.zeros((nx, mesh.n_nodes, nt))
    defects = np.zeros((nx, nt))
    q2, q3 = mesh.quad_points[:, 0], mesh.quad_points[:, 1]

    if cfg.velocity.transversal_zero and cfg.interaction.xi_independent:
        # data are one fixed shape times the scalar phi(w0, x1, t)
        shape, _ = solver.solve(-mesh.perimeter / mesh.measure, -1.0)
        q = mesh.quad_points[0]
        phi = cfg.interaction.phi(lim.w0, lim.x[:, None], q[0], q[1], lim.t[None, :])
        values = phi[:, None, :] * shape[None, :, None]
        values = values - mesh.mean(np.moveaxis(values, 1, -1))[:, None, :]
    else:
        for k, tk in enumerate(lim.t):
            for i, xi in enumerate(lim.x):
                w0 = float(lim.w0[i, k])
                phi = cfg.interaction.phi(w0, xi, q2, q3, tk)
                v2, v3 = _transversal(cfg, mesh, xi, tk)
                if not np.any(phi) and (w0 == 0.0 or not (np.any(v2) or np.any(v3))):
                    continue
                f = -float(mesh.boundary_integral(phi)) / mesh.measure
                values[i, :, k], defects[i, k] = solver.solve(
                    f, -phi, flux=(w0 * v2, w0 * v3), where={"x1": f"{xi:.6g}", "t": f"{tk:.6g}"})

    cell = _finish(cfg, mesh, lim, values, defects, with_dt=True,
                   coupling=_coupling(cfg, mesh, lim, values))
    logger.info(f"Built u1 on {nx}x{nt} parameters in {time.perf_counter() - started:.2f}s, "
                f"max |u1|={np.abs(values).max():.4e}")
    return cell


def corrector_residual(cfg: ModelConfig, lim: "LimitSolution", w1: np.ndarray, u1: CellField,
                       mesh: CrossSectionMesh) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Cross-section-mean part of the u2 data and the solvability residual it leaves.

    The mean of  Lap u2 = f  against the boundary data vanishes only when w1 solves its own
    equation, so the residual measures how well w1 and w0 fit together on this grid.

    Returns:
        (drift, residual, scale) with drift and residual on the (x1, t) grid and scale the size of
        the data the residual is compared against
    """
    from .limit_solver import lambda_speed

    h = float(lim.x[1] - lim.x[0])
    x, t = lim.x[:, None], lim.t[None, :]
    w1_t = diff1_from_rest(w1, lim.axis.dt, axis=1)
    if cfg.high_peclet:
        second = diff1(cfg.velocity.v1(lim.w0, x, t) * lim.w0, h, axis=0)
        drift = w1_t + second
    else:
        second = lim.w0_xx
        drift = w1_t + diff1(lambda_speed(lim.w0, x, t, cfg.velocity) * w1, h, axis=0) - second
    decay = reduce_interaction(lim.w0, x, t, cfg, mesh, derivative="ds") * w1
    residual = drift + decay + u1.coupling
    scale = float(np.abs(second).max() + np.abs(decay).max() + np.abs(u1.coupling).max())
    return drift, residual, scale


def build_u2(cfg: ModelConfig, lim: "LimitSolution", w1: np.ndarray, u1: CellField,
             mesh: CrossSectionMesh) -> CellField:
    """
    Second cell corrector. The axial transport of u1 is dropped when beta >= 3.

    Args:
        cfg: scenario
        lim: limit solution (w0 and its grid)
        w1: first regular corrector on the same grid
        u1: first cell corrector with parameter derivatives
        mesh: cross-section mesh

    Returns:
        CellField for u2 (x-derivative only)

    Raises:
        CompatibilityError: w1 leaves a solvability residual above W1_DEFECT_TOL of the data scale
        NumericError: u2 does not vanish at t = 0
    """
    started = time.perf_counter()
    drift, residual, scale = corrector_residual(cfg, lim, w1, u1, mesh)
    worst = float(np.abs(residual).max())
    if worst > settings.W1_DEFECT_TOL * scale + 1e-12:
        i, k = np.unravel_index(int(np.abs(residual).argmax()), residual.shape)
        raise CompatibilityError("first corrector does not satisfy the solvability condition of u2",
                                 worst * mesh.measure,
                                 {"x1": f"{lim.x[i]:.6g}", "t": f"{lim.t[k]:.6g}",
                                  "relative": f"{worst / max(scale, 1e-300):.3e}"})

    # the grid residual is projected out and reported as the per-point defect
    solver = NeumannSolver(mesh, compatibility_tol=np.inf)
    nx, nt = lim.w0.shape
    values = np.zeros((nx, mesh.n_nodes, nt))
    defects = np.zeros((nx, nt))
    q2, q3 = mesh.quad_points[:, 0], mesh.quad_points[:, 1]
    h = float(lim.x[1] - lim.x[0])
    transport = cfg.beta < 3.0
    if transport:
        from .limit_solver import lambda_speed

        speed = lambda_speed(lim.w0, lim.x[:, None], lim.t[None, :], cfg.velocity)
        speed_dx = diff1(speed, h, axis=0)

    for k, tk in enumerate(lim.t):
        for i, xi in enumerate(lim.x):
            w0, w1v = float(lim.w0[i, k]), float(w1[i, k])
            u1v = u1.values[i, :, k]
            source = drift[i, k] + u1.dt[i, :, k]
            if transport:
                source = source + speed_dx[i, k] * u1v + speed[i, k] * u1.dx[i, :, k]
            dphi = cfg.interaction.dphi_ds(w0, xi, q2, q3, tk)
            g = -(w1v + mesh.boundary_trace(u1v)) * dphi
            v2, v3 = _transversal(cfg, mesh, xi, tk)
            total = w1v + u1v
            if not (np.any(source) or np.any(g) or np.any(total * v2) or np.any(total * v3)):
                continue
            values[i, :, k], defects[i, k] = solver.solve(
                source, g, flux=(total * v2, total * v3), where={"x1": f"{xi:.6g}", "t": f"{tk:.6g}"})

    initial = float(np.abs(values[:, :, 0]).max())
    if initial > 1e-10 * max(1.0, float(np.abs(values).max())):
        raise NumericError("u2 does not vanish at t = 0", {"max": f"{initial:.3e}"})
    cell = _finish(cfg, mesh, lim, values, defects, with_dt=False)
    logger.info(f"Built u2 in {time.perf_counter() - started:.2f}s, max |u2|={np.abs(values).max():.4e}, "
                f"max defect={np.abs(defects).max():.3e}")
    return cell
