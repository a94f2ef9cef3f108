"""
Direct axisymmetric solver for the full thin-cylinder problem, its conservation audit and
the manufactured-solution convergence gate.

Vertex-centred finite volumes on an (x1, r) grid: implicit diffusion, explicit axial flux with
second-order upwind reconstruction, explicit radial convection, and the lateral exchange
condition imposed as a wall flux updated by Picard sweeps.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..core.config import settings
from ..core.errors import CFLError, ConfigError, ConvergenceError, NumericError
from ..models.scenario_models import ScenarioDocument
from .limit_solver import lambda_speed
from .model_config import ModelConfig

logger = logging.getLogger(__name__)

# source(x (nx+1,), r (nr+1,), t) -> (nx+1, nr+1)
SourceFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class AxisymmetryCheck:
    passed: bool
    worst: float
    note: str = ""


def require_axisymmetric(cfg: ModelConfig, samples: int = 9, tol: float = 1e-10) -> AxisymmetryCheck:
    """
    Check rotation invariance of phi and the radial structure of the transversal velocity on samples.
    """
    if cfg.cross_section.kind != "disk":
        return AxisymmetryCheck(False, math.inf, "cross-section is not a disk")
    r0 = cfg.cross_section.outer_radius()
    x = np.linspace(0.0, cfg.length, samples)[:, None, None, None]
    t = np.linspace(0.0, cfg.horizon, samples)[None, :, None, None]
    s = np.linspace(0.0, cfg.s_max, 3)
    rho = np.linspace(0.0, r0, 5)[None, None, :, None]
    angle = np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False)[None, None, None, :]
    xi2, xi3 = rho * np.cos(angle), rho * np.sin(angle)
    worst = 0.0
    for value in s:
        phi = cfg.interaction.phi(value, x, xi2, xi3, t)
        worst = max(worst, float(np.abs(phi - phi[..., :1]).max()))
    v2, v3 = cfg.velocity.transversal(x, xi2, xi3, t)
    radial = v2 * np.cos(angle) + v3 * np.sin(angle)
    swirl = -v2 * np.sin(angle) + v3 * np.cos(angle)
    worst = max(worst, float(np.abs(swirl).max()), float(np.abs(radial - radial[..., :1]).max()))
    passed = worst <= tol
    return AxisymmetryCheck(passed, worst, "" if passed else "data depend on the angular variable")


def graded_axis(length: float, nx: int, finest: float, grading: float) -> np.ndarray:
    """
    Axial nodes: uniform with spacing length/nx in the bulk, geometrically refined toward
    x1 = length down to ``finest`` when ``grading`` > 1.
    """
    bulk = length / nx
    if grading <= 1.0 or finest >= bulk:
        return np.linspace(0.0, length, nx + 1)
    steps = []
    h = finest
    while h < bulk and sum(steps) < 0.5 * length:
        steps.append(h)
        h *= grading
    graded = float(sum(steps))
    cells = max(1, int(math.ceil((length - graded) / bulk)))
    uniform = np.linspace(0.0, length - graded, cells + 1)
    tail = length - graded + np.cumsum(steps[::-1])
    nodes = np.concatenate([uniform, tail])
    nodes[-1] = length
    return nodes


@dataclass(frozen=True)
class ReferenceGrid:
    eps: float
    x: np.ndarray
    r: np.ndarray
    radius: float

    @property
    def dx(self) -> np.ndarray:
        """Axial control-volume widths (half cells at both ends)."""
        mid = 0.5 * (self.x[1:] + self.x[:-1])
        edges = np.concatenate([[self.x[0]], mid, [self.x[-1]]])
        return np.diff(edges)

    @property
    def r_faces(self) -> np.ndarray:
        mid = 0.5 * (self.r[1:] + self.r[:-1])
        return np.concatenate([[0.0], mid, [self.radius]])

    @property
    def ring_areas(self) -> np.ndarray:
        """Cross-section areas of the radial control volumes; they sum to pi * radius^2."""
        faces = self.r_faces
        return np.pi * (faces[1:] ** 2 - faces[:-1] ** 2)

    @property
    def h_min(self) -> float:
        return float(np.diff(self.x).min())

    def cross_section_mean(self, u: np.ndarray) -> np.ndarray:
        """Mean over the radial axis (last) weighted by ring areas."""
        return np.asarray(u) @ self.ring_areas / (np.pi * self.radius ** 2)


def build_reference_grid(cfg: ModelConfig, eps: float, nx: Optional[int] = None,
                         grading: Optional[float] = None) -> ReferenceGrid:
    ref = cfg.reference
    finest = cfg.layer_scale(eps) / 40.0
    x = graded_axis(cfg.length, nx or ref.nx, finest, ref.grading if grading is None else grading)
    radius = eps * cfg.cross_section.outer_radius()
    r = np.linspace(0.0, radius, ref.nr + 1)
    return ReferenceGrid(eps=eps, x=x, r=r, radius=radius)


@dataclass(frozen=True)
class ReferenceSolution:
    grid: ReferenceGrid
    t: np.ndarray
    u: np.ndarray  # (nt, nx+1, nr+1)
    scheme: str
    dt: float
    steps: int
    metadata: Dict[str, float] = field(default_factory=dict)

    @property
    def eps(self) -> float:
        return self.grid.eps

    def mean(self) -> np.ndarray:
        """Cross-section means, shape (nt, nx+1)."""
        return self.grid.cross_section_mean(self.u)


class _Discretization:
    """Operators of one (cfg, eps, grid) combination."""

    def __init__(self, cfg: ModelConfig, grid: ReferenceGrid):
        self.cfg = cfg
        self.grid = grid
        eps, beta = grid.eps, cfg.beta
        self.axial_diffusion = eps ** beta
        self.radial_diffusion = eps
        self.axial_scale = eps ** ((beta - 1.0) / 2.0)
        x, r = grid.x, grid.r
        self.nx, self.nr = len(x) - 1, len(r) - 1
        self.dx = grid.dx
        self.rings = grid.ring_areas
        self.dr = float(r[1] - r[0])
        self.r_mid = 0.5 * (r[1:] + r[:-1])
        self.x_mid = 0.5 * (x[1:] + x[:-1])
        # upwind extrapolation factor for faces i+1/2, i >= 1
        self.upwind = (self.x_mid[1:] - x[1:-1]) / (x[1:-1] - x[:-2])
        self.xi_faces = self.r_mid / eps
        self.wall_factor = 2.0 * np.pi * grid.radius / self.rings[-1]
        self.diffusion = self._diffusion_matrix()

    def _diffusion_matrix(self) -> sparse.csr_matrix:
        nx, nr = self.nx, self.nr
        width = nr + 1
        x = self.grid.x
        rows, cols, vals = [], [], []
        interior = np.arange(1, nx)
        # axial couplings
        for shift in (-1, 1):
            neighbour = interior + shift
            gap = np.abs(x[neighbour] - x[interior])
            coeff = self.axial_diffusion / (self.dx[interior] * gap)
            for j in range(width):
                rows.append(interior * width + j)
                cols.append(neighbour * width + j)
                vals.append(coeff)
                rows.append(interior * width + j)
                cols.append(interior * width + j)
                vals.append(-coeff)
        # radial couplings through faces j+1/2
        for j in range(nr):
            face = 2.0 * np.pi * self.r_mid[j] * self.radial_diffusion / self.dr
            for a, b in ((j, j + 1), (j + 1, j)):
                coeff = np.full(len(interior), face / self.rings[a])
                rows.append(interior * width + a)
                cols.append(interior * width + b)
                vals.append(coeff)
                rows.append(interior * width + a)
                cols.append(interior * width + a)
                vals.append(-coeff)
        size = (nx + 1) * width
        return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(size, size)).tocsr()

    def explicit(self, u: np.ndarray, when: float) -> np.ndarray:
        """Axial flux divergence and radial convection, zero on the Dirichlet rows."""
        cfg, x = self.cfg, self.grid.x
        face = np.empty((self.nx, self.nr + 1))
        face[0] = 0.5 * (u[0] + u[1])
        face[1:] = u[1:-1] + (u[1:-1] - u[:-2]) * self.upwind[:, None]
        flux = self.axial_scale * cfg.velocity.v1(face, self.x_mid[:, None], when) * face
        rate = np.zeros_like(u)
        rate[1:-1] = -(flux[1:] - flux[:-1]) / self.dx[1:-1, None]
        if not cfg.velocity.transversal_zero:
            vr, _ = cfg.velocity.transversal(x[1:-1, None], self.xi_faces[None, :], 0.0, when)
            carried = self.radial_diffusion * vr * 0.5 * (u[1:-1, 1:] + u[1:-1, :-1]) * 2.0 * np.pi * self.r_mid
            net = np.zeros((self.nx - 1, self.nr + 1))
            net[:, :-1] -= carried
            net[:, 1:] += carried
            rate[1:-1] += net / self.rings[None, :]
        return rate

    def wall(self, u: np.ndarray, when: float) -> np.ndarray:
        """Rate from the lateral exchange flux eps * phi(u) on the wall ring."""
        rate = np.zeros_like(u)
        r0 = self.cfg.cross_section.outer_radius()
        phi = self.cfg.interaction.phi(u[1:-1, -1], self.grid.x[1:-1], r0, 0.0, when)
        rate[1:-1, -1] = -self.radial_diffusion * phi * self.wall_factor
        return rate

    def max_speed(self) -> float:
        cfg = self.cfg
        s = np.linspace(0.0, cfg.s_max, 33)[:, None, None]
        xs = np.linspace(0.0, cfg.length, 65)[None, :, None]
        ts = np.linspace(0.0, cfg.horizon, 17)[None, None, :]
        speed = np.abs(lambda_speed(s, xs, ts, cfg.velocity)).max()
        return float(self.axial_scale * max(speed, 1e-300))


def _snapshot_times(cfg: ModelConfig, until: Optional[float]) -> np.ndarray:
    t = np.linspace(0.0, cfg.horizon, cfg.grid.nt + 1)
    if until is not None:
        t = t[t <= until + 1e-12]
    return t


def solve_reference(cfg: ModelConfig, eps: float, grid: Optional[ReferenceGrid] = None,
                    snapshots: Optional[np.ndarray] = None, dt: Optional[float] = None,
                    source: Optional[SourceFn] = None, check_axisymmetry: bool = True) -> ReferenceSolution:
    """
    Advance the axisymmetric problem from zero initial data.

    Args:
        cfg: scenario
        eps: thickness parameter
        grid: reference grid (graded default grid when omitted)
        snapshots: uniformly spaced output times starting at 0 (limit time levels when omitted)
        dt: step; must divide the snapshot spacing (derived from the CFL limit when omitted)
        source: optional volumetric source, used by manufactured solutions
        check_axisymmetry: refuse data that depend on the angular variable

    Returns:
        ReferenceSolution with snapshots at the requested times
    """
    if check_axisymmetry:
        check = require_axisymmetric(cfg)
        if not check.passed:
            raise ConfigError("reference solver needs axisymmetric data", {"worst": f"{check.worst:.3e}",
                                                                           "note": check.note})
    started = time.perf_counter()
    grid = grid or build_reference_grid(cfg, eps)
    disc = _Discretization(cfg, grid)
    times = _snapshot_times(cfg, None) if snapshots is None else np.asarray(snapshots, dtype=float)
    spacing = float(times[1] - times[0])
    cfl = cfg.reference.cfl or settings.CFL_MAX
    max_dt = cfl * grid.h_min / disc.max_speed()
    if dt is None:
        substeps = max(1, int(math.ceil(spacing / max_dt - 1e-9)))
    else:
        if dt > max_dt * (1.0 + 1e-12):
            raise CFLError("reference step violates the CFL limit", max_dt)
        substeps = int(round(spacing / dt))
        if substeps < 1 or abs(substeps * dt - spacing) > 1e-9 * spacing:
            raise ConfigError("reference step must divide the snapshot spacing", {"key": "dt"})
    step = spacing / substeps

    scheme = cfg.reference.scheme
    theta = 0.5 if scheme == "crank-nicolson" else 1.0
    size = (disc.nx + 1) * (disc.nr + 1)
    dirichlet = np.zeros((disc.nx + 1, disc.nr + 1), dtype=bool)
    dirichlet[0] = dirichlet[-1] = True
    mask = dirichlet.ravel()
    system = (sparse.identity(size, format="csr") - theta * step * disc.diffusion).tolil()
    for row in np.flatnonzero(mask):
        system.rows[row] = [row]
        system.data[row] = [1.0]
    factor = splu(system.tocsc())

    u = np.zeros((disc.nx + 1, disc.nr + 1))
    frames = [u.copy()]
    previous_explicit = None
    sweeps = cfg.reference.picard_sweeps
    count = 0
    for k in range(1, len(times)):
        for _ in range(substeps):
            t_old = count * step
            t_new = t_old + step
            explicit = disc.explicit(u, t_old)
            if theta == 0.5 and previous_explicit is not None:
                convect = 1.5 * explicit - 0.5 * previous_explicit
            else:
                convect = explicit
            previous_explicit = explicit
            base = u.ravel() + (1.0 - theta) * step * (disc.diffusion @ u.ravel())
            base = base + step * convect.ravel()
            wall_old = disc.wall(u, t_old)
            if source is not None:
                src = theta * source(grid.x, grid.r, t_new) + (1.0 - theta) * source(grid.x, grid.r, t_old)
                src[dirichlet] = 0.0
                base = base + step * src.ravel()
            guess = u
            change = math.inf
            for sweep in range(sweeps):
                wall = theta * disc.wall(guess, t_new) + (1.0 - theta) * wall_old
                rhs = base + step * wall.ravel()
                rhs[mask] = 0.0
                rhs.reshape(u.shape)[-1] = float(cfg.boundary.q(t_new))
                new = factor.solve(rhs).reshape(u.shape)
                new_change = float(np.abs(new - guess).max())
                if sweep > 0 and new_change > change and new_change > 1e-12:
                    raise ConvergenceError("Picard sweeps diverge", {"t": f"{t_new:.6g}", "sweep": sweep})
                change = new_change
                guess = new
            u = guess
            count += 1
            if not np.all(np.isfinite(u)):
                raise NumericError("reference solution became non-finite", {"t": f"{t_new:.6g}"})
            if np.abs(u).max() > cfg.s_max:
                raise NumericError("reference solution left the validated range",
                                   {"t": f"{t_new:.6g}", "max": f"{np.abs(u).max():.4g}"})
        frames.append(u.copy())
    solution = ReferenceSolution(grid=grid, t=times, u=np.stack(frames), scheme=scheme, dt=step,
                                 steps=count, metadata={"max_dt": max_dt, "substeps": substeps,
                                                        "h_min": grid.h_min, "picard_sweeps": sweeps})
    logger.info(f"Reference eps={eps}: {len(grid.x)}x{len(grid.r)} grid (h_min={grid.h_min:.2e}), "
                f"{count} {scheme} steps of {step:.2e} in {time.perf_counter() - started:.2f}s")
    return solution


def _one_sided(values: np.ndarray, x: np.ndarray, end: str) -> np.ndarray:
    """Second-order one-sided x-derivative at the first or last node; values have x on axis 0."""
    if end == "left":
        h1, h2 = x[1] - x[0], x[2] - x[1]
        f0, f1, f2 = values[0], values[1], values[2]
        return (-(2 * h1 + h2) / (h1 * (h1 + h2)) * f0 + (h1 + h2) / (h1 * h2) * f1
                - h1 / (h2 * (h1 + h2)) * f2)
    h1, h2 = x[-1] - x[-2], x[-2] - x[-3]
    f0, f1, f2 = values[-1], values[-2], values[-3]
    return ((2 * h1 + h2) / (h1 * (h1 + h2)) * f0 - (h1 + h2) / (h1 * h2) * f1
            + h1 / (h2 * (h1 + h2)) * f2)


def flux_balance(sol: ReferenceSolution, cfg: ModelConfig, eps: float) -> np.ndarray:
    """
    Mass balance residual between consecutive snapshots:
    |(M(t_{k+1}) - M(t_k))/dt - trapezoid of (inflow - outflow - lateral exchange)|.
    """
    grid = sol.grid
    disc = _Discretization(cfg, grid)
    volumes = grid.dx[:, None] * grid.ring_areas[None, :]
    r0 = cfg.cross_section.outer_radius()

    def budget(u: np.ndarray, when: float) -> float:
        axial = []
        for end, idx in (("left", 0), ("right", -1)):
            du = _one_sided(u, grid.x, end)
            convect = disc.axial_scale * cfg.velocity.v1(u[idx], grid.x[idx], when) * u[idx]
            axial.append(float((convect - disc.axial_diffusion * du) @ grid.ring_areas))
        phi = cfg.interaction.phi(u[:, -1], grid.x, r0, 0.0, when)
        lateral = float(eps * 2.0 * np.pi * grid.radius * (phi @ grid.dx))
        return axial[0] - axial[1] - lateral

    mass = np.einsum("kij,ij->k", sol.u, volumes)
    budgets = np.array([budget(sol.u[k], float(tk)) for k, tk in enumerate(sol.t)])
    gaps = np.diff(sol.t)
    residual = np.abs(np.diff(mass) / gaps - 0.5 * (budgets[1:] + budgets[:-1]))
    logger.debug(f"Flux balance eps={eps}: max residual {residual.max() if residual.size else 0.0:.3e}")
    return residual


# ---------------------------------------------------------------------------
# Manufactured solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MmsReport:
    scheme: str
    spatial_slope: float
    temporal_slope: float
    spatial_errors: List[float]
    temporal_differences: List[float]
    passed: bool
    required_temporal: float


def _mms_config(cfg: ModelConfig, scheme: str) -> ModelConfig:
    velocity = cfg.document.velocity if cfg.velocity.transversal_zero else {"catalog": "constant", "params": {}}
    data = {
        "name": f"{cfg.name}-mms",
        "length": cfg.length,
        "horizon": cfg.horizon,
        "delta1": cfg.delta1,
        "cross_section": {"kind": "disk", "radius": cfg.cross_section.outer_radius()},
        "velocity": velocity if isinstance(velocity, dict) else velocity.model_dump(),
        "interaction": {"catalog": "zero"},
        "boundary": {"catalog": "zero"},
        "epsilons": [0.1],
        "beta": 1.0,
        "grid": cfg.grid.model_dump(),
        "reference": {**cfg.reference.model_dump(), "scheme": scheme, "grading": 1.0},
    }
    return ModelConfig.from_document(ScenarioDocument.model_validate(data))


def manufactured(cfg: ModelConfig, eps: float) -> Tuple[Callable[[np.ndarray, float], np.ndarray], SourceFn]:
    """Exact solution sin(pi x/length) sin(t) (r-independent) and its compensating source."""
    k = np.pi / cfg.length
    a = eps ** ((cfg.beta - 1.0) / 2.0)
    diffusion = eps ** cfg.beta

    def exact(x, when):
        return np.sin(k * x) * np.sin(when)

    def source(x, r, when):
        u = exact(x, when)
        ux = k * np.cos(k * x) * np.sin(when)
        uxx = -k * k * u
        ut = np.sin(k * x) * np.cos(when)
        transport = lambda_speed(u, x, when, cfg.velocity) * ux + u * cfg.velocity.dv1_dx(u, x, when)
        rate = ut - diffusion * uxx + a * transport
        return np.repeat(rate[:, None], len(r), axis=1)

    return exact, source


def _slope(h: List[float], err: List[float]) -> float:
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def mms_self_test(cfg: ModelConfig, scheme: Optional[str] = None, nx_levels=(20, 40, 80),
                  horizon: float = 0.5) -> MmsReport:
    """
    Convergence gate of the reference solver.

    Spatial order: error against the exact solution with dt proportional to h (Crank-Nicolson).
    Temporal order: successive differences at fixed h for dt, dt/2, dt/4 with ``scheme``.
    """
    scheme = scheme or cfg.reference.scheme
    eps = 0.1
    spatial_cfg = _mms_config(cfg, "crank-nicolson")
    exact, source = manufactured(spatial_cfg, eps)
    h_list, errors = [], []
    for nx in nx_levels:
        grid = build_reference_grid(spatial_cfg, eps, nx=nx, grading=1.0)
        h = cfg.length / nx
        speed = _Discretization(spatial_cfg, grid).max_speed()
        dt = 0.25 * h / speed
        snapshots = np.array([0.0, horizon])
        substeps = int(math.ceil(horizon / dt))
        sol = solve_reference(spatial_cfg, eps, grid=grid, snapshots=snapshots, dt=horizon / substeps,
                              source=source, check_axisymmetry=False)
        err = np.abs(sol.u[-1] - exact(grid.x, horizon)[:, None]).max()
        h_list.append(h)
        errors.append(float(err))
    spatial = _slope(h_list, errors)

    temporal_cfg = _mms_config(cfg, scheme)
    _, source = manufactured(temporal_cfg, eps)
    nx = nx_levels[1]
    grid = build_reference_grid(temporal_cfg, eps, nx=nx, grading=1.0)
    h = cfg.length / nx
    base_dt = horizon / math.ceil(horizon / (0.4 * h / _Discretization(temporal_cfg, grid).max_speed()))
    finals = []
    for level in range(3):
        dt = base_dt / 2 ** level
        sol = solve_reference(temporal_cfg, eps, grid=grid, snapshots=np.array([0.0, horizon]), dt=dt,
                              source=source, check_axisymmetry=False)
        finals.append(sol.u[-1])
    diffs = [float(np.abs(finals[0] - finals[1]).max()), float(np.abs(finals[1] - finals[2]).max())]
    temporal = float(np.log2(diffs[0] / diffs[1])) if diffs[1] > 0 else math.inf
    required_temporal = 1.8 if scheme == "crank-nicolson" else 0.9
    passed = spatial >= 1.8 and temporal >= required_temporal
    logger.info(f"MMS ({scheme}): spatial slope {spatial:.3f}, temporal slope {temporal:.3f}"
                + ("" if passed else " BELOW GATE"))
    return MmsReport(scheme=scheme, spatial_slope=spatial, temporal_slope=temporal, spatial_errors=errors,
                     temporal_differences=diffs, passed=passed, required_temporal=required_temporal)
