"""
Limit problem for w0 by the method of characteristics, the corrector w1, and the
high-Peclet Cauchy variants.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator, RectBivariateSpline, make_interp_spline

from ..core.config import settings
from ..core.errors import CharacteristicError, HorizonError, InterpolationError, NumericError
from .cell_solver import CellField, reduce_interaction
from .cross_section import CrossSectionMesh
from .gridded import GriddedField, TimeAxis, diff1, diff1_from_rest, diff2, uniform_grid
from .model_config import ModelConfig

logger = logging.getLogger(__name__)

# (y, w, t) -> (dy/dt, dw/dt), vectorized over curves
Rhs = Callable[[np.ndarray, np.ndarray, float], Tuple[np.ndarray, np.ndarray]]


def lambda_speed(s, x, t, vel) -> np.ndarray:
    """Characteristic speed v1 + s * d_s v1."""
    s = np.asarray(s, dtype=float)
    return vel.v1(s, x, t) + s * vel.dv1_ds(s, x, t)


def forcing(s, x, t, cfg: ModelConfig, mesh: CrossSectionMesh) -> np.ndarray:
    """Right-hand side along characteristics: -phi_hat - s * d_x v1."""
    s = np.asarray(s, dtype=float)
    return -reduce_interaction(s, x, t, cfg, mesh) - s * cfg.velocity.dv1_dx(s, x, t)


@dataclass(frozen=True)
class CharacteristicCurve:
    origin: str  # "initial" or "inflow"
    parameter: float  # launch point y0 or launch time t0
    t: np.ndarray
    y: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class CharacteristicFan:
    """Launch metadata plus positions/values sampled at the grid time levels (nan when not alive)."""

    origin: np.ndarray
    parameter: np.ndarray
    t: np.ndarray
    positions: np.ndarray
    values: np.ndarray
    min_spacing_ratio: np.ndarray

    def dividing(self) -> np.ndarray:
        """Position of the curve launched from (0, 0) at every recorded time."""
        index = int(np.flatnonzero((self.origin == "initial") & (self.parameter == 0.0))[0])
        return self.positions[index]

    def curve(self, index: int) -> CharacteristicCurve:
        alive = ~np.isnan(self.positions[index])
        return CharacteristicCurve(str(self.origin[index]), float(self.parameter[index]),
                                   self.t[alive], self.positions[index, alive], self.values[index, alive])


@dataclass(frozen=True)
class LimitSolution:
    x: np.ndarray
    axis: TimeAxis
    w0: np.ndarray
    w0_x: np.ndarray
    w0_t: np.ndarray
    w0_xx: np.ndarray
    T1: float
    mode: str
    fan: Optional[CharacteristicFan] = field(default=None, repr=False)

    @property
    def t(self) -> np.ndarray:
        return self.axis.t

    def field(self) -> GriddedField:
        return GriddedField(self.x, self.axis, self.w0)


def _rk4(rhs: Rhs, y: np.ndarray, w: np.ndarray, t: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    k1y, k1w = rhs(y, w, t)
    k2y, k2w = rhs(y + 0.5 * dt * k1y, w + 0.5 * dt * k1w, t + 0.5 * dt)
    k3y, k3w = rhs(y + 0.5 * dt * k2y, w + 0.5 * dt * k2w, t + 0.5 * dt)
    k4y, k4w = rhs(y + dt * k3y, w + dt * k3w, t + dt)
    return (y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y),
            w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w))


def _limit_rhs(cfg: ModelConfig, mesh: CrossSectionMesh) -> Rhs:
    def rhs(y, w, t):
        return lambda_speed(w, y, t, cfg.velocity), forcing(w, y, t, cfg, mesh)
    return rhs


def trace_characteristic(y0: float, t0: float, cfg: ModelConfig, dt: float,
                         mesh: Optional[CrossSectionMesh] = None) -> CharacteristicCurve:
    """
    Integrate dy/dt = Lambda(w, y, t), dw/dt = F(w, y, t) from (y0, t0) with w = 0 by RK4.

    Args:
        y0: launch position (0 for inflow curves)
        t0: launch time (0 for curves from the initial line)
        cfg: scenario
        dt: fixed step
        mesh: cross-section mesh for the boundary average (built from cfg when omitted)

    Returns:
        sampled curve, truncated once y passes the right end or t reaches the horizon
    """
    if (t0 != 0.0) and (y0 != 0.0):
        raise CharacteristicError("characteristics start on the initial line or at the inflow end",
                                  {"y0": y0, "t0": t0})
    if mesh is None:
        from .cell_solver import section_mesh
        mesh = section_mesh(cfg)
    rhs = _limit_rhs(cfg, mesh)
    ts, ys, ws = [t0], [y0], [0.0]
    y, w, t = np.array([y0]), np.array([0.0]), t0
    while t < cfg.horizon - 1e-12 and y[0] < cfg.length:
        step = min(dt, cfg.horizon - t)
        y, w = _rk4(rhs, y, w, t, step)
        t += step
        if abs(w[0]) > cfg.s_max:
            raise CharacteristicError("characteristic value left the sampled range",
                                      {"t": f"{t:.6g}", "w": f"{w[0]:.6g}", "s_max": cfg.s_max})
        ts.append(t)
        ys.append(float(y[0]))
        ws.append(float(w[0]))
    origin = "initial" if t0 == 0.0 else "inflow"
    return CharacteristicCurve(origin, y0 if origin == "initial" else t0,
                               np.array(ts), np.array(ys), np.array(ws))


class _Fan:
    """All characteristics advanced together; curves are kept sorted by launch parameter."""

    def __init__(self, cfg: ModelConfig, nx: int, nt: int, refinement: int, dt: float):
        self.cfg = cfg
        self.step = dt / refinement
        self.refinement = refinement
        inflow_times = self.step * np.arange(nt * refinement, 0, -1)
        initial_points = np.linspace(0.0, cfg.length, nx * refinement + 1)
        self.origin = np.array(["inflow"] * len(inflow_times) + ["initial"] * len(initial_points))
        self.parameter = np.concatenate([inflow_times, initial_points])
        self.launch_step = np.concatenate([np.arange(nt * refinement, 0, -1), np.zeros(len(initial_points), int)])
        self.y = np.where(self.origin == "initial", self.parameter, 0.0)
        self.w = np.zeros(len(self.parameter))
        self.reference = np.full(len(self.parameter) - 1, np.nan)

    def launched(self, n: int) -> np.ndarray:
        return self.launch_step <= n

    def spacing(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Neighbour spacings of launched curves still inside the domain, plus the pair mask."""
        alive = self.launched(n)
        pair = alive[:-1] & alive[1:] & (self.y[:-1] <= self.cfg.length)
        gaps = np.diff(self.y)
        fresh = pair & np.isnan(self.reference)
        self.reference[fresh] = gaps[fresh]
        return gaps, pair


def _resample(x: np.ndarray, positions: np.ndarray, values: np.ndarray, length: float, nx: int,
              when: float) -> np.ndarray:
    inside = positions <= length
    if np.any(~inside):
        # keep the first curve past the right end so x = length is covered
        first_out = np.flatnonzero(~inside)[0]
        inside[first_out] = True
    p, v = positions[inside], values[inside]
    keep = np.concatenate([[True], np.diff(p) > 1e-12])
    p, v = p[keep], v[keep]
    if p[0] > 1e-12 or p[-1] < length - 1e-12 or np.max(np.diff(p)) > 2.0 * length / nx:
        raise InterpolationError("characteristic fan does not cover the axis",
                                 {"t": f"{when:.6g}", "max_gap": f"{np.max(np.diff(p)):.3e}"})
    return PchipInterpolator(p, v)(x)


def _derivatives(x: np.ndarray, axis: TimeAxis, w0: np.ndarray):
    h = float(x[1] - x[0])
    return diff1(w0, h, axis=0), diff1_from_rest(w0, axis.dt, axis=1), diff2(w0, h, axis=0)


def _fan_positions_ok(fan: _Fan, n: int, crossing_tol: float) -> Tuple[bool, float]:
    gaps, pair = fan.spacing(n)
    ratio = np.where(pair, gaps / np.where(pair, fan.reference, 1.0), np.inf)
    return bool(np.all(ratio[pair] > crossing_tol)), (float(ratio[pair].min()) if np.any(pair) else np.inf)


def solve_limit(cfg: ModelConfig, mesh: CrossSectionMesh, crossing_tol: Optional[float] = None) -> LimitSolution:
    """
    Solve the quasilinear limit problem by a fan of characteristics.

    Args:
        cfg: validated scenario (beta = 1)
        mesh: cross-section mesh for the boundary average of phi
        crossing_tol: spacing-collapse threshold relative to the initial spacing

    Returns:
        LimitSolution on [0, length] x [0, T1_observed]
    """
    crossing_tol = crossing_tol if crossing_tol is not None else settings.CROSSING_TOL
    started = time.perf_counter()
    grid = cfg.grid
    nx, nt, r = grid.nx, grid.nt, grid.fan_refinement
    x = uniform_grid(cfg.length, nx)
    t_full = uniform_grid(cfg.horizon, nt)
    fan = _Fan(cfg, nx, nt, r, cfg.horizon / nt)
    rhs = _limit_rhs(cfg, mesh)

    positions = np.full((len(fan.parameter), nt + 1), np.nan)
    values = np.full_like(positions, np.nan)
    min_ratio = np.full(nt + 1, np.inf)
    slices: List[np.ndarray] = [np.zeros(nx + 1)]
    positions[fan.launched(0), 0] = fan.y[fan.launched(0)]
    values[fan.launched(0), 0] = 0.0
    fan.spacing(0)
    last_level = nt

    for n in range(1, nt * r + 1):
        active = fan.launched(n - 1)
        ya, wa = _rk4(rhs, fan.y[active], fan.w[active], (n - 1) * fan.step, fan.step)
        fan.y[active], fan.w[active] = ya, wa
        if np.any(np.abs(wa) > cfg.s_max):
            raise CharacteristicError("characteristic value left the sampled range",
                                      {"t": f"{n * fan.step:.6g}", "s_max": cfg.s_max})
        ok, ratio = _fan_positions_ok(fan, n, crossing_tol)
        if n == 1 and not ok:
            raise CharacteristicError("characteristics cross immediately", {"ratio": f"{ratio:.3e}"})
        if n % r:
            if not ok:
                last_level = (n // r)
                break
            continue
        k = n // r
        if not ok:
            last_level = k - 1
            break
        min_ratio[k] = ratio
        alive = fan.launched(n)
        positions[alive, k] = fan.y[alive]
        values[alive, k] = fan.w[alive]
        order = np.flatnonzero(alive)
        slices.append(_resample(x, fan.y[order], fan.w[order], cfg.length, nx, k * cfg.horizon / nt))

    if last_level < 6:
        raise HorizonError("classical solution breaks down before enough time levels exist",
                           {"levels": last_level})
    axis = TimeAxis(t_full[: last_level + 1])
    w0 = np.column_stack(slices[: last_level + 1])
    w0[0, :] = 0.0
    w0[:, 0] = 0.0
    w0_x, w0_t, w0_xx = _derivatives(x, axis, w0)
    record = CharacteristicFan(origin=fan.origin, parameter=fan.parameter, t=axis.t,
                               positions=positions[:, : last_level + 1], values=values[:, : last_level + 1],
                               min_spacing_ratio=min_ratio[: last_level + 1])
    T1 = float(axis.end)
    if T1 < cfg.horizon:
        logger.warning(f"Characteristics collapse after t={T1:.4f}; limit solution truncated (T={cfg.horizon})")
    logger.info(f"Solved limit problem on {nx + 1}x{last_level + 1} grid in {time.perf_counter() - started:.2f}s, "
                f"T1={T1:.4f}, max w0={w0.max():.4e}")
    return LimitSolution(x=x, axis=axis, w0=w0, w0_x=w0_x, w0_t=w0_t, w0_xx=w0_xx, T1=T1,
                         mode="characteristics", fan=record)


def solve_cauchy_limit(cfg: ModelConfig, mesh: CrossSectionMesh) -> LimitSolution:
    """High-Peclet limit: for each x1 integrate d_t w0 = -phi_hat(w0, x1, t), w0(0) = 0."""
    started = time.perf_counter()
    x = uniform_grid(cfg.length, cfg.grid.nx)
    axis = TimeAxis(uniform_grid(cfg.horizon, cfg.grid.nt))
    dt = axis.dt

    def rhs(_, w, t):
        return None, -reduce_interaction(w, x, t, cfg, mesh)

    w = np.zeros_like(x)
    columns = [w.copy()]
    for k in range(cfg.grid.nt):
        t = k * dt
        k1 = rhs(None, w, t)[1]
        k2 = rhs(None, w + 0.5 * dt * k1, t + 0.5 * dt)[1]
        k3 = rhs(None, w + 0.5 * dt * k2, t + 0.5 * dt)[1]
        k4 = rhs(None, w + dt * k3, t + dt)[1]
        w = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.any(np.abs(w) > cfg.s_max):
            raise CharacteristicError("Cauchy limit solution left the sampled range",
                                      {"t": f"{t + dt:.6g}", "s_max": cfg.s_max})
        columns.append(w.copy())
    w0 = np.column_stack(columns)
    w0[:, 0] = 0.0
    w0_x, w0_t, w0_xx = _derivatives(x, axis, w0)
    logger.info(f"Solved Cauchy limit problem in {time.perf_counter() - started:.2f}s, max w0={w0.max():.4e}")
    return LimitSolution(x=x, axis=axis, w0=w0, w0_x=w0_x, w0_t=w0_t, w0_xx=w0_xx, T1=float(axis.end),
                         mode="cauchy")


def _bivariate(x: np.ndarray, t: np.ndarray, data: np.ndarray) -> RectBivariateSpline:
    return RectBivariateSpline(x, t, data, kx=3, ky=3)


def solve_w1(cfg: ModelConfig, lim: LimitSolution, u1: CellField, mesh: CrossSectionMesh) -> np.ndarray:
    """
    First regular corrector on the limit grid.

    Standard mode integrates d_t w1 + d_x(Lambda(w0) w1) + d_s phi_hat(w0) w1 = f1 along the
    characteristics of w0; high-Peclet mode dispatches to :func:`solve_cauchy_w1`.
    """
    if lim.w0_xx is None:
        raise NumericError("limit solution has no second-derivative field")
    if u1.coupling is None:
        raise NumericError("u1 carries no boundary coupling term")
    if cfg.high_peclet:
        return solve_cauchy_w1(cfg, lim, u1, mesh)
    started = time.perf_counter()
    x, t = lim.x, lim.t
    h = float(x[1] - x[0])
    speed = lambda_speed(lim.w0, x[:, None], t[None, :], cfg.velocity)
    decay = diff1(speed, h, axis=0) + reduce_interaction(lim.w0, x[:, None], t[None, :], cfg, mesh, "ds")
    source = lim.w0_xx - u1.coupling
    if not np.any(source):
        return np.zeros_like(lim.w0)
    w0_s = _bivariate(x, t, lim.w0)
    decay_s = _bivariate(x, t, decay)
    source_s = _bivariate(x, t, source)
    r = cfg.grid.fan_refinement
    nx, nt = len(x) - 1, len(t) - 1
    fan = _Fan(cfg, nx, nt, r, lim.axis.dt)
    step = fan.step

    def rhs(y, z, tt):
        yc = np.clip(y, 0.0, cfg.length)
        w0 = w0_s.ev(yc, np.full_like(yc, tt))
        dy = lambda_speed(w0, y, tt, cfg.velocity)
        dz = source_s.ev(yc, np.full_like(yc, tt)) - decay_s.ev(yc, np.full_like(yc, tt)) * z
        inside = y <= cfg.length
        return dy, np.where(inside, dz, 0.0)

    z = np.zeros(len(fan.parameter))
    slices = [np.zeros(nx + 1)]
    for n in range(1, nt * r + 1):
        active = fan.launched(n - 1)
        fan.y[active], z[active] = _rk4(rhs, fan.y[active], z[active], (n - 1) * step, step)
        if n % r == 0:
            order = np.flatnonzero(fan.launched(n))
            slices.append(_resample(x, fan.y[order], z[order], cfg.length, nx, n * step))
    w1 = np.column_stack(slices)
    w1[0, :] = 0.0
    w1[:, 0] = 0.0
    logger.info(f"Solved w1 along characteristics in {time.perf_counter() - started:.2f}s, max |w1|={np.abs(w1).max():.4e}")
    return w1


def solve_cauchy_w1(cfg: ModelConfig, lim: LimitSolution, u1: CellField, mesh: CrossSectionMesh) -> np.ndarray:
    """High-Peclet corrector: d_t w1 = -d_s phi_hat(w0) w1 - d_x(v1(w0) w0) + f1, f1 without d_xx w0."""
    x, axis = lim.x, lim.axis
    h = float(x[1] - x[0])
    flux = cfg.velocity.v1(lim.w0, x[:, None], axis.t[None, :]) * lim.w0
    source = -diff1(flux, h, axis=0) - u1.coupling
    decay = reduce_interaction(lim.w0, x[:, None], axis.t[None, :], cfg, mesh, "ds")
    source_s = make_interp_spline(axis.t, source, k=3, axis=1)
    decay_s = make_interp_spline(axis.t, decay, k=3, axis=1)
    dt = axis.dt
    w = np.zeros_like(x)
    columns = [w.copy()]
    for k in range(len(axis.t) - 1):
        t = k * dt

        def rate(z, tt):
            return source_s(tt) - decay_s(tt) * z

        k1 = rate(w, t)
        k2 = rate(w + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rate(w + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rate(w + dt * k3, t + dt)
        w = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        columns.append(w.copy())
    w1 = np.column_stack(columns)
    w1[:, 0] = 0.0
    logger.info(f"Solved high-Peclet w1, max |w1|={np.abs(w1).max():.4e}")
    return w1


def limit_residual(cfg: ModelConfig, lim: LimitSolution, mesh: CrossSectionMesh) -> float:
    """Max of |d_t w0 + Lambda d_x w0 - F| over the grid using the stored derivative fields."""
    x, t = lim.x[:, None], lim.t[None, :]
    if lim.mode == "cauchy":
        residual = lim.w0_t + reduce_interaction(lim.w0, x, t, cfg, mesh)
    else:
        residual = lim.w0_t + lambda_speed(lim.w0, x, t, cfg.velocity) * lim.w0_x - forcing(lim.w0, x, t, cfg, mesh)
    return float(np.abs(residual).max())


def solve_limit_problem(cfg: ModelConfig, mesh: CrossSectionMesh) -> LimitSolution:
    """Dispatch on the beta mode."""
    return solve_cauchy_limit(cfg, mesh) if cfg.high_peclet else solve_limit(cfg, mesh)
