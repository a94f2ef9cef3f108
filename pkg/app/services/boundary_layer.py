"""
Boundary-layer correctors near the right end x1 = length.

Terms are functions of the layer variable zeta (distance to the right end in layer units),
the cross-section point and time. Every term is tabulated on the limit time levels and
blended linearly in between, like the gridded regular parts.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import make_interp_spline

from ..core.errors import DecayError, NumericError
from .cell_solver import CellField, NeumannEigenbasis
from .cross_section import CrossSectionMesh
from .gridded import TimeAxis, at_rest
from .model_config import ModelConfig

logger = logging.getLogger(__name__)

ZERO_LEVEL = 1e-14


@dataclass(frozen=True)
class LayerData:
    """Right-end mismatches of the regular parts and the right-end speed, on the limit time levels."""

    axis: TimeAxis
    phi0: np.ndarray
    dphi0: np.ndarray
    hat_phi1: np.ndarray
    speed: np.ndarray
    dspeed: np.ndarray
    tilde_phi1: Optional[np.ndarray] = field(default=None, repr=False)  # (N, nt)
    phi2: Optional[np.ndarray] = field(default=None, repr=False)  # (N, nt)

    @property
    def floor(self) -> float:
        return float(self.speed.min())


def build_layer_data(cfg: ModelConfig, lim, w1: Optional[np.ndarray] = None, u1: Optional[CellField] = None,
                     u2: Optional[CellField] = None) -> LayerData:
    t = lim.t
    q, dq = cfg.boundary.q(t), cfg.boundary.dq(t)
    return LayerData(
        axis=lim.axis,
        phi0=q - lim.w0[-1],
        dphi0=dq - lim.w0_t[-1],
        hat_phi1=np.zeros_like(t) if w1 is None else -w1[-1],
        speed=np.asarray(cfg.velocity.right_end_speed(t), dtype=float),
        dspeed=np.asarray(cfg.velocity.right_end_speed_dt(t), dtype=float),
        tilde_phi1=None if u1 is None else -u1.values[-1],
        phi2=None if u2 is None else -u2.values[-1],
    )


def _blend(axis: TimeAxis, level: Callable[[int], np.ndarray], when: float) -> np.ndarray:
    k, theta = axis.locate(when)
    value = level(k)
    if theta == 0.0:
        return value
    return (1.0 - theta) * value + theta * level(k + 1)


# ---------------------------------------------------------------------------
# Closed-form terms
# ---------------------------------------------------------------------------

def _pi0_level(zeta: np.ndarray, data: LayerData, k: int) -> np.ndarray:
    return data.phi0[k] * np.exp(-data.speed[k] * zeta)


def _pi1_hat_coefficients(data: LayerData, k: int) -> Tuple[float, float, float, float]:
    v, dv, p0, dp0 = data.speed[k], data.dspeed[k], data.phi0[k], data.dphi0[k]
    linear = p0 * dv / v ** 2 - dp0 / v
    quadratic = p0 * dv / (2.0 * v)
    return data.hat_phi1[k], linear, quadratic, v


def _pi1_hat_level(zeta: np.ndarray, data: LayerData, k: int, nu: int = 0) -> np.ndarray:
    c0, c1, c2, v = _pi1_hat_coefficients(data, k)
    poly = c0 + c1 * zeta + c2 * zeta ** 2
    decay = np.exp(-v * zeta)
    if nu == 0:
        return poly * decay
    return (c1 + 2.0 * c2 * zeta - v * poly) * decay


def pi0_eval(zeta, when: float, data: LayerData) -> np.ndarray:
    """Phi0(t) * exp(-v(t) * zeta)."""
    zeta = np.asarray(zeta, dtype=float)
    return _blend(data.axis, lambda k: _pi0_level(zeta, data, k), when)


def pi1_hat_eval(zeta, when: float, data: LayerData) -> np.ndarray:
    """
    Mean part of the first layer corrector:
    (hat_Phi1 + [Phi0 v'/v^2 - Phi0'/v] zeta + [Phi0 v'/(2v)] zeta^2) * exp(-v zeta).
    """
    zeta = np.asarray(zeta, dtype=float)
    return _blend(data.axis, lambda k: _pi1_hat_level(zeta, data, k), when)


# ---------------------------------------------------------------------------
# Layer terms
# ---------------------------------------------------------------------------

class BoundaryLayerTerm:
    """
    A layer term tabulated on the limit time levels.

    Subclasses provide nodal values, zeta-derivatives and transversal gradients at one level;
    off-level times blend neighbouring levels.
    """

    name = "layer"

    def __init__(self, axis: TimeAxis, mesh: CrossSectionMesh, rate: float):
        self.axis = axis
        self.mesh = mesh
        self.rate = rate  # analytic decay rate the fit is compared against

    # level-wise hooks -------------------------------------------------------
    def _level(self, zeta: np.ndarray, k: int, points: Optional[np.ndarray], nu: int) -> np.ndarray:
        raise NotImplementedError

    def _level_gradient(self, zeta: np.ndarray, k: int, points: Optional[np.ndarray]) -> np.ndarray:
        count = self.mesh.n_nodes if points is None else len(points)
        return np.zeros((len(zeta), count, 2))

    # public evaluation ------------------------------------------------------
    def values(self, zeta, when: float, points: Optional[np.ndarray] = None) -> np.ndarray:
        """Shape (len(zeta), nodes or points); zero for zeta beyond the tabulated range."""
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        return _blend(self.axis, lambda k: self._level(zeta, k, points, 0), when)

    def dzeta(self, zeta, when: float, points: Optional[np.ndarray] = None) -> np.ndarray:
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        return _blend(self.axis, lambda k: self._level(zeta, k, points, 1), when)

    def grad_xi(self, zeta, when: float, points: Optional[np.ndarray] = None) -> np.ndarray:
        """Gradient in the cross-section variable; shape (len(zeta), nodes or points, 2)."""
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        return _blend(self.axis, lambda k: self._level_gradient(zeta, k, points), when)

    def profile(self, zeta) -> np.ndarray:
        """Max over cross-section nodes and time levels of |term| at each zeta."""
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        out = np.zeros_like(zeta)
        for k in range(len(self.axis.t)):
            out = np.maximum(out, np.abs(self._level(zeta, k, None, 0)).max(axis=1))
        return out

    def initial_max(self, zeta) -> float:
        """Max |term| at t = 0 over the given zeta samples."""
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        return float(np.abs(self._level(zeta, 0, None, 0)).max())


class Pi0Term(BoundaryLayerTerm):
    name = "pi0"

    def __init__(self, data: LayerData, mesh: CrossSectionMesh):
        super().__init__(data.axis, mesh, rate=data.floor)
        self.data = data

    def _level(self, zeta, k, points, nu):
        count = self.mesh.n_nodes if points is None else len(points)
        value = _pi0_level(zeta, self.data, k)
        if nu:
            value = -self.data.speed[k] * value
        return np.repeat(value[:, None], count, axis=1)


class Pi1HatTerm(BoundaryLayerTerm):
    name = "pi1_hat"

    def __init__(self, data: LayerData, mesh: CrossSectionMesh):
        super().__init__(data.axis, mesh, rate=data.floor)
        self.data = data

    def _level(self, zeta, k, points, nu):
        count = self.mesh.n_nodes if points is None else len(points)
        return np.repeat(_pi1_hat_level(zeta, self.data, k, nu)[:, None], count, axis=1)


class _ModalTerm(BoundaryLayerTerm):
    """Sum over eigenmodes plus one tail shape decaying at the rate of the last mode."""

    def __init__(self, axis: TimeAxis, mesh: CrossSectionMesh, basis: NeumannEigenbasis, tail: np.ndarray,
                 tail_rate: np.ndarray, rate: float):
        super().__init__(axis, mesh, rate)
        self.basis = basis
        self.tail = tail  # (N, nt)
        self.tail_rate = tail_rate  # (nt,)
        self._mode_gradients = mesh.recovered_gradient(basis.modes)  # (P+1, N, 2)
        self._tail_gradients = mesh.recovered_gradient(tail.T)  # (nt, N, 2)

    def _coefficients(self, zeta: np.ndarray, k: int, nu: int) -> np.ndarray:
        """Modal amplitudes (len(zeta), P+1) at level k."""
        raise NotImplementedError

    def _shapes(self, points: Optional[np.ndarray], k: int):
        if points is None:
            return self.basis.modes, self.tail[:, k]
        return self.mesh.interpolate(self.basis.modes, points), self.mesh.interpolate(self.tail[:, k], points)

    def _tail_factor(self, zeta: np.ndarray, k: int, nu: int) -> np.ndarray:
        decay = np.exp(-self.tail_rate[k] * zeta)
        return decay if nu == 0 else -self.tail_rate[k] * decay

    def _level(self, zeta, k, points, nu):
        modes, tail = self._shapes(points, k)
        return self._coefficients(zeta, k, nu) @ modes + self._tail_factor(zeta, k, nu)[:, None] * tail[None, :]

    def _level_gradient(self, zeta, k, points):
        grads = self._mode_gradients
        tail_grad = self._tail_gradients[k]
        if points is not None:
            grads = np.stack([self.mesh.interpolate(grads[..., d], points) for d in range(2)], axis=-1)
            tail_grad = np.stack([self.mesh.interpolate(tail_grad[:, d], points) for d in range(2)], axis=-1)
        coeffs = self._coefficients(zeta, k, 0)
        return (np.einsum("zp,pnd->znd", coeffs, grads)
                + self._tail_factor(zeta, k, 0)[:, None, None] * tail_grad[None])

    def tail_bound(self) -> float:
        return float(np.abs(self.tail).max()) if self.tail.size else 0.0


def _mode_rates(speed: np.ndarray, eigenvalues: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(alpha, gamma, k) of X'' + vX' - lambda X = 0 per (mode, level): decaying root -alpha, growing gamma."""
    root = np.sqrt(speed[None, :] ** 2 / 4.0 + eigenvalues[:, None])
    return speed[None, :] / 2.0 + root, root - speed[None, :] / 2.0, root


class Pi1TildeTerm(_ModalTerm):
    """Fluctuating part of the first layer corrector: sum_p a_p(t) Theta_p exp(-alpha_p(t) zeta)."""

    name = "pi1_tilde"

    def __init__(self, data: LayerData, basis: NeumannEigenbasis, mesh: CrossSectionMesh):
        if basis.count < 1:
            raise NumericError("layer construction needs at least one non-constant mode", {"modes": basis.count})
        nt = len(data.axis.t)
        source = np.zeros((mesh.n_nodes, nt)) if data.tilde_phi1 is None else data.tilde_phi1
        coeffs = basis.project(mesh, source.T)  # (nt, P+1)
        coeffs[:, 0] = 0.0
        tail = source - (coeffs @ basis.modes).T
        self.alpha, _, _ = _mode_rates(data.speed, basis.eigenvalues)
        lam1 = float(basis.eigenvalues[1])
        floor = data.floor
        super().__init__(data.axis, mesh, basis, tail, self.alpha[-1],
                         rate=floor / 2.0 + np.sqrt(floor ** 2 / 4.0 + lam1))
        self.coeffs = coeffs.T  # (P+1, nt)

    def _coefficients(self, zeta, k, nu):
        decay = np.exp(-np.outer(zeta, self.alpha[:, k]))
        amp = self.coeffs[:, k][None, :] * decay
        return amp if nu == 0 else -self.alpha[:, k][None, :] * amp

    def tail_bound(self) -> float:
        """Largest last-mode amplitude plus the nodal remainder."""
        return float(np.abs(self.coeffs[-1]).max()) + super().tail_bound()


def _exp_weights(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    E(a) = int_0^1 e^{-a u} du and W(a) = int_0^1 u e^{-a u} du, with series near a = 0.
    """
    small = a < 1e-3
    safe = np.where(small, 1.0, a)
    e = np.exp(-safe)
    big_e = (1.0 - e) / safe
    big_w = (1.0 - (1.0 + safe) * e) / safe ** 2
    series_e = 1.0 - a / 2.0 + a ** 2 / 6.0 - a ** 3 / 24.0
    series_w = 0.5 - a / 3.0 + a ** 2 / 8.0 - a ** 3 / 30.0
    return np.where(small, series_e, big_e), np.where(small, series_w, big_w)


def solve_halfline(zeta: np.ndarray, rhs: np.ndarray, speed, eigenvalue, boundary) -> np.ndarray:
    """
    Decaying solution of X'' + v X' - lambda X = r on [0, L] with X(0) = b by variation of parameters.

    ``rhs`` has zeta on its first axis; ``speed``, ``eigenvalue`` and ``boundary`` broadcast
    against the remaining axes. The right-hand side is integrated exactly as a piecewise-linear
    function of zeta on a uniform grid.
    """
    rhs = np.asarray(rhs, dtype=float)
    speed = np.broadcast_to(np.asarray(speed, dtype=float), rhs.shape[1:])
    eigenvalue = np.broadcast_to(np.asarray(eigenvalue, dtype=float), rhs.shape[1:])
    root = np.sqrt(speed ** 2 / 4.0 + eigenvalue)
    if np.any(root <= 0.0):
        raise NumericError("half-line problem needs positive speed or eigenvalue")
    alpha, gamma = speed / 2.0 + root, root - speed / 2.0
    step = float(zeta[1] - zeta[0])
    n = len(zeta)

    fwd_e, fwd_w = _exp_weights(alpha * step)
    fwd_decay = np.exp(-alpha * step)
    forward = np.zeros_like(rhs)
    for j in range(n - 1):
        forward[j + 1] = fwd_decay * forward[j] + step * (fwd_w * rhs[j] + (fwd_e - fwd_w) * rhs[j + 1])

    bwd_e, bwd_w = _exp_weights(gamma * step)
    bwd_decay = np.exp(-gamma * step)
    backward = np.zeros_like(rhs)
    for j in range(n - 2, -1, -1):
        backward[j] = bwd_decay * backward[j + 1] + step * ((bwd_e - bwd_w) * rhs[j] + bwd_w * rhs[j + 1])

    decay = np.exp(-np.multiply.outer(zeta, alpha))
    return boundary * decay - (forward + backward - decay * backward[0]) / (2.0 * root)


class Pi2Term(_ModalTerm):
    """Second layer corrector, tabulated on a uniform zeta grid per mode and time level."""

    name = "pi2"

    def __init__(self, data: LayerData, basis: NeumannEigenbasis, mesh: CrossSectionMesh, pi1: Pi1TildeTerm,
                 lzeta: float, nzeta: int):
        started = time.perf_counter()
        axis = data.axis
        nt = len(axis.t)
        self.zeta = np.linspace(0.0, lzeta, nzeta + 1)
        zeta = self.zeta

        # modal samples of Pi1 = pi1_hat + pi1_tilde, then d/dt along the levels
        samples = np.zeros((len(zeta), basis.count + 1, nt))
        root_measure = np.sqrt(mesh.measure)
        for k in range(nt):
            samples[:, 0, k] = _pi1_hat_level(zeta, data, k) * root_measure
            samples[:, 1:, k] = pi1._coefficients(zeta, k, 0)[:, 1:]
        if nt >= 3:
            rhs = np.gradient(samples, axis.dt, axis=2, edge_order=2)
        else:
            rhs = np.gradient(samples, axis.dt, axis=2)
        rhs[:, :, at_rest(samples, axis=2)] = 0.0

        source = np.zeros((mesh.n_nodes, nt)) if data.phi2 is None else data.phi2
        boundary = basis.project(mesh, source.T).T  # (P+1, nt)
        tail = source - basis.modes.T @ boundary
        alpha, _, _ = _mode_rates(data.speed, basis.eigenvalues)
        self.table = solve_halfline(zeta, rhs, data.speed[None, :], basis.eigenvalues[:, None], boundary[None])
        self._spline = make_interp_spline(zeta, self.table, k=3, axis=0)
        self._dspline = self._spline.derivative()
        super().__init__(axis, mesh, basis, tail, alpha[-1], rate=data.floor)
        logger.info(f"Built second layer term on {len(zeta)} zeta samples x {basis.count + 1} modes "
                    f"in {time.perf_counter() - started:.2f}s")

    def _coefficients(self, zeta, k, nu):
        inside = zeta <= self.zeta[-1]
        spline = self._spline if nu == 0 else self._dspline
        values = spline(np.clip(zeta, 0.0, self.zeta[-1]))[:, :, k]
        return np.where(inside[:, None], values, 0.0)

    def initial_max(self, zeta) -> float:
        return max(super().initial_max(zeta), float(np.abs(self.table[:, :, 0]).max()))


@dataclass(frozen=True)
class DecayFit:
    rate: Optional[float]
    residual: float
    zero: bool
    samples: int


def decay_rate(term: BoundaryLayerTerm, window: Tuple[float, float], samples: int = 200) -> DecayFit:
    """
    Least-squares slope of log max|term| against zeta over ``window``.

    Args:
        term: layer term
        window: (zeta_min, zeta_max)
        samples: number of zeta samples, at least 10

    Returns:
        DecayFit; ``zero`` is set when every sample is below 1e-14
    """
    if samples < 10:
        raise NumericError("decay fit needs at least ten samples", {"samples": samples})
    zeta = np.linspace(window[0], window[1], samples)
    profile = term.profile(zeta)
    keep = profile > ZERO_LEVEL
    if keep.sum() < 10:
        return DecayFit(rate=None, residual=0.0, zero=True, samples=int(keep.sum()))
    coeffs, residuals, *_ = np.polyfit(zeta[keep], np.log(profile[keep]), 1, full=True)
    residual = float(np.sqrt(residuals[0] / keep.sum())) if len(residuals) else 0.0
    return DecayFit(rate=float(-coeffs[0]), residual=residual, zero=False, samples=int(keep.sum()))


@dataclass(frozen=True)
class LayerSet:
    data: LayerData
    pi0: Pi0Term
    pi1_hat: Pi1HatTerm
    pi1_tilde: Pi1TildeTerm
    pi2: Optional[Pi2Term]


def certify(term: BoundaryLayerTerm, lzeta: float) -> DecayFit:
    fit = decay_rate(term, (min(1.0, 0.1 * lzeta), 0.5 * lzeta))
    if not fit.zero and fit.rate <= 0.0:
        raise DecayError(f"layer term {term.name} does not decay", {"rate": f"{fit.rate:.4g}"})
    return fit


def build_layers(cfg: ModelConfig, data: LayerData, basis: NeumannEigenbasis, mesh: CrossSectionMesh,
                 with_second: bool = True) -> LayerSet:
    """Build Pi0, Pi1 (mean and fluctuating parts) and optionally Pi2, certifying their decay."""
    if data.floor <= 0.0:
        raise NumericError("right-end speed must stay positive", {"floor": data.floor})
    pi0 = Pi0Term(data, mesh)
    pi1_hat = Pi1HatTerm(data, mesh)
    pi1_tilde = Pi1TildeTerm(data, basis, mesh)
    pi2 = Pi2Term(data, basis, mesh, pi1_tilde, cfg.lzeta, cfg.grid.nzeta) if with_second else None
    for term in (pi0, pi1_hat, pi1_tilde) + ((pi2,) if pi2 is not None else ()):
        fit = certify(term, cfg.lzeta)
        logger.info(f"Layer {term.name}: " + ("numerically zero" if fit.zero else
                                                f"decay rate {fit.rate:.4f} (analytic {term.rate:.4f})"))
    logger.info(f"Pi1 modal tail bound {pi1_tilde.tail_bound():.3e}")
    return LayerSet(data=data, pi0=pi0, pi1_hat=pi1_hat, pi1_tilde=pi1_tilde, pi2=pi2)
