"""
Catalog of problem data: velocity fields, interaction functions and boundary data.

Scenario documents select entries by name and pass numeric parameters; every entry
supplies the analytic partial derivatives the reduced model consumes. All callables
are vectorized over numpy arrays and broadcast their arguments.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Tuple, Type

import numpy as np

from ..core.errors import ConfigError
from ..models.scenario_models import CatalogRef

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Geometry:
    """Axis length, horizon, support margin and cross-section radius seen by catalog entries."""

    length: float
    horizon: float
    delta1: float
    radius: float


# ---------------------------------------------------------------------------
# Smooth building blocks
# ---------------------------------------------------------------------------

def bump(x, start: float, stop: float) -> Tuple[np.ndarray, np.ndarray]:
    """C-infinity bump supported in (start, stop) with peak 1; returns value and derivative."""
    x = np.asarray(x, dtype=float)
    scale = 2.0 / (stop - start)
    z = (2.0 * x - start - stop) / (stop - start)
    inside = np.abs(z) < 1.0
    one_minus = np.where(inside, 1.0 - z * z, 1.0)
    value = np.where(inside, np.exp(1.0 - 1.0 / one_minus), 0.0)
    slope = np.where(inside, value * (-2.0 * z / one_minus ** 2) * scale, 0.0)
    return value, slope


def _edge(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    positive = u > 0.0
    safe = np.where(positive, u, 1.0)
    f = np.where(positive, np.exp(-1.0 / safe), 0.0)
    df = np.where(positive, f / safe ** 2, 0.0)
    return f, df


def smoothstep(x, start: float, stop: float) -> Tuple[np.ndarray, np.ndarray]:
    """C-infinity step rising from 0 at ``start`` to 1 at ``stop``; returns value and derivative."""
    x = np.asarray(x, dtype=float)
    u = (x - start) / (stop - start)
    f, df = _edge(u)
    g, dg = _edge(1.0 - u)
    denom = f + g
    value = f / denom
    slope = (df * g + f * dg) / denom ** 2 / (stop - start)
    return value, slope


def cubic_ramp(t, ramp: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """tau(t) = 1 - exp(-(t/ramp)^3) with its first two derivatives; all vanish at t = 0."""
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    r3 = ramp ** 3
    e = np.exp(-(t ** 3) / r3)
    value = 1.0 - e
    first = 3.0 * t ** 2 / r3 * e
    second = e * (6.0 * t / r3 - 9.0 * t ** 4 / r3 ** 2)
    return value, first, second


def _shape(*args) -> Tuple[int, ...]:
    return np.broadcast(*[np.asarray(a) for a in args]).shape


# ---------------------------------------------------------------------------
# Base classes
# ---------------------------------------------------------------------------

class CatalogEntry:
    """Common parameter handling: ``DEFAULTS`` lists every accepted parameter."""

    NAME = ""
    DEFAULTS: Dict[str, float] = {}

    def __init__(self, geometry: Geometry, **params: float):
        unknown = sorted(set(params) - set(self.DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown parameter '{unknown[0]}' for catalog entry '{self.NAME}'",
                              {"key": unknown[0]})
        self.geometry = geometry
        self.params = {**self.DEFAULTS, **{k: float(v) for k, v in params.items()}}
        self._configure()

    def _configure(self) -> None:
        pass

    def describe(self) -> Dict[str, object]:
        return {"catalog": self.NAME, "params": dict(self.params)}


class VelocityField(CatalogEntry):
    """Axial speed v1(s, x1, t) and transversal field (v2, v3)(x1, xi2, xi3, t)."""

    transversal_zero = True

    def v1(self, s, x, t):
        raise NotImplementedError

    def dv1_ds(self, s, x, t):
        return np.zeros(_shape(s, x, t))

    def d2v1_ds2(self, s, x, t):
        return np.zeros(_shape(s, x, t))

    def dv1_dx(self, s, x, t):
        return np.zeros(_shape(s, x, t))

    def dv1_dt(self, s, x, t):
        return np.zeros(_shape(s, x, t))

    def transversal(self, x, xi2, xi3, t) -> Tuple[np.ndarray, np.ndarray]:
        zero = np.zeros(_shape(x, xi2, xi3, t))
        return zero, zero.copy()

    def divergence(self, x, xi2, xi3, t):
        return np.zeros(_shape(x, xi2, xi3, t))

    def right_end_speed(self, t):
        return self.v1(0.0, self.geometry.length, t)

    def right_end_speed_dt(self, t):
        return self.dv1_dt(0.0, self.geometry.length, t)


class InteractionFunction(CatalogEntry):
    """Lateral exchange phi(s, x1, xi2, xi3, t)."""

    xi_independent = True
    identically_zero = False

    def phi(self, s, x, xi2, xi3, t):
        raise NotImplementedError

    def dphi_ds(self, s, x, xi2, xi3, t):
        return np.zeros(_shape(s, x, xi2, xi3, t))

    def dphi_dx(self, s, x, xi2, xi3, t):
        return np.zeros(_shape(s, x, xi2, xi3, t))

    def dphi_dt(self, s, x, xi2, xi3, t):
        return np.zeros(_shape(s, x, xi2, xi3, t))

    def d2phi_dt2(self, s, x, xi2, xi3, t):
        return np.zeros(_shape(s, x, xi2, xi3, t))

    def grad_xi(self, s, x, xi2, xi3, t) -> Tuple[np.ndarray, np.ndarray]:
        zero = np.zeros(_shape(s, x, xi2, xi3, t))
        return zero, zero.copy()


class BoundaryData(CatalogEntry):
    """Dirichlet datum q(t) at the right end."""

    def q(self, t):
        raise NotImplementedError

    def dq(self, t):
        raise NotImplementedError

    def d2q(self, t):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Velocity entries
# ---------------------------------------------------------------------------

class ConstantVelocity(VelocityField):
    """v1 = c * (1 + m * tau(t)); no transversal component."""

    NAME = "constant"
    DEFAULTS = {"c": 1.0, "modulation": 0.0, "ramp": 0.5}

    def v1(self, s, x, t):
        tau, _, _ = cubic_ramp(t, self.params["ramp"])
        return np.broadcast_to(self.params["c"] * (1.0 + self.params["modulation"] * tau),
                               _shape(s, x, t)).copy()

    def dv1_dt(self, s, x, t):
        _, dtau, _ = cubic_ramp(t, self.params["ramp"])
        return np.broadcast_to(self.params["c"] * self.params["modulation"] * dtau, _shape(s, x, t)).copy()


class SaturatingVelocity(VelocityField):
    """v1 = c0 + c * s/(1+s) * psi(x1); psi fades to zero before the right end so v1 = c0 there."""

    NAME = "saturating"
    DEFAULTS = {"c": 1.0, "c0": 0.5}

    def _configure(self) -> None:
        g = self.geometry
        self._fade = (g.length - 2.0 * g.delta1, g.length - g.delta1)

    def _psi(self, x):
        step, dstep = smoothstep(x, *self._fade)
        return 1.0 - step, -dstep

    @staticmethod
    def _sigma(s):
        sa = np.abs(np.asarray(s, dtype=float))
        return sa / (1.0 + sa), np.sign(s) / (1.0 + sa) ** 2, -2.0 / (1.0 + sa) ** 3

    def v1(self, s, x, t):
        sigma, _, _ = self._sigma(s)
        psi, _ = self._psi(x)
        return np.broadcast_to(self.params["c0"] + self.params["c"] * sigma * psi, _shape(s, x, t)).copy()

    def dv1_ds(self, s, x, t):
        _, dsigma, _ = self._sigma(s)
        psi, _ = self._psi(x)
        return np.broadcast_to(self.params["c"] * dsigma * psi, _shape(s, x, t)).copy()

    def d2v1_ds2(self, s, x, t):
        _, _, d2sigma = self._sigma(s)
        psi, _ = self._psi(x)
        return np.broadcast_to(self.params["c"] * d2sigma * psi, _shape(s, x, t)).copy()

    def dv1_dx(self, s, x, t):
        sigma, _, _ = self._sigma(s)
        _, dpsi = self._psi(x)
        return np.broadcast_to(self.params["c"] * sigma * dpsi, _shape(s, x, t)).copy()


class RadialInflowVelocity(VelocityField):
    """v1 = c; transversal field a * rho(1-rho) * psi(x1) * tau(t) along the radial direction."""

    NAME = "radial-inflow"
    DEFAULTS = {"c": 1.0, "a": 0.3, "x_start": 1.1, "x_stop": 2.9, "ramp": 0.5}
    transversal_zero = False

    def v1(self, s, x, t):
        return np.full(_shape(s, x, t), self.params["c"])

    def _envelope(self, x, t):
        psi, _ = bump(x, self.params["x_start"], self.params["x_stop"])
        tau, _, _ = cubic_ramp(t, self.params["ramp"])
        return self.params["a"] * psi * tau

    def transversal(self, x, xi2, xi3, t):
        r0 = self.geometry.radius
        rho = np.hypot(xi2, xi3) / r0
        factor = self._envelope(x, t) * (1.0 - rho) / r0
        shape = _shape(x, xi2, xi3, t)
        return np.broadcast_to(factor * xi2, shape).copy(), np.broadcast_to(factor * xi3, shape).copy()

    def divergence(self, x, xi2, xi3, t):
        r0 = self.geometry.radius
        rho = np.hypot(xi2, xi3) / r0
        return np.broadcast_to(self._envelope(x, t) * (2.0 - 3.0 * rho) / r0, _shape(x, xi2, xi3, t)).copy()


class IdentityVelocity(VelocityField):
    """v1 = s. Violates the positive-speed condition at the inflow end; kept for diagnostics."""

    NAME = "identity"
    DEFAULTS: Dict[str, float] = {}

    def v1(self, s, x, t):
        return np.broadcast_to(np.asarray(s, dtype=float), _shape(s, x, t)).copy()

    def dv1_ds(self, s, x, t):
        return np.ones(_shape(s, x, t))


# ---------------------------------------------------------------------------
# Interaction entries
# ---------------------------------------------------------------------------

class ZeroInteraction(InteractionFunction):
    NAME = "zero"
    DEFAULTS: Dict[str, float] = {}
    identically_zero = True

    def phi(self, s, x, xi2, xi3, t):
        return np.zeros(_shape(s, x, xi2, xi3, t))


class _SourceBase(InteractionFunction):
    """Shared space-time profile eta(x1) * tau(t)."""

    def _profile(self, x, t):
        eta, deta = bump(x, self.params["x_start"], self.params["x_stop"])
        tau, dtau, d2tau = cubic_ramp(t, self.params["ramp"])
        return eta, deta, tau, dtau, d2tau


class BumpSource(_SourceBase):
    """phi = -a * eta(x1) * tau(t): inflow through the lateral wall."""

    NAME = "bump-source"
    DEFAULTS = {"a": 0.5, "x_start": 1.1, "x_stop": 2.0, "ramp": 0.5}

    def _scaled(self, s, x, xi2, xi3, t, space, time):
        return np.broadcast_to(-self.params["a"] * space * time, _shape(s, x, xi2, xi3, t)).copy()

    def phi(self, s, x, xi2, xi3, t):
        eta, _, tau, _, _ = self._profile(x, t)
        return self._scaled(s, x, xi2, xi3, t, eta, tau)

    def dphi_dx(self, s, x, xi2, xi3, t):
        _, deta, tau, _, _ = self._profile(x, t)
        return self._scaled(s, x, xi2, xi3, t, deta, tau)

    def dphi_dt(self, s, x, xi2, xi3, t):
        eta, _, _, dtau, _ = self._profile(x, t)
        return self._scaled(s, x, xi2, xi3, t, eta, dtau)

    def d2phi_dt2(self, s, x, xi2, xi3, t):
        eta, _, _, _, d2tau = self._profile(x, t)
        return self._scaled(s, x, xi2, xi3, t, eta, d2tau)


class LinearExchange(_SourceBase):
    """phi = eta(x1) * tau(t) * (-a + b*s)."""

    NAME = "linear-exchange"
    DEFAULTS = {"a": 0.5, "b": -0.2, "x_start": 1.1, "x_stop": 2.0, "ramp": 0.5}

    def _affine(self, s):
        return -self.params["a"] + self.params["b"] * np.asarray(s, dtype=float)

    def phi(self, s, x, xi2, xi3, t):
        eta, _, tau, _, _ = self._profile(x, t)
        return np.broadcast_to(eta * tau * self._affine(s), _shape(s, x, xi2, xi3, t)).copy()

    def dphi_ds(self, s, x, xi2, xi3, t):
        eta, _, tau, _, _ = self._profile(x, t)
        return np.broadcast_to(eta * tau * self.params["b"], _shape(s, x, xi2, xi3, t)).copy()

    def dphi_dx(self, s, x, xi2, xi3, t):
        _, deta, tau, _, _ = self._profile(x, t)
        return np.broadcast_to(deta * tau * self._affine(s), _shape(s, x, xi2, xi3, t)).copy()

    def dphi_dt(self, s, x, xi2, xi3, t):
        eta, _, _, dtau, _ = self._profile(x, t)
        return np.broadcast_to(eta * dtau * self._affine(s), _shape(s, x, xi2, xi3, t)).copy()

    def d2phi_dt2(self, s, x, xi2, xi3, t):
        eta, _, _, _, d2tau = self._profile(x, t)
        return np.broadcast_to(eta * d2tau * self._affine(s), _shape(s, x, xi2, xi3, t)).copy()


class RadialRobin(_SourceBase):
    """phi = -tau(t) * [a * eta(x1) * (1 + gamma*rho^2) + a_end * H(x1)], rho = |xi|/r0."""

    NAME = "radial-robin"
    DEFAULTS = {"a": 0.5, "gamma": 0.5, "a_end": 0.2, "x_start": 1.1, "x_stop": 2.0,
                "end_start": 2.0, "end_stop": 3.0, "ramp": 0.5}

    def _configure(self) -> None:
        self.xi_independent = self.params["gamma"] == 0.0

    def _space(self, x, xi2, xi3):
        eta, deta = bump(x, self.params["x_start"], self.params["x_stop"])
        step, dstep = smoothstep(x, self.params["end_start"], self.params["end_stop"])
        rho2 = (np.asarray(xi2) ** 2 + np.asarray(xi3) ** 2) / self.geometry.radius ** 2
        radial = 1.0 + self.params["gamma"] * rho2
        value = self.params["a"] * eta * radial + self.params["a_end"] * step
        slope = self.params["a"] * deta * radial + self.params["a_end"] * dstep
        return value, slope, eta

    def phi(self, s, x, xi2, xi3, t):
        space, _, _ = self._space(x, xi2, xi3)
        tau, _, _ = cubic_ramp(t, self.params["ramp"])
        return np.broadcast_to(-space * tau, _shape(s, x, xi2, xi3, t)).copy()

    def dphi_dx(self, s, x, xi2, xi3, t):
        _, slope, _ = self._space(x, xi2, xi3)
        tau, _, _ = cubic_ramp(t, self.params["ramp"])
        return np.broadcast_to(-slope * tau, _shape(s, x, xi2, xi3, t)).copy()

    def dphi_dt(self, s, x, xi2, xi3, t):
        space, _, _ = self._space(x, xi2, xi3)
        _, dtau, _ = cubic_ramp(t, self.params["ramp"])
        return np.broadcast_to(-space * dtau, _shape(s, x, xi2, xi3, t)).copy()

    def d2phi_dt2(self, s, x, xi2, xi3, t):
        space, _, _ = self._space(x, xi2, xi3)
        _, _, d2tau = cubic_ramp(t, self.params["ramp"])
        return np.broadcast_to(-space * d2tau, _shape(s, x, xi2, xi3, t)).copy()

    def grad_xi(self, s, x, xi2, xi3, t):
        _, _, eta = self._space(x, xi2, xi3)
        tau, _, _ = cubic_ramp(t, self.params["ramp"])
        factor = -self.params["a"] * eta * tau * 2.0 * self.params["gamma"] / self.geometry.radius ** 2
        shape = _shape(s, x, xi2, xi3, t)
        return np.broadcast_to(factor * xi2, shape).copy(), np.broadcast_to(factor * xi3, shape).copy()


class XiLinear(_SourceBase):
    """phi = a * xi2 * eta(x1) * tau(t); odd in the cross-section, so its boundary average vanishes."""

    NAME = "xi-linear"
    DEFAULTS = {"a": 1.0, "x_start": 1.1, "x_stop": 2.0, "ramp": 0.5}
    xi_independent = False

    def phi(self, s, x, xi2, xi3, t):
        eta, _, tau, _, _ = self._profile(x, t)
        return np.broadcast_to(self.params["a"] * xi2 * eta * tau, _shape(s, x, xi2, xi3, t)).copy()

    def dphi_dx(self, s, x, xi2, xi3, t):
        _, deta, tau, _, _ = self._profile(x, t)
        return np.broadcast_to(self.params["a"] * xi2 * deta * tau, _shape(s, x, xi2, xi3, t)).copy()

    def dphi_dt(self, s, x, xi2, xi3, t):
        eta, _, _, dtau, _ = self._profile(x, t)
        return np.broadcast_to(self.params["a"] * xi2 * eta * dtau, _shape(s, x, xi2, xi3, t)).copy()

    def d2phi_dt2(self, s, x, xi2, xi3, t):
        eta, _, _, _, d2tau = self._profile(x, t)
        return np.broadcast_to(self.params["a"] * xi2 * eta * d2tau, _shape(s, x, xi2, xi3, t)).copy()

    def grad_xi(self, s, x, xi2, xi3, t):
        eta, _, tau, _, _ = self._profile(x, t)
        shape = _shape(s, x, xi2, xi3, t)
        return np.broadcast_to(self.params["a"] * eta * tau, shape).copy(), np.zeros(shape)


class ConstantStart(_SourceBase):
    """phi = -a * eta(x1), switched on at t = 0. Breaks the matching conditions."""

    NAME = "constant-start"
    DEFAULTS = {"a": 0.5, "x_start": 1.1, "x_stop": 2.0}

    def phi(self, s, x, xi2, xi3, t):
        eta, _ = bump(x, self.params["x_start"], self.params["x_stop"])
        return np.broadcast_to(-self.params["a"] * eta, _shape(s, x, xi2, xi3, t)).copy()

    def dphi_dx(self, s, x, xi2, xi3, t):
        _, deta = bump(x, self.params["x_start"], self.params["x_stop"])
        return np.broadcast_to(-self.params["a"] * deta, _shape(s, x, xi2, xi3, t)).copy()


# ---------------------------------------------------------------------------
# Boundary entries
# ---------------------------------------------------------------------------

class ZeroBoundary(BoundaryData):
    NAME = "zero"
    DEFAULTS: Dict[str, float] = {}

    def q(self, t):
        return np.zeros(np.shape(t))

    def dq(self, t):
        return np.zeros(np.shape(t))

    def d2q(self, t):
        return np.zeros(np.shape(t))


class CubicRampBoundary(BoundaryData):
    """q = a * (1 - exp(-(t/ramp)^3))."""

    NAME = "cubic-ramp"
    DEFAULTS = {"a": 1.0, "ramp": 0.5}

    def q(self, t):
        return self.params["a"] * cubic_ramp(t, self.params["ramp"])[0]

    def dq(self, t):
        return self.params["a"] * cubic_ramp(t, self.params["ramp"])[1]

    def d2q(self, t):
        return self.params["a"] * cubic_ramp(t, self.params["ramp"])[2]


class QuadraticBoundary(BoundaryData):
    """q = a * t^2; q''(0) != 0."""

    NAME = "quadratic"
    DEFAULTS = {"a": 1.0}

    def q(self, t):
        return self.params["a"] * np.asarray(t, dtype=float) ** 2

    def dq(self, t):
        return 2.0 * self.params["a"] * np.asarray(t, dtype=float)

    def d2q(self, t):
        return np.full(np.shape(t), 2.0 * self.params["a"])


VELOCITY_CATALOG: Dict[str, Type[VelocityField]] = {
    cls.NAME: cls for cls in (ConstantVelocity, SaturatingVelocity, RadialInflowVelocity, IdentityVelocity)
}
INTERACTION_CATALOG: Dict[str, Type[InteractionFunction]] = {
    cls.NAME: cls for cls in (ZeroInteraction, BumpSource, LinearExchange, RadialRobin, XiLinear, ConstantStart)
}
BOUNDARY_CATALOG: Dict[str, Type[BoundaryData]] = {
    cls.NAME: cls for cls in (ZeroBoundary, CubicRampBoundary, QuadraticBoundary)
}


def _build(kind: str, registry: Dict[str, type], ref: CatalogRef, geometry: Geometry):
    entry = registry.get(ref.catalog)
    if entry is None:
        raise ConfigError(f"unknown {kind} catalog entry '{ref.catalog}'",
                          {"key": f"{kind}.catalog", "known": ",".join(sorted(registry))})
    logger.debug(f"Building {kind} entry {ref.catalog} with {ref.params}")
    return entry(geometry, **ref.params)


def build_velocity(ref: CatalogRef, geometry: Geometry) -> VelocityField:
    return _build("velocity", VELOCITY_CATALOG, ref, geometry)


def build_interaction(ref: CatalogRef, geometry: Geometry) -> InteractionFunction:
    return _build("interaction", INTERACTION_CATALOG, ref, geometry)


def build_boundary(ref: CatalogRef, geometry: Geometry) -> BoundaryData:
    return _build("boundary", BOUNDARY_CATALOG, ref, geometry)
