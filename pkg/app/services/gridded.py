"""
Uniform (x1, t) grids, fourth-order finite differences and gridded-field evaluation.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.interpolate import make_interp_spline

from ..core.errors import NumericError

_FIRST_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FIRST_EDGE = (
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
)
_SECOND_INTERIOR = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_SECOND_EDGE = (
    np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
    np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0,
)


def _apply(values: np.ndarray, axis: int, interior, edges, odd: bool) -> np.ndarray:
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = f.shape[0]
    width = len(edges[0])
    if n < width + 1:
        raise NumericError("too few grid points for fourth-order differences", {"points": n})
    out = np.empty_like(f)
    out[2:n - 2] = sum(c * f[k:n - 4 + k] for k, c in enumerate(interior))
    for row, stencil in enumerate(edges):
        out[row] = np.tensordot(stencil, f[:width], axes=(0, 0))
        mirrored = np.tensordot(stencil, f[::-1][:width], axes=(0, 0))
        out[n - 1 - row] = -mirrored if odd else mirrored
    return np.moveaxis(out, 0, axis)


def diff1(values: np.ndarray, step: float, axis: int = 0) -> np.ndarray:
    """First derivative: 4th-order central stencil, 4th-order one-sided rows at the edges."""
    return _apply(values, axis, _FIRST_INTERIOR, _FIRST_EDGE, odd=True) / step


def at_rest(values: np.ndarray, axis: int) -> np.ndarray:
    """Levels along `axis` up to which the field has been identically zero."""
    f = np.moveaxis(np.asarray(values), axis, 0)
    quiet = np.all(f.reshape(f.shape[0], -1) == 0.0, axis=1)
    return np.cumprod(quiet).astype(bool)


def diff1_from_rest(values: np.ndarray, step: float, axis: int) -> np.ndarray:
    """:func:`diff1` with the derivative zeroed on the levels where the field is still at rest."""
    out = diff1(values, step, axis=axis)
    np.moveaxis(out, axis, 0)[at_rest(values, axis)] = 0.0
    return out


def diff2(values: np.ndarray, step: float, axis: int = 0) -> np.ndarray:
    """Second derivative with the same stencil layout as :func:`diff1`."""
    return _apply(values, axis, _SECOND_INTERIOR, _SECOND_EDGE, odd=False) / step ** 2


@dataclass(frozen=True)
class TimeAxis:
    """Uniform time levels; off-grid times blend the two neighbouring levels linearly."""

    t: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def end(self) -> float:
        return float(self.t[-1])

    def locate(self, time: float) -> Tuple[int, float]:
        if time < -1e-12 or time > self.end + 1e-12:
            raise NumericError("time outside the gridded horizon", {"t": time, "horizon": self.end})
        position = min(max(time / self.dt, 0.0), len(self.t) - 1.0)
        k = int(round(position))
        if abs(position - k) < 1e-9:
            return k, 0.0
        k = int(np.floor(position))
        return k, position - k

    def blend(self, values: np.ndarray, time: float) -> np.ndarray:
        """Slice of ``values`` (time on the last axis) at ``time``."""
        k, theta = self.locate(time)
        if theta == 0.0:
            return values[..., k]
        return (1.0 - theta) * values[..., k] + theta * values[..., k + 1]


@dataclass(frozen=True)
class GriddedField:
    """Field sampled on x (first axis) x ... x t (last axis) with cubic-spline evaluation in x."""

    x: np.ndarray
    axis: TimeAxis
    values: np.ndarray

    def slice_at(self, time: float) -> np.ndarray:
        return self.axis.blend(self.values, time)

    def along_x(self, data: np.ndarray, xq, nu: int = 0) -> np.ndarray:
        """Evaluate a time slice ``data`` (x first) or its x-derivative at ``xq``."""
        spline = make_interp_spline(self.x, data, k=3, axis=0)
        if nu:
            spline = spline.derivative(nu)
        return spline(np.asarray(xq, dtype=float))

    def at(self, xq, time: float, nu: int = 0) -> np.ndarray:
        return self.along_x(self.slice_at(time), xq, nu)


def uniform_grid(length: float, count: int) -> np.ndarray:
    return np.linspace(0.0, length, count + 1)
