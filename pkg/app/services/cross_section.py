"""
Cross-section triangulation and piecewise-linear finite elements on it.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from matplotlib.path import Path as PolygonPath
from scipy import sparse
from scipy.spatial import Delaunay

from ..core.errors import ConfigError
from ..models.scenario_models import CrossSectionSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CrossSectionMesh:
    """
    Triangulated cross-section with P1 operators.

    ``area_weights`` are lumped nodal masses and ``edge_weights`` boundary quadrature weights;
    both are scaled so that they sum to the exact measures ``measure`` and ``perimeter``.
    For a disk the boundary quadrature points are edge midpoints projected onto the circle.
    """

    kind: str
    nodes: np.ndarray
    triangles: np.ndarray
    areas: np.ndarray
    basis_gradients: np.ndarray
    boundary_edges: np.ndarray
    quad_points: np.ndarray
    normals: np.ndarray
    edge_weights: np.ndarray
    area_weights: np.ndarray
    measure: float
    perimeter: float
    triangulated_area: float
    h: float
    stiffness: sparse.csr_matrix = field(repr=False)
    mass: sparse.csr_matrix = field(repr=False)
    _delaunay: Delaunay = field(repr=False)
    _simplex_to_triangle: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def xi2(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def xi3(self) -> np.ndarray:
        return self.nodes[:, 1]

    def mean(self, values: np.ndarray) -> np.ndarray:
        """Cross-section mean over the last axis."""
        return np.asarray(values) @ self.area_weights / self.measure

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """L2 inner product through the (scaled) consistent mass matrix, over the last axis."""
        return np.einsum("...i,...i->...", np.asarray(u), (self.mass @ np.asarray(v).T).T)

    def boundary_trace(self, values: np.ndarray) -> np.ndarray:
        """Nodal field evaluated at the boundary quadrature points (edge average)."""
        values = np.asarray(values)
        a, b = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        return 0.5 * (values[..., a] + values[..., b])

    def boundary_integral(self, values_at_quad: np.ndarray) -> np.ndarray:
        return np.asarray(values_at_quad) @ self.edge_weights

    def boundary_load(self, values_at_quad: np.ndarray) -> np.ndarray:
        """Load vector of a boundary flux given at the quadrature points (midpoint rule)."""
        values_at_quad = np.asarray(values_at_quad)
        contrib = 0.5 * values_at_quad * self.edge_weights
        return (_scatter_last(contrib, self.boundary_edges[:, 0], self.n_nodes)
                + _scatter_last(contrib, self.boundary_edges[:, 1], self.n_nodes))

    def flux_load(self, g2: np.ndarray, g3: np.ndarray) -> np.ndarray:
        """Load vector of a vector field given at nodes: integral of G . grad(psi_i)."""
        tri = self.triangles
        g2e = np.asarray(g2)[tri].mean(axis=1)
        g3e = np.asarray(g3)[tri].mean(axis=1)
        local = self.areas[:, None] * (g2e[:, None] * self.basis_gradients[:, :, 0]
                                       + g3e[:, None] * self.basis_gradients[:, :, 1])
        load = np.zeros(self.n_nodes)
        np.add.at(load, tri.ravel(), local.ravel())
        return load

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        local = values[..., self.triangles]
        return np.einsum("...ek,ekd->...ed", local, self.basis_gradients)

    def recovered_gradient(self, values: np.ndarray) -> np.ndarray:
        """Nodal gradients by area-weighted averaging of element gradients; shape (..., N, 2)."""
        grads = np.moveaxis(self.element_gradients(values) * self.areas[:, None], -2, 0)
        out = np.zeros((self.n_nodes,) + grads.shape[1:])
        for k in range(3):
            np.add.at(out, self.triangles[:, k], grads)
        out = np.moveaxis(out, 0, -2)
        node_area = np.zeros(self.n_nodes)
        for k in range(3):
            np.add.at(node_area, self.triangles[:, k], self.areas)
        return out / node_area[:, None]

    def locate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vertex indices (P, 3) and barycentric weights (P, 3) of the triangles containing ``points``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        simplex = self._delaunay.find_simplex(points)
        missing = (simplex < 0) | (self._simplex_to_triangle[np.maximum(simplex, 0)] < 0)
        if np.any(missing):
            retry = self._delaunay.find_simplex(points[missing] * (1.0 - 1e-9))
            simplex[missing] = retry
            missing = (simplex < 0) | (self._simplex_to_triangle[np.maximum(simplex, 0)] < 0)
        vertices = self._delaunay.simplices[np.maximum(simplex, 0)].copy()
        transform = self._delaunay.transform[np.maximum(simplex, 0)]
        b = np.einsum("pij,pj->pi", transform[:, :2, :], points - transform[:, 2, :])
        weights = np.column_stack([b, 1.0 - b.sum(axis=1)])
        if np.any(missing):
            # outside the triangulation: fall back to the nearest node
            nearest = np.argmin(((points[missing, None, :] - self.nodes[None, :, :]) ** 2).sum(-1), axis=1)
            vertices[missing] = nearest[:, None]
            weights[missing] = np.array([1.0, 0.0, 0.0])
        return vertices, weights

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """P1 interpolation of nodal ``values`` (..., N) at ``points`` (P, 2) -> (..., P)."""
        vertices, weights = self.locate(points)
        values = np.asarray(values)
        return np.einsum("...pk,pk->...p", values[..., vertices], weights)


def _disk_points(radius: float, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    h = 2.0 * radius / resolution
    rings = max(2, int(math.ceil(radius / h)))
    points = [np.zeros((1, 2))]
    boundary = None
    for k in range(1, rings + 1):
        r = k * radius / rings
        count = max(6, int(round(2.0 * math.pi * r / h)))
        angles = 2.0 * math.pi * np.arange(count) / count
        ring = np.column_stack([r * np.cos(angles), r * np.sin(angles)])
        if k == rings:
            boundary = ring
        else:
            points.append(ring)
    return np.vstack(points), boundary


def _segment_distance(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    ab = b - a
    rel = points[:, None, :] - a[None, :, :]
    t = np.clip((rel * ab[None]).sum(-1) / (ab ** 2).sum(-1)[None], 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.sqrt(((points[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)


def _polygon_points(vertices: np.ndarray, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    diameter = float(np.max(np.linalg.norm(vertices[:, None] - vertices[None], axis=-1)))
    h = diameter / resolution
    boundary = []
    for a, b in zip(vertices, np.roll(vertices, -1, axis=0)):
        pieces = max(1, int(math.ceil(np.linalg.norm(b - a) / h)))
        s = np.arange(pieces)[:, None] / pieces
        boundary.append(a + s * (b - a))
    boundary = np.vstack(boundary)
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    gx = np.arange(lo[0] + h / 2, hi[0], h)
    gy = np.arange(lo[1] + h / 2, hi[1], h)
    lattice = np.array(np.meshgrid(gx, gy, indexing="ij")).reshape(2, -1).T
    inside = PolygonPath(vertices).contains_points(lattice)
    lattice = lattice[inside]
    if len(lattice):
        lattice = lattice[_segment_distance(lattice, vertices) > 0.5 * h]
    return lattice, boundary


def _p1_gradients(nodes: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p = nodes[triangles]
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    grads = np.empty(triangles.shape + (2,))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, j] - y[:, k]) / area2
        grads[:, i, 1] = (x[:, k] - x[:, j]) / area2
    return 0.5 * area2, grads


def build_mesh(spec: CrossSectionSpec, resolution: int) -> CrossSectionMesh:
    """
    Quasi-uniform triangulation of the cross-section with max edge about diameter/resolution.

    Args:
        spec: disk or polygon description
        resolution: number of mesh cells across the diameter

    Returns:
        CrossSectionMesh with assembled stiffness and mass matrices
    """
    if spec.kind == "disk":
        interior, boundary = _disk_points(float(spec.radius), resolution)
        exact_measure = math.pi * spec.radius ** 2
        exact_perimeter = 2.0 * math.pi * spec.radius
        polygon = None
    else:
        polygon = np.asarray(spec.vertices, dtype=float)
        if _signed_area_abs(polygon) <= 0.0:
            raise ConfigError("degenerate polygon cross-section", {"key": "cross_section.vertices"})
        interior, boundary = _polygon_points(polygon, resolution)
        exact_measure = _signed_area_abs(polygon)
        exact_perimeter = float(np.linalg.norm(np.roll(polygon, -1, axis=0) - polygon, axis=1).sum())

    nodes = np.vstack([boundary, interior]) if len(interior) else boundary
    delaunay = Delaunay(nodes)
    simplices = delaunay.simplices
    areas, _ = _p1_gradients(nodes, simplices)
    scale = (2.0 * exact_perimeter / resolution) ** 2
    keep = np.abs(areas) > 1e-12 * scale
    if polygon is not None:
        centroids = nodes[simplices].mean(axis=1)
        keep &= PolygonPath(polygon).contains_points(centroids)
    simplex_to_triangle = np.full(len(simplices), -1)
    simplex_to_triangle[keep] = np.arange(int(keep.sum()))

    triangles = simplices[keep].copy()
    signed, _ = _p1_gradients(nodes, triangles)
    flip = signed < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    areas, grads = _p1_gradients(nodes, triangles)
    if np.any(areas <= 0):
        raise ConfigError("degenerate triangle in cross-section mesh", {"key": "cross_section"})

    edges = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    opposite = np.concatenate([triangles[:, 2], triangles[:, 0], triangles[:, 1]])
    unique, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = np.asarray(inverse).ravel()
    once = counts[inverse] == 1
    boundary_edges = edges[once]
    third = nodes[opposite[once]]
    a, b = nodes[boundary_edges[:, 0]], nodes[boundary_edges[:, 1]]
    tangent = b - a
    lengths = np.linalg.norm(tangent, axis=1)
    normals = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / lengths[:, None]
    inward = ((third - a) * normals).sum(axis=1) > 0
    normals[inward] *= -1.0

    degree = np.bincount(boundary_edges.ravel(), minlength=len(nodes))
    if np.any((degree != 0) & (degree != 2)):
        raise ConfigError("cross-section boundary is not a closed loop", {"key": "cross_section"})

    midpoints = 0.5 * (a + b)
    if spec.kind == "disk":
        radial = np.linalg.norm(midpoints, axis=1)
        quad_points = midpoints * (spec.radius / radial)[:, None]
        normals = midpoints / radial[:, None]
    else:
        quad_points = midpoints
    edge_weights = lengths * (exact_perimeter / lengths.sum())

    triangulated_area = float(areas.sum())
    if spec.kind == "polygon" and abs(triangulated_area - exact_measure) > 1e-10 * exact_measure:
        raise ConfigError("polygon triangulation does not cover the cross-section",
                          {"key": "cross_section.vertices"})
    mass_scale = exact_measure / triangulated_area

    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    k_local = areas[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    m_local = (areas[:, None, None] / 12.0) * (np.ones((3, 3)) + np.eye(3))[None] * mass_scale
    n = len(nodes)
    stiffness = sparse.coo_matrix((k_local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mass = sparse.coo_matrix((m_local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    area_weights = np.asarray(mass.sum(axis=1)).ravel()

    all_edges = np.linalg.norm(nodes[unique[:, 0]] - nodes[unique[:, 1]], axis=1)
    mesh = CrossSectionMesh(
        kind=spec.kind,
        nodes=nodes,
        triangles=triangles,
        areas=areas,
        basis_gradients=grads,
        boundary_edges=boundary_edges,
        quad_points=quad_points,
        normals=normals,
        edge_weights=edge_weights,
        area_weights=area_weights,
        measure=float(exact_measure),
        perimeter=float(exact_perimeter),
        triangulated_area=triangulated_area,
        h=float(all_edges.max()),
        stiffness=stiffness,
        mass=mass,
        _delaunay=delaunay,
        _simplex_to_triangle=simplex_to_triangle,
    )
    logger.info(f"Built {spec.kind} mesh: {n} nodes, {len(triangles)} triangles, h={mesh.h:.4f}, "
                f"area={triangulated_area:.6f} (exact {exact_measure:.6f})")
    return mesh


def _signed_area_abs(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return abs(0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def _scatter_last(values: np.ndarray, index: np.ndarray, size: int) -> np.ndarray:
    """Sum ``values[..., e]`` into slot ``index[e]`` of a new trailing axis of length ``size``."""
    moved = np.moveaxis(values, -1, 0)
    out = np.zeros((size,) + moved.shape[1:])
    np.add.at(out, index, moved)
    return np.moveaxis(out, 0, -1)
