import math

import numpy as np
import pytest

from app.models.scenario_models import CrossSectionSpec
from app.services.cross_section import build_mesh

DISK = CrossSectionSpec(kind="disk", radius=1.0)
SQUARE = CrossSectionSpec(kind="polygon", vertices=[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])


@pytest.fixture(scope="module")
def disk():
    return build_mesh(DISK, 16)


def test_disk_measures_are_exact(disk):
    assert disk.measure == pytest.approx(math.pi)
    assert disk.perimeter == pytest.approx(2 * math.pi)
    assert disk.area_weights.sum() == pytest.approx(math.pi)
    assert disk.edge_weights.sum() == pytest.approx(2 * math.pi)
    assert disk.triangulated_area < math.pi


def test_disk_quadrature_lies_on_the_circle(disk):
    np.testing.assert_allclose(np.hypot(*disk.quad_points.T), 1.0)
    np.testing.assert_allclose((disk.normals * disk.quad_points).sum(axis=1), 1.0)


def test_square_mesh():
    mesh = build_mesh(SQUARE, 10)
    assert mesh.measure == pytest.approx(4.0)
    assert mesh.perimeter == pytest.approx(8.0)
    assert mesh.triangulated_area == pytest.approx(4.0)


def test_stiffness_annihilates_constants(disk):
    np.testing.assert_allclose(disk.stiffness @ np.ones(disk.n_nodes), 0.0, atol=1e-10)


def test_mean_and_interpolation_of_linear_field(disk):
    values = 2.0 + disk.xi2
    assert disk.mean(values) == pytest.approx(2.0, abs=1e-10)
    points = np.array([[0.1, 0.2], [-0.3, 0.4], [0.0, -0.5]])
    np.testing.assert_allclose(disk.interpolate(values, points), 2.0 + points[:, 0], atol=1e-12)


def test_recovered_gradient_of_linear_field(disk):
    grads = disk.recovered_gradient(3.0 * disk.xi2 - disk.xi3)
    np.testing.assert_allclose(grads[:, 0], 3.0, atol=1e-10)
    np.testing.assert_allclose(grads[:, 1], -1.0, atol=1e-10)


def test_locate_falls_back_to_nearest_node(disk):
    vertices, weights = disk.locate(np.array([[2.0, 0.0]]))
    nearest = np.argmin(np.hypot(disk.xi2 - 2.0, disk.xi3))
    assert vertices[0, 0] == nearest
    np.testing.assert_allclose(weights[0], [1.0, 0.0, 0.0])
