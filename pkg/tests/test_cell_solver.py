import numpy as np
import pytest
from scipy.special import jnp_zeros

from app.core.config import settings
from app.core.errors import CompatibilityError, NumericError
from app.models.scenario_models import CrossSectionSpec
from app.services.cell_solver import (NeumannSolver, build_u1, build_u2, corrector_residual, neumann_eigenbasis,
                                      reduce_interaction, section_mesh, solve_neumann)
from app.services.cross_section import build_mesh
from app.services.limit_solver import solve_limit_problem, solve_w1

from conftest import SMALL_GRID, make_config

DISK = CrossSectionSpec(kind="disk", radius=1.0)
# h = 0.05 keeps the w1 solvability residual well inside its tolerance
REFINED_GRID = {"nx": 80, "nt": 20, "nxi": 8, "modes": 6, "nzeta": 400}


@pytest.fixture(scope="module")
def disk():
    return build_mesh(DISK, 16)


def test_neumann_problem_with_known_solution(disk):
    # Lap u = 2, d_nu u = 1 on the unit disk: u = r^2/2 - 1/4
    u, defect = NeumannSolver(disk).solve(2.0, 1.0)
    exact = 0.5 * (disk.xi2 ** 2 + disk.xi3 ** 2) - 0.25
    assert abs(defect) < 1e-10
    assert disk.mean(u) == pytest.approx(0.0, abs=1e-12)
    assert np.abs(u - exact).max() < 2e-2


def test_zero_data_gives_zero_solution(disk):
    np.testing.assert_array_equal(solve_neumann(disk, 0.0, 0.0), np.zeros(disk.n_nodes))


def test_incompatible_data_are_refused(disk):
    with pytest.raises(CompatibilityError) as info:
        NeumannSolver(disk).solve(1.0, 0.0, where={"x1": "2.0"})
    assert info.value.defect == pytest.approx(np.pi)
    assert info.value.details["x1"] == "2.0"


def test_first_eigenvalue_of_the_unit_disk():
    mesh = build_mesh(DISK, 32)
    basis = neumann_eigenbasis(mesh, 4)
    exact = jnp_zeros(1, 1)[0] ** 2
    assert basis.eigenvalues[0] == 0.0
    assert abs(basis.eigenvalues[1] - exact) / exact < 0.02
    assert basis.eigenvalues[2] == pytest.approx(basis.eigenvalues[1], rel=1e-2)


def test_eigenbasis_is_mass_orthonormal(disk):
    basis = neumann_eigenbasis(disk, 6)
    gram = basis.modes @ (disk.mass @ basis.modes.T)
    np.testing.assert_allclose(gram, np.eye(7), atol=1e-8)
    assert np.all(np.diff(basis.eigenvalues) >= -1e-10)


def test_eigenbasis_projection_recovers_a_mode(disk):
    basis = neumann_eigenbasis(disk, 6)
    coeffs = basis.project(disk, basis.modes[3])
    expected = np.zeros(7)
    expected[3] = 1.0
    np.testing.assert_allclose(coeffs, expected, atol=1e-8)


def test_eigenbasis_needs_modes(disk):
    with pytest.raises(NumericError):
        neumann_eigenbasis(disk, 0)


def test_reduced_interaction_of_a_uniform_source():
    cfg = make_config()
    mesh = section_mesh(cfg)
    reduced = reduce_interaction(0.0, 1.55, 1.0, cfg, mesh)
    assert float(reduced) == pytest.approx(-(1.0 - np.exp(-8.0)))


def test_reduced_interaction_averages_over_the_wall():
    cfg = make_config("axisym-robin")
    mesh = section_mesh(cfg)
    reduced = reduce_interaction(np.array([0.0]), np.array([1.55]), np.array([1.0]), cfg, mesh)
    wall = cfg.interaction.phi(0.0, 1.55, 1.0, 0.0, 1.0)
    np.testing.assert_allclose(reduced, 2.0 * wall, rtol=1e-10)


def test_first_cell_corrector(small_linear):
    mesh = section_mesh(small_linear)
    lim = solve_limit_problem(small_linear, mesh)
    u1 = build_u1(small_linear, lim, mesh)
    assert u1.values.shape == (len(lim.x), mesh.n_nodes, len(lim.t))
    assert u1.max_mean_defect(mesh) < 1e-10
    np.testing.assert_allclose(u1.values[lim.x <= small_linear.delta1], 0.0, atol=1e-14)
    np.testing.assert_allclose(u1.values[:, :, 0], 0.0, atol=1e-14)
    assert np.abs(u1.values).max() > 0.0


def test_neumann_solution_converges_at_second_order():
    # u = xi2^2 has Lap u = 2 and d_nu u = 2 xi2 nu2
    errors, sizes = [], []
    for n in (16, 32, 64):
        mesh = build_mesh(DISK, n)
        g = 2.0 * mesh.quad_points[:, 0] * mesh.normals[:, 0]
        u = solve_neumann(mesh, 2.0, g)
        exact = mesh.xi2 ** 2 - mesh.mean(mesh.xi2 ** 2)
        error = u - exact
        errors.append(np.sqrt(mesh.inner(error, error)))
        sizes.append(2.0 / n)
    slope = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    assert slope >= 1.8


def _corrector_inputs(grid):
    cfg = make_config(grid=grid)
    mesh = section_mesh(cfg)
    lim = solve_limit_problem(cfg, mesh)
    u1 = build_u1(cfg, lim, mesh)
    return cfg, mesh, lim, u1, solve_w1(cfg, lim, u1, mesh)


@pytest.fixture(scope="module")
def refined_inputs():
    return _corrector_inputs(REFINED_GRID)


def test_second_cell_corrector(refined_inputs):
    cfg, mesh, lim, u1, w1 = refined_inputs
    u2 = build_u2(cfg, lim, w1, u1, mesh)
    assert u2.values.shape == (len(lim.x), mesh.n_nodes, len(lim.t))
    assert u2.dt is None
    assert u2.max_mean_defect(mesh) < 1e-8
    np.testing.assert_array_equal(u2.values[:, :, 0], 0.0)
    scale = np.abs(u2.values).max()
    assert scale > 0.0
    assert np.abs(u2.values[lim.x <= cfg.delta1]).max() < 1e-2 * scale
    # the projected-out defect is the grid residual of the w1 equation
    _, residual, _ = corrector_residual(cfg, lim, w1, u1, mesh)
    np.testing.assert_allclose(u2.defects, mesh.measure * residual, rtol=1e-8,
                               atol=1e-10 * max(1.0, np.abs(residual).max()))


def test_first_cell_corrector_starts_at_rest(refined_inputs):
    _, _, _, u1, _ = refined_inputs
    np.testing.assert_array_equal(u1.dt[:, :, 0], 0.0)
    assert np.abs(u1.dt).max() > 0.0


def test_perturbed_first_corrector_is_refused(refined_inputs):
    cfg, mesh, lim, u1, w1 = refined_inputs
    perturbed = w1 + 5.0 * np.sin(3.0 * lim.x)[:, None] * lim.t[None, :]
    with pytest.raises(CompatibilityError) as info:
        build_u2(cfg, lim, perturbed, u1, mesh)
    assert {"x1", "t", "relative"} <= set(info.value.details)
    assert float(info.value.details["relative"]) > settings.W1_DEFECT_TOL


def test_solvability_residual_shrinks_with_the_grid(refined_inputs):
    ratios = []
    for cfg, mesh, lim, u1, w1 in (_corrector_inputs(SMALL_GRID), refined_inputs):
        _, residual, scale = corrector_residual(cfg, lim, w1, u1, mesh)
        assert scale > 0.0
        ratios.append(np.abs(residual).max() / scale)
    assert ratios[1] < 0.5 * ratios[0]
