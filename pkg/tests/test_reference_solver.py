import math

import numpy as np
import pytest

from app.core.errors import CFLError, ConfigError
from app.services.reference_solver import (build_reference_grid, flux_balance, graded_axis, manufactured,
                                           mms_self_test, require_axisymmetric, solve_reference)

from conftest import make_config

SQUARE = {"kind": "polygon", "vertices": [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]}


def test_graded_axis_refines_toward_the_right_end():
    nodes = graded_axis(4.0, 40, 1e-3, 1.2)
    assert nodes[0] == 0.0
    assert nodes[-1] == 4.0
    assert np.all(np.diff(nodes) > 0.0)
    assert np.diff(nodes)[-1] == pytest.approx(1e-3)
    assert np.diff(nodes).max() <= 0.1 + 1e-12


def test_graded_axis_without_grading_is_uniform():
    np.testing.assert_allclose(graded_axis(4.0, 40, 1e-3, 1.0), np.linspace(0.0, 4.0, 41))


def test_reference_grid_measures(small_linear):
    grid = build_reference_grid(small_linear, 0.1)
    assert grid.radius == pytest.approx(0.1)
    assert grid.dx.sum() == pytest.approx(small_linear.length)
    assert grid.ring_areas.sum() == pytest.approx(math.pi * 0.01)
    assert grid.h_min == pytest.approx(0.1)
    np.testing.assert_allclose(grid.cross_section_mean(np.ones((3, len(grid.r)))), 1.0)


def test_axisymmetry_check():
    assert require_axisymmetric(make_config()).passed
    assert require_axisymmetric(make_config("axisym-robin")).passed
    odd = require_axisymmetric(make_config(interaction={"catalog": "xi-linear", "params": {}}))
    assert not odd.passed
    assert odd.worst > 0.0
    assert not require_axisymmetric(make_config(cross_section=SQUARE)).passed


def test_non_axisymmetric_data_are_refused():
    with pytest.raises(ConfigError):
        solve_reference(make_config(interaction={"catalog": "xi-linear", "params": {}}), 0.1)
    with pytest.raises(ConfigError):
        solve_reference(make_config(cross_section=SQUARE), 0.1)


def test_zero_data_stay_zero(zero_data):
    sol = solve_reference(zero_data, 0.1)
    assert sol.u.shape == (len(sol.t), len(sol.grid.x), len(sol.grid.r))
    np.testing.assert_array_equal(sol.u, 0.0)
    np.testing.assert_allclose(flux_balance(sol, zero_data, 0.1), 0.0, atol=1e-14)


def test_step_above_the_cfl_limit(small_linear):
    with pytest.raises(CFLError) as info:
        solve_reference(small_linear, 0.1, dt=10.0)
    # h = 0.1, unit speed, CFL number 0.5
    assert info.value.max_dt == pytest.approx(0.05)


def test_step_must_divide_the_snapshot_spacing(small_linear):
    with pytest.raises(ConfigError) as info:
        solve_reference(small_linear, 0.1, dt=0.03)
    assert info.value.details["key"] == "dt"


def test_linear_advection_reference(small_linear):
    sol = solve_reference(small_linear, 0.2)
    assert sol.steps == 2 * small_linear.grid.nt
    assert sol.metadata["substeps"] == 2
    assert np.all(np.isfinite(sol.u))
    np.testing.assert_array_equal(sol.u[:, 0, :], 0.0)
    q = small_linear.boundary.q(sol.t)
    np.testing.assert_allclose(sol.u[:, -1, :], np.repeat(q[:, None], len(sol.grid.r), axis=1))
    assert sol.mean().shape == (len(sol.t), len(sol.grid.x))


def test_manufactured_source_shape(small_linear):
    exact, source = manufactured(small_linear, 0.1)
    x, r = np.linspace(0.0, 4.0, 11), np.linspace(0.0, 0.1, 5)
    assert source(x, r, 0.3).shape == (11, 5)
    np.testing.assert_allclose(exact(np.array([0.0, 4.0]), 0.3), 0.0, atol=1e-15)


@pytest.mark.slow
def test_manufactured_solution_gate(small_linear):
    report = mms_self_test(small_linear)
    assert report.passed, report
    assert report.spatial_errors[0] > report.spatial_errors[-1]


def test_flux_balance_shrinks_with_refinement():
    # quiet ends: zero boundary data and a thin diffusion tail, so the audit sees the lateral inflow only
    residuals = []
    for nt in (10, 20):
        cfg = make_config(boundary={"catalog": "zero", "params": {}},
                          grid={"nx": 4 * nt, "nt": nt, "nxi": 8, "modes": 6},
                          reference={"nx": 4 * nt, "nr": 8, "grading": 1.0})
        sol = solve_reference(cfg, 0.025)
        assert sol.metadata["substeps"] == 2
        residuals.append(flux_balance(sol, cfg, 0.025).max())
    assert residuals[1] > 0.0
    assert residuals[0] / residuals[1] >= 1.8
