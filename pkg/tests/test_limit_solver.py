import numpy as np
import pytest
from scipy.integrate import quad

from app.core.errors import CharacteristicError
from app.services.catalog import bump, cubic_ramp
from app.services.cell_solver import build_u1, section_mesh
from app.services.limit_solver import (limit_residual, solve_cauchy_w1, solve_limit, solve_limit_problem, solve_w1,
                                       trace_characteristic)

from conftest import make_config

FINE_GRID = {"nx": 200, "nt": 50, "nxi": 8, "modes": 6}


def _eta(y):
    return float(bump(y, 1.1, 2.0)[0])


def _tau(t):
    return float(cubic_ramp(t, 0.5)[0])


def exact_w0(x, t):
    """Linear advection with speed 1 and forcing eta(y) tau(t) along y = x - t + sigma."""
    start = max(0.0, t - x)
    if t <= start:
        return 0.0
    breaks = [p for p in (1.1 - x + t, 2.0 - x + t) if start < p < t]
    value, _ = quad(lambda s: _eta(x - t + s) * _tau(s), start, t, points=breaks or None,
                    epsabs=1e-13, limit=200)
    return value


@pytest.fixture(scope="module")
def fine_linear():
    cfg = make_config(grid=FINE_GRID)
    mesh = section_mesh(cfg)
    return cfg, mesh, solve_limit_problem(cfg, mesh)


def test_linear_advection_matches_closed_form(fine_linear):
    _, _, lim = fine_linear
    assert lim.mode == "characteristics"
    for i in range(0, len(lim.x), 10):
        for k in range(0, len(lim.t), 10):
            assert lim.w0[i, k] == pytest.approx(exact_w0(lim.x[i], lim.t[k]), abs=1e-5)


def test_linear_advection_reaches_the_horizon(fine_linear):
    cfg, _, lim = fine_linear
    assert lim.T1 == pytest.approx(cfg.horizon)
    np.testing.assert_array_equal(lim.w0[:, 0], 0.0)
    np.testing.assert_array_equal(lim.w0[0, :], 0.0)


def test_fan_spacing_is_preserved_by_constant_speed(fine_linear):
    _, _, lim = fine_linear
    np.testing.assert_allclose(lim.fan.min_spacing_ratio[1:], 1.0, atol=1e-8)
    np.testing.assert_allclose(lim.fan.dividing(), lim.t, atol=1e-12)


def test_limit_residual_is_small(fine_linear):
    cfg, mesh, lim = fine_linear
    assert limit_residual(cfg, lim, mesh) < 1e-2


def test_trace_characteristic_moves_with_unit_speed(small_linear):
    curve = trace_characteristic(0.5, 0.0, small_linear, 0.05)
    assert curve.origin == "initial"
    np.testing.assert_allclose(curve.y, 0.5 + curve.t, atol=1e-12)
    assert curve.t[-1] == pytest.approx(small_linear.horizon)
    np.testing.assert_array_equal(curve.w[curve.y <= 1.1], 0.0)


def test_trace_characteristic_rejects_interior_launch(small_linear):
    with pytest.raises(CharacteristicError):
        trace_characteristic(1.0, 0.5, small_linear, 0.05)


def test_crossing_detection(small_linear):
    mesh = section_mesh(small_linear)
    with pytest.raises(CharacteristicError):
        solve_limit(small_linear, mesh, crossing_tol=1.5)


def test_high_peclet_limit_is_a_pointwise_ode():
    cfg = make_config("high-peclet-beta3", grid=FINE_GRID)
    mesh = section_mesh(cfg)
    lim = solve_limit_problem(cfg, mesh)
    assert lim.mode == "cauchy"
    assert lim.fan is None
    for i in range(0, len(lim.x), 20):
        for k in range(0, len(lim.t), 10):
            integral, _ = quad(_tau, 0.0, lim.t[k], epsabs=1e-13)
            assert lim.w0[i, k] == pytest.approx(_eta(lim.x[i]) * integral, abs=1e-7)


def test_first_regular_corrector(small_linear):
    mesh = section_mesh(small_linear)
    lim = solve_limit_problem(small_linear, mesh)
    u1 = build_u1(small_linear, lim, mesh)
    w1 = solve_w1(small_linear, lim, u1, mesh)
    assert w1.shape == lim.w0.shape
    assert np.all(np.isfinite(w1))
    np.testing.assert_array_equal(w1[:, 0], 0.0)
    np.testing.assert_array_equal(w1[0, :], 0.0)
    scale = np.abs(w1).max()
    assert scale > 0.0
    assert np.abs(w1[lim.x <= small_linear.delta1]).max() < 1e-2 * scale


def _limit_on(nt):
    cfg = make_config(grid={"nx": 4 * nt, "nt": nt, "nxi": 8, "modes": 6})
    mesh = section_mesh(cfg)
    return cfg, mesh, solve_limit_problem(cfg, mesh)


@pytest.fixture(scope="module")
def refinement_ladder():
    return [_limit_on(nt) for nt in (10, 20, 40)]


def test_limit_solution_converges_under_refinement(refinement_ladder):
    # nodes of the coarsest grid are shared by every level
    sample_x = np.linspace(1.0, 3.0, 11)
    sample_t = np.array([0.5, 0.8, 1.0])
    exact = np.array([[exact_w0(x, t) for t in sample_t] for x in sample_x])
    sizes, errors = [], []
    for _, _, lim in refinement_ladder:
        i = np.searchsorted(lim.x, sample_x - 1e-9)
        k = np.searchsorted(lim.t, sample_t - 1e-9)
        errors.append(np.abs(lim.w0[np.ix_(i, k)] - exact).max())
        sizes.append(lim.x[1] - lim.x[0])
    slope = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    assert slope >= 2.5


def test_limit_residual_converges_under_refinement(refinement_ladder):
    sizes = [lim.x[1] - lim.x[0] for _, _, lim in refinement_ladder]
    residuals = [limit_residual(cfg, lim, mesh) for cfg, mesh, lim in refinement_ladder]
    slope = np.polyfit(np.log(sizes), np.log(residuals), 1)[0]
    assert slope >= 1.5


def test_limit_time_derivative_vanishes_at_the_start(fine_linear):
    _, _, lim = fine_linear
    np.testing.assert_array_equal(lim.w0_t[:, 0], 0.0)


def test_high_peclet_corrector_integrates_the_axial_flux():
    # w1_t = -d_x w0 with w0 = eta(x) * int tau, so w1 = -eta'(x) * int_0^t (t - s) tau(s) ds
    cfg = make_config("high-peclet-beta3", grid=FINE_GRID)
    mesh = section_mesh(cfg)
    lim = solve_limit_problem(cfg, mesh)
    u1 = build_u1(cfg, lim, mesh)
    w1 = solve_cauchy_w1(cfg, lim, u1, mesh)
    np.testing.assert_array_equal(w1, solve_w1(cfg, lim, u1, mesh))
    np.testing.assert_array_equal(w1[:, 0], 0.0)
    scale = np.abs(w1).max()
    assert scale > 0.0
    for i in range(0, len(lim.x), 10):
        for k in range(0, len(lim.t), 10):
            memory, _ = quad(lambda s: (lim.t[k] - s) * _tau(s), 0.0, lim.t[k], epsabs=1e-13)
            expected = -float(bump(lim.x[i], 1.1, 2.0)[1]) * memory
            assert w1[i, k] == pytest.approx(expected, abs=2e-3 * scale)
