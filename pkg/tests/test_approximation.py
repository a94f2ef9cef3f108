import numpy as np
import pytest

from app.core.errors import ConfigError, DependencyError, NumericError
from app.services.approximation import (ApproximationParts, assemble, check_boundary_fit, cutoff_chi,
                                        sample_axisymmetric)
from app.services.pipeline import build_parts

from conftest import make_config

# the second cell corrector needs h <= 0.05 to keep the w1 solvability residual inside its tolerance
FULL_GRID = {"nx": 80, "nt": 20, "nxi": 8, "modes": 6, "nzeta": 400}


@pytest.fixture(scope="module")
def linear_parts():
    cfg = make_config(grid=FULL_GRID)
    return cfg, build_parts(cfg, "full")


def test_cutoff_values():
    length, delta1 = 4.0, 0.9
    assert cutoff_chi(length - delta1, length, delta1) == 0.0
    assert cutoff_chi(length - 0.75 * delta1, length, delta1) == pytest.approx(0.5)
    assert cutoff_chi(length - delta1 / 2, length, delta1) == pytest.approx(1.0)
    assert cutoff_chi(length, length, delta1) == pytest.approx(1.0)
    assert cutoff_chi(1.0, length, delta1, nu=1) == 0.0
    assert cutoff_chi(length - delta1 / 2, length, delta1, nu=1) == pytest.approx(0.0)


def test_cutoff_is_monotone():
    x = np.linspace(3.0, 4.0, 101)
    assert np.all(np.diff(cutoff_chi(x, 4.0, 0.9)) >= 0.0)


def test_parts_for_the_full_order(linear_parts):
    _, parts = linear_parts
    assert parts.w1 is not None and parts.u1 is not None and parts.u2 is not None
    assert parts.layers.pi2 is not None


@pytest.mark.parametrize("order", ["leading", "first", "full"])
def test_boundary_and_initial_fit(linear_parts, order):
    cfg, parts = linear_parts
    eps = cfg.epsilons[1]
    fit = check_boundary_fit(assemble(cfg, eps, order, parts), cfg, eps)
    assert fit["initial"] < 1e-10
    assert fit["left"] < 1e-10
    assert fit["right"] < 1e-6


def test_leading_order_is_the_limit_away_from_the_right_end(linear_parts):
    cfg, parts = linear_parts
    field = assemble(cfg, cfg.epsilons[0], "leading", parts)
    lim = parts.lim
    x = lim.x[lim.x <= cfg.length - cfg.delta1]
    values = sample_axisymmetric(field, x, np.array([0.0, 0.5 * cfg.epsilons[0]]), float(lim.t[5]))
    np.testing.assert_allclose(values[:, 0], lim.w0[: len(x), 5], atol=1e-12)
    np.testing.assert_allclose(values[:, 1], values[:, 0])


def test_first_order_adds_the_cell_corrector(linear_parts):
    cfg, parts = linear_parts
    eps = cfg.epsilons[0]
    leading = assemble(cfg, eps, "leading", parts)
    first = assemble(cfg, eps, "first", parts)
    x, r, when = np.array([1.55]), np.array([0.0, eps]), float(parts.lim.t[-1])
    difference = sample_axisymmetric(first, x, r, when) - sample_axisymmetric(leading, x, r, when)
    assert np.abs(difference).max() > 0.0
    assert np.abs(difference).max() < 10 * eps


def test_axial_gradient_matches_finite_differences(linear_parts):
    cfg, parts = linear_parts
    field = assemble(cfg, cfg.epsilons[0], "first", parts)
    points = np.array([[0.0, 0.0], [0.05, 0.05]])
    x, h, when = np.array([1.5, 2.5]), 1e-5, 0.5
    grad = field.gradient(x, points, when)
    numeric = (field.evaluate(x + h, points, when) - field.evaluate(x - h, points, when)) / (2 * h)
    assert grad.shape == (2, 2, 3)
    # spline derivative against the finite-difference derivative field on a coarse grid
    assert np.abs(grad[..., 0] - numeric).max() < 0.1 * max(1.0, np.abs(numeric).max())


def test_gradient_outside_the_cylinder(linear_parts):
    cfg, parts = linear_parts
    field = assemble(cfg, cfg.epsilons[0], "leading", parts)
    with pytest.raises(NumericError):
        field.gradient(np.array([cfg.length + 1.0]), np.zeros((1, 2)), 0.5)
    with pytest.raises(NumericError):
        field.gradient(np.array([1.0]), np.array([[1.0, 0.0]]), 0.5)


def test_unknown_epsilon_and_order(linear_parts):
    cfg, parts = linear_parts
    with pytest.raises(ConfigError):
        assemble(cfg, 0.3, "leading", parts)
    with pytest.raises(ConfigError):
        assemble(cfg, cfg.epsilons[0], "second", parts)


def test_intermediate_beta_is_not_assembled(linear_parts):
    _, parts = linear_parts
    cfg = make_config(beta=2.0)
    with pytest.raises(ConfigError):
        assemble(cfg, cfg.epsilons[0], "leading", parts)


def test_missing_parts(linear_parts):
    cfg, parts = linear_parts
    bare = ApproximationParts(mesh=parts.mesh, lim=parts.lim)
    with pytest.raises(DependencyError) as info:
        assemble(cfg, cfg.epsilons[0], "full", bare)
    assert set(info.value.details["missing"].split(",")) == {"layers", "w1", "u1", "u2"}
