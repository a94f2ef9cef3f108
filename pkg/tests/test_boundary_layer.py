import numpy as np
import pytest

from app.core.errors import DecayError
from app.models.scenario_models import CrossSectionSpec
from app.services.boundary_layer import (LayerData, Pi0Term, Pi1TildeTerm, Pi2Term, certify, decay_rate,
                                         pi0_eval, pi1_hat_eval, solve_halfline)
from app.services.cell_solver import neumann_eigenbasis
from app.services.cross_section import build_mesh
from app.services.gridded import TimeAxis

AXIS = TimeAxis(np.linspace(0.0, 1.0, 11))


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(CrossSectionSpec(kind="disk", radius=1.0), 8)


@pytest.fixture(scope="module")
def basis(mesh):
    return neumann_eigenbasis(mesh, 4)


def layer_data(speed=None, dspeed=None, phi0=None, tilde=None):
    t = AXIS.t
    return LayerData(
        axis=AXIS,
        phi0=np.sin(t) if phi0 is None else phi0,
        dphi0=np.cos(t) if phi0 is None else np.zeros_like(t),
        hat_phi1=0.3 * t,
        speed=1.0 + 0.5 * t if speed is None else speed,
        dspeed=np.full_like(t, 0.5) if dspeed is None else dspeed,
        tilde_phi1=tilde,
    )


def test_pi0_closed_form_and_time_blend():
    data = layer_data()
    zeta = np.linspace(0.0, 5.0, 11)
    k = 4
    np.testing.assert_allclose(pi0_eval(zeta, AXIS.t[k], data), np.sin(AXIS.t[k]) * np.exp(-data.speed[k] * zeta))
    halfway = pi0_eval(zeta, 0.45, data)
    expected = 0.5 * (pi0_eval(zeta, AXIS.t[4], data) + pi0_eval(zeta, AXIS.t[5], data))
    np.testing.assert_allclose(halfway, expected)


def test_pi0_cancels_the_right_end_mismatch():
    data = layer_data()
    for k, tk in enumerate(AXIS.t):
        assert float(pi0_eval(0.0, tk, data)) == pytest.approx(data.phi0[k])


def test_pi1_hat_solves_its_layer_equation():
    data = layer_data()
    zeta = np.linspace(0.2, 6.0, 30)
    h = 1e-4
    for k in (0, 3, 7, 10):
        tk, v = AXIS.t[k], data.speed[k]
        first = (pi1_hat_eval(zeta + h, tk, data) - pi1_hat_eval(zeta - h, tk, data)) / (2 * h)
        second = (pi1_hat_eval(zeta + h, tk, data) - 2 * pi1_hat_eval(zeta, tk, data)
                  + pi1_hat_eval(zeta - h, tk, data)) / h ** 2
        forcing = (data.dphi0[k] - data.phi0[k] * data.dspeed[k] * zeta) * np.exp(-v * zeta)
        np.testing.assert_allclose(second + v * first, forcing, atol=1e-6)
        assert float(pi1_hat_eval(0.0, tk, data)) == pytest.approx(data.hat_phi1[k])


def test_halfline_solver_against_closed_form():
    zeta = np.linspace(0.0, 30.0, 3001)
    rhs = np.exp(-2.0 * zeta)[:, None]
    b = 0.7
    solution = solve_halfline(zeta, rhs, 0.0, 1.0, b)[:, 0]
    exact = (b - 1.0 / 3.0) * np.exp(-zeta) + np.exp(-2.0 * zeta) / 3.0
    assert np.abs(solution - exact).max() < 1e-4


def test_halfline_solver_with_convection():
    # X'' + X' - 2X = 0, X(0) = 1: X = exp(-2 zeta)
    zeta = np.linspace(0.0, 20.0, 2001)
    solution = solve_halfline(zeta, np.zeros((len(zeta), 1)), 1.0, 2.0, 1.0)[:, 0]
    np.testing.assert_allclose(solution, np.exp(-2.0 * zeta), atol=1e-12)


def test_decay_rate_of_pi0(mesh):
    data = layer_data(speed=np.full(11, 2.0), dspeed=np.zeros(11))
    fit = decay_rate(Pi0Term(data, mesh), (1.0, 10.0))
    assert not fit.zero
    assert fit.rate == pytest.approx(2.0, rel=1e-8)
    assert fit.residual < 1e-8


def test_zero_term_is_reported_as_zero(mesh):
    data = layer_data(phi0=np.zeros(11))
    fit = certify(Pi0Term(data, mesh), 20.0)
    assert fit.zero
    assert fit.rate is None


def test_growing_term_fails_certification(mesh):
    data = layer_data(speed=np.full(11, -1.0), dspeed=np.zeros(11))
    with pytest.raises(DecayError):
        certify(Pi0Term(data, mesh), 20.0)


def test_pi1_tilde_matches_its_boundary_data(mesh, basis):
    ramp = AXIS.t ** 3
    tilde = np.outer(basis.modes[1] + 0.2 * basis.modes[3], ramp)
    term = Pi1TildeTerm(layer_data(tilde=tilde), basis, mesh)
    for k in (2, 10):
        np.testing.assert_allclose(term.values(0.0, AXIS.t[k])[0], tilde[:, k], atol=1e-10)
    assert term.tail_bound() < 1e-8


def test_pi1_tilde_decays_at_the_first_mode_rate(mesh, basis):
    speed = np.full(11, 1.0)
    tilde = np.outer(basis.modes[1], np.ones(11))
    term = Pi1TildeTerm(layer_data(speed=speed, dspeed=np.zeros(11), tilde=tilde), basis, mesh)
    lam1 = basis.eigenvalues[1]
    expected = 0.5 + np.sqrt(0.25 + lam1)
    assert term.rate == pytest.approx(expected)
    fit = decay_rate(term, (1.0, 8.0))
    assert fit.rate == pytest.approx(expected, rel=1e-6)


def test_pi1_tilde_captures_a_nodal_remainder(mesh, basis):
    bumpy = np.zeros(mesh.n_nodes)
    bumpy[0] = 1.0
    bumpy -= mesh.mean(bumpy)
    tilde = np.outer(bumpy, np.ones(11))
    term = Pi1TildeTerm(layer_data(tilde=tilde), basis, mesh)
    np.testing.assert_allclose(term.values(0.0, 0.5)[0], bumpy, atol=1e-10)
    assert term.tail_bound() > 0.0


def test_pi2_starts_from_its_boundary_data_and_decays(mesh, basis):
    tilde = np.outer(basis.modes[1], AXIS.t ** 2)
    data = layer_data(tilde=tilde)
    pi1 = Pi1TildeTerm(data, basis, mesh)
    pi2 = Pi2Term(data, basis, mesh, pi1, lzeta=30.0, nzeta=600)
    np.testing.assert_allclose(pi2.values(0.0, 0.5)[0], 0.0, atol=1e-12)
    assert np.abs(pi2.values(25.0, 0.5)).max() < 1e-6
    assert np.abs(pi2.values(40.0, 0.5)).max() == 0.0
