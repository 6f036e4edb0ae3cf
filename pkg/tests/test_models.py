import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ersolve.mesh import rectangle_mesh
from ersolve.models import (CallableSlip, CallableViscosity, ConstitutiveViolation, ElectricField,
                            ERSlip, ERViscosity, MuSettings, ValidationBox, eval_field_E,
                            invariant_I, mu_angle, slip_coefficient, validate_constitutive,
                            viscosity)
from ersolve.expressions import Expression

finite = st.floats(-1e3, 1e3, allow_nan=False)
mat = st.lists(finite, min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))


@pytest.mark.parametrize("G, expected", [([[0, 1], [0, 0]], 0.5), ([[1, 0], [0, -1]], 2.0),
                                         ([[0, 0], [0, 0]], 0.0)])
def test_invariant_examples(G, expected):
    assert invariant_I(np.array(G, float)) == pytest.approx(expected, abs=1e-15)


@given(mat, finite)
def test_invariant_objectivity(G, w):
    W = np.array([[0.0, w], [-w, 0.0]])
    ref = invariant_I(G)
    assert ref >= 0
    assert invariant_I(G.T) == pytest.approx(ref, rel=1e-12, abs=1e-9)
    assert invariant_I(G + W) == pytest.approx(ref, rel=1e-9, abs=1e-6)


@pytest.mark.parametrize("u, E, expected", [((1, 0), (2, 0), 1.0), ((0, 3), (5, 0), 0.0),
                                            ((1, 1), (1, 0), 0.5)])
def test_mu_examples(u, E, expected):
    assert mu_angle(np.array(u, float), np.array(E, float)) == pytest.approx(expected, abs=1e-15)


def test_mu_zero_field():
    with pytest.raises(ValueError, match="mu undefined at E=0"):
        mu_angle(np.array([1.0, 0.0]), np.zeros(2))


def test_mu_regularized_at_rest():
    # alpha shifts the direction to (1,1)/sqrt(2): cos^2 = 1/2 against E = (1, 0)
    assert mu_angle(np.zeros(2), np.array([1.0, 0.0]), MuSettings(alpha_reg=0.1)) == pytest.approx(0.5)


def test_mu_range_and_scaling_bulk(rng):
    n = 100_000
    u = rng.normal(size=(n, 2)) * 10 ** rng.uniform(-3, 3, (n, 1))
    E = rng.normal(size=(n, 2))
    alpha = rng.uniform(0, 1)
    m = mu_angle(u, E, MuSettings(alpha_reg=alpha))
    assert np.all((m >= 0) & (m <= 1))
    np.testing.assert_allclose(mu_angle(u, 7.3 * E, MuSettings(alpha_reg=alpha)), m, atol=1e-13)


@given(st.tuples(finite, finite), st.tuples(finite, finite).filter(lambda e: np.hypot(*e) > 1e-3),
       st.floats(0, 10), st.floats(1e-3, 1e3))
def test_mu_properties(u, E, alpha, scale):
    s = MuSettings(alpha_reg=alpha)
    m = mu_angle(np.array(u), np.array(E), s)
    if alpha == 0 and u == (0.0, 0.0):
        return
    assert 0.0 <= m <= 1.0
    assert mu_angle(np.array(u), scale * np.array(E), s) == pytest.approx(m, abs=1e-12)


def test_viscosity_examples():
    v = ERViscosity(psi0=1, k0=1, k1=0, lam=1)
    assert viscosity(v, 0.0, 0.0, 0.0) == pytest.approx((2.0, -0.5))
    assert viscosity(v, 3.0, 0.0, 0.0) == pytest.approx((1.5, -0.0625))
    w = ERViscosity(psi0=1, k0=1, k1=2, k2=1, lam=1)
    phi, _ = w(3.0, 1.0, 1.0)
    assert phi == pytest.approx(1.5)


@pytest.mark.parametrize("kw", [dict(lam=0), dict(k2=1.5), dict(psi0=-1)])
def test_viscosity_rejects(kw):
    with pytest.raises(ValueError):
        ERViscosity(**kw)


def test_slip_examples():
    assert slip_coefficient(ERSlip(c0=1, c1=2, c2=0, f0=1), 0.0, 0.0)[0] == pytest.approx(2.0)
    chi, dchi = ERSlip(c0=1, c1=0, c2=1, s0=1)(0.0, 0.0)
    assert (chi, dchi) == pytest.approx((2.0, -1.0))
    chi, _ = ERSlip(c0=1, c1=2, c2=1, s0=1, f0=1)(1e6, 3.0)
    assert chi == pytest.approx(1 + 1 / 4)


visc_params = st.builds(ERViscosity, psi0=st.floats(0.1, 5), k0=st.floats(0, 5), k1=st.floats(0, 5),
                        k2=st.floats(0, 1), lam=st.floats(0.1, 5))
slip_params = st.builds(ERSlip, c0=st.floats(0.5, 5), c1=st.floats(0, 5), c2=st.floats(0, 4),
                        s0=st.floats(0.1, 5), f0=st.floats(0.1, 5))


@given(visc_params, st.floats(1e-3, 100), st.floats(0, 3), st.floats(0, 1))
def test_viscosity_derivative_fd(v, I, e, mu):
    h = 1e-6 * I
    fd = (v(I + h, e, mu)[0] - v(I - h, e, mu)[0]) / (2 * h)
    d = v(I, e, mu)[1]
    assert fd == pytest.approx(d, rel=1e-6, abs=1e-10)


@given(slip_params, st.floats(-10, 10), st.floats(1e-3, 100))
def test_slip_derivative_fd(m, F, s):
    h = 1e-6 * s
    fd = (m(F, s + h)[0] - m(F, s - h)[0]) / (2 * h)
    assert fd == pytest.approx(m(F, s)[1], rel=1e-6, abs=1e-10)


@given(visc_params, st.floats(0, 1e4), st.floats(0, 3), st.floats(0, 1))
def test_viscosity_monotonicity_closed_form(v, I, e, mu):
    phi, d = v(I, e, mu)
    b = v.k0 + v.k1 * e * e * (1 - v.k2 * mu)
    closed = v.psi0 + b * v.lam * (v.lam + I) ** -1.5
    assert phi + 2 * d * I == pytest.approx(closed, rel=1e-12)
    assert phi + 2 * d * I >= v.psi0 - 1e-12


@given(slip_params, st.floats(-10, 10))
def test_slip_monotonicity_closed_form(m, F):
    s = np.linspace(0, 50 * m.s0, 10_001)
    chi, d = m(F, s)
    sig = 1 / (1 + math.exp(F / m.f0))
    assert np.min(chi + 2 * d * s) >= m.c0 + m.c1 * sig - m.c2 / 8 - 1e-12


def test_slip_monotone_in_traction_and_speed():
    m = ERSlip(c0=1, c1=2, c2=1)
    F = np.linspace(-5, 5, 101)
    assert np.all(np.diff(m(F, 1.0)[0]) <= 0)
    s = np.linspace(0, 5, 101)
    assert np.all(np.diff(m(0.0, s)[0]) <= 0)


def test_validate_viscosity_example():
    b = validate_constitutive(ERViscosity(psi0=1, k0=1, k1=0, lam=1), ERSlip(c0=1, c1=2, c2=0))
    assert b.a1 == pytest.approx(1.0) and b.a3 == pytest.approx(1.0) and b.a2 == pytest.approx(2.0)
    assert b.a4 == pytest.approx(3 ** -1.5, rel=1e-12)
    assert (b.b1, b.b2, b.b3, b.b4) == pytest.approx((1.0, 3.0, 1.0, 0.0))
    assert not b.empirical


def test_validate_rejects_strong_speed_weakening():
    with pytest.raises(ConstitutiveViolation) as info:
        validate_constitutive(ERViscosity(), ERSlip(c0=1, c2=16, s0=1))
    assert info.value.inequality == "slip_monotonicity"
    assert info.value.witness["s"] == pytest.approx(3.0, rel=0.05)
    assert "slip_monotonicity" in str(info.value)


def test_validate_default_er_model():
    b = validate_constitutive(ERViscosity(1, 1, 1, 0.5, 1), ERSlip(1, 1, 2, 1, 1),
                              ValidationBox(e_max=1.0, e_min=1.0))
    assert b.mu1 == pytest.approx(0.75)
    assert b.mu2 == pytest.approx(12.5396, abs=1e-4)


def test_validate_callable_is_empirical():
    v = CallableViscosity(lambda I, e, mu: (1 + 0 * I, 0 * I), depends_on_angle=False, is_constant=True)
    s = CallableSlip(lambda F, s: (1 + 0 * s, 0 * s), depends_on_speed=False)
    b = validate_constitutive(v, s, ValidationBox(I_max=100, s_max=100, F_min=-1, F_max=1))
    assert b.empirical and b.a1 == pytest.approx(1.0) and b.b4 == pytest.approx(0.0)
    bad = CallableViscosity(lambda I, e, mu: (1 - 0.5 * I, -0.5 + 0 * I))
    with pytest.raises(ConstitutiveViolation):
        validate_constitutive(bad, s, ValidationBox(I_max=10, s_max=1, F_min=-1, F_max=1))


def test_field_examples():
    m = rectangle_mesh(4, 4)
    np.testing.assert_allclose(eval_field_E(ElectricField.uniform((0, 1)), [0.3, 0.4]), [0, 1])
    nod = ElectricField.nodal(m, np.tile([2.0, -1.0], (m.n_nodes, 1)))
    np.testing.assert_allclose(eval_field_E(nod, [[0.13, 0.71], [0.9, 0.05]]), [[2, -1], [2, -1]],
                               atol=1e-14)
    ana = ElectricField.analytic(Expression("0"), Expression("x1"), m)
    np.testing.assert_allclose(eval_field_E(ana, [0.5, 0.2]), [0, 0.5])
    with pytest.raises(ValueError, match="outside"):
        eval_field_E(nod, [1.5, 0.5])


def test_nodal_field_is_piecewise_linear():
    m = rectangle_mesh(3, 3)
    vals = np.column_stack([2 * m.nodes[:, 0] - m.nodes[:, 1], m.nodes[:, 0] * 0 + 1])
    E = ElectricField.nodal(m, vals)
    pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
    np.testing.assert_allclose(E.at(pts)[:, 0], 2 * pts[:, 0] - pts[:, 1], atol=1e-13)
