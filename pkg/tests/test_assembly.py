import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from ersolve.assembly import (FREE, PINNED, SLIP, DiscreteSystem, FrozenCoefficients, VectorSource,
                              assemble_div, assemble_load, assemble_slip, assemble_viscous,
                              build_dof_map, z_norm)
from ersolve.mesh import make_mesh, rectangle_mesh
from ersolve.models import ElectricField, ERSlip, ERViscosity, MuSettings
from ersolve.solver import certified_bounds
from ersolve.verify import default_er_system

CONST_VISC = ERViscosity(psi0=1.0, k0=0.0, k1=0.0)
CONST_SLIP = ERSlip(c0=1.0, c1=0.0, c2=0.0)
BOTTOM_ONLY = {"bottom": "S1", "top": "S2", "left": "S2", "right": "S2"}


def _system(m, visc=CONST_VISC, slip=CONST_SLIP, **kw):
    return DiscreteSystem(m, visc, slip, **kw)


# ---------------------------------------------------------------- dof map

def test_dof_counts_square(square2):
    d = build_dof_map(square2)
    assert d.n_velocity_nodes == 9 and d.n_pressure == 4
    # bottom edge: two corners and one midpoint lose their normal component
    assert d.n_free == 15 and d.n_constrained == 3
    assert list(d.status).count(SLIP) == 3 and PINNED not in d.status


def test_all_slip_square_pins_corners():
    m = make_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]],
                  [[0, 1], [1, 2], [2, 3], [3, 0]], ["S1"] * 4, check=False)
    d = build_dof_map(m)
    assert np.all(d.status[:4] == PINNED)
    assert d.n_free == 4 * 1 + 2  # four edge midpoints slide, the centre is free


def test_prolongation_orthonormal_and_tangential(channel8):
    d = build_dof_map(channel8)
    TtT = (d.T.T @ d.T).toarray()
    np.testing.assert_allclose(TtT, np.eye(d.n_free), atol=1e-15)
    rng = np.random.default_rng(0)
    u = d.to_full(rng.normal(size=d.n_free))
    on = d.status == SLIP
    assert np.abs(np.einsum("ij,ij->i", u[on], d.node_normal[on])).max() <= 1e-15
    np.testing.assert_allclose(d.to_free(u), d.to_free(d.to_full(d.to_free(u))))


# ---------------------------------------------------------------- z norm

def test_z_norm_examples():
    sysm = _system(rectangle_mesh(8, 8))
    assert z_norm(sysm, sysm.interpolate(lambda x, y: (1 + 0 * x, 0 * y))) == pytest.approx(np.sqrt(2))
    assert z_norm(sysm, sysm.interpolate(lambda x, y: (y, 0 * x))) == pytest.approx(np.sqrt(1.5))
    assert z_norm(sysm, np.zeros(sysm.n_free)) == 0.0


# ---------------------------------------------------------------- viscous

def _lagrange_basis(coords):
    """Quadratic Lagrange basis through the six given points (sympy)."""
    x, y = sp.symbols("x y")
    mons = [1, x, y, x * x, x * y, y * y]
    V = sp.Matrix([[sp.sympify(mm).subs({x: cx, y: cy}) for mm in mons] for cx, cy in coords])
    C = V.inv()
    return x, y, [sum(C[j, i] * mons[j] for j in range(6)) for i in range(6)]


def test_viscous_matches_symbolic_element_matrix():
    eta = sp.Rational(3, 2)
    m = make_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]],
                  ["S1", "S2", "S2"])
    sysm = _system(m, ERViscosity(psi0=float(eta), k0=0.0, k1=0.0))
    coords = [tuple(sp.Rational(c).limit_denominator(4) for c in row) for row in sysm.dofs.vspace.coords]
    x, y, phis = _lagrange_basis(coords)
    K = sp.zeros(12, 12)
    fields = []
    for a, ph in enumerate(phis):
        fields += [(ph, 0), (0, ph)]
    def eps(v):
        return [[sp.diff(v[0], x), (sp.diff(v[0], y) + sp.diff(v[1], x)) / 2],
                [(sp.diff(v[0], y) + sp.diff(v[1], x)) / 2, sp.diff(v[1], y)]]
    E = [eps(v) for v in fields]
    for i in range(12):
        for j in range(i, 12):
            integrand = 2 * eta * sum(E[i][a][b] * E[j][a][b] for a in range(2) for b in range(2))
            K[i, j] = K[j, i] = sp.integrate(sp.integrate(integrand, (y, 0, 1 - x)), (x, 0, 1))
    Kn = np.array(K.tolist(), dtype=float)
    _, J = sysm.viscous(np.zeros(sysm.n_free), np.zeros(sysm.e_q.shape))
    T = sysm.dofs.T.toarray()
    np.testing.assert_allclose(J.toarray(), T.T @ Kn @ T, atol=1e-13)
    # hand value: vertex (0,0), x-component: 2 eta (int phi_x^2 + int phi_y^2 / 2) = 2 eta (1/2 + 1/4)
    assert Kn[0, 0] == pytest.approx(1.5 * float(eta))


@pytest.fixture(scope="module")
def er_system():
    return default_er_system(rectangle_mesh(4, 4))


def _random_frozen(sysm, rng):
    return FrozenCoefficients(rng.uniform(0, 1, sysm.e_q.shape),
                              rng.uniform(-3, 3, sysm.s1.points.shape[:2]))


def test_jacobian_at_rest_is_linear_stokes(er_system):
    mu = np.full(er_system.e_q.shape, 0.3)
    _, J0 = assemble_viscous(er_system, np.zeros(er_system.n_free), mu)
    phi0, _ = er_system.viscosity(0.0, 1.0, 0.3)
    lin = _system(er_system.mesh, ERViscosity(psi0=float(phi0), k0=0.0, k1=0.0))
    rng = np.random.default_rng(3)
    _, Jl = lin.viscous(rng.normal(size=lin.n_free), mu)
    np.testing.assert_allclose(J0.toarray(), Jl.toarray(), atol=1e-12)


def test_jacobians_fd_and_symmetric(er_system, rng):
    fr = _random_frozen(er_system, rng)
    u = rng.normal(size=er_system.n_free)
    r, J = er_system.operator(u, fr)
    assert abs(J - J.T).max() <= 1e-14 * abs(J).max()
    d = rng.normal(size=er_system.n_free)
    h = 1e-6
    fd = (er_system.operator(u + h * d, fr, jacobian=False)[0]
          - er_system.operator(u - h * d, fr, jacobian=False)[0]) / (2 * h)
    assert np.abs(fd - J @ d).max() <= 1e-5 * max(1.0, np.abs(J @ d).max())
    r2, _ = er_system.operator(u, fr, jacobian=False)
    np.testing.assert_allclose(r2, r, atol=1e-12)


def test_viscous_zero_velocity_zero_residual(er_system):
    r, _ = er_system.viscous(np.zeros(er_system.n_free), np.zeros(er_system.e_q.shape))
    assert not r.any()


# ---------------------------------------------------------------- slip

def test_slip_constant_chi_edge(square2):
    b, w = 2.5, 0.8
    sysm = _system(square2, slip=ERSlip(c0=b, c1=0.0, c2=0.0))
    u = sysm.interpolate(lambda x, y: (w + 0 * x, 0 * y))
    h = sysm.interpolate(lambda x, y: (1 + 0 * x, 0 * y))
    r, _ = assemble_slip(sysm, u, np.zeros(sysm.s1.points.shape[:2]))
    assert r @ h == pytest.approx(b * 1.0 * w, rel=1e-14)


def test_slip_mollified_variant_is_linear(er_system, rng):
    F = rng.uniform(-1, 1, er_system.s1.points.shape[:2])
    speed = rng.uniform(0, 2, F.shape)
    u, v = rng.normal(size=(2, er_system.n_free))
    ru, J = er_system.slip_terms(u, F, speed)
    rv, _ = er_system.slip_terms(v, F, speed)
    np.testing.assert_allclose(ru - rv, J @ (u - v), atol=1e-12)


# ---------------------------------------------------------------- divergence

def test_divergence_operator():
    sysm = _system(rectangle_mesh(6, 6, sides=BOTTOM_ONLY))
    B = assemble_div(sysm)
    free = sysm.interpolate(lambda x, y: (x * x, -2 * x * y))
    assert np.abs(B @ free).max() <= 1e-14
    radial = sysm.interpolate(lambda x, y: (x, y))
    np.testing.assert_allclose(B @ radial, 2 * sysm.pressure_mass @ np.ones(sysm.n_pressure),
                               atol=1e-14)
    assert (B @ radial).sum() == pytest.approx(2.0)
    # divergence theorem: int div u = flux through the boundary (here 1.5 - 0.5)
    u = sysm.interpolate(lambda x, y: (x * x + y, 0 * x))
    assert (B @ u).sum() == pytest.approx(1.0, abs=1e-13)
    assert sysm.div_l2(free) <= 1e-14


def test_admissible_rigid_motions_in_kernel(channel8):
    sysm = _system(channel8)
    xy = sysm.dofs.vspace.coords
    for f in (lambda x, y: (1 + 0 * x, 0 * y), lambda x, y: (0 * x, 1 + 0 * y),
              lambda x, y: (-y, x)):
        nodal = np.column_stack(f(xy[:, 0], xy[:, 1]))
        u = sysm.interpolate(f)
        if not np.allclose(sysm.to_full(u), nodal, atol=1e-15):
            continue  # violates the slip constraint, so not in the admissible space
        assert np.abs(sysm.B @ u).max() <= 1e-14
        checked = True
    assert checked


# ---------------------------------------------------------------- load

def test_body_force_load():
    m = rectangle_mesh(5, 5, sides={"left": "S1", "right": "S1", "top": "S2", "bottom": "S2"})
    sysm = _system(m)
    f = assemble_load(sysm, body_force=(0.0, -1.0))
    h = sysm.interpolate(lambda x, y: (0 * x, 1 + 0 * y))
    assert f @ h == pytest.approx(-1.0, rel=1e-14)


def test_traction_edge_pattern(square2):
    sysm = _system(square2)
    trac = VectorSource(func=lambda x, y, n1, n2: ((n2 > 0.5) * 1.0, 0 * x), uses_normal=True)
    full = sysm.dofs.to_full(assemble_load(sysm, traction=trac))
    top = sysm.dofs.vspace.edge_dofs[2]
    np.testing.assert_allclose(full[top, 0], [1 / 6, 2 / 3, 1 / 6], atol=1e-15)
    assert abs(full[:, 0].sum() - 1.0) <= 1e-15 and not full[:, 1].any()


def test_nodal_and_callable_sources_agree(channel8):
    sysm = _system(channel8)
    nod = np.column_stack([channel8.nodes[:, 0], 2 - channel8.nodes[:, 1]])
    a = assemble_load(sysm, body_force=VectorSource(nodal=nod))
    b = assemble_load(sysm, body_force=lambda x, y: (x, 2 - y))
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_frame_velocity_rejected(channel8):
    with pytest.raises(NotImplementedError):
        _system(channel8, mu=MuSettings(frame_velocity=(1.0, 0.0)))


# ---------------------------------------------------------------- structural properties

@pytest.fixture(scope="module")
def er_bounds(er_system):
    return certified_bounds(er_system)


@given(st.integers(0, 2 ** 32 - 1))
def test_strong_monotonicity(er_system, er_bounds, seed):
    rng = np.random.default_rng(seed)
    fr = _random_frozen(er_system, rng)
    u, w = rng.normal(size=(2, er_system.n_free)) * 10 ** rng.uniform(-2, 1, 2)[:, None]
    ru, _ = er_system.operator(u, fr, jacobian=False)
    rw, _ = er_system.operator(w, fr, jacobian=False)
    d = u - w
    assert (ru - rw) @ d >= er_bounds.mu1 * z_norm(er_system, d) ** 2 * (1 - 1e-10)


@given(st.integers(0, 2 ** 32 - 1))
def test_lipschitz_in_dual_norm(er_system, er_bounds, seed):
    rng = np.random.default_rng(seed)
    fr = _random_frozen(er_system, rng)
    u, w = rng.normal(size=(2, er_system.n_free)) * 10 ** rng.uniform(-2, 1, 2)[:, None]
    ru, _ = er_system.operator(u, fr, jacobian=False)
    rw, _ = er_system.operator(w, fr, jacobian=False)
    assert er_system.dual_norm(ru - rw) <= er_bounds.mu2 * z_norm(er_system, u - w) * (1 + 1e-10)


def test_nodal_field_uses_same_mesh(channel8):
    vals = np.tile([0.0, 1.0], (channel8.n_nodes, 1))
    a = default_er_system(channel8)
    b = DiscreteSystem(channel8, a.viscosity, a.slip, ElectricField.nodal(channel8, vals),
                       a.mu_settings)
    np.testing.assert_allclose(a.E_q, b.E_q, atol=1e-15)
