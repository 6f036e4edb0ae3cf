import math

import numpy as np
import pytest
from scipy import integrate

from ersolve.fem import ScalarSpace
from ersolve.mesh import make_mesh, rectangle_mesh
from ersolve.models import ElectricField, ERViscosity, MuSettings
from ersolve.mollify import (KernelUnderresolved, MollifierKernel, default_radius, kernel_weight,
                             mollify_nodal_field, regularized_normal_traction)


def _jittered(n, seed=0):
    m = rectangle_mesh(n, n)
    rng = np.random.default_rng(seed)
    nodes = m.nodes.copy()
    inner = (nodes.min(axis=1) > 0) & (nodes.max(axis=1) < 1)
    nodes[inner] += rng.uniform(-0.25, 0.25, (inner.sum(), 2)) / n
    return make_mesh(nodes, m.triangles, m.boundary_edges, m.edge_tags)


def test_kernel_values():
    k = MollifierKernel(0.3)
    C = k.normalization
    assert kernel_weight(k, 0.3) == 0.0
    assert kernel_weight(k, 0.0) == pytest.approx(C * math.exp(-1))
    assert kernel_weight(k, 0.3 / math.sqrt(2)) == pytest.approx(C * math.exp(-2))
    mass, _ = integrate.quad(lambda r: 2 * math.pi * r * k(r), 0, 0.3)
    assert mass == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(ValueError):
        MollifierKernel(0.0)


def test_constants_preserved():
    m = _jittered(12)
    f = np.full(ScalarSpace(m, 2).n_dofs, 3.7)
    np.testing.assert_allclose(mollify_nodal_field(m, f, MollifierKernel(0.2)), 3.7, atol=1e-12)


def test_linearity_and_max_principle(rng):
    m = _jittered(10, 1)
    k = MollifierKernel(0.25)
    f, g = rng.normal(size=(2, m.n_nodes))
    Pf, Pg = mollify_nodal_field(m, f, k), mollify_nodal_field(m, g, k)
    np.testing.assert_allclose(mollify_nodal_field(m, 2.5 * f - 0.7 * g, k), 2.5 * Pf - 0.7 * Pg,
                               atol=1e-13)
    # the smoothed value averages the P1 interpolant, which attains its extremes at nodes
    assert Pf.min() >= f.min() - 1e-13 and Pf.max() <= f.max() + 1e-13


def _convolution_oracle(x, a, f, n=64):
    """Continuous convolution at x by tensor Gauss quadrature in polar coordinates."""
    k = MollifierKernel(a)
    r, wr = np.polynomial.legendre.leggauss(n)
    r, wr = 0.5 * a * (r + 1), 0.5 * a * wr
    th = np.linspace(0, 2 * np.pi, 2 * n, endpoint=False)
    R, T = np.meshgrid(r, th, indexing="ij")
    W = (wr[:, None] * R * k(R)) * (2 * np.pi / len(th))
    y1, y2 = x[0] + R * np.cos(T), x[1] + R * np.sin(T)
    return float((W * f(y1, y2)).sum() / W.sum())


def test_linear_field_interior_matches_convolution():
    m = _jittered(32, 2)
    a = 0.2
    c = ScalarSpace(m, 1).coords
    Pf = mollify_nodal_field(m, c[:, 0], MollifierKernel(a))
    far = np.flatnonzero((c.min(axis=1) > a) & (c.max(axis=1) < 1 - a))
    assert len(far) > 50
    oracle = np.array([_convolution_oracle(c[i], a, lambda y1, y2: y1) for i in far])
    np.testing.assert_allclose(oracle, c[far, 0], atol=1e-13)
    np.testing.assert_allclose(Pf[far], oracle, atol=1e-4)


def test_quadratic_defect_scales_with_radius_squared():
    # for f = |x|^2 the convolution shifts f by m2 * a^2 with m2 the kernel's second moment
    m = rectangle_mesh(64, 64)
    c = ScalarSpace(m, 1).coords
    f = (c ** 2).sum(axis=1)
    num, _ = integrate.quad(lambda t: t ** 3 * math.exp(-1 / (1 - t * t)), 0, 1)
    den, _ = integrate.quad(lambda t: t * math.exp(-1 / (1 - t * t)), 0, 1)
    m2 = num / den
    radii = np.array([0.2, 0.1, 0.05])
    errs = []
    for a in radii:
        Pf = mollify_nodal_field(m, f, MollifierKernel(a))
        far = (c.min(axis=1) > a) & (c.max(axis=1) < 1 - a)
        errs.append(np.abs(Pf - f)[far].max())
    assert errs[0] == pytest.approx(m2 * radii[0] ** 2, rel=0.05)
    slope = np.polyfit(np.log(radii), np.log(errs), 1)[0]
    assert slope > 1.8


def test_underresolved_warns_and_falls_back():
    m = rectangle_mesh(4, 4)
    f = np.arange(m.n_nodes, dtype=float)
    with pytest.warns(KernelUnderresolved, match="underresolved"):
        Pf = mollify_nodal_field(m, f, MollifierKernel(0.02))
    np.testing.assert_array_equal(Pf, f)


def test_default_radius():
    assert default_radius(rectangle_mesh(10, 10)) == pytest.approx(0.2)


# ---------------------------------------------------------------- traction

ETA = 1.7
CONST = ERViscosity(psi0=ETA, k0=0.0, k1=0.0)


def _traction(m, ufun, p, visc=CONST, efield=None):
    xy = ScalarSpace(m, 2).coords
    u = np.column_stack(ufun(xy[:, 0], xy[:, 1]))
    return regularized_normal_traction(p, u, visc, efield, MuSettings(alpha_reg=1e-2),
                                       MollifierKernel(0.25), m)


@pytest.fixture(scope="module")
def wall_mesh():
    return rectangle_mesh(8, 8, sides={"bottom": "S1", "top": "S2", "left": "S2", "right": "S2"})


def test_traction_pure_pressure(wall_mesh):
    tr = _traction(wall_mesh, lambda x, y: (0 * x, 0 * y), np.full(wall_mesh.n_nodes, 2.5))
    np.testing.assert_allclose(tr.values, -2.5, atol=1e-12)
    assert not tr.underresolved.any()


def test_traction_shear_vanishes(wall_mesh):
    tr = _traction(wall_mesh, lambda x, y: (y, 0 * x), np.zeros(wall_mesh.n_nodes))
    np.testing.assert_allclose(tr.values, 0.0, atol=1e-12)


def test_traction_extension(wall_mesh):
    tr = _traction(wall_mesh, lambda x, y: (x, -y), np.zeros(wall_mesh.n_nodes))
    np.testing.assert_allclose(tr.values, -2 * ETA, atol=1e-12)


def test_traction_rotation_invariant(wall_mesh, rng):
    p = rng.normal(size=wall_mesh.n_nodes)
    visc = ERViscosity(psi0=1.0, k0=1.0, k1=1.0, k2=0.0, lam=1.0)
    E = ElectricField.uniform((0.0, 1.0))
    base = _traction(wall_mesh, lambda x, y: (np.sin(x) * y, x * x - y), p, visc, E)
    rot = _traction(wall_mesh, lambda x, y: (np.sin(x) * y - 0.8 * y, x * x - y + 0.8 * x), p, visc, E)
    np.testing.assert_allclose(rot.values, base.values, atol=1e-12)
