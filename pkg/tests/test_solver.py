import numpy as np
import pytest

from ersolve.assembly import DiscreteSystem
from ersolve.mesh import make_mesh, rectangle_mesh
from ersolve.models import ERSlip, ERViscosity
from ersolve.solver import (SINGULAR_MIXED, SolverConfig, frozen_is_constant, outer_fixed_point,
                            penalty_continuation, solve, solve_mixed, solve_penalty)
from ersolve.verify import default_er_system

LINEAR = (ERViscosity(psi0=1.0, k0=0.0, k1=0.0), ERSlip(c0=1.0, c1=0.0, c2=0.0))
# nonlinear in the strain invariant and slip speed, but nothing to freeze
FREEZE_FREE = (ERViscosity(psi0=1.0, k0=1.0, k1=0.0, lam=0.5), ERSlip(c0=1.0, c1=0.0, c2=2.0))


@pytest.fixture(scope="module")
def er8():
    return default_er_system(rectangle_mesh(8, 8))


@pytest.fixture(scope="module")
def er8_mixed(er8):
    return solve_mixed(er8, SolverConfig())


@pytest.mark.parametrize("method", ["mixed", "penalty"])
def test_zero_load_zero_solution(method):
    sysm = default_er_system(rectangle_mesh(4, 4), body_force=(0.0, 0.0))
    fields, rep = solve(sysm, SolverConfig(method=method))
    assert rep.converged and rep.outer_iterations == 1 and rep.inner_iterations == [1]
    assert not fields.velocity.any() and not fields.pressure.any()


@pytest.mark.parametrize("method", ["mixed", "penalty"])
def test_freeze_free_model_single_outer_iteration(method):
    sysm = DiscreteSystem(rectangle_mesh(6, 6), *FREEZE_FREE, body_force=(1.0, 0.5))
    assert frozen_is_constant(sysm)
    _, rep = solve(sysm, SolverConfig(method=method, alpha=1e-4))
    assert rep.converged and rep.outer_iterations == 1
    assert rep.achieved["newton_relative_residual"] <= 1e-10
    assert rep.inner_iterations[0] > 1  # genuinely nonlinear inner problem


def test_penalty_residual_within_tolerance():
    sysm = DiscreteSystem(rectangle_mesh(6, 6), *FREEZE_FREE, body_force=(1.0, 0.5))
    alpha = 1e-3
    fields, rep = solve_penalty(sysm, SolverConfig(method="penalty", alpha=alpha))
    u = fields.u_free
    # eliminated form: A(u) + alpha^-1 B^T Mp^-1 B u = f
    r, _ = sysm.operator(u, sysm.zero_frozen(), jacobian=False)
    pen = sysm.B.T @ sysm._mass_lu().solve(sysm.B @ u) / alpha
    assert np.abs(r + pen - sysm.load).max() <= 1e-10 * np.linalg.norm(sysm.load)
    np.testing.assert_allclose(fields.pressure, sysm.pressure_from_divergence(u, alpha), atol=1e-9)


def test_default_er_converges_with_contraction(er8_mixed):
    fields, rep = er8_mixed
    assert rep.converged
    assert rep.outer_iterations > 1
    assert 0 < rep.contraction_ratio < 1
    assert rep.normal_velocity_max <= 1e-12
    assert rep.constraint_l2 <= 1e-10 * rep.z_norm
    assert rep.a_priori["holds"]
    assert np.all(np.isfinite(fields.velocity)) and np.all(np.isfinite(fields.pressure))


def test_inner_residual_histories_decrease(er8_mixed):
    _, rep = er8_mixed
    assert not rep.damping_flagged
    for hist in rep.residual_history:
        assert all(b < a for a, b in zip(hist, hist[1:]))


def test_half_damping_converges_to_same_solution(er8, er8_mixed):
    fields, rep = solve_mixed(er8, SolverConfig(damping=0.5))
    assert rep.converged
    assert rep.outer_iterations > er8_mixed[1].outer_iterations
    diff = er8.z_norm(fields.u_free - er8_mixed[0].u_free)
    assert diff <= 1e-6 * er8_mixed[1].z_norm


def test_mollified_velocity_variant_converges(er8):
    _, rep = solve_mixed(er8, SolverConfig(slip_variant="mollified-velocity"))
    assert rep.converged


def test_continuation_decreasing_and_warm_start_helps(er8, er8_mixed):
    cfg = SolverConfig(method="penalty")
    sched = [1e-2, 1e-3, 1e-4]
    warm = penalty_continuation(er8, sched, cfg, reference=er8_mixed[0])
    cold = penalty_continuation(er8, sched, cfg, warm=False)
    div = [r.div_l2 for _, _, r in warm]
    dist = [r.achieved["distance_to_reference"] for _, _, r in warm]
    assert all(r.converged for _, _, r in warm + cold)
    assert div[0] > div[1] > div[2]
    assert dist[0] > dist[1] > dist[2]
    assert sum(warm[1][2].inner_iterations) < sum(cold[1][2].inner_iterations)


def test_singular_saddle_is_reported():
    m = rectangle_mesh(4, 4)
    closed = make_mesh(m.nodes, m.triangles, m.boundary_edges, ["S1"] * len(m.edge_tags), check=False)
    sysm = DiscreteSystem(closed, *LINEAR, body_force=(1.0, 0.5))
    _, rep = solve_mixed(sysm, SolverConfig())
    assert not rep.converged and rep.message == SINGULAR_MIXED


def test_equal_order_pair_is_reported_singular():
    sysm = DiscreteSystem(rectangle_mesh(4, 4), *LINEAR, body_force=(1.0, 0.5), velocity_degree=1)
    _, rep = solve_mixed(sysm, SolverConfig())
    assert not rep.converged and "inf-sup" in rep.message


def test_outer_limit_reports_ratio(er8):
    _, rep = outer_fixed_point(er8, SolverConfig(max_outer=2))
    assert not rep.converged
    assert "not converged" in rep.message and "contraction ratio" in rep.message


def test_report_is_json_ready(er8_mixed):
    import json
    d = er8_mixed[1].as_dict()
    assert json.loads(json.dumps(d))["converged"] is True


@pytest.mark.parametrize("kw", [dict(method="newton"), dict(tol_fp=0.0), dict(alpha=-1.0),
                                dict(alpha_schedule=(1e-3, 1e-2)), dict(damping=0.0),
                                dict(damping=1.5), dict(max_outer=0), dict(slip_variant="x")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_wrong_method_guard(er8):
    with pytest.raises(ValueError):
        solve_penalty(er8, SolverConfig(method="mixed"))
    with pytest.raises(ValueError):
        penalty_continuation(er8, [1e-3, 1e-2])


def test_penalty_tiny_alpha_matches_mixed_on_channel():
    from ersolve.verify import penalty_mixed_consistency
    c = penalty_mixed_consistency(16, 1e-8)
    assert c["converged"] and c["relative"] <= 1e-6
