import math

import numpy as np
import pytest

from conftest import CE, make_params
from replica_reweight.eos import (
    OrderParams,
    ProblemParams,
    class_moments,
    close_order,
    energy,
    eos_residual,
    eos_rhs,
    solve_eos,
    weighted_field_loss,
)
from replica_reweight.losses import LossSpec
from replica_reweight.quadrature import build_quadrature

SMOOTH = LossSpec("smoothed_zero_one", 200.0)
ZERO_ONE = LossSpec("zero_one")


def assert_structural(sol, tol=1e-8):
    o = sol.order
    assert abs(o.q_tilde**2 - (o.m_tilde**2 + o.chi_tilde)) <= tol * o.q_tilde**2
    assert abs(o.m - o.m_tilde / o.q_tilde) <= tol
    assert abs(o.chi - 1.0 / o.q_tilde) <= tol
    assert abs(o.m) <= 1.0 and o.chi > 0 and o.chi_tilde >= 0


@pytest.mark.parametrize("loss", [CE, SMOOTH, ZERO_ONE], ids=lambda l: l.tag)
def test_symmetric_solution_structure(loss):
    sol = solve_eos(make_params(loss=loss))
    assert sol.converged and sol.residual <= 1e-9
    assert_structural(sol)


def test_symmetric_class_contributions_equal():
    p = make_params()
    (ev_p, ev2_p, eg_p), (ev_m, ev2_m, eg_m) = class_moments(p, 0.7, 0.5)
    assert ev_p == pytest.approx(ev_m, rel=1e-14)
    assert ev2_p == pytest.approx(ev2_m, rel=1e-14)
    assert eg_p == pytest.approx(eg_m, rel=1e-14)


def test_unweighted_class_contributes_nothing():
    p = make_params(s_plus=0.0, r_plus=0.3)
    (ev, ev2, eg), other = class_moments(p, 0.5, 1.0)
    assert ev == 0.0 and ev2 == 0.0 and eg == 0.0
    assert other[0] > 0


def test_rhs_self_consistent_at_fixed_point():
    p = make_params(r_plus=0.2)
    sol = solve_eos(p, tol=1e-12)
    mt, ct = eos_rhs(p, sol.m, sol.chi)
    q = math.sqrt(mt * mt + ct)
    assert max(abs(mt / q - sol.m), abs(1 / q - sol.chi)) <= 1e-8
    assert eos_residual(p, sol.order) <= 1e-8


@pytest.mark.parametrize("loss", [CE, SMOOTH], ids=lambda l: l.tag)
def test_fixed_point_is_stationary_point_of_energy(loss):
    # with the conjugates frozen, d u / d m and d u / d chi must vanish at the saddle
    p = make_params(r_plus=0.3, s_plus=0.4, b=0.2, sigma_plus=0.8, sigma_minus=0.5, loss=loss)
    sol = solve_eos(p, tol=1e-12)
    o = sol.order
    h = 1e-5

    def u(dm=0.0, dchi=0.0):
        return energy(p, OrderParams(o.m + dm, o.chi + dchi, o.m_tilde, o.chi_tilde, o.q_tilde))

    du_dm = (u(dm=h) - u(dm=-h)) / (2 * h)
    du_dchi = (u(dchi=h) - u(dchi=-h)) / (2 * h)
    assert abs(du_dm) <= 1e-6 * max(1.0, abs(o.m_tilde))
    assert abs(du_dchi) <= 1e-6 * max(1.0, abs(o.chi_tilde))


@pytest.mark.parametrize("b", [0.3, 0.9])
def test_bias_reflection_symmetry(b):
    p = make_params()
    up, down = solve_eos(p.replace(b=b)), solve_eos(p.replace(b=-b))
    assert up.m == pytest.approx(down.m, abs=1e-8)
    assert up.energy == pytest.approx(down.energy, abs=1e-8)


@pytest.mark.parametrize("loss", [CE, SMOOTH, ZERO_ONE], ids=lambda l: l.tag)
def test_class_swap_invariance(loss):
    p = make_params(r_plus=0.3, s_plus=0.2, sigma_plus=1.0, sigma_minus=0.5, b=0.4, loss=loss)
    a, c = solve_eos(p, tol=1e-12), solve_eos(p.swapped(), tol=1e-12)
    assert a.m == pytest.approx(c.m, abs=1e-8)
    assert a.chi == pytest.approx(c.chi, abs=1e-8)
    assert a.energy == pytest.approx(c.energy, abs=1e-8)


@pytest.mark.parametrize("loss", [CE, SMOOTH, ZERO_ONE], ids=lambda l: l.tag)
def test_energy_forms_agree(loss):
    p = make_params(r_plus=0.2, s_plus=0.3, loss=loss)
    sol = solve_eos(p, tol=1e-12)
    o = sol.order
    head = -0.5 * o.q_tilde + 0.5 * o.chi_tilde * o.chi + o.m_tilde * o.m - 0.5 * (o.m_tilde**2 + o.chi_tilde) / o.q_tilde
    # at the saddle chi = 1/Q and m_t^2 + chi_t = Q^2, so the head collapses to m_t m - Q/2 + chi_t chi/2
    collapsed = o.m_tilde * o.m - 0.5 * o.q_tilde + 0.5 * o.chi_tilde * o.chi - 0.5 * o.q_tilde
    moments = class_moments(p, o.m, o.chi)
    tail = p.alpha * sum(r * eg for (_, r, _, _), (_, _, eg) in zip(p.classes(), moments))
    assert head == pytest.approx(collapsed, abs=1e-10)
    assert sol.energy == pytest.approx(head - tail, abs=1e-12)
    assert sol.energy == pytest.approx(weighted_field_loss(p, o), abs=1e-8)


def test_energy_nonnegative():
    for p in (make_params(r_plus=0.95, s_plus=0.95), make_params(loss=SMOOTH), make_params(loss=ZERO_ONE)):
        assert solve_eos(p).energy >= 0.0


@pytest.mark.parametrize("loss", [CE, SMOOTH], ids=lambda l: l.tag)
def test_residual_stable_under_order_doubling(loss):
    p = make_params(r_plus=0.2, s_plus=0.3, loss=loss)
    sol = solve_eos(p)
    assert eos_residual(p, sol.order, build_quadrature(200)) <= 1e-5


def test_hinge_energy_resolved_at_kinks():
    # a global Gauss-Hermite rule misses the two kinks of v(z) and drifts at O(1/order)
    p = make_params(r_plus=0.2, s_plus=0.4, loss=LossSpec("hinge"))
    a, b = solve_eos(p, tol=1e-12), solve_eos(p, tol=1e-12, quad=build_quadrature(400))
    assert abs(a.energy - b.energy) <= 1e-10
    assert a.energy == pytest.approx(weighted_field_loss(p, a.order), rel=1e-10)


def test_zero_one_approached_by_smoothing():
    p = make_params(r_plus=0.2)
    exact = solve_eos(p.replace(loss=ZERO_ONE)).m
    ms = [solve_eos(p.replace(loss=LossSpec("smoothed_zero_one", g))).m for g in (50.0, 200.0, 1000.0)]
    gaps = [abs(m - exact) for m in ms]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 2e-3


def test_zero_one_closed_form_matches_split_panels():
    from replica_reweight.inner import solve_inner_nodes
    from replica_reweight.quadrature import panel_rule

    p = make_params(r_plus=0.3, b=0.2, sigma_minus=0.9, loss=ZERO_ONE)
    m, chi = 0.8, 0.4
    mt = ct = 0.0
    for y, r, s, sigma in p.classes():
        z2 = -(m + y * p.b) / sigma
        z1 = z2 - math.sqrt(2 * s * chi)
        z, w = panel_rule(np.concatenate([np.linspace(-11, 11, 89), [z1, z2]]), order=20)
        v, _, _ = solve_inner_nodes(ZERO_ONE, s, sigma, chi, m, y * p.b, z)
        mt += r / sigma * (w @ v)
        ct += r * (w @ v**2)
    exact = eos_rhs(p, m, chi)
    assert exact[0] == pytest.approx(p.alpha / math.sqrt(chi) * mt, rel=1e-12)
    assert exact[1] == pytest.approx(p.alpha / chi * ct, rel=1e-12)


def test_non_convergence_is_reported_not_raised():
    sol = solve_eos(make_params(r_plus=0.2), max_iter=2, accelerate=False)
    assert not sol.converged
    assert sol.iterations == 2
    assert sol.residual > 1e-9
    assert math.isfinite(sol.energy)


def test_damped_and_accelerated_paths_agree():
    p = make_params(r_plus=0.2, s_plus=0.1, b=-1.0)
    a = solve_eos(p, tol=1e-11)
    b = solve_eos(p, tol=1e-11, accelerate=False, max_iter=20000)
    assert a.converged and b.converged
    assert a.m == pytest.approx(b.m, abs=1e-8)
    assert a.iterations < b.iterations


def test_warm_start_is_cheaper():
    p = make_params(r_plus=0.2, s_plus=0.3)
    cold = solve_eos(p.replace(b=0.1))
    warm = solve_eos(p.replace(b=0.1), init=solve_eos(p).order)
    assert warm.m == pytest.approx(cold.m, abs=1e-8)
    assert warm.iterations <= cold.iterations


def test_argument_validation():
    with pytest.raises(ValueError):
        solve_eos(make_params(), damping=0.0)
    with pytest.raises(ValueError):
        solve_eos(make_params(), init=OrderParams(0.5, -1.0))
    with pytest.raises(ValueError):
        eos_rhs(make_params(), 0.5, 0.0)
    for bad in (dict(alpha=0.0), dict(r_plus=1.5), dict(s_plus=-0.1), dict(sigma_plus=0.0), dict(b=math.inf)):
        with pytest.raises(ValueError):
            make_params(**bad)


def test_params_helpers():
    p = make_params(r_plus=0.3, s_plus=0.2, sigma_plus=1.0, sigma_minus=0.5, b=0.4)
    assert p.r_minus == pytest.approx(0.7) and p.s_minus == pytest.approx(0.8)
    back = p.swapped().swapped()
    for name in ("r_plus", "s_plus", "sigma_plus", "sigma_minus", "b"):
        assert getattr(back, name) == pytest.approx(getattr(p, name), abs=1e-15)
    assert [c[0] for c in p.classes()] == [1, -1]
    assert isinstance(p.replace(b=0.0), ProblemParams)
    o = close_order(p, 0.5, 1.0)
    assert o.q_tilde == pytest.approx(math.hypot(o.m_tilde, math.sqrt(o.chi_tilde)))
