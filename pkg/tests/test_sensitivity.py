import math

import numpy as np
import pytest

from conftest import CE, make_params
from replica_reweight.eos import solve_eos
from replica_reweight.losses import LossSpec, UnsupportedLossOperation
from replica_reweight.sensitivity import (
    DegenerateIdentityError,
    SensitivityBundle,
    SensitivityError,
    _jump_terms,
    check_extremum_identity,
    compute_sensitivity,
    finite_difference_dm_ds,
)


def smooth(gamma):
    return LossSpec("smoothed_zero_one", gamma)


def bundle(p, tol=1e-12):
    sol = solve_eos(p, tol=tol)
    return sol, compute_sensitivity(p, sol)


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_fully_symmetric_case_has_no_response():
    _, bd = bundle(make_params())
    assert np.max(np.abs(bd.c_vec)) <= 1e-12
    assert abs(bd.dm_ds) <= 1e-12 and abs(bd.dchi_ds) <= 1e-12


def test_t21_is_twice_t12():
    _, bd = bundle(make_params(r_plus=0.3, s_plus=0.4, b=0.3))
    assert bd.t_mat[1, 0] == 2.0 * bd.t_mat[0, 1]
    # for smoothed zero-one the relation holds for the bulk part; the branch-switch terms break it
    p = make_params(r_plus=0.3, s_plus=0.4, loss=smooth(50.0))
    sol, bd = bundle(p)
    _, jt = _jump_terms(p, sol)
    bulk = bd.t_mat - jt
    assert bulk[1, 0] == pytest.approx(2.0 * bulk[0, 1], rel=1e-14)


def test_matrix_composition():
    sol, bd = bundle(make_params(r_plus=0.2, s_plus=0.3))
    o = sol.order
    tt = np.array([[o.chi_tilde, -o.m_tilde / 2], [-o.m_tilde, -0.5]]) / o.q_tilde**3
    assert np.allclose(bd.t_tilde, tt, rtol=1e-15)
    assert np.allclose(bd.a_mat, tt @ bd.t_mat, rtol=1e-14)
    assert np.allclose(bd.b_vec, tt @ bd.c_vec, rtol=1e-14)
    lhs = np.eye(2) - bd.a_mat
    assert np.allclose(lhs @ [bd.dm_ds, bd.dchi_ds], bd.b_vec, atol=1e-14)
    assert bd.min_d > 0 and bd.condition >= 1.0 and bd.warnings == ()


@pytest.mark.parametrize("loss", [CE, smooth(50.0), smooth(200.0), LossSpec("exponential")], ids=lambda l: l.tag)
@pytest.mark.parametrize("r_plus", [0.5, 0.35, 0.2])
def test_extremum_at_no_reweighting(loss, r_plus):
    _, bd = bundle(make_params(r_plus=r_plus, loss=loss))
    assert abs(bd.dm_ds) <= 1e-6


@pytest.mark.parametrize(
    "kw",
    [dict(r_plus=0.2, s_plus=0.3), dict(r_plus=0.3, s_plus=0.6, b=0.4, sigma_plus=1.0, sigma_minus=0.5),
     dict(r_plus=0.2, s_plus=0.35, loss=smooth(50.0)),
     dict(r_plus=0.5, s_plus=0.3, sigma_plus=1.0, sigma_minus=0.5, loss=smooth(200.0))],
    ids=["ce", "ce-unequal", "smooth50", "smooth200-unequal"],
)
def test_matches_finite_differences(kw):
    p = make_params(**kw)
    _, bd = bundle(p)
    fd_m, fd_chi = finite_difference_dm_ds(p)
    assert rel(bd.dm_ds, fd_m) <= 1e-3
    assert rel(bd.dchi_ds, fd_chi) <= 1e-3


def test_identity_trivial_case():
    p = make_params()
    sol, bd = bundle(p)
    lhs, rhs, target = check_extremum_identity(p, sol, bundle=bd)
    assert target == 0.0
    assert np.max(np.abs(bd.b_vec)) <= 1e-10
    assert abs(lhs) <= 1e-10 and abs(rhs) <= 1e-10


@pytest.mark.parametrize("loss,r_plus,tol", [(CE, 0.2, 1e-8), (smooth(200.0), 0.35, 1e-6), (smooth(50.0), 0.2, 1e-6)],
                         ids=["ce", "smooth200", "smooth50"])
def test_identity_holds(loss, r_plus, tol):
    p = make_params(r_plus=r_plus, loss=loss)
    sol, bd = bundle(p)
    lhs, rhs, target = check_extremum_identity(p, sol, bundle=bd)
    assert rel(lhs, rhs) <= tol and rel(lhs, target) <= tol and rel(rhs, target) <= tol
    # stationarity of m forces dchi/ds = -b1/A12 = b2/(1 - A22)
    assert rel(-lhs, bd.dchi_ds) <= 1e-6


def test_identity_insensitive_to_smoothing():
    worst = []
    for gamma in np.geomspace(50.0, 500.0, 4):
        p = make_params(r_plus=0.2, loss=smooth(float(gamma)))
        sol, bd = bundle(p)
        lhs, rhs, target = check_extremum_identity(p, sol, bundle=bd)
        worst.append(max(rel(lhs, target), rel(rhs, target)))
    assert max(worst) <= 1e-6


def test_identity_requires_symmetric_setting():
    for kw in (dict(b=0.1), dict(s_plus=0.4), dict(sigma_plus=1.0)):
        p = make_params(**kw)
        with pytest.raises(ValueError):
            check_extremum_identity(p, solve_eos(p))


def test_degenerate_identity_reports_components():
    p = make_params(r_plus=0.2)
    sol = solve_eos(p)
    z = np.zeros((2, 2))
    fake = SensitivityBundle(z, z, np.zeros(2), z, np.array([1.0, 2.0]), 0.0, 0.0, 1.0, 1.0)
    with pytest.raises(DegenerateIdentityError) as info:
        check_extremum_identity(p, sol, bundle=fake)
    assert info.value.components["b1"] == 1.0


def test_refuses_zero_one_hinge_and_unconverged():
    p = make_params(loss=LossSpec("zero_one"))
    with pytest.raises(UnsupportedLossOperation):
        compute_sensitivity(p, solve_eos(p))
    p = make_params(loss=LossSpec("hinge"))
    with pytest.raises(UnsupportedLossOperation, match="second derivative"):
        compute_sensitivity(p, solve_eos(p))
    p = make_params(r_plus=0.2)
    with pytest.raises(SensitivityError):
        compute_sensitivity(p, solve_eos(p, max_iter=1))
