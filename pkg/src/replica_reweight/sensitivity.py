"""First-order response of the order parameters to the reweighting factor.

Differentiating the EOS with respect to ``s_plus`` (with ``s_minus = 1 - s_plus``)
gives two linear maps between ``Omega = (m, chi)`` and ``Omega_tilde =
(m_tilde, chi_tilde)``::

    dOmega       = Ttilde @ dOmega_tilde
    dOmega_tilde = c + T @ dOmega

so that ``(I - A) dOmega = b`` with ``A = Ttilde @ T`` and ``b = Ttilde @ c``.
The per-node quantities are ``g_y = g(h_y)``, ``g'_y = g'(h_y)`` and
``D_y = 1 - sigma_y^2 chi s_y g'_y``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .eos import EOSSolution, ProblemParams, class_rule, solve_eos
from .inner import bell_branches, solve_inner_nodes, switch_fields
from .losses import UnsupportedLossOperation, loss_grad, loss_grad2, loss_value
from .quadrature import GaussianQuadrature


class SensitivityError(ArithmeticError):
    pass


class DegenerateIdentityError(SensitivityError):
    def __init__(self, message, components):
        super().__init__(message)
        self.components = components


@dataclass(frozen=True)
class SensitivityBundle:
    t_tilde: np.ndarray
    t_mat: np.ndarray
    c_vec: np.ndarray
    a_mat: np.ndarray
    b_vec: np.ndarray
    dm_ds: float
    dchi_ds: float
    min_d: float
    condition: float
    warnings: tuple[str, ...] = field(default=())


def _node_terms(params: ProblemParams, sol: EOSSolution, quad: GaussianQuadrature | None):
    m, chi = sol.order.m, sol.order.chi
    out = []
    for y, r, s, sigma in params.classes():
        rule = class_rule(params, y, m, chi, quad)
        _, h, _ = solve_inner_nodes(params.loss, s, sigma, chi, m, y * params.b, rule.nodes)
        g = loss_grad(params.loss, h)
        gp = loss_grad2(params.loss, h)
        d = 1.0 - sigma * sigma * chi * s * gp
        out.append((y, r, s, sigma, g, gp, d, rule.weights))
    return out


def _jump_terms(params: ProblemParams, sol: EOSSolution):
    """Boundary contributions to ``c`` and ``T`` from the moving branch switch.

    For smoothed zero-one the inner maximizer jumps between two roots at a
    point ``z*(s, m, chi)``.  Differentiating an integral split there adds
    ``phi(z*) (F_left - F_right) dz*/dtheta`` for each parameter ``theta``.
    """
    c = np.zeros(2)
    t = np.zeros((2, 2))
    if params.loss.family != "smoothed_zero_one":
        return c, t
    loss = params.loss
    m, chi = sol.order.m, sol.order.chi
    sq = math.sqrt(chi)
    for y, r, s, sigma in params.classes():
        if s == 0:
            continue
        br = bell_branches(loss, s, sigma, chi)
        if br is None:
            continue
        z_star = (br.h0_switch - m - y * params.b) / sigma
        dens = math.exp(-0.5 * z_star * z_star) / math.sqrt(2.0 * math.pi)
        if dens == 0.0:
            continue
        hl, hr = switch_fields(loss, br)
        gl, gr = loss_grad(loss, hl), loss_grad(loss, hr)
        vl, vr = (hl - br.h0_switch) / (sigma * sq), (hr - br.h0_switch) / (sigma * sq)
        ll, lr = loss_value(loss, hl), loss_value(loss, hr)
        jg = dens * (gl - gr)
        jg2 = dens * (gl * gl - gr * gr)
        dz_ds = y * (lr - ll) / (sigma * s * (gr - gl))
        dz_dm = -1.0 / sigma
        dz_dchi = -(vr + vl) / (2.0 * sq)
        s2 = sigma * sigma
        c[0] += r * s * jg * dz_ds
        c[1] += r * s2 * s * s * jg2 * dz_ds
        t[0, 0] += r * s * jg * dz_dm
        t[0, 1] += r * s * jg * dz_dchi
        t[1, 0] += r * s2 * s * s * jg2 * dz_dm
        t[1, 1] += r * s2 * s * s * jg2 * dz_dchi
    return params.alpha * c, params.alpha * t


def t_tilde_matrix(m_tilde, chi_tilde, q_tilde):
    return np.array([[chi_tilde, -0.5 * m_tilde], [-m_tilde, -0.5]]) / q_tilde**3


def compute_sensitivity(params: ProblemParams, sol: EOSSolution, quad: GaussianQuadrature | None = None) -> SensitivityBundle:
    if params.loss.family == "zero_one":
        raise UnsupportedLossOperation("sensitivities of the zero-one loss go through smoothed_zero_one")
    if params.loss.family == "hinge":
        # g' is a step at the kink; the node sum would miss its delta contribution
        raise UnsupportedLossOperation("hinge has no continuous second derivative; use ce_logistic or smoothed_zero_one")
    if not sol.converged:
        raise SensitivityError("sensitivity requires a converged EOS solution")
    a = params.alpha
    notes = []

    c = np.zeros(2)
    t = np.zeros((2, 2))
    min_d = math.inf
    for y, r, s, sigma, g, gp, d, w in _node_terms(params, sol, quad):
        min_d = min(min_d, float(d.min()))
        s2 = sigma * sigma
        c[0] += y * r * ((g / d) @ w)
        c[1] += 2.0 * y * r * s2 * s * ((g * g / d) @ w)
        t[0, 0] += r * s * ((gp / d) @ w)
        t[0, 1] += r * s2 * s * s * ((g * gp / d) @ w)
        t[1, 1] += 2.0 * r * s2 * s2 * s**3 * ((g * g * gp / d) @ w)
    c *= a
    t *= a
    t[1, 0] = 2.0 * t[0, 1]
    jc, jt = _jump_terms(params, sol)
    c += jc
    t += jt
    if min_d <= 0:
        notes.append(f"D_y reaches {min_d:.3g} <= 0 at some node; inner solution is singular there")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)

    o = sol.order
    tt = t_tilde_matrix(o.m_tilde, o.chi_tilde, o.q_tilde)
    amat = tt @ t
    bvec = tt @ c
    lhs = np.eye(2) - amat
    cond = float(np.linalg.cond(lhs))
    if not np.isfinite(cond) or cond > 1e14:
        raise SensitivityError(f"I - A is singular (condition number {cond:.3g})")
    dm, dchi = np.linalg.solve(lhs, bvec)
    return SensitivityBundle(tt, t, c, amat, bvec, float(dm), float(dchi), min_d, cond, tuple(notes))


def check_extremum_identity(params: ProblemParams, sol: EOSSolution, quad: GaussianQuadrature | None = None,
                            bundle: SensitivityBundle | None = None):
    """Return ``(b1/A12, -b2/(1 - A22), (2 r_plus - 1)/(q_tilde s))``.

    Only meaningful with equal class variances, ``b = 0`` and ``s_plus = 1/2``;
    there the three numbers coincide, which forces ``dm/ds_plus = 0``.
    """
    if not (params.sigma_plus == params.sigma_minus and params.b == 0 and params.s_plus == 0.5):
        raise ValueError("the extremum identity needs sigma_plus == sigma_minus, b == 0 and s_plus == 1/2")
    if bundle is None:
        bundle = compute_sensitivity(params, sol, quad)
    amat, bvec = bundle.a_mat, bundle.b_vec
    a12, one_minus_a22 = amat[0, 1], 1.0 - amat[1, 1]
    scale = np.abs(amat).max()
    if abs(a12) <= 1e-300 or abs(one_minus_a22) <= 1e-15 * max(scale, 1.0):
        raise DegenerateIdentityError(
            "degenerate denominator in the extremum identity",
            {"b1": bvec[0], "b2": bvec[1], "A12": a12, "A22": amat[1, 1]},
        )
    target = (2.0 * params.r_plus - 1.0) / (sol.order.q_tilde * 0.5)
    return float(bvec[0] / a12), float(-bvec[1] / one_minus_a22), float(target)


def finite_difference_dm_ds(params: ProblemParams, step: float = 1e-3, quad: GaussianQuadrature | None = None,
                            tol: float = 1e-12, init=None, **solver_kw):
    """Central differences of the EOS solution in ``s_plus``; returns ``(dm/ds, dchi/ds)``."""
    lo = solve_eos(params.replace(s_plus=params.s_plus - step), init=init, tol=tol, quad=quad, **solver_kw)
    hi = solve_eos(params.replace(s_plus=params.s_plus + step), init=init, tol=tol, quad=quad, **solver_kw)
    if not (lo.converged and hi.converged):
        raise SensitivityError("EOS did not converge at the finite-difference stencil")
    return (hi.m - lo.m) / (2 * step), (hi.chi - lo.chi) / (2 * step)
