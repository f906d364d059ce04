"""Zero-temperature replica-symmetric equations of state and the energy.

The order parameters are ``(m, chi)`` and their conjugates ``(m_tilde,
chi_tilde, q_tilde)``.  One sweep of the fixed-point map is

    m_tilde   = alpha / sqrt(chi) * sum_y r_y / sigma_y * E_z[v_y]
    chi_tilde = alpha / chi * sum_y r_y * E_z[v_y^2]
    q_tilde   = sqrt(m_tilde^2 + chi_tilde)
    m, chi    = m_tilde / q_tilde, 1 / q_tilde

where ``v_y(z)`` is the per-node maximizer from :mod:`replica_reweight.inner`.
The ``chi_tilde`` line is the stationarity condition of :func:`energy` with
respect to ``chi``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from .inner import bell_branches, solve_inner_nodes, zero_one_moments
from .losses import LossSpec, loss_value
from .quadrature import TAIL, DEFAULT_ORDER, GaussianQuadrature, build_quadrature, graded_breaks, panel_rule

log = logging.getLogger(__name__)

DEFAULT_INIT_M = 0.5
DEFAULT_INIT_CHI = 1.0
DEFAULT_DAMPING = 0.5
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 5000
MIN_DAMPING = 1.0 / 64
_ANDERSON_DEPTH = 3


@dataclass(frozen=True)
class ProblemParams:
    alpha: float
    r_plus: float
    sigma_plus: float
    sigma_minus: float
    s_plus: float
    b: float
    loss: LossSpec

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.r_plus <= 1.0:
            raise ValueError("r_plus must lie in [0, 1]")
        if not 0.0 <= self.s_plus <= 1.0:
            raise ValueError("s_plus must lie in [0, 1]")
        for name in ("sigma_plus", "sigma_minus"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be finite and positive")
        if not math.isfinite(self.b):
            raise ValueError("b must be finite")

    @property
    def r_minus(self) -> float:
        return 1.0 - self.r_plus

    @property
    def s_minus(self) -> float:
        return 1.0 - self.s_plus

    def classes(self):
        """``(y, r_y, s_y, sigma_y)`` for y = +1 then y = -1."""
        return (
            (1, self.r_plus, self.s_plus, self.sigma_plus),
            (-1, self.r_minus, self.s_minus, self.sigma_minus),
        )

    def replace(self, **changes) -> "ProblemParams":
        return dataclasses.replace(self, **changes)

    def swapped(self) -> "ProblemParams":
        """Relabel y -> -y; the resulting problem has identical (m, chi, u)."""
        return self.replace(
            r_plus=self.r_minus,
            s_plus=self.s_minus,
            sigma_plus=self.sigma_minus,
            sigma_minus=self.sigma_plus,
            b=-self.b,
        )


@dataclass(frozen=True)
class OrderParams:
    m: float
    chi: float
    m_tilde: float = float("nan")
    chi_tilde: float = float("nan")
    q_tilde: float = float("nan")


@dataclass(frozen=True)
class EOSSolution:
    order: OrderParams
    energy: float
    iterations: int
    residual: float
    converged: bool

    @property
    def m(self) -> float:
        return self.order.m

    @property
    def chi(self) -> float:
        return self.order.chi


def _quad(quad):
    return build_quadrature(DEFAULT_ORDER) if quad is None else quad


@dataclass(frozen=True)
class ClassRule:
    """Integration nodes for one class at a given ``(m, chi)``.

    ``z_switch`` is the node-space location where the selected inner branch
    changes (smoothed zero-one only); integrals split exactly there.
    """

    nodes: np.ndarray
    weights: np.ndarray
    z_switch: float | None = None


def class_rule(params: ProblemParams, y: int, m: float, chi: float, quad: GaussianQuadrature | None = None) -> ClassRule:
    """Fixed Gauss-Hermite nodes for smooth losses; split panels for hinge and smoothed zero-one.

    The smoothed zero-one maximizer is discontinuous in ``z`` where the inner
    problem switches branch and has a kink of width ``~1/(gamma sigma)`` around
    the zero field, neither of which a global Gauss-Hermite rule resolves.
    """
    loss = params.loss
    if loss.family not in ("smoothed_zero_one", "hinge"):
        q = _quad(quad)
        return ClassRule(q.nodes, q.weights)
    _, _, s, sigma = params.classes()[0 if y == 1 else 1]
    c = m + y * params.b
    breaks = list(np.arange(-TAIL, TAIL + 0.5, 1.0))
    panel_order = max(8, round(_quad(quad).order / 8))
    if loss.family == "hinge":
        # v is piecewise linear in z with kinks where h0 = 1 and h0 = 1 - s sigma^2 chi
        breaks += [(1.0 - c) / sigma, (1.0 - s * sigma * sigma * chi - c) / sigma]
        z, w = panel_rule(np.clip(breaks, -TAIL, TAIL), panel_order)
        return ClassRule(z, w)
    z0 = -c / sigma
    finest = 0.25 / (loss.gamma * sigma)
    if abs(z0) < TAIL:
        breaks += graded_breaks(z0, finest)
    z_switch = None
    br = bell_branches(loss, s, sigma, chi) if s > 0 else None
    if br is not None:
        z_switch = (br.h0_switch - c) / sigma
        if abs(z_switch) < TAIL:
            breaks += graded_breaks(z_switch, finest)
        else:
            z_switch = None
    breaks = np.clip(breaks, -TAIL, TAIL)
    z, w = panel_rule(breaks, panel_order)
    return ClassRule(z, w, z_switch)


def class_moments(params: ProblemParams, m: float, chi: float, quad: GaussianQuadrature | None = None,
                  exact_zero_one: bool = True):
    """Per-class ``(E[v], E[v^2], E[G])``, a list ordered as ``params.classes()``.

    For the exact zero-one loss the integrals are taken in closed form unless
    ``exact_zero_one`` is false, in which case the Gauss-Hermite rule is used.
    """
    out = []
    for y, _, s, sigma in params.classes():
        if params.loss.family == "zero_one" and exact_zero_one:
            out.append(zero_one_moments(s, sigma, chi, m + y * params.b))
            continue
        rule = class_rule(params, y, m, chi, quad)
        v, _, g = solve_inner_nodes(params.loss, s, sigma, chi, m, y * params.b, rule.nodes)
        w = rule.weights
        out.append((float(v @ w), float((v * v) @ w), float(g @ w)))
    return out


def eos_rhs(params: ProblemParams, m: float, chi: float, quad: GaussianQuadrature | None = None,
            exact_zero_one: bool = True):
    """Conjugate updates ``(m_tilde, chi_tilde)`` at the point ``(m, chi)``."""
    if not chi > 0:
        raise ValueError("chi must be positive")
    mt = ct = 0.0
    for (_, r, _, sigma), (ev, ev2, _) in zip(params.classes(), class_moments(params, m, chi, quad, exact_zero_one)):
        mt += r / sigma * ev
        ct += r * ev2
    return params.alpha / math.sqrt(chi) * mt, params.alpha / chi * ct


def close_order(params: ProblemParams, m: float, chi: float, quad=None, exact_zero_one: bool = True) -> OrderParams:
    """Full order-parameter record at ``(m, chi)`` with conjugates evaluated there."""
    mt, ct = eos_rhs(params, m, chi, quad, exact_zero_one)
    return OrderParams(m, chi, mt, ct, math.sqrt(mt * mt + ct))


def eos_residual(params: ProblemParams, order: OrderParams, quad=None, exact_zero_one: bool = True) -> float:
    """Sup-norm distance between ``(m, chi)`` and its image under the EOS map."""
    mt, ct = eos_rhs(params, order.m, order.chi, quad, exact_zero_one)
    qt = math.sqrt(mt * mt + ct)
    if qt == 0:
        return float("inf")
    return max(abs(mt / qt - order.m), abs(1.0 / qt - order.chi))


def energy(params: ProblemParams, order: OrderParams, quad=None, exact_zero_one: bool = True) -> float:
    """Zero-temperature energy at the saddle (per-dimension minimal training loss)."""
    qt, ct, mt = order.q_tilde, order.chi_tilde, order.m_tilde
    head = -0.5 * qt + 0.5 * ct * order.chi + mt * order.m - 0.5 * (mt * mt + ct) / qt
    moments = class_moments(params, order.m, order.chi, quad, exact_zero_one)
    tail = sum(r * eg for (_, r, _, _), (_, _, eg) in zip(params.classes(), moments))
    return head - params.alpha * tail


def weighted_field_loss(params: ProblemParams, order: OrderParams, quad=None) -> float:
    """``alpha * sum_y r_y s_y E[l(h_y)]``; equals :func:`energy` at a fixed point."""
    total = 0.0
    for y, r, s, sigma in params.classes():
        if params.loss.family == "zero_one":
            # boundary landings count as zero loss: only the stay region pays
            _, ev2, eg = zero_one_moments(s, sigma, order.chi, order.m + y * params.b)
            total += r * (-eg - 0.5 * ev2)
            continue
        rule = class_rule(params, y, order.m, order.chi, quad)
        _, h, _ = solve_inner_nodes(params.loss, s, sigma, order.chi, order.m, y * params.b, rule.nodes)
        total += r * s * float(loss_value(params.loss, h) @ rule.weights)
    return params.alpha * total


def _anderson_step(xs, fs, damping):
    """Type-II Anderson mixing over the stored iterates; None if ill-posed."""
    if len(xs) < 2:
        return None
    dx = np.diff(np.array(xs), axis=0).T
    df = np.diff(np.array(fs), axis=0).T
    coef, *_ = np.linalg.lstsq(df, fs[-1], rcond=1e-10)
    step = xs[-1] + damping * fs[-1] - (dx + damping * df) @ coef
    return step if np.all(np.isfinite(step)) else None


def solve_eos(
    params: ProblemParams,
    init: OrderParams | None = None,
    damping: float = DEFAULT_DAMPING,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    quad: GaussianQuadrature | None = None,
    exact_zero_one: bool = True,
    accelerate: bool = True,
) -> EOSSolution:
    """Damped fixed-point iteration of the EOS.

    The damping is halved (down to 1/64) whenever the step size grows.  With
    ``accelerate`` the damped step is replaced by Anderson mixing over the last
    few iterates whenever that keeps ``chi`` positive; the history is dropped
    as soon as the residual grows, so the plain damped iteration is the
    fallback.  A run that exhausts ``max_iter`` comes back with
    ``converged=False``; it never raises for scientific non-convergence.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    quad = _quad(quad)
    if init is None:
        init = OrderParams(DEFAULT_INIT_M, DEFAULT_INIT_CHI)
    if not init.chi > 0:
        raise ValueError("initial chi must be positive")
    x = np.array([float(init.m), float(init.chi)])
    d = damping
    prev = float("inf")
    residual = float("inf")
    converged = False
    xs, fs = [], []
    it = 0
    for it in range(1, max_iter + 1):
        mt, ct = eos_rhs(params, x[0], x[1], quad, exact_zero_one)
        qt = math.sqrt(mt * mt + ct)
        if not (qt > 0 and math.isfinite(qt)):
            log.warning("degenerate conjugate parameters at iteration %d (q_tilde=%r)", it, qt)
            break
        f = np.array([mt / qt, 1.0 / qt]) - x
        residual = float(np.abs(f).max())
        if residual <= tol:
            converged = True
            break
        if residual > prev:
            xs, fs = [], []
            if d > MIN_DAMPING:
                d = max(0.5 * d, MIN_DAMPING)
        prev = residual
        nxt = None
        if accelerate:
            xs.append(x.copy())
            fs.append(f)
            del xs[:-_ANDERSON_DEPTH - 1], fs[:-_ANDERSON_DEPTH - 1]
            nxt = _anderson_step(xs, fs, d)
            if nxt is not None and not nxt[1] > 0:
                nxt = None
        x = x + d * f if nxt is None else nxt
    m, chi = float(x[0]), float(x[1])
    order = OrderParams(m, chi, mt, ct, qt) if converged else close_order(params, m, chi, quad, exact_zero_one)
    try:
        u = energy(params, order, quad, exact_zero_one)
    except (ValueError, ZeroDivisionError):
        u = float("nan")
    return EOSSolution(order, u, it, residual, converged)
