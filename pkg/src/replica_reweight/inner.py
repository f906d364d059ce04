"""Per-node scalar maximization of ``G(v) = -v^2/2 - s l(sigma (sqrt(chi) v + z) + m + y b)``.

The scalar entry points return :class:`InnerSolution`; the ``*_nodes`` variants
solve a whole vector of ``z`` values at once and are what the EOS loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .losses import LossSpec, loss_grad, loss_grad2, loss_value

# scan resolution for the nonconvex (smoothed zero-one) branch
SCAN_POINTS = 64
SPIKE_POINTS = 256
SPIKE_HALF_WIDTH = 20.0  # in units of 1/gamma

_MAX_ITER = 200


class InnerConvergenceError(ArithmeticError):
    def __init__(self, message, lo=None, hi=None):
        super().__init__(message)
        self.lo = lo
        self.hi = hi


@dataclass(frozen=True)
class InnerSolution:
    v: float
    h: float
    g_value: float


def _validate(s, sigma, chi):
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"weight s must lie in [0, 1], got {s}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not chi > 0:
        raise ValueError(f"chi must be positive, got {chi}")


def objective(loss: LossSpec, s, sigma, chi, m, yb, z, v):
    """G evaluated at an arbitrary trial ``v`` (used by oracles and tests)."""
    h = sigma * (np.sqrt(chi) * v + z) + m + yb
    return -0.5 * np.asarray(v) ** 2 - s * loss_value(loss, h)


def solve_inner_zero_one_nodes(s, sigma, chi, m, yb, z):
    z = np.asarray(z, dtype=float)
    h0 = sigma * z + m + yb
    c = sigma * np.sqrt(chi)
    # ties at h0^2 == 2 s sigma^2 chi stay at v = 0
    jump = (h0 < 0) & (h0 * h0 < 2.0 * s * c * c)
    v = np.where(jump, -h0 / c, 0.0)
    h = np.where(jump, 0.0, h0)
    stay_loss = np.where(h0 < 0, 1.0, np.where(h0 > 0, 0.0, 0.5))
    g = np.where(jump, -0.5 * v * v, -s * stay_loss)
    return v, h, g


def solve_inner_zero_one(s, sigma, chi, m, yb, z) -> InnerSolution:
    """Closed-form maximizer for the exact zero-one loss.

    With ``h0 = sigma z + m + y b``: nothing moves when ``h0 >= 0``; otherwise the
    maximizer either stays at ``v = 0`` (paying the weight ``s``) or moves exactly
    to the decision boundary (paying ``h0^2 / (2 sigma^2 chi)``), whichever is cheaper.
    """
    _validate(s, sigma, chi)
    v, h, g = solve_inner_zero_one_nodes(s, sigma, chi, m, yb, z)
    return InnerSolution(float(v), float(h), float(g))


def _increasing_root(psi, dpsi, target, lo, hi):
    """Vectorized safeguarded Newton for ``psi(h) = target`` on ``[lo, hi]``, psi increasing."""
    h = 0.5 * (lo + hi)
    last = np.full_like(h, np.inf)
    done = np.zeros(h.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        f = psi(h) - target
        lo = np.where(f <= 0, h, lo)
        hi = np.where(f >= 0, h, hi)
        scale = 1.0 + np.abs(h)
        done = (np.abs(f) <= 1e-15 * scale) | (hi - lo <= 4e-16 * scale)
        if done.all():
            return h
        step = h - f / dpsi(h)
        ok = (step > lo) & (step < hi) & (np.abs(f) < 0.5 * last)
        last = np.abs(f)
        h = np.where(done, h, np.where(ok, step, 0.5 * (lo + hi)))
    raise InnerConvergenceError(
        f"inner root finder did not converge at {int((~done).sum())} nodes",
        lo=lo[~done], hi=hi[~done],
    )


def _field_maps(loss, kappa):
    def psi(h):
        return h - kappa * loss_grad(loss, h)

    def dpsi(h):
        return 1.0 - kappa * loss_grad2(loss, h)

    return psi, dpsi


def _solve_monotone(loss, s, sigma, chi, h0):
    """Field at the unique stationary point when ``g >= 0`` is nonincreasing.

    Stationarity in the field variable reads ``psi(h) = h - kappa g(h) = h0`` with
    ``kappa = s sigma^2 chi``; psi is increasing and the root lies in
    ``[h0, h0 + kappa g(h0)]``.
    """
    kappa = s * sigma * sigma * chi
    if kappa == 0:
        return h0.copy()
    psi, dpsi = _field_maps(loss, kappa)
    return _increasing_root(psi, dpsi, h0, h0.copy(), h0 + kappa * loss_grad(loss, h0))


# argmax of sech(x)^2 tanh(x), and its value 2 / (3 sqrt 3)
_BELL_X = math.atanh(1.0 / math.sqrt(3.0))
_BELL_MAX = 2.0 / (3.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class BellBranches:
    """Fold structure of the smoothed zero-one stationarity condition.

    ``psi(h) = h - kappa g(h)`` decreases on ``(h_a, h_b)`` and increases
    elsewhere.  For fields ``h0`` below ``h0_switch`` the maximizer sits on the left
    branch ``h < h_a``; above it, on the right branch ``h > h_b``.
    """

    kappa: float
    h_a: float
    h_b: float
    h0_switch: float


def _bell_folds(gamma, kappa):
    k = kappa * gamma * gamma
    if k * _BELL_MAX <= 1.0:
        return None

    def q(x):
        t = math.tanh(x)
        return (1.0 - t * t) * t - 1.0 / k

    xb = brentq(q, 0.0, _BELL_X, xtol=1e-15)
    xa = brentq(q, _BELL_X, 0.5 * math.log(4.0 * k) + 2.0, xtol=1e-15)
    return -xa / gamma, -xb / gamma


def bell_branches(loss: LossSpec, s, sigma, chi) -> BellBranches | None:
    """Switching field for the smoothed zero-one loss, or None if the root is unique."""
    if loss.family != "smoothed_zero_one":
        raise ValueError("bell_branches applies to smoothed_zero_one only")
    kappa = s * sigma * sigma * chi
    if kappa == 0:
        return None
    folds = _bell_folds(loss.gamma, kappa)
    if folds is None:
        return None
    h_a, h_b = folds
    top = 0.5 * loss.gamma * kappa

    def psi(h):
        return h - kappa * loss_grad(loss, h)

    def gap(h0):
        # G(right) - G(left), in units of s; increasing in h0
        hl = brentq(lambda h: psi(h) - h0, h0, h_a, xtol=1e-15, rtol=1e-15)
        hr = brentq(lambda h: psi(h) - h0, max(h_b, h0), h0 + top, xtol=1e-15, rtol=1e-15)
        gl = -(hl - h0) ** 2 / (2 * kappa) - loss_value(loss, hl)
        gr = -(hr - h0) ** 2 / (2 * kappa) - loss_value(loss, hr)
        return gr - gl

    lo, hi = psi(h_b), psi(h_a)
    glo, ghi = gap(lo), gap(hi)
    if glo >= 0:
        switch = lo
    elif ghi <= 0:
        switch = hi
    else:
        switch = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15)
    return BellBranches(kappa, h_a, h_b, float(switch))


def _solve_bell(loss, s, sigma, chi, h0, branches=None):
    kappa = s * sigma * sigma * chi
    if kappa == 0:
        return h0.copy()
    if branches is None:
        branches = bell_branches(loss, s, sigma, chi)
    psi, dpsi = _field_maps(loss, kappa)
    top = h0 + 0.5 * loss.gamma * kappa
    if branches is None:
        return _increasing_root(psi, dpsi, h0, h0.copy(), top)
    left = h0 <= branches.h0_switch
    lo = np.where(left, h0, np.maximum(branches.h_b, h0))
    hi = np.where(left, np.maximum(branches.h_a, h0), top)
    return _increasing_root(psi, dpsi, h0, lo, hi)


def switch_fields(loss: LossSpec, branches: BellBranches):
    """Fields ``(h_left, h_right)`` of the two competing roots at the switch point."""
    h0 = branches.h0_switch
    k = branches.kappa
    top = h0 + 0.5 * loss.gamma * k

    def f(h):
        return h - k * loss_grad(loss, h) - h0

    hl = brentq(f, h0, max(branches.h_a, h0), xtol=1e-15, rtol=1e-15)
    hr = brentq(f, max(branches.h_b, h0), top, xtol=1e-15, rtol=1e-15)
    return hl, hr


def _solve_scan(loss, s, sigma, chi, h0):
    """All roots of the stationarity condition, keeping the one maximizing G.

    Works in the field variable h, where the condition reads
    ``h - h0 = kappa g(h)`` with ``kappa = s sigma^2 chi``; every root lies in
    ``[h0, h0 + kappa sup g]``.  The scan is densified around ``|h| < 20/gamma``
    where ``g`` is sharply peaked.
    """
    c = sigma * np.sqrt(chi)
    kappa = s * c * c
    if s == 0:
        return np.zeros_like(h0)
    gmax = 0.5 * loss.gamma
    top = h0 + kappa * gmax
    u = np.linspace(0.0, 1.0, SCAN_POINTS)
    grid = h0[:, None] + (top - h0)[:, None] * u[None, :]
    w = SPIKE_HALF_WIDTH / loss.gamma
    spike = np.linspace(-w, w, SPIKE_POINTS)
    spike = np.clip(spike[None, :], h0[:, None], top[:, None])
    grid = np.sort(np.concatenate([grid, spike], axis=1), axis=1)

    def phi(h):
        return h - h0[:, None] - kappa * loss_grad(loss, h)

    f = phi(grid)
    fl, fr = f[:, :-1], f[:, 1:]
    bracket = ((fl < 0) & (fr >= 0)) | ((fl > 0) & (fr <= 0))
    rows, cols = np.nonzero(bracket)
    left, right = grid[rows, cols], grid[rows, cols + 1]
    rising = fl[rows, cols] < 0
    r0 = h0[rows]
    for _ in range(100):
        mid = 0.5 * (left + right)
        fm = mid - r0 - kappa * loss_grad(loss, mid)
        go_right = np.where(rising, fm < 0, fm > 0)
        left = np.where(go_right, mid, left)
        right = np.where(go_right, right, mid)
        if np.all(right - left <= 4e-16 * (1.0 + np.abs(mid))):
            break
    roots = 0.5 * (left + right)
    v_roots = (roots - r0) / c
    g_roots = -0.5 * v_roots**2 - s * loss_value(loss, roots)
    # exact zeros on the grid itself are roots too; F(h0) < 0 so a bracket always exists
    zr, zc = np.nonzero(f == 0)
    rows = np.concatenate([rows, zr])
    roots_v = np.concatenate([v_roots, (grid[zr, zc] - h0[zr]) / c])
    g_all = np.concatenate([g_roots, -0.5 * ((grid[zr, zc] - h0[zr]) / c) ** 2
                            - s * loss_value(loss, grid[zr, zc])])
    # per-row argmax of G: order by (row, -G) and take the first entry of each row
    order = np.lexsort((-g_all, rows))
    rows, roots_v = rows[order], roots_v[order]
    first = np.ones(rows.size, dtype=bool)
    first[1:] = rows[1:] != rows[:-1]
    v = np.zeros_like(h0)
    v[rows[first]] = roots_v[first]
    return v


def solve_inner_nodes(loss: LossSpec, s, sigma, chi, m, yb, z, method: str = "auto"):
    """Vectorized maximizer over an array of ``z``; returns ``(v, h, g_value)``.

    ``method="scan"`` forces the generic multi-root scan for nonconvex losses
    instead of the branch-aware smoothed zero-one solver.
    """
    _validate(s, sigma, chi)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if loss.family == "zero_one":
        return solve_inner_zero_one_nodes(s, sigma, chi, m, yb, z)
    h0 = sigma * z + m + yb
    c = sigma * np.sqrt(chi)
    if loss.convex_decreasing:
        h = _solve_monotone(loss, s, sigma, chi, h0)
        v = (h - h0) / c
    elif method == "scan":
        v = _solve_scan(loss, s, sigma, chi, h0)
    else:
        h = _solve_bell(loss, s, sigma, chi, h0)
        v = (h - h0) / c
    h = sigma * (np.sqrt(chi) * v + z) + m + yb
    g = -0.5 * v * v - s * loss_value(loss, h)
    return v, h, g


def solve_inner(loss: LossSpec, s, sigma, chi, m, yb, z) -> InnerSolution:
    v, h, g = solve_inner_nodes(loss, s, sigma, chi, m, yb, np.array([z], dtype=float))
    return InnerSolution(float(v[0]), float(h[0]), float(g[0]))


def zero_one_moments(s, sigma, chi, c):
    """Exact Gaussian moments of the zero-one inner solution.

    Returns ``(E[v], E[v^2], E[G])`` over ``z ~ N(0, 1)`` for the field
    ``h0 = sigma z + c``.  The maximizer is piecewise linear in ``z``: it is
    nonzero only on ``z1 < z < z2`` with ``z2 = -c / sigma`` and
    ``z1 = z2 - sqrt(2 s chi)``, where ``v = (z2 - z) / sqrt(chi)``.
    """
    z2 = -c / sigma
    z1 = z2 - np.sqrt(2.0 * s * chi)
    pdf1 = np.exp(-0.5 * z1 * z1) / np.sqrt(2.0 * np.pi)
    pdf2 = np.exp(-0.5 * z2 * z2) / np.sqrt(2.0 * np.pi)
    # mass of (z1, z2), computed on the tail side to avoid cancellation
    if z1 > 0:
        p = ndtr(-z1) - ndtr(-z2)
    else:
        p = ndtr(z2) - ndtr(z1)
    m1 = pdf1 - pdf2  # int z phi
    m2 = p + z1 * pdf1 - z2 * pdf2  # int z^2 phi
    ev = (z2 * p - m1) / np.sqrt(chi)
    ev2 = (z2 * z2 * p - 2.0 * z2 * m1 + m2) / chi
    ev2 = max(ev2, 0.0)
    eg = -0.5 * ev2 - s * ndtr(z1)
    return float(ev), float(ev2), float(eg)
