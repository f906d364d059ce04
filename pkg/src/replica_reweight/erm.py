"""Finite-N empirical risk minimization on the sphere ``|w|^2 = N``.

Data follow the two-class Gaussian model ``x = y w0 / sqrt(N) + xi`` with
``xi ~ N(0, sigma_y^2 I)``.  The estimator minimizes

    H(w) = sum_mu s_{y_mu} l(y_mu (w.x_mu / sqrt(N) + b))

under the norm constraint; ``u = H / N`` and ``m = w.w0 / N``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .eos import ProblemParams
from .losses import LossSpec, UnsupportedLossOperation, loss_grad, loss_value

RNG_ID = "numpy.random.Philox(SeedSequence(seed))"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True, eq=False)
class Dataset:
    n_dim: int
    n_samples: int
    inputs: np.ndarray
    labels: np.ndarray
    w0: np.ndarray
    seed: int
    rng: str = RNG_ID


def generate_dataset(params: ProblemParams, n_dim: int, seed: int) -> Dataset:
    """Draw one dataset with ``M = round(alpha N)`` samples; reproducible from ``seed``.

    Only ``alpha``, ``r_plus`` and the class variances enter; ``b``, ``s_plus``
    and the loss do not affect the data, so one seed gives the same sample for
    every point of a ``b`` or ``s`` grid.
    """
    if n_dim < 1:
        raise ValueError("n_dim must be at least 1")
    m_samples = int(round(params.alpha * n_dim))
    if m_samples < 1:
        raise ValueError("alpha * n_dim must round to at least one sample")
    rng = make_rng(seed)
    w0 = rng.standard_normal(n_dim)
    w0 *= math.sqrt(n_dim) / np.linalg.norm(w0)
    labels = np.where(rng.random(m_samples) < params.r_plus, 1, -1).astype(np.int8)
    scale = np.where(labels > 0, params.sigma_plus, params.sigma_minus)
    inputs = rng.standard_normal((m_samples, n_dim))
    inputs *= scale[:, None]
    inputs += np.outer(labels, w0 / math.sqrt(n_dim))
    return Dataset(n_dim, m_samples, inputs, labels, w0, int(seed))


@dataclass(frozen=True)
class OptimizerOptions:
    tol: float = 1e-9
    max_iter: int = 20000
    armijo: float = 1e-4
    backtrack: float = 0.5
    memory: int = 10
    step_min: float = 1e-12
    step_max: float = 1e6


@dataclass(frozen=True)
class WeightedLossFit:
    w: np.ndarray = field(repr=False)
    u: float
    m: float
    grad_norm: float
    iterations: int
    converged: bool
    b: float = 0.0


class _Objective:
    """``u(w, b) = H(w, b)/N`` and its gradient for a fixed dataset."""

    def __init__(self, data: Dataset, loss: LossSpec, s_plus: float):
        if not loss.differentiable:
            raise UnsupportedLossOperation("ERM needs a differentiable loss; use smoothed_zero_one for zero-one")
        self.loss = loss
        self.n = data.n_dim
        self.y = data.labels.astype(float)
        self.wt = np.where(data.labels > 0, s_plus, 1.0 - s_plus)
        # rows pre-multiplied by y / sqrt(N) so that margins are one matvec
        self.a = data.inputs * (self.y / math.sqrt(self.n))[:, None]

    def value(self, w, b):
        t = self.a @ w + self.y * b
        return float(self.wt @ loss_value(self.loss, t)) / self.n

    def value_grad(self, w, b):
        t = self.a @ w + self.y * b
        val = float(self.wt @ loss_value(self.loss, t)) / self.n
        q = self.wt * loss_grad(self.loss, t)
        return val, -(self.a.T @ q) / self.n, -float(self.y @ q) / self.n


def _retract(w, radius):
    return w * (radius / np.linalg.norm(w))


def _tangent(w, grad, n):
    return grad - (w @ grad) / n * w


def minimize_weighted_loss(data: Dataset, loss: LossSpec, b: float, s_plus: float,
                           opts: OptimizerOptions | None = None, w_init=None,
                           fit_bias: bool = False) -> WeightedLossFit:
    """Riemannian gradient descent on the sphere of radius ``sqrt(N)``.

    Each step projects the Euclidean gradient of ``u`` onto the tangent space,
    starts from a Barzilai-Borwein step length, backtracks until a
    nonmonotone Armijo condition holds (reference value: max of the last
    ``opts.memory`` objective values) and retracts by rescaling.  Stops when
    the tangent gradient norm is at most ``opts.tol``.  With ``fit_bias`` the
    bias is optimized jointly as a free coordinate, starting from ``b``.
    """
    opts = OptimizerOptions() if opts is None else opts
    obj = _Objective(data, loss, s_plus)
    n = data.n_dim
    radius = math.sqrt(n)
    if w_init is None:
        # weighted class-mean direction: the single-datum optimum and a good start in general
        w_init = obj.a.T @ obj.wt
        if not np.linalg.norm(w_init) > 0:
            w_init = np.ones(n)
    w = _retract(np.asarray(w_init, dtype=float).copy(), radius)
    b = float(b)
    bias_on = 1.0 if fit_bias else 0.0

    def tangent(w, gw, gb):
        return _tangent(w, gw, n), bias_on * gb

    f, gw, gb = obj.value_grad(w, b)
    rw, rb = tangent(w, gw, gb)
    gnorm = math.sqrt(float(rw @ rw) + rb * rb)
    history = [f]
    step = 1.0 / max(gnorm, 1e-12)
    it = 0
    while gnorm > opts.tol and it < opts.max_iter:
        it += 1
        ref = max(history[-opts.memory:])
        t = step
        while True:
            w_new = _retract(w - t * rw, radius)
            b_new = b - t * rb
            f_new = obj.value(w_new, b_new)
            if f_new <= ref - opts.armijo * t * gnorm * gnorm or t <= opts.step_min:
                break
            t *= opts.backtrack
        f_new, gw, gb = obj.value_grad(w_new, b_new)
        rw_new, rb_new = tangent(w_new, gw, gb)
        sw, sb = w_new - w, b_new - b
        yw, yb = rw_new - _tangent(w_new, rw, n), rb_new - rb
        sy = float(sw @ yw) + sb * yb
        step = (float(sw @ sw) + sb * sb) / sy if sy > 0 else t * 2.0
        step = min(max(step, opts.step_min), opts.step_max)
        w, b, f, rw, rb = w_new, b_new, f_new, rw_new, rb_new
        gnorm = math.sqrt(float(rw @ rw) + rb * rb)
        history.append(f)
        if t <= opts.step_min and f_new > ref:
            break
    w = _retract(w, radius)
    return WeightedLossFit(w, obj.value(w, b), float(w @ data.w0) / n, gnorm, it,
                           bool(gnorm <= opts.tol and np.isfinite(f)), b)


@dataclass(frozen=True)
class ERMResult:
    b: float
    s_plus: float
    m_values: tuple[float, ...]
    u_values: tuple[float, ...]
    grad_norms: tuple[float, ...]
    iterations: tuple[int, ...]
    seeds: tuple[int, ...]
    n_failed: int
    b_values: tuple[float, ...] = ()

    @property
    def reps(self) -> int:
        return len(self.m_values)

    def _stats(self, vals):
        x = np.asarray(vals, dtype=float)
        if x.size == 0:
            return math.nan, math.nan
        if x.size == 1:
            return float(x[0]), math.nan
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))

    @property
    def m_mean(self) -> float:
        return self._stats(self.m_values)[0]

    @property
    def m_stderr(self) -> float:
        return self._stats(self.m_values)[1]

    @property
    def u_mean(self) -> float:
        return self._stats(self.u_values)[0]

    @property
    def u_stderr(self) -> float:
        return self._stats(self.u_values)[1]

    @property
    def b_mean(self) -> float:
        return self._stats(self.b_values)[0] if self.b_values else self.b

    @property
    def b_stderr(self) -> float:
        return self._stats(self.b_values)[1] if self.b_values else 0.0


def _one_realization(args):
    params, n_dim, seed, b_grid, opts = args
    data = generate_dataset(params, n_dim, seed)
    fits = []
    w = None
    for b in b_grid:
        fit = minimize_weighted_loss(data, params.loss, b, params.s_plus, opts, w_init=w)
        if not fit.converged and w is not None:
            fit = minimize_weighted_loss(data, params.loss, b, params.s_plus, opts)
        fits.append(fit)
        # warm start the next bias from this solution
        w = fit.w if fit.converged else None
    return [(f.m, f.u, f.grad_norm, f.iterations, f.converged) for f in fits]


def run_experiment(params: ProblemParams, n_dim: int, reps: int, b_grid, base_seed: int,
                   opts: OptimizerOptions | None = None, workers: int = 1) -> list[ERMResult]:
    """``reps`` realizations per ``b``; seeds ``base_seed + rep``; one result per ``b``.

    Each realization draws one dataset and fits every ``b`` on it in grid
    order, warm-starting from the previous fit.  Runs that end above the
    gradient tolerance are excluded from the statistics and counted.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    b_grid = [float(b) for b in b_grid]
    if not b_grid:
        raise ValueError("b_grid must be nonempty")
    opts = OptimizerOptions() if opts is None else opts
    jobs = [(params, n_dim, base_seed + k, b_grid, opts) for k in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(_one_realization, jobs))
    else:
        per_rep = [_one_realization(j) for j in jobs]
    out = []
    for j, b in enumerate(b_grid):
        ok = [(k, per_rep[k][j]) for k in range(reps) if per_rep[k][j][4]]
        out.append(ERMResult(
            b, params.s_plus,
            tuple(r[0] for _, r in ok), tuple(r[1] for _, r in ok),
            tuple(r[2] for _, r in ok), tuple(r[3] for _, r in ok),
            tuple(base_seed + k for k, _ in ok), reps - len(ok),
        ))
    return out


def _one_fitted_bias(args):
    params, n_dim, seed, s_grid, opts = args
    data = generate_dataset(params, n_dim, seed)
    out = []
    for s in s_grid:
        fit = minimize_weighted_loss(data, params.loss, 0.0, s, opts, fit_bias=True)
        out.append((fit.m, fit.u, fit.grad_norm, fit.iterations, fit.converged, fit.b))
    return out


def run_fitted_bias_experiment(params: ProblemParams, n_dim: int, reps: int, s_grid, base_seed: int,
                               opts: OptimizerOptions | None = None, workers: int = 1) -> list[ERMResult]:
    """Loss-minimizing bias per realization: ``(w, b)`` fitted jointly, one result per ``s_plus``.

    This is the finite-N counterpart of ``minimize_u`` sweeps; ``b`` in each
    result is NaN and the fitted values sit in ``b_values``.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    s_grid = [float(s) for s in s_grid]
    opts = OptimizerOptions() if opts is None else opts
    jobs = [(params, n_dim, base_seed + k, s_grid, opts) for k in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(_one_fitted_bias, jobs))
    else:
        per_rep = [_one_fitted_bias(j) for j in jobs]
    out = []
    for j, s in enumerate(s_grid):
        ok = [(k, per_rep[k][j]) for k in range(reps) if per_rep[k][j][4]]
        out.append(ERMResult(
            math.nan, s,
            tuple(r[0] for _, r in ok), tuple(r[1] for _, r in ok),
            tuple(r[2] for _, r in ok), tuple(r[3] for _, r in ok),
            tuple(base_seed + k for k, _ in ok), reps - len(ok),
            tuple(r[5] for _, r in ok),
        ))
    return out


ERM_COLUMNS = ("b", "m_mean", "m_stderr", "u_mean", "u_stderr", "n_failed")
FITTED_BIAS_COLUMNS = ("s_plus", "b_mean", "b_stderr", "m_mean", "m_stderr", "u_mean", "u_stderr", "n_failed")


def result_table(results, columns=ERM_COLUMNS):
    return [[getattr(r, c) for c in columns] for r in results]


def experiment_metadata(params: ProblemParams, n_dim: int, reps: int, base_seed: int,
                        opts: OptimizerOptions | None = None) -> dict:
    opts = OptimizerOptions() if opts is None else opts
    return {
        "rng": RNG_ID,
        "base_seed": int(base_seed),
        "n_dim": int(n_dim),
        "n_samples": int(round(params.alpha * n_dim)),
        "reps": int(reps),
        "optimizer": {"method": "riemannian_gradient_bb_nonmonotone_armijo", **asdict(opts)},
    }
