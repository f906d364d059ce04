"""One-dimensional-feature multiclass toy model.

Samples are ``x_mu = t_mu w0 / sqrt(N) + xi_mu`` with real labels ``t_mu``
drawn from K values and ``xi_mu ~ N(0, sigma^2 I)``.  The estimator is the
top eigenvector of the weighted scatter matrix

    A = sum_mu s_mu (x_mu - xbar)(x_mu - xbar)^T,   xbar = sum_mu s_mu x_mu.

For pure noise the diagonal of A fluctuates around ``sigma^2`` with mean
squared deviation ``sigma^4 (3 S2^2 - 4 S3 + 2 S2)``, ``Sk = sum s_mu^k``.
For ``M >= 4`` the uniform weights minimize it on the simplex; for ``M <= 3``
the tangent curvature ``4 - 12/M`` at the uniform point is negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .erm import RNG_ID, make_rng

SIMPLEX_TOL = 1e-12


def default_label_values(k: int):
    """K equispaced values on [-1, 1]; a single class sits at 0."""
    if k < 1:
        raise ValueError("n_classes must be at least 1")
    return (0.0,) if k == 1 else tuple(float(x) for x in np.linspace(-1.0, 1.0, k))


def uniform_weights(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def check_simplex(weights) -> np.ndarray:
    s = np.asarray(weights, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("weights must be finite and nonnegative")
    # summation error of ~M ulps is tolerated on top of the nominal bound
    if abs(s.sum() - 1.0) > max(SIMPLEX_TOL, s.size * np.finfo(float).eps):
        raise ValueError(f"weights must sum to 1 (got {s.sum()!r})")
    return s


@dataclass(frozen=True, eq=False)
class ToyParams:
    n_dim: int
    n_samples: int
    n_classes: int = 3
    label_values: tuple[float, ...] | None = None
    label_probs: tuple[float, ...] | None = None
    sigma: float = 1.0
    weights: np.ndarray | None = field(default=None, repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.n_dim < 1 or self.n_samples < 1:
            raise ValueError("n_dim and n_samples must be positive")
        vals = default_label_values(self.n_classes) if self.label_values is None else tuple(map(float, self.label_values))
        if len(vals) != self.n_classes or len(set(vals)) != len(vals):
            raise ValueError("label_values must be n_classes distinct reals")
        probs = (1.0 / self.n_classes,) * self.n_classes if self.label_probs is None else tuple(map(float, self.label_probs))
        if len(probs) != self.n_classes or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("label_probs must be a probability vector of length n_classes")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("sigma must be finite and positive")
        w = uniform_weights(self.n_samples) if self.weights is None else check_simplex(self.weights)
        if w.size != self.n_samples:
            raise ValueError("weights must have n_samples entries")
        object.__setattr__(self, "label_values", vals)
        object.__setattr__(self, "label_probs", probs)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True, eq=False)
class ToySample:
    inputs: np.ndarray
    labels: np.ndarray
    w0: np.ndarray
    rng: str = RNG_ID


def generate_toy(params: ToyParams) -> ToySample:
    rng = make_rng(params.seed)
    n, m = params.n_dim, params.n_samples
    w0 = rng.standard_normal(n)
    w0 *= math.sqrt(n) / np.linalg.norm(w0)
    idx = rng.choice(params.n_classes, size=m, p=np.asarray(params.label_probs))
    t = np.asarray(params.label_values)[idx]
    x = params.sigma * rng.standard_normal((m, n))
    x += np.outer(t, w0 / math.sqrt(n))
    return ToySample(x, t, w0)


def weighted_scatter(sample: ToySample | np.ndarray, weights) -> np.ndarray:
    """Weighted scatter matrix about the weighted mean (symmetric PSD)."""
    x = sample.inputs if isinstance(sample, ToySample) else np.asarray(sample, dtype=float)
    s = check_simplex(weights)
    if s.size != x.shape[0]:
        raise ValueError("one weight per sample is required")
    xc = x - s @ x
    a = xc.T @ (xc * s[:, None])
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class LeadingDirection:
    """Top eigenpair; iterates as ``(w_hat, eigenvalue, overlap)``.

    ``w_hat`` has squared norm N.  ``slow`` flags a run that hit ``max_iter``
    before the residual tolerance, which happens when the eigengap is tiny.
    """

    w_hat: np.ndarray = field(repr=False)
    eigenvalue: float
    residual: float
    iterations: int
    slow: bool

    def overlap(self, w0) -> float:
        w0 = np.asarray(w0, dtype=float)
        return abs(float(self.w_hat @ w0)) / self.w_hat.size

    def __iter__(self):
        return iter((self.w_hat, self.eigenvalue, self.overlap))


def leading_direction(a, tol: float = 1e-10, max_iter: int = 100000, w0=None, seed: int = 0) -> LeadingDirection:
    """Power iteration for the largest eigenpair of a symmetric PSD matrix.

    Stops when ``|A w - lambda w| / |w| <= tol * max(1, lambda)``.  With ``w0``
    the sign is fixed so that ``w_hat . w0 >= 0``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("A must be square")
    v = make_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam, res = 0.0, math.inf
    it = 0
    for it in range(1, max_iter + 1):
        av = a @ v
        lam = float(v @ av)
        res = float(np.linalg.norm(av - lam * v))
        if res <= tol * max(1.0, abs(lam)):
            break
        nrm = np.linalg.norm(av)
        if nrm == 0:
            # A v = 0: v already spans an eigenvector of the zero matrix
            res = 0.0
            break
        v = av / nrm
    w = v * math.sqrt(n)
    if w0 is not None and w @ np.asarray(w0, dtype=float) < 0:
        w = -w
    return LeadingDirection(w, lam, res, it, res > tol * max(1.0, abs(lam)))


def sigma_mse(weights, sigma: float) -> float:
    """``E (Sigma_hat_ii - sigma^2)^2`` for pure-noise inputs under the given weights."""
    s = check_simplex(weights)
    s2 = float(s @ s)
    s3 = float(np.sum(s**3))
    return sigma**4 * (3.0 * s2 * s2 - 4.0 * s3 + 2.0 * s2)


def sigma_mse_monte_carlo(weights, sigma: float, draws: int, seed: int = 0, chunk: int = 100000):
    """Direct simulation of ``E (Sigma_hat_11 - sigma^2)^2`` at N = 1; returns (mean, stderr)."""
    s = check_simplex(weights)
    rng = make_rng(seed)
    total = total2 = 0.0
    done = 0
    while done < draws:
        k = min(chunk, draws - done)
        xi = sigma * rng.standard_normal((k, s.size))
        mean = xi @ s
        sig = (xi * xi) @ s - mean * mean
        dev = (sig - sigma**2) ** 2
        total += float(dev.sum())
        total2 += float(dev @ dev)
        done += k
    mu = total / draws
    var = (total2 - draws * mu * mu) / (draws - 1)
    return mu, math.sqrt(max(var, 0.0) / draws)


def toy_overlap(n_dim: int, n_samples: int, sigma: float, weights=None, seed: int = 0,
                n_classes: int = 3) -> float:
    """Overlap of the leading direction with ``w0`` for one generated sample."""
    p = ToyParams(n_dim, n_samples, n_classes, sigma=sigma, weights=weights, seed=seed)
    smp = generate_toy(p)
    return leading_direction(weighted_scatter(smp, p.weights), w0=smp.w0).overlap(smp.w0)


def verify_uniform_optimal(m: int, trials: int, seed: int, sigma: float = 1.0, dirichlet_alpha: float = 1.0,
                           overlap_dim: int | None = None, overlap_seeds: int = 0,
                           overlap_dirichlet: float = 0.3, n_classes: int = 3) -> dict:
    """Compare ``sigma_mse`` at uniform weights with random simplex points.

    ``min_gap`` (smallest random value minus the uniform value) must be
    nonnegative.  With ``overlap_dim`` and ``overlap_seeds`` the report also
    holds mean overlaps for uniform and Dirichlet(``overlap_dirichlet``)
    weights at ``N = overlap_dim``, ``M = m``.
    """
    if m < 2:
        raise ValueError("M must be at least 2")
    rng = make_rng(seed)
    uni = sigma_mse(uniform_weights(m), sigma)
    pts = rng.dirichlet(np.full(m, dirichlet_alpha), size=trials)
    pts /= pts.sum(axis=1, keepdims=True)
    vals = np.array([sigma_mse(p, sigma) for p in pts])
    report = {
        "M": m,
        "trials": trials,
        "seed": seed,
        "sigma": sigma,
        "uniform_value": uni,
        "min_random": float(vals.min()),
        "min_gap": float(vals.min() - uni),
        "uniform_beaten": bool(np.any(vals < uni)),
        "rng": RNG_ID,
    }
    if overlap_dim and overlap_seeds:
        uo, ro, s2 = [], [], []
        for k in range(overlap_seeds):
            w = make_rng(seed + 1 + k).dirichlet(np.full(m, overlap_dirichlet))
            w /= w.sum()
            uo.append(toy_overlap(overlap_dim, m, sigma, None, seed + k, n_classes))
            ro.append(toy_overlap(overlap_dim, m, sigma, w, seed + k, n_classes))
            s2.append(float(w @ w))
        report.update({
            "overlap_dim": overlap_dim,
            "overlap_seeds": overlap_seeds,
            "overlap_uniform_mean": float(np.mean(uo)),
            "overlap_random_mean": float(np.mean(ro)),
            "random_sum_s2_mean": float(np.mean(s2)),
            "uniform_sum_s2": 1.0 / m,
        })
    return report
