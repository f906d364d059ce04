"""Symmetric margin losses ``l(h, y) = l(y h)`` and their derivatives.

Every function here works on the single-argument form ``l(h) = l(h, +1)``.
The derivative convention follows the saddle-point equations: ``g = -dl/dh``
and ``g' = dg/dh``.  All maps accept floats or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

FAMILIES = ("zero_one", "smoothed_zero_one", "ce_logistic", "hinge", "exponential")

# accepted spellings for config strings
_ALIASES = {
    "01": "zero_one",
    "01pe": "zero_one",
    "zero-one": "zero_one",
    "smoothed": "smoothed_zero_one",
    "smoothed_01": "smoothed_zero_one",
    "smoothed-zero-one": "smoothed_zero_one",
    "ce": "ce_logistic",
    "celo": "ce_logistic",
    "cross_entropy_logistic": "ce_logistic",
    "logistic": "ce_logistic",
    "exp": "exponential",
}


class UnsupportedLossOperation(ValueError):
    """Raised when a derivative is requested from a non-differentiable loss."""


@dataclass(frozen=True)
class LossSpec:
    family: str
    gamma: float | None = None

    def __post_init__(self):
        family = _ALIASES.get(self.family, self.family)
        if family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        if family == "smoothed_zero_one":
            if self.gamma is None or not np.isfinite(self.gamma) or self.gamma <= 0:
                raise ValueError("smoothed_zero_one requires a finite gamma > 0")
            object.__setattr__(self, "gamma", float(self.gamma))
        elif self.gamma is not None:
            object.__setattr__(self, "gamma", None)

    @property
    def differentiable(self) -> bool:
        return self.family != "zero_one"

    @property
    def convex_decreasing(self) -> bool:
        """True when g is nonnegative and nonincreasing, so the inner problem is concave."""
        return self.family in ("ce_logistic", "hinge", "exponential")

    @property
    def tag(self) -> str:
        if self.family == "smoothed_zero_one":
            return f"smoothed_zero_one(gamma={self.gamma:g})"
        return self.family

    @classmethod
    def parse(cls, name: str, gamma: float | None = None) -> "LossSpec":
        return cls(name.strip().lower(), gamma)


def _check_finite(h):
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ValueError("loss evaluated at a non-finite margin")
    return h


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _log2cosh(h):
    a = np.abs(h)
    return a + np.log1p(np.exp(-2.0 * a))


def loss_value(spec: LossSpec, h):
    """Return ``l(h, +1)``."""
    h = _check_finite(h)
    f = spec.family
    if f == "ce_logistic":
        val = -h + _log2cosh(h)
    elif f == "zero_one":
        val = np.where(h < 0, 1.0, np.where(h > 0, 0.0, 0.5))
    elif f == "smoothed_zero_one":
        val = 0.5 * (1.0 - np.tanh(spec.gamma * h))
    elif f == "hinge":
        val = np.maximum(0.0, 1.0 - h)
    else:
        val = np.exp(-h)
    return _out(val)


def loss_value_xy(spec: LossSpec, h, y):
    """Two-argument form ``l(h, y)`` through the symmetry ``l(h, y) = l(y h)``."""
    return loss_value(spec, np.asarray(y) * np.asarray(h, dtype=float))


def _sech2(x):
    # cosh overflows for large |x|; this form underflows to 0 instead
    a = np.abs(x)
    e = np.exp(-2.0 * a)
    return 4.0 * e / (1.0 + e) ** 2


def loss_grad(spec: LossSpec, h):
    """Return ``g(h) = -dl/dh``."""
    h = _check_finite(h)
    f = spec.family
    if f == "zero_one":
        raise UnsupportedLossOperation(
            "zero_one has no usable derivative; use solve_inner_zero_one or smoothed_zero_one"
        )
    if f == "ce_logistic":
        # 1 - tanh(h), without cancellation at large h
        val = 2.0 * expit(-2.0 * h)
    elif f == "smoothed_zero_one":
        val = 0.5 * spec.gamma * _sech2(spec.gamma * h)
    elif f == "hinge":
        # subgradient at the kink taken from the left
        val = np.where(h <= 1.0, 1.0, 0.0)
    else:
        val = np.exp(-h)
    return _out(val)


def loss_grad2(spec: LossSpec, h):
    """Return ``g'(h) = dg/dh``."""
    h = _check_finite(h)
    f = spec.family
    if f == "zero_one":
        raise UnsupportedLossOperation(
            "zero_one has no usable derivative; use solve_inner_zero_one or smoothed_zero_one"
        )
    if f == "ce_logistic":
        val = -_sech2(h)
    elif f == "smoothed_zero_one":
        x = spec.gamma * h
        val = -spec.gamma**2 * _sech2(x) * np.tanh(x)
    elif f == "hinge":
        val = np.zeros_like(h)
    else:
        val = -np.exp(-h)
    return _out(val)


def grad_bound(spec: LossSpec) -> float | None:
    """Supremum of ``|g|`` over the real line, or None when unbounded."""
    return {
        "ce_logistic": 2.0,
        "smoothed_zero_one": None if spec.gamma is None else 0.5 * spec.gamma,
        "hinge": 1.0,
    }.get(spec.family)
