"""Gauss-Hermite rules for expectations under the standard normal measure."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermitenorm

DEFAULT_ORDER = 100


class QuadratureError(ArithmeticError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True, eq=False)
class GaussianQuadrature:
    """Nodes and weights with ``sum(w * f(z)) ~ E[f(Z)]``, ``Z ~ N(0, 1)``."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, values):
        """Contract precomputed node values along the last axis."""
        return np.asarray(values) @ self.weights


@lru_cache(maxsize=None)
def build_quadrature(order: int = DEFAULT_ORDER) -> GaussianQuadrature:
    if int(order) != order or order < 2:
        raise ValueError(f"quadrature order must be an integer >= 2, got {order!r}")
    order = int(order)
    # probabilists' Hermite: weight exp(-z^2/2), total mass sqrt(2 pi); scipy
    # switches to asymptotic nodes at high order where numpy's recursion overflows
    z, w = roots_hermitenorm(order)
    w = w / w.sum()
    # enforce exact symmetry
    z = 0.5 * (z - z[::-1])
    w = 0.5 * (w + w[::-1])
    z.setflags(write=False)
    w.setflags(write=False)
    return GaussianQuadrature(order, z, w)


def gaussian_expect(quad: GaussianQuadrature, f) -> float:
    try:
        values = np.asarray(f(quad.nodes), dtype=float)
    except TypeError:
        # scalar-only callables such as math.cos
        values = None
    if values is None or values.shape != quad.nodes.shape:
        values = np.array([float(f(z)) for z in quad.nodes])
    bad = ~np.isfinite(values)
    if bad.any():
        node = float(quad.nodes[np.argmax(bad)])
        raise QuadratureError(f"integrand is not finite at node z={node!r}", node=node)
    return float(values @ quad.weights)


PANEL_ORDER = 12
TAIL = 11.0  # Gaussian mass beyond |z| > 11 is below 1e-27


@lru_cache(maxsize=None)
def _legendre(order):
    return np.polynomial.legendre.leggauss(order)


def panel_rule(breaks, order: int = PANEL_ORDER):
    """Composite Gauss-Legendre rule for the standard normal measure.

    ``breaks`` are panel edges; the rule integrates ``f(z) phi(z) dz`` over
    ``[min(breaks), max(breaks)]`` and is exact on each panel for polynomials
    of degree ``2 order - 1`` times the density.  Returns ``(nodes, weights)``.
    """
    edges = np.unique(np.asarray(breaks, dtype=float))
    if edges.size < 2:
        raise ValueError("panel_rule needs at least two distinct break points")
    x, w = _legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    z = (a + b) * 0.5 + half * x[None, :]
    wz = half * w[None, :] * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return z.ravel(), wz.ravel()


def graded_breaks(center: float, finest: float, coarsest: float = 1.0, ratio: float = 2.0):
    """Panel edges refining geometrically toward ``center`` from both sides."""
    out = [center]
    width = finest
    offset = 0.0
    while width < coarsest:
        offset += width
        out.extend((center - offset, center + offset))
        width *= ratio
    return out
