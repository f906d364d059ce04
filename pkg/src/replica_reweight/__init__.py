"""Replica-symmetric theory of feature learning under class-wise loss reweighting.

The theory side solves the zero-temperature equations of state for a linear
classifier trained on a two-class Gaussian mixture; the simulation side runs
finite-N empirical risk minimization on the same model.
"""

from .eos import EOSSolution, OrderParams, ProblemParams, energy, eos_rhs, solve_eos
from .inner import InnerSolution, solve_inner, solve_inner_zero_one
from .losses import LossSpec, loss_grad, loss_grad2, loss_value
from .quadrature import GaussianQuadrature, build_quadrature, gaussian_expect
from .sensitivity import SensitivityBundle, check_extremum_identity, compute_sensitivity

__version__ = "0.1.0"

__all__ = [
    "EOSSolution",
    "GaussianQuadrature",
    "InnerSolution",
    "LossSpec",
    "OrderParams",
    "ProblemParams",
    "SensitivityBundle",
    "build_quadrature",
    "check_extremum_identity",
    "compute_sensitivity",
    "energy",
    "eos_rhs",
    "gaussian_expect",
    "loss_grad",
    "loss_grad2",
    "loss_value",
    "solve_eos",
    "solve_inner",
    "solve_inner_zero_one",
    "__version__",
]
