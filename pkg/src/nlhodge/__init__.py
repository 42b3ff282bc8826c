"""Discrete exterior calculus for nonlinear Hodge energies.

Stationary points of E(w) = int e(|w|^2) with e(Q) = int_0^Q rho(s) ds on
flat cubical grids, so(3)-valued connections, and numerical checks of the
conformal monotonicity, Liouville and removable-singularity statements that
go with them.
"""

from nlhodge.density import DensityModel, rho, rho_prime, e_density, ellipticity
from nlhodge.forms import (
    CubicalComplex,
    FormField,
    exterior_derivative,
    codifferential,
    pointwise_Q,
    inner_product,
    ball_energy,
)

__all__ = [
    "DensityModel",
    "rho",
    "rho_prime",
    "e_density",
    "ellipticity",
    "CubicalComplex",
    "FormField",
    "exterior_derivative",
    "codifferential",
    "pointwise_Q",
    "inner_product",
    "ball_energy",
]

__version__ = "0.1.0"
