"""Named analytic fields used by the CLI and the tests.

Every builder takes a complex plus keyword parameters and returns a cochain.
Scalar entries are exact coboundaries of sampled potentials (so they are
closed to rounding); Lie-valued entries are sampled connections.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from nlhodge.errors import GeometryError
from nlhodge.forms import CubicalComplex, FormField, exterior_derivative, sample_form, sample_potential
from nlhodge.gauge import LieFormField


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str  # "form" or "connection"
    description: str
    build: Callable


def uniform(K: CubicalComplex, q: int = 1, amplitude: float = 1.0) -> FormField:
    """amplitude * dx^1 ^ ... ^ dx^q; Q = amplitude^2 everywhere."""
    if not 1 <= q <= K.n:
        raise ValueError(f"degree {q} outside [1, {K.n}]")
    f = FormField(K, q)
    f.component(tuple(range(q)))[...] = amplitude
    return f


def harmonic_quadratic_scale(K: CubicalComplex, q_max: float, center=None) -> float:
    n = K.n
    c = np.zeros(n) if center is None else np.asarray(center, float)
    far2 = [max((a - ci) ** 2, (b - ci) ** 2) for ci, (a, b) in zip(c, K.extents)]
    peak = 4.0 * far2[0] + 4.0 * sum(far2[1:]) / (n - 1) ** 2
    return float(np.sqrt(q_max / peak))


def harmonic_quadratic(K: CubicalComplex, q_max: float | None = None, scale: float = 1.0,
                       center=None) -> FormField:
    """d phi with phi = s (x1^2 - sum_{i>=2} x_i^2 / (n-1)), harmonic.

    With ``q_max`` the scale s is chosen so the largest Q over the box equals q_max.
    """
    n = K.n
    if n < 2:
        raise ValueError("harmonic-quadratic needs n >= 2")
    c = np.zeros(n) if center is None else np.asarray(center, float)
    s = harmonic_quadratic_scale(K, q_max, c) if q_max is not None else scale

    def phi(X):
        Y = X - c
        return s * (Y[..., 0] ** 2 - np.sum(Y[..., 1:] ** 2, axis=-1) / (n - 1))

    return exterior_derivative(sample_potential(K, phi))


def radial_power(K: CubicalComplex, beta: float = -0.25, center=None) -> FormField:
    """d phi with phi = |x - c|^beta.  The center must not be a node."""
    c = np.zeros(K.n) if center is None else np.asarray(center, float)
    r = np.sqrt(np.sum((K.nodes() - c) ** 2, axis=-1))
    if beta < 0 and np.min(r) < 1e-12 * max(K.spacing):
        raise GeometryError("radial-power center coincides with a node; use an odd resolution")
    return exterior_derivative(sample_potential(K, lambda X: np.sqrt(np.sum((X - c) ** 2, axis=-1)) ** beta))


def cubic(K: CubicalComplex, scale: float = 1.0) -> FormField:
    """d(x1^3): closed but not stationary for constant rho."""
    return exterior_derivative(sample_potential(K, lambda X: scale * X[..., 0] ** 3))


def abelian_plaquette(K: CubicalComplex, amplitude: float = 1.0) -> LieFormField:
    """A = x^1 dx^2 tau_3, curvature dx^1 ^ dx^2 tau_3."""
    if K.n < 2:
        raise ValueError("abelian-plaquette needs n >= 2")

    def comp(S, X):
        out = np.zeros(X.shape[:-1] + (3,))
        if S == (1,):
            out[..., 2] = amplitude * X[..., 0]
        return out

    return LieFormField(K, 1, sample_form(K, 1, comp, fiber=3).coeffs)


def nonabelian_sample(K: CubicalComplex, amplitude: float = 1.0) -> LieFormField:
    """Smooth connection with all three generators mixed on every edge direction (n = 3)."""
    if K.n != 3:
        raise ValueError("nonabelian-sample is defined for n = 3")

    def comp(S, X):
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        out = np.zeros(X.shape[:-1] + (3,))
        if S == (0,):
            out[..., 0], out[..., 1], out[..., 2] = np.sin(y), 0.5 * np.cos(z), 0.3 * x * z
        elif S == (1,):
            out[..., 0], out[..., 1], out[..., 2] = 0.4 * z, np.sin(x + z), 0.2 * np.cos(x * y)
        else:
            out[..., 0], out[..., 1], out[..., 2] = 0.5 * np.cos(x), 0.3 * y * y, np.sin(y - x)
        return amplitude * out

    return LieFormField(K, 1, sample_form(K, 1, comp, fiber=3).coeffs)


CATALOG = {
    e.name: e
    for e in [
        CatalogEntry("uniform", "form", "constant q-form dx^1^...^dx^q (params: q, amplitude)", uniform),
        CatalogEntry("harmonic-quadratic", "form",
                     "d of s(x1^2 - sum x_i^2/(n-1)), stationary for constant rho (params: q_max or scale)",
                     harmonic_quadratic),
        CatalogEntry("radial-power", "form", "d|x|^beta, singular at the center (params: beta)", radial_power),
        CatalogEntry("cubic", "form", "d(x1^3), not stationary (params: scale)", cubic),
        CatalogEntry("abelian-plaquette", "connection", "x^1 dx^2 tau_3 with unit curvature", abelian_plaquette),
        CatalogEntry("nonabelian-sample", "connection", "smooth trigonometric so(3) connection, n = 3",
                     nonabelian_sample),
    ]
}


def build(name: str, K: CubicalComplex, **params):
    try:
        entry = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown catalog field {name!r}; choose from {sorted(CATALOG)}") from None
    return entry.build(K, **params)


def random_cochain(K: CubicalComplex, q: int, rng: np.random.Generator, fiber=None) -> FormField:
    """Standard normal coefficients; used by property tests and refinement runs."""
    shape = (K.num_cells(q),) if fiber is None else (K.num_cells(q), fiber)
    return FormField(K, q, rng.standard_normal(shape), fiber=fiber)


__all__ = ["CATALOG", "CatalogEntry", "build", "random_cochain"] + [
    "uniform", "harmonic_quadratic", "radial_power", "cubic", "abelian_plaquette", "nonabelian_sample",
]
