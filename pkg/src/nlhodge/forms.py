"""Cubical cochain complex on a flat n-dimensional box.

A q-form is stored as one coefficient per q-cell, the coefficient being the
average of the corresponding component over the cell.  A q-cell of type
``axes`` (an increasing tuple of q axis indices) spans one grid interval
along each of those axes and sits on a grid node along every other axis, so
the coefficient array of that component has shape ``N_i`` along cell axes
and ``N_i + 1`` elsewhere.  Components are concatenated in lexicographic
order of ``axes``; each block is flattened in C order.  Lie-algebra-valued
forms carry a trailing fiber axis (``coeffs.shape == (ncells, 3)``).

Operators are sparse matrices built from Kronecker products of 1-D
difference, averaging and identity factors, so that d o d = 0 holds to
rounding and the codifferential is the exact weighted adjoint of d.
"""

from __future__ import annotations

import itertools
import math
from functools import reduce

import numpy as np
import scipy.sparse as sp

from nlhodge.errors import DegreeError, GeometryError, ShapeMismatchError


def _kron_all(mats):
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats).tocsr()


def _diff_1d(n):
    """(n, n+1) forward difference."""
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr")


def _avg_1d(n):
    """(n, n+1) two-point mean: node values to interval midpoints."""
    return sp.diags([np.full(n, 0.5), np.full(n, 0.5)], [0, 1], shape=(n, n + 1), format="csr")


def _interp_1d(n, extrapolate=False):
    """(n+1, n) interval values to nodes: mean of the incident intervals.

    End nodes copy their single interval, or with ``extrapolate`` use the
    linear extrapolation 3/2 v_0 - 1/2 v_1 (second order at the boundary).
    """
    rows, cols, vals = [], [], []
    for k in range(1, n):
        rows += [k, k]
        cols += [k - 1, k]
        vals += [0.5, 0.5]
    if extrapolate and n >= 2:
        rows += [0, 0, n, n]
        cols += [0, 1, n - 1, n - 2]
        vals += [1.5, -0.5, 1.5, -0.5]
    else:
        rows += [0, n]
        cols += [0, n - 1]
        vals += [1.0, 1.0]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))


class CubicalComplex:
    """Uniform rectangular grid on the box prod_i [a_i, b_i].

    Parameters
    ----------
    extents : sequence of (a, b) pairs, one per axis
    resolution : int or sequence of int, cells per axis
    """

    def __init__(self, extents, resolution):
        extents = tuple((float(a), float(b)) for a, b in extents)
        n = len(extents)
        if not 1 <= n <= 5:
            raise ValueError(f"dimension must be between 1 and 5, got {n}")
        if np.isscalar(resolution):
            resolution = (int(resolution),) * n
        resolution = tuple(int(r) for r in resolution)
        if len(resolution) != n:
            raise ValueError("resolution and extents disagree on the dimension")
        if any(r < 1 for r in resolution):
            raise ValueError("resolution must be positive on every axis")
        if any(b <= a for a, b in extents):
            raise ValueError("every extent must satisfy a < b")
        self.n = n
        self.extents = extents
        self.resolution = resolution
        self.spacing = tuple((b - a) / r for (a, b), r in zip(extents, resolution))
        self._cache = {}

    @classmethod
    def cube(cls, n, half_width=1.0, resolution=16, center=None):
        center = (0.0,) * n if center is None else tuple(center)
        return cls([(c - half_width, c + half_width) for c in center], resolution)

    def __repr__(self):
        return f"CubicalComplex(extents={self.extents}, resolution={self.resolution})"

    def __eq__(self, other):
        return (
            isinstance(other, CubicalComplex)
            and self.extents == other.extents
            and self.resolution == other.resolution
        )

    def __hash__(self):
        return hash((self.extents, self.resolution))

    # -- bookkeeping ---------------------------------------------------------

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def node_shape(self):
        return tuple(r + 1 for r in self.resolution)

    @property
    def top_shape(self):
        return self.resolution

    def components(self, q):
        if not 0 <= q <= self.n:
            raise DegreeError(f"degree {q} outside [0, {self.n}]")
        return list(itertools.combinations(range(self.n), q))

    def cell_shape(self, axes):
        return tuple(r if i in axes else r + 1 for i, r in enumerate(self.resolution))

    def _layout(self, q):
        key = ("layout", q)
        if key not in self._cache:
            layout, start = {}, 0
            for axes in self.components(q):
                size = math.prod(self.cell_shape(axes))
                layout[axes] = slice(start, start + size)
                start += size
            self._cache[key] = (layout, start)
        return self._cache[key]

    def num_cells(self, q) -> int:
        return self._layout(q)[1]

    def component_slice(self, axes) -> slice:
        return self._layout(len(axes))[0][tuple(axes)]

    def axis_coords(self, i, staggered):
        a, _ = self.extents[i]
        h = self.spacing[i]
        k = np.arange(self.resolution[i] + (0 if staggered else 1))
        return a + (k + 0.5) * h if staggered else a + k * h

    def cell_centers(self, axes):
        """Centers of the cells of type ``axes``, shape cell_shape + (n,)."""
        grids = [self.axis_coords(i, i in axes) for i in range(self.n)]
        return np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1)

    def nodes(self):
        return self.cell_centers(())

    def top_centers(self):
        return self.cell_centers(tuple(range(self.n)))

    # -- operators -------------------------------------------------------------

    def d_matrix(self, q):
        """Sparse coboundary from q-cochains to (q+1)-cochains."""
        if not 0 <= q < self.n:
            raise DegreeError(f"exterior derivative undefined on degree {q} for n={self.n}")
        key = ("d", q)
        if key not in self._cache:
            blocks = []
            src = self.components(q)
            for T in self.components(q + 1):
                row = []
                for S in src:
                    diff = set(T) - set(S)
                    if len(diff) != 1 or not set(S) <= set(T):
                        row.append(None)
                        continue
                    j = diff.pop()
                    sign = (-1) ** T.index(j)
                    mats = []
                    for i, r in enumerate(self.resolution):
                        if i == j:
                            mats.append(_diff_1d(r) * (sign / self.spacing[i]))
                        elif i in S:
                            mats.append(sp.identity(r, format="csr"))
                        else:
                            mats.append(sp.identity(r + 1, format="csr"))
                    row.append(_kron_all(mats))
                blocks.append(row)
            self._cache[key] = sp.bmat(blocks, format="csr")
        return self._cache[key]

    def average_matrix(self, S, T):
        """Mean over the axes in T \\ S: maps S-component cells to T-component cells."""
        S, T = tuple(S), tuple(T)
        if not set(S) <= set(T):
            raise ValueError(f"{S} is not a face type of {T}")
        key = ("avg", S, T)
        if key not in self._cache:
            mats = []
            for i, r in enumerate(self.resolution):
                if i in S:
                    mats.append(sp.identity(r, format="csr"))
                elif i in T:
                    mats.append(_avg_1d(r))
                else:
                    mats.append(sp.identity(r + 1, format="csr"))
            self._cache[key] = _kron_all(mats)
        return self._cache[key]

    def top_average(self, S):
        return self.average_matrix(S, tuple(range(self.n)))

    def node_interpolation(self, S, extrapolate=False):
        """S-component cells to nodes: arithmetic mean of incident cells.

        ``extrapolate`` switches boundary nodes to one-sided linear extrapolation.
        """
        S = tuple(S)
        key = ("interp", S, bool(extrapolate))
        if key not in self._cache:
            mats = [
                _interp_1d(r, extrapolate) if i in S else sp.identity(r + 1, format="csr")
                for i, r in enumerate(self.resolution)
            ]
            self._cache[key] = _kron_all(mats)
        return self._cache[key]

    def weights(self, q):
        """Diagonal Hodge weights: primal-times-dual cell volume per q-cell.

        For averaged coefficients this is h_1...h_n, halved once for every
        transverse axis along which the cell lies on the boundary.
        """
        key = ("w", q)
        if key not in self._cache:
            parts = []
            for S in self.components(q):
                factors = []
                for i, r in enumerate(self.resolution):
                    if i in S:
                        factors.append(np.ones(r))
                    else:
                        f = np.ones(r + 1)
                        f[0] = f[-1] = 0.5
                        factors.append(f)
                w = reduce(np.multiply.outer, factors) * self.cell_volume
                parts.append(np.asarray(w).ravel())
            self._cache[key] = np.concatenate(parts)
        return self._cache[key]

    def interior_mask(self, q):
        """True for q-cells not contained in the boundary of the box."""
        key = ("int", q)
        if key not in self._cache:
            parts = []
            for S in self.components(q):
                factors = []
                for i, r in enumerate(self.resolution):
                    if i in S:
                        factors.append(np.ones(r, dtype=bool))
                    else:
                        f = np.ones(r + 1, dtype=bool)
                        f[0] = f[-1] = False
                        factors.append(f)
                m = reduce(np.logical_and.outer, factors)
                parts.append(np.asarray(m).ravel())
            self._cache[key] = np.concatenate(parts)
        return self._cache[key]

    def inscribed_radius(self, center):
        c = np.asarray(center, dtype=float)
        return float(min(min(ci - a, b - ci) for ci, (a, b) in zip(c, self.extents)))

    def check_ball(self, center, r):
        c = np.asarray(center, dtype=float)
        if c.shape != (self.n,):
            raise GeometryError(f"center must have {self.n} coordinates")
        if r < 0:
            raise GeometryError("radius must be nonnegative")
        slack = 1e-12 * max(b - a for a, b in self.extents)
        if r > self.inscribed_radius(c) + slack:
            raise GeometryError(f"ball of radius {r} about {tuple(c)} leaves the domain")

    def ball_weights(self, center, r, quadrature="center"):
        """Inclusion weights in [0, 1] for every n-cell (top_shape array).

        ``"center"``   indicator of the cell center
        ``"corners"``  inside fraction of the 2^n corners plus the center
        ``int k``      inside fraction of a k^n grid of sub-cell midpoints
        """
        self.check_ball(center, r)
        c = np.asarray(center, dtype=float)
        xc = self.top_centers() - c
        h = np.asarray(self.spacing)
        if quadrature == "center":
            offsets = [np.zeros(self.n)]
        elif quadrature == "corners":
            offsets = [np.zeros(self.n)] + [
                0.5 * h * np.array(s) for s in itertools.product((-1.0, 1.0), repeat=self.n)
            ]
        elif isinstance(quadrature, (int, np.integer)) and quadrature >= 1:
            k = int(quadrature)
            ticks = (np.arange(k) + 0.5) / k - 0.5
            offsets = [h * np.array(t) for t in itertools.product(ticks, repeat=self.n)]
        else:
            raise ValueError(f"unknown quadrature {quadrature!r}")
        r2 = r * r
        w = np.zeros(self.top_shape)
        for off in offsets:
            w += (np.sum((xc + off) ** 2, axis=-1) <= r2)
        return w / len(offsets)


class FormField:
    """A q-cochain on a :class:`CubicalComplex`.

    ``coeffs`` is the flat coefficient vector (see module docstring for the
    layout); a trailing axis of length ``fiber`` is present for vector-valued
    forms.
    """

    def __init__(self, complex, degree, coeffs=None, fiber=None):
        if not 0 <= degree <= complex.n:
            raise DegreeError(f"degree {degree} outside [0, {complex.n}]")
        size = complex.num_cells(degree)
        shape = (size,) if fiber is None else (size, int(fiber))
        if coeffs is None:
            coeffs = np.zeros(shape)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != shape:
            raise ShapeMismatchError(
                f"expected coefficient array of shape {shape}, got {coeffs.shape}"
            )
        self.complex = complex
        self.degree = degree
        self.coeffs = coeffs
        self.fiber = fiber

    @classmethod
    def from_components(cls, complex, degree, components, fiber=None):
        """Build from a dict ``{axes: array of cell_shape(axes) [+ fiber]}``; missing components are zero."""
        f = cls(complex, degree, fiber=fiber)
        for axes, arr in components.items():
            f.component(tuple(axes))[...] = arr
        return f

    def __repr__(self):
        fib = "" if self.fiber is None else f", fiber={self.fiber}"
        return f"FormField(degree={self.degree}{fib}, {self.complex!r})"

    def component(self, axes):
        """Writable view of one component, shaped like the cell grid."""
        axes = tuple(axes)
        if len(axes) != self.degree:
            raise DegreeError(f"component {axes} does not belong to a {self.degree}-form")
        shape = self.complex.cell_shape(axes)
        if self.fiber is not None:
            shape = shape + (self.fiber,)
        return self.coeffs[self.complex.component_slice(axes)].reshape(shape)

    def components(self):
        return {axes: self.component(axes) for axes in self.complex.components(self.degree)}

    def copy(self):
        return type(self)(self.complex, self.degree, self.coeffs.copy(), fiber=self.fiber)

    def with_coeffs(self, coeffs):
        return type(self)(self.complex, self.degree, coeffs, fiber=self.fiber)

    def _compatible(self, other):
        if not isinstance(other, FormField):
            raise ShapeMismatchError("expected a FormField")
        if other.complex != self.complex or other.degree != self.degree or other.fiber != self.fiber:
            raise ShapeMismatchError("fields differ in complex, degree or fiber")

    def __add__(self, other):
        self._compatible(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._compatible(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, s):
        return self.with_coeffs(self.coeffs * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


# -- operators on fields --------------------------------------------------------


def exterior_derivative(f: FormField) -> FormField:
    D = f.complex.d_matrix(f.degree)
    return FormField(f.complex, f.degree + 1, D @ f.coeffs, fiber=f.fiber)


def _wmul(w, coeffs):
    return w[:, None] * coeffs if coeffs.ndim == 2 else w * coeffs


def codifferential(f: FormField) -> FormField:
    """Weighted adjoint of d: W_{q-1}^{-1} D^T W_q."""
    if f.degree == 0:
        raise DegreeError("codifferential undefined on 0-forms")
    K = f.complex
    D = K.d_matrix(f.degree - 1)
    out = D.T @ _wmul(K.weights(f.degree), f.coeffs)
    return FormField(K, f.degree - 1, _wmul(1.0 / K.weights(f.degree - 1), out), fiber=f.fiber)


def inner_product(f: FormField, g: FormField) -> float:
    f._compatible(g)
    w = f.complex.weights(f.degree)
    return float(np.sum(_wmul(w, f.coeffs * g.coeffs)))


def norm(f: FormField, mask=None) -> float:
    """Weighted L2 norm, optionally restricted to a boolean cell mask."""
    w = f.complex.weights(f.degree)
    sq = f.coeffs**2 if f.fiber is None else np.sum(f.coeffs**2, axis=1)
    if mask is not None:
        w, sq = w[mask], sq[mask]
    return float(np.sqrt(np.sum(w * sq)))


def _sq(arr):
    return arr**2 if arr.ndim == 1 else np.sum(arr**2, axis=1)


def pointwise_Q(f: FormField):
    """|w|^2 at the nodes (node_shape array).

    Scalar forms: each component is interpolated to the nodes (linear
    extrapolation at the boundary), then squared and summed.  Vector-valued forms: the fiber norm is taken per cell first,
    which keeps Q exactly invariant under cellwise rotations of the fiber.
    """
    K = f.complex
    Q = np.zeros(K.num_cells(0))
    for S in K.components(f.degree):
        vals = f.coeffs[K.component_slice(S)]
        if f.fiber is None:
            Q += (K.node_interpolation(S, extrapolate=True) @ vals) ** 2
        else:
            Q += K.node_interpolation(S) @ _sq(vals)
    return Q.reshape(K.node_shape)


def cell_Q(f: FormField):
    """Q on the n-cells: sum over components of the mean of the squared face values.

    This is the Q entering the discrete energy; its gradient is exactly
    2 W rho_bar w (see :func:`face_density`).
    """
    K = f.complex
    Q = np.zeros(math.prod(K.top_shape))
    for S in K.components(f.degree):
        Q += K.top_average(S) @ _sq(f.coeffs[K.component_slice(S)])
    return Q.reshape(K.top_shape)


def center_values(f: FormField):
    """Component values averaged to the n-cell centers: ``{axes: top_shape[+fiber] array}``."""
    K = f.complex
    out = {}
    for S in K.components(f.degree):
        vals = K.top_average(S) @ f.coeffs[K.component_slice(S)]
        shape = K.top_shape if f.fiber is None else K.top_shape + (f.fiber,)
        out[S] = vals.reshape(shape)
    return out


def face_density(f: FormField, model):
    """rho on q-cells: volume-weighted mean of rho(cell Q) over adjacent n-cells (flat)."""
    K = f.complex
    rho_c = np.asarray(model.rho(cell_Q(f))).ravel()
    parts = []
    for S in K.components(f.degree):
        P = K.top_average(S)
        parts.append((P.T @ rho_c) / (P.T @ np.ones_like(rho_c)))
    return np.concatenate(parts)


def energy(f: FormField, model) -> float:
    """Discrete nonlinear Hodge energy sum_c vol * e(Q_c)."""
    return float(f.complex.cell_volume * np.sum(model.e(cell_Q(f))))


def ball_energy(f: FormField, model, center, r, quadrature="center") -> float:
    """E restricted to the ball B_r(center)."""
    w = f.complex.ball_weights(center, r, quadrature)
    return float(f.complex.cell_volume * np.sum(model.e(cell_Q(f)) * w))


def exterior_derivative_scale(f: FormField):
    """|D| |f| per (q+1)-cell: the magnitude rounding errors in d f are measured against."""
    D = abs(f.complex.d_matrix(f.degree))
    return D @ np.abs(f.coeffs)


# -- sampling of analytic data ----------------------------------------------------


def sample_potential(complex: CubicalComplex, phi) -> FormField:
    """0-cochain of nodal values of ``phi(X)`` with X of shape (..., n)."""
    vals = np.asarray(phi(complex.nodes()), dtype=float)
    return FormField(complex, 0, vals.reshape(-1))


def sample_form(complex: CubicalComplex, degree, component_fn, fiber=None, order=3) -> FormField:
    """Cell averages of an analytic form by tensor Gauss-Legendre quadrature.

    ``component_fn(axes, X)`` returns the ``axes`` component at points X of
    shape (..., n), with a trailing fiber axis for vector-valued forms.
    """
    g, gw = np.polynomial.legendre.leggauss(order)
    g, gw = 0.5 * g, 0.5 * gw
    f = FormField(complex, degree, fiber=fiber)
    h = np.asarray(complex.spacing)
    for S in complex.components(degree):
        centers = complex.cell_centers(S)
        acc = 0.0
        for idx in itertools.product(range(order), repeat=degree):
            off = np.zeros(complex.n)
            weight = 1.0
            for axis, k in zip(S, idx):
                off[axis] = g[k] * h[axis]
                weight *= gw[k]
            acc = acc + weight * np.asarray(component_fn(S, centers + off), dtype=float)
        f.component(S)[...] = acc
    return f
