"""so(3)-valued connections and curvatures on the cubical complex.

Conventions
-----------
The Lie algebra so(3) is stored in adjoint coordinates: x in R^3 stands for
the skew matrix hat(x) with hat(x) y = x cross y.  Then

* bracket:        [hat(x), hat(y)] = hat(x cross y)
* inner product:  -1/2 tr(hat(x) hat(y)) = x . y   (normalized trace)
* group action:   R hat(x) R^T = hat(R x) for R in SO(3)

A gauge field is one rotation R per node.  It acts on curvatures by
F -> R F and on connections by A -> R A - vee(dR R^T); with this choice
F_{A'} = R F_A R^T in the continuum.

Curvature is F = dA + 1/2 [A ^ A], where the wedge-bracket of cochains is
assembled per cell from face values averaged onto that cell.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial.transform import Rotation

from nlhodge.errors import DegreeError, ShapeMismatchError, TransportError
from nlhodge.forms import (
    CubicalComplex,
    FormField,
    codifferential,
    energy,
    exterior_derivative,
    face_density,
    norm,
    pointwise_Q,
)

ORTHO_TOL = 1e-12


class NotARotationError(TransportError, ValueError):
    """Input matrices are not in SO(3)."""


def hat(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -x[..., 2], x[..., 1]
    out[..., 1, 0], out[..., 1, 2] = x[..., 2], -x[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -x[..., 1], x[..., 0]
    return out


def vee(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def trace_inner(x, y):
    """Normalized trace inner product -1/2 tr(hat(x) hat(y)); equals x . y."""
    return -0.5 * np.trace(hat(x) @ hat(y), axis1=-2, axis2=-1)


class LieFormField(FormField):
    """q-cochain with so(3) coefficients in adjoint coordinates (fiber 3)."""

    def __init__(self, complex, degree, coeffs=None, fiber=3):
        if fiber != 3:
            raise ShapeMismatchError("so(3)-valued forms have fiber dimension 3")
        super().__init__(complex, degree, coeffs, fiber=3)

    @classmethod
    def from_scalar(cls, f: FormField, axis_vector=(0.0, 0.0, 1.0)):
        """Embed a real form along a fixed Lie-algebra direction (abelian case)."""
        v = np.asarray(axis_vector, dtype=float)
        return cls(f.complex, f.degree, f.coeffs[:, None] * v[None, :])


def _as_lie(f: FormField) -> LieFormField:
    if f.fiber != 3:
        raise ShapeMismatchError("expected an so(3)-valued form")
    return f if isinstance(f, LieFormField) else LieFormField(f.complex, f.degree, f.coeffs)


def _shuffle_sign(first, second):
    perm = list(first) + list(second)
    inv = sum(1 for a, b in itertools.combinations(range(len(perm)), 2) if perm[a] > perm[b])
    return -1.0 if inv % 2 else 1.0


def wedge_bracket(alpha: FormField, beta: FormField) -> LieFormField:
    """[alpha ^ beta] with cross-product bracket, face values averaged onto each cell."""
    alpha, beta = _as_lie(alpha), _as_lie(beta)
    if alpha.complex != beta.complex:
        raise ShapeMismatchError("forms live on different complexes")
    K = alpha.complex
    a, b = alpha.degree, beta.degree
    out = LieFormField(K, a + b)
    for T in K.components(a + b):
        flat = out.coeffs[K.component_slice(T)]
        for I in itertools.combinations(T, a):
            J = tuple(t for t in T if t not in I)
            x = K.average_matrix(I, T) @ alpha.coeffs[K.component_slice(I)]
            y = K.average_matrix(J, T) @ beta.coeffs[K.component_slice(J)]
            flat += _shuffle_sign(I, J) * np.cross(x, y)
    return out


def curvature(A: FormField) -> LieFormField:
    """F_A = dA + 1/2 [A ^ A]."""
    A = _as_lie(A)
    if A.degree != 1:
        raise DegreeError("curvature expects a connection 1-form")
    dA = exterior_derivative(A)
    return LieFormField(A.complex, 2, dA.coeffs + 0.5 * wedge_bracket(A, A).coeffs)


class GaugeField:
    """One SO(3) matrix per node, array of shape node_shape + (3, 3)."""

    def __init__(self, complex: CubicalComplex, matrices, check: bool = True):
        R = np.asarray(matrices, dtype=float)
        if R.shape != complex.node_shape + (3, 3):
            raise ShapeMismatchError(
                f"expected {complex.node_shape + (3, 3)} rotation array, got {R.shape}"
            )
        if check:
            err = np.max(np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3))) if R.size else 0.0
            if err > ORTHO_TOL or np.any(np.linalg.det(R) <= 0):
                raise NotARotationError(f"not a rotation field (|R^T R - I| = {err:.2e})")
        self.complex = complex
        self.matrices = R

    @classmethod
    def identity(cls, complex):
        return cls(complex, np.broadcast_to(np.eye(3), complex.node_shape + (3, 3)).copy())

    @classmethod
    def constant(cls, complex, R):
        return cls(complex, np.broadcast_to(np.asarray(R, float), complex.node_shape + (3, 3)).copy())

    @classmethod
    def from_rotvec(cls, complex, rotvec_fn):
        """R(x) = exp(hat(v(x))) for a rotation-vector field v evaluated at the nodes."""
        v = np.array(rotvec_fn(complex.nodes()), dtype=float)
        mats = Rotation.from_rotvec(v.reshape(-1, 3)).as_matrix()
        return cls(complex, project_to_so3(mats).reshape(complex.node_shape + (3, 3)))

    @classmethod
    def from_quaternions(cls, complex, quats):
        """Quaternions stored scalar first (w, x, y, z)."""
        q = np.asarray(quats, dtype=float).reshape(-1, 4)
        mats = Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()
        return cls(complex, project_to_so3(mats).reshape(complex.node_shape + (3, 3)))

    def as_quaternions(self):
        q = Rotation.from_matrix(self.matrices.reshape(-1, 3, 3)).as_quat()
        q = q[:, [3, 0, 1, 2]]
        q[q[:, 0] < 0] *= -1.0
        return q.reshape(self.complex.node_shape + (4,))


def project_to_so3(M):
    """Nearest rotation in Frobenius norm (polar factor), vectorized."""
    U, _, Vt = np.linalg.svd(M)
    det = np.linalg.det(U @ Vt)
    U[..., :, -1] *= det[..., None]
    return U @ Vt


def _corner_slices(K, axes):
    for bits in itertools.product((0, 1), repeat=len(axes)):
        sl = [slice(None)] * K.n
        for ax, b in zip(axes, bits):
            sl[ax] = slice(b, b + K.resolution[ax])
        yield tuple(sl)


def cell_rotations(g: GaugeField, axes):
    """Rotation attached to each cell of type ``axes`` (flat, (ncells, 3, 3)).

    Mean of the corner rotations projected back onto SO(3); cells whose
    corners all carry the same matrix get that matrix unchanged.
    """
    K = g.complex
    corners = [g.matrices[sl] for sl in _corner_slices(K, axes)]
    first = corners[0]
    if len(corners) == 1:
        return first.reshape(-1, 3, 3)
    same = np.ones(first.shape[:-2], dtype=bool)
    for c in corners[1:]:
        same &= np.all(c == first, axis=(-2, -1))
    mean = sum(corners) / len(corners)
    out = np.where(same[..., None, None], first, project_to_so3(mean))
    return out.reshape(-1, 3, 3)


def gauge_transform_curvature(F: FormField, g: GaugeField) -> LieFormField:
    """Tensorial action: every coefficient rotated by its cell's rotation."""
    F = _as_lie(F)
    if F.complex != g.complex:
        raise ShapeMismatchError("gauge field and form live on different complexes")
    out = LieFormField(F.complex, F.degree)
    for S in F.complex.components(F.degree):
        sl = F.complex.component_slice(S)
        R = cell_rotations(g, S)
        out.coeffs[sl] = np.einsum("kab,kb->ka", R, F.coeffs[sl])
    return out


def _edge_transport(g: GaugeField, i):
    """Relative rotation vector log(R(x+h e_i) R(x)^T) and midpoint rotation per i-edge."""
    K = g.complex
    lo = [slice(None)] * K.n
    hi = [slice(None)] * K.n
    lo[i] = slice(0, K.resolution[i])
    hi[i] = slice(1, K.resolution[i] + 1)
    Ra = g.matrices[tuple(lo)].reshape(-1, 3, 3)
    Rb = g.matrices[tuple(hi)].reshape(-1, 3, 3)
    same = np.all(Ra == Rb, axis=(-2, -1))
    U = Rb @ np.swapaxes(Ra, -1, -2)
    v = np.zeros((U.shape[0], 3))
    if np.any(~same):
        v[~same] = Rotation.from_matrix(U[~same]).as_rotvec()
    Rmid = Ra.copy()
    if np.any(~same):
        Rmid[~same] = Rotation.from_rotvec(0.5 * v[~same]).as_matrix() @ Ra[~same]
    return v, Rmid


def gauge_transform_connection(A: FormField, g: GaugeField) -> LieFormField:
    """Affine action A -> R A - vee(dR R^T), discretized per edge.

    The edge rotation is the geodesic midpoint of its end rotations and the
    Maurer-Cartan term is log(R_b R_a^T) / h.
    """
    A = _as_lie(A)
    if A.degree != 1:
        raise DegreeError("connection must be a 1-form")
    if A.complex != g.complex:
        raise ShapeMismatchError("gauge field and form live on different complexes")
    K = A.complex
    out = LieFormField(K, 1)
    for (i,) in K.components(1):
        sl = K.component_slice((i,))
        v, Rmid = _edge_transport(g, i)
        out.coeffs[sl] = np.einsum("kab,kb->ka", Rmid, A.coeffs[sl]) - v / K.spacing[i]
    return out


def covariant_codifferential(A: FormField, G: FormField) -> LieFormField:
    """d_A^* G for a 2-form G: delta G plus the bracket pairing of A against G.

    This is the exact adjoint (for the Hodge weights) of the linearization
    of the discrete curvature, so the discrete Euler-Lagrange equation is
    the gradient of the discrete energy.
    """
    A, G = _as_lie(A), _as_lie(G)
    if A.degree != 1 or G.degree != 2:
        raise DegreeError("covariant_codifferential expects a 1-form and a 2-form")
    K = A.complex
    W2 = K.weights(2)
    Gw = W2[:, None] * G.coeffs
    acc = K.d_matrix(1).T @ Gw
    for T in K.components(2):
        i, j = T
        si, sj = K.component_slice((i,)), K.component_slice((j,))
        Pi, Pj = K.average_matrix((i,), T), K.average_matrix((j,), T)
        Ai, Aj = Pi @ A.coeffs[si], Pj @ A.coeffs[sj]
        GT = Gw[K.component_slice(T)]
        acc[si] += Pi.T @ np.cross(Aj, GT)
        acc[sj] += Pj.T @ np.cross(GT, Ai)
    return LieFormField(K, 1, acc / K.weights(1)[:, None])


def bracket_part(A: FormField, G: FormField) -> LieFormField:
    """Only the bracket contribution of :func:`covariant_codifferential`."""
    full = covariant_codifferential(A, G)
    return LieFormField(full.complex, 1, full.coeffs - codifferential(_as_lie(G)).coeffs)


def nonabelian_el_residual(A: FormField, F: FormField, model) -> float:
    """Interior norm of delta(rho F) + (bracket of A against rho F)."""
    F = _as_lie(F)
    rho_bar = face_density(F, model)
    G = LieFormField(F.complex, 2, rho_bar[:, None] * F.coeffs)
    r = covariant_codifferential(A, G)
    return norm(r, mask=F.complex.interior_mask(1))


def bianchi_residual(A: FormField, F: FormField) -> float:
    """Interior norm of dF + [A ^ F]."""
    A, F = _as_lie(A), _as_lie(F)
    if A.degree != 1 or F.degree != 2:
        raise DegreeError("bianchi_residual expects a 1-form and a 2-form")
    if A.complex.n < 3:
        return 0.0
    r = LieFormField(F.complex, 3, exterior_derivative(F).coeffs + wedge_bracket(A, F).coeffs)
    return norm(r, mask=F.complex.interior_mask(3))


def gauge_energy(F: FormField, model) -> float:
    return energy(_as_lie(F), model)


# -- exponential (radial) gauge ---------------------------------------------------


def connection_interpolators(A: FormField):
    """Piecewise-linear interpolants of each component A_i over the box."""
    A = _as_lie(A)
    K = A.complex
    out = []
    for (i,) in K.components(1):
        grid = tuple(K.axis_coords(k, k == i) for k in range(K.n))
        out.append(
            RegularGridInterpolator(grid, A.component((i,)), bounds_error=False, fill_value=None)
        )
    return out


def node_index(K: CubicalComplex, point, tol=1e-9):
    idx = []
    for p, (a, _), h, r in zip(point, K.extents, K.spacing, K.resolution):
        k = (p - a) / h
        kr = int(round(k))
        if abs(k - kr) > tol or not 0 <= kr <= r:
            raise ValueError(f"center {tuple(point)} is not a grid node")
        idx.append(kr)
    return tuple(idx)


def exponential_gauge(A: FormField, center, oversample: int = 4):
    """Radial gauge about a grid node.

    Solves d/dt R(c + t y) = R hat(y . A(c + t y)) along the ray to every
    node by ordered exponentials with a fixed substep count (``oversample``
    times the largest cell distance from the center), re-projecting onto
    SO(3) after each substep.  Returns ``(g, A_tilde)`` with A_tilde the
    transformed connection, whose radial component vanishes to O(h).
    """
    A = _as_lie(A)
    if A.degree != 1:
        raise DegreeError("exponential gauge needs a connection 1-form")
    K = A.complex
    c = np.asarray(center, dtype=float)
    node_index(K, c)
    X = K.nodes().reshape(-1, K.n)
    y = X - c
    h = np.asarray(K.spacing)
    steps = max(1, oversample * int(np.ceil(np.max(np.abs(y) / h) - 1e-9)))
    interps = connection_interpolators(A)
    R = np.broadcast_to(np.eye(3), (X.shape[0], 3, 3)).copy()
    dt = 1.0 / steps
    for k in range(steps):
        pts = c + (k + 0.5) * dt * y
        a = sum(y[:, i : i + 1] * interps[i](pts) for i in range(K.n))
        step = Rotation.from_rotvec(a * dt).as_matrix()
        R = R @ step
        drift = np.max(np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)))
        if not np.isfinite(drift) or drift > 1e-6:
            raise TransportError(f"radial transport left SO(3) (drift {drift:.2e})")
        R = project_to_so3(R)
    g = GaugeField(K, R.reshape(K.node_shape + (3, 3)))
    return g, gauge_transform_connection(A, g)


def node_vectors(A: FormField):
    """Connection components interpolated to nodes: array node_shape + (n, 3)."""
    A = _as_lie(A)
    K = A.complex
    comps = [
        (K.node_interpolation((i,)) @ A.coeffs[K.component_slice((i,))]).reshape(K.node_shape + (3,))
        for i in range(K.n)
    ]
    return np.stack(comps, axis=-2)


def radial_gauge_report(A_tilde: FormField, F: FormField, center):
    """Check |A~(x)| <= 1/2 |x| sup_{|y|<=|x|} |F(y)| on nodes of the inscribed ball.

    Returns a dict with the maximum excess of the left side over the right
    side, the value at the center, and the largest radial component.
    """
    K = A_tilde.complex
    c = np.asarray(center, dtype=float)
    R = K.inscribed_radius(c)
    vec = node_vectors(A_tilde).reshape(-1, K.n, 3)
    X = K.nodes().reshape(-1, K.n) - c
    r = np.linalg.norm(X, axis=1)
    inside = r <= R + 1e-12
    normA = np.sqrt(np.sum(vec**2, axis=(1, 2)))
    normF = np.sqrt(pointwise_Q(F).ravel())
    order = np.argsort(r, kind="stable")
    supF = np.empty_like(normF)
    supF[order] = np.maximum.accumulate(normF[order])
    # ties in |x| share the sup over their whole shell
    rs = r[order]
    sups = supF[order]
    _, first = np.unique(rs, return_index=True)
    last = np.append(first[1:], len(rs)) - 1
    for f, l in zip(first, last):
        sups[f : l + 1] = sups[l]
    supF[order] = sups
    bound = 0.5 * r * supF
    excess = normA - bound
    unit = np.divide(X, r[:, None], out=np.zeros_like(X), where=r[:, None] > 0)
    radial = np.linalg.norm(np.einsum("ki,kia->ka", unit, vec), axis=1)
    ic = node_index(K, c)
    flat_c = np.ravel_multi_index(ic, K.node_shape)
    return {
        "max_excess": float(np.max(excess[inside])),
        "center_norm": float(normA[flat_c]),
        "max_radial": float(np.max(radial[inside])),
        "max_norm": float(np.max(normA[inside])),
        "h": float(max(K.spacing)),
    }
