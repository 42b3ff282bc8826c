"""Stationary points of the nonlinear Hodge energy in a fixed cohomology class.

The unknown is w = w0 + d alpha with alpha a (q-1)-cochain vanishing on the
boundary of the box, so d w = 0 holds by construction and w0 carries all
inhomogeneous tangential data.  Each step freezes rho at the current Q,
solves the weighted linear Hodge problem for the correction of alpha by
preconditioned conjugate gradients (for q = 2 the null space d(beta) of the
potential is removed by a grad-div term that leaves d alpha unchanged), and takes a damped step whose length is
cut back until the energy decreases and max Q stays below
``q_margin * q_sonic``.

For rho' <= 0 the integrated density e is concave, so the frozen-coefficient
step is a majorize-minimize step and the energy decreases monotonically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from nlhodge.errors import ConvergenceError, DegreeError, SubsonicViolationError
from nlhodge.forms import (
    CubicalComplex,
    FormField,
    cell_Q,
    codifferential,
    energy,
    exterior_derivative,
    exterior_derivative_scale,
    face_density,
    norm,
)


@dataclass
class BoundaryProblem:
    """Data of one abelian boundary value problem.

    ``omega0`` must be closed.  ``alpha0`` optionally seeds the potential;
    its boundary values are ignored.
    """

    omega0: FormField
    model: object
    tol: float = 1e-10
    max_iter: int = 200
    damping: float = 1.0
    q_margin: float = 0.98
    cg_rtol: float = 1e-6
    alpha0: FormField | None = None

    def __post_init__(self):
        if self.omega0.degree not in (1, 2):
            raise DegreeError(f"solver handles degrees 1 and 2, got {self.omega0.degree}")
        if self.omega0.fiber is not None:
            raise DegreeError("solver handles real-valued forms only")
        if not 0.0 < self.q_margin <= 1.0:
            raise ValueError("q_margin must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.omega0.degree < self.complex.n:
            res = closedness_residual(self.omega0, relative=True)
            if res > 1e-10:
                raise ValueError(f"omega0 is not closed (relative |d omega0| = {res:.3e})")

    @property
    def complex(self) -> CubicalComplex:
        return self.omega0.complex

    @property
    def degree(self) -> int:
        return self.omega0.degree

    @property
    def q_limit(self) -> float:
        return self.q_margin * self.model.q_sonic


@dataclass
class IterationRecord:
    iter: int
    energy: float
    el_residual: float
    max_Q: float
    step: float = field(default=0.0)


def el_residual(f: FormField, model, relative: bool = False) -> float:
    """Interior norm of delta(rho(Q) w), the discrete weak Euler-Lagrange residual.

    With ``relative=True`` the value is divided by the weighted norm of
    rho(Q) w, which is what the solver's stopping test uses.
    """
    if f.degree < 1:
        raise DegreeError("el_residual needs a form of degree >= 1")
    flux = f.with_coeffs(_times(face_density(f, model), f.coeffs))
    r = norm(codifferential(flux), mask=f.complex.interior_mask(f.degree - 1))
    if not relative:
        return r
    denom = norm(flux)
    return 0.0 if denom == 0.0 else r / denom


def closedness_residual(f: FormField, relative: bool = False) -> float:
    """Weighted norm of d w; ``relative`` divides by the norm of |D||w|."""
    df = exterior_derivative(f)
    r = norm(df)
    if not relative:
        return r
    scale = norm(df.with_coeffs(exterior_derivative_scale(f)))
    return 0.0 if scale == 0.0 else r / scale


def _times(w, coeffs):
    return w[:, None] * coeffs if coeffs.ndim == 2 else w * coeffs


def solve_stationary(problem: BoundaryProblem, history: list | None = None) -> FormField:
    """Damped frozen-coefficient iteration for delta(rho(Q) w) = 0, d w = 0.

    Appends one :class:`IterationRecord` per iteration to ``history`` when
    given.  Raises :class:`ConvergenceError` after ``max_iter`` iterations
    and :class:`SubsonicViolationError` when no admissible step exists.
    """
    K = problem.complex
    q = problem.degree
    model = problem.model
    mask = K.interior_mask(q - 1)
    D = K.d_matrix(q - 1)[:, mask]
    Wq = K.weights(q)
    Wp = K.weights(q - 1)[mask]
    gauge_term = None
    if q >= 2:
        # D0 S D0^T vanishes on range(D^T) and is invertible on null(D) = range(D0),
        # so adding it makes the system definite without changing the solution
        mask0 = K.interior_mask(q - 2)
        D0 = K.d_matrix(q - 2)[mask][:, mask0]
        gauge_term = (D0 @ sp.diags(K.weights(q - 2)[mask0]) @ D0.T).tocsr()

    omega = problem.omega0.copy()
    if problem.alpha0 is not None:
        a = problem.alpha0.coeffs.copy()
        a[~mask] = 0.0
        omega = omega.with_coeffs(omega.coeffs + K.d_matrix(q - 1) @ a)

    q_limit = problem.q_limit
    maxQ = float(np.max(cell_Q(omega)))
    if maxQ > q_limit:
        raise SubsonicViolationError(
            f"initial max Q = {maxQ:.6g} exceeds margin * q_sonic = {q_limit:.6g}"
        )
    E = energy(omega, model)
    rel = math.inf
    for it in range(problem.max_iter + 1):
        rho_bar = face_density(omega, model)
        flux = rho_bar * omega.coeffs
        grad = D.T @ (Wq * flux)
        res = float(np.sqrt(np.sum(grad**2 / Wp)))
        denom = float(np.sqrt(np.sum(Wq * flux**2)))
        rel = 0.0 if denom == 0.0 else res / denom
        if history is not None:
            history.append(IterationRecord(it, E, res, maxQ))
        if rel <= problem.tol or it == problem.max_iter:
            break

        A = (D.T @ sp.diags(Wq * rho_bar) @ D).tocsr()
        if gauge_term is not None:
            A = A + float(np.mean(rho_bar)) * gauge_term
        diag = A.diagonal()
        precond = spla.LinearOperator(A.shape, matvec=lambda x: x / diag, dtype=float)
        dalpha, info = spla.cg(A, -grad, rtol=problem.cg_rtol, atol=0.0, M=precond,
                               maxiter=20 * A.shape[0])
        if info < 0:
            raise ConvergenceError("inner conjugate-gradient solve broke down", rel, it)
        domega = D @ dalpha

        theta = problem.damping
        slack = 1e-12 * max(abs(E), 1.0)
        while True:
            cand = omega.with_coeffs(omega.coeffs + theta * domega)
            cq = cell_Q(cand)
            cmax = float(np.max(cq))
            if cmax <= q_limit:
                cE = float(K.cell_volume * np.sum(model.e(cq)))
                if cE <= E + slack:
                    break
            theta *= 0.5
            if theta < 1e-10:
                if cmax > q_limit:
                    raise SubsonicViolationError(
                        f"damping cannot keep max Q below {q_limit:.6g} (iteration {it})"
                    )
                raise ConvergenceError(
                    f"line search found no descent step at iteration {it}", rel, it
                )
        if history is not None:
            history[-1].step = theta
        omega, E, maxQ = cand, cE, cmax
    if rel > problem.tol:
        raise ConvergenceError(
            f"no convergence after {problem.max_iter} iterations "
            f"(relative residual {rel:.3e} > {problem.tol:.1e})",
            rel,
            problem.max_iter,
        )
    return omega


def write_convergence_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "energy", "el_residual", "max_Q"])
        for rec in history:
            w.writerow([rec.iter, repr(rec.energy), repr(rec.el_residual), repr(rec.max_Q)])
