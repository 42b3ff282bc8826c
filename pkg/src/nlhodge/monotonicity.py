"""Radial energy profiles, conformal monotonicity, inner variations, cutoffs.

Everything here reads fields produced elsewhere (analytic samples or solver
outputs) and evaluates integrals by midpoint quadrature on the n-cells,
using the same cell Q as the discrete energy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from nlhodge.errors import DimensionError, GeometryError
from nlhodge.forms import FormField, ball_energy, cell_Q, center_values, pointwise_Q

LIOUVILLE_FORCED = "Liouville-forced (Q = 0 expected)"
NO_CONCLUSION = "no conclusion"


def require_dimension(n: int, q: int) -> None:
    if not n > 2 * q:
        raise DimensionError(f"monotonicity needs n > 2q; got n={n}, q={q}")


# -- profiles ------------------------------------------------------------------------


@dataclass
class RadialEnergyProfile:
    center: tuple
    radii: np.ndarray
    energies: np.ndarray
    q: int
    n: int
    model_id: str = ""
    max_Q: float | None = None

    def __post_init__(self):
        self.center = tuple(float(c) for c in self.center)
        self.radii = np.asarray(self.radii, dtype=float)
        self.energies = np.asarray(self.energies, dtype=float)
        if self.radii.shape != self.energies.shape or self.radii.ndim != 1:
            raise ValueError("radii and energies must be 1-D arrays of equal length")
        if np.any(self.radii <= 0) or np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be positive and strictly increasing")
        if np.any(self.energies < 0):
            raise ValueError("energies must be nonnegative")

    @classmethod
    def synthetic(cls, radii, law, q, n, model_id="synthetic"):
        """Profile from an analytic law E(r), no field attached."""
        radii = np.asarray(radii, dtype=float)
        return cls((0.0,) * n, radii, np.asarray(law(radii), dtype=float), q, n, model_id)


def radial_profile(f: FormField, model, center, radii, quadrature="center") -> RadialEnergyProfile:
    """E restricted to B_r(center) for every r in ``radii``."""
    K = f.complex
    radii = np.asarray(radii, dtype=float)
    for r in radii:
        K.check_ball(center, r)
    energies = [ball_energy(f, model, center, r, quadrature) for r in radii]
    X = K.nodes() - np.asarray(center, dtype=float)
    inside = np.sum(X**2, axis=-1) <= radii[-1] ** 2
    Qn = pointwise_Q(f)
    max_Q = float(np.max(Qn[inside])) if np.any(inside) else 0.0
    return RadialEnergyProfile(
        tuple(center), radii, np.array(energies), f.degree, K.n, getattr(model, "name", ""), max_Q
    )


def conformal_energy(p: RadialEnergyProfile) -> np.ndarray:
    """r^(2q - n) E|B_r for each sampled radius."""
    require_dimension(p.n, p.q)
    return p.radii ** (2 * p.q - p.n) * p.energies


@dataclass
class MonotonicityReport:
    passed: bool
    tol: float
    conformal: np.ndarray
    max_violation: float
    violation_pair: tuple | None
    required_slack: float
    flags: np.ndarray = field(repr=False, default=None)


def monotonicity_check(p: RadialEnergyProfile, tol: float = 0.0) -> MonotonicityReport:
    """Conformal energy must be nondecreasing up to relative slack ``tol``.

    A pair r_i < r_j violates when c_j < (1 - tol) c_i.  ``max_violation``
    is the largest drop c_i - c_j over all such ordered pairs and
    ``required_slack`` the smallest tol for which the check would pass.
    """
    c = conformal_energy(p)
    best, pair, slack = 0.0, None, 0.0
    flags = np.ones(len(c), dtype=bool)
    ok = True
    for i, j in itertools.combinations(range(len(c)), 2):
        drop = c[i] - c[j]
        if drop > best:
            best, pair = float(drop), (float(p.radii[i]), float(p.radii[j]))
        if drop > 0 and c[i] > 0:
            slack = max(slack, drop / c[i])
        if c[j] < (1.0 - tol) * c[i] - 1e-300:
            ok = False
            flags[j] = False
    return MonotonicityReport(ok, tol, c, best, pair, float(slack), flags)


# -- inner variations ----------------------------------------------------------------


@dataclass(frozen=True)
class VariationSpec:
    """Radial bump: 1 on [0, tau], cubic smoothstep down to 0 on [tau, tau + delta]."""

    tau: float
    delta: float

    def __post_init__(self):
        if not (self.tau > 0 and self.delta > 0):
            raise ValueError("tau and delta must be positive")

    @property
    def support(self) -> float:
        return self.tau + self.delta

    def eta(self, r):
        t = np.clip((np.asarray(r, dtype=float) - self.tau) / self.delta, 0.0, 1.0)
        return 1.0 - t * t * (3.0 - 2.0 * t)

    def eta_prime(self, r):
        t = np.clip((np.asarray(r, dtype=float) - self.tau) / self.delta, 0.0, 1.0)
        return -6.0 * t * (1.0 - t) / self.delta


def radial_contraction_sq(f: FormField, center):
    """|d/dr -| w|^2 at n-cell centers; defined as 0 where r = 0."""
    K = f.complex
    X = K.top_centers() - np.asarray(center, dtype=float)
    r = np.sqrt(np.sum(X**2, axis=-1))
    u = np.divide(X, r[..., None], out=np.zeros_like(X), where=r[..., None] > 0)
    vals = center_values(f)
    q = f.degree
    total = np.zeros(K.top_shape)
    for J in itertools.combinations(range(K.n), q - 1):
        acc = 0.0
        for i in range(K.n):
            if i in J:
                continue
            S = tuple(sorted(J + (i,)))
            sign = -1.0 if S.index(i) % 2 else 1.0
            ui = u[..., i] if f.fiber is None else u[..., i, None]
            acc = acc + sign * ui * vals[S]
        sq = acc**2 if f.fiber is None else np.sum(acc**2, axis=-1)
        total += sq
    return total, r


def inner_variation_terms(f: FormField, model, spec: VariationSpec, center):
    """Both sides of the first-variation identity for xi = eta(r) r d/dr.

    lhs          = int e(Q) (n eta + r eta')
    rhs_Q        = 2q int Q rho(Q) eta
    rhs_radial   = 2q int rho(Q) r eta' |d/dr -| w|^2
    """
    K = f.complex
    if spec.support > K.inscribed_radius(center) + 1e-12:
        raise GeometryError(
            f"variation support {spec.support} exceeds the inscribed radius "
            f"{K.inscribed_radius(center)}"
        )
    q = f.degree
    Q = cell_Q(f)
    rad2, r = radial_contraction_sq(f, center)
    eta, deta = spec.eta(r), spec.eta_prime(r)
    vol = K.cell_volume
    rho = model.rho(Q)
    lhs = vol * np.sum(model.e(Q) * (K.n * eta + r * deta))
    rhs_Q = 2 * q * vol * np.sum(Q * rho * eta)
    rhs_radial = 2 * q * vol * np.sum(rho * r * deta * rad2)
    int_e_eta = vol * np.sum(model.e(Q) * eta)
    return {
        "lhs": float(lhs),
        "rhs_Q": float(rhs_Q),
        "rhs_radial": float(rhs_radial),
        "rhs": float(rhs_Q + rhs_radial),
        "int_e_eta": float(int_e_eta),
    }


def inner_variation_residual(f: FormField, model, spec: VariationSpec, center, floor=1e-300) -> float:
    """|lhs - rhs| / max(|lhs|, floor); zero when both sides vanish."""
    t = inner_variation_terms(f, model, spec, center)
    diff = abs(t["lhs"] - t["rhs"])
    if diff == 0.0:
        return 0.0
    return diff / max(abs(t["lhs"]), floor)


def variation_inequality_gap(f: FormField, model, spec: VariationSpec, center) -> float:
    """Right side minus left side of

        int e(Q) ((n - 2q) eta + r eta') <= 2q int rho(Q) r eta' |d/dr -| w|^2,

    which follows from the identity and Q rho(Q) <= e(Q); nonnegative up to
    discretization for stationary fields.
    """
    t = inner_variation_terms(f, model, spec, center)
    q = f.degree
    left = t["lhs"] - 2 * q * t["int_e_eta"]
    return t["rhs_radial"] - left


# -- Liouville growth test -------------------------------------------------------------


@dataclass
class LiouvilleVerdict:
    fitted_exponent: float
    k: float
    exponent_gap: float
    verdict: str
    consistent: bool | None
    max_Q: float | None

    @property
    def forced(self) -> bool:
        return self.verdict == LIOUVILLE_FORCED


def fit_growth_exponent(radii, energies, rel_floor=1e-14) -> float:
    """OLS slope of log E against log r over radii with E above rel_floor * max E.

    Returns -inf when fewer than two samples survive (E vanishes).
    """
    radii = np.asarray(radii, dtype=float)
    energies = np.asarray(energies, dtype=float)
    scale = float(np.max(energies)) if energies.size else 0.0
    keep = energies > rel_floor * scale if scale > 0 else np.zeros_like(energies, dtype=bool)
    if np.count_nonzero(keep) < 2:
        return -math.inf
    x, y = np.log(radii[keep]), np.log(energies[keep])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def liouville_check(p: RadialEnergyProfile, k: float, q_tol: float = 1e-12,
                    fit_tol: float = 1e-9) -> LiouvilleVerdict:
    """Growth test: E|B_r <= C r^k with 2q + k - n < 0 forces Q = 0.

    ``consistent`` reports whether the field attached to the profile really
    has max Q <= q_tol on the largest ball (None for synthetic profiles).
    """
    require_dimension(p.n, p.q)
    if k < 0:
        raise ValueError("growth exponent k must be nonnegative")
    if len(p.radii) < 3:
        raise ValueError("growth fit needs at least 3 radii")
    k_hat = fit_growth_exponent(p.radii, p.energies)
    gap = 2 * p.q + k - p.n
    forced = k_hat <= k + fit_tol and gap < 0
    consistent = None if p.max_Q is None else bool(p.max_Q <= q_tol)
    return LiouvilleVerdict(k_hat, float(k), float(gap), LIOUVILLE_FORCED if forced else NO_CONCLUSION,
                            consistent, p.max_Q)


# -- cutoffs around singular sets -------------------------------------------------------


def unit_ball_volume(p: int) -> float:
    return math.pi ** (p / 2) / math.gamma(p / 2 + 1)


@dataclass(frozen=True)
class CutoffSpec:
    """Cutoff around a compact axis-aligned singular box.

    ``lower == upper`` gives a point.  ``profile="ramp"`` is the annulus
    cutoff zeta = clip((d - sigma)/sigma, 0, 1) (chi = 1 - zeta);
    ``profile="log"`` is the zero-capacity family with eps = eps0 * ratio**nu:
    chi = 1 for d <= eps^2, log(d/eps)/log(eps) up to d = eps, 0 beyond.
    """

    lower: tuple
    upper: tuple | None = None
    profile: str = "ramp"
    sigma: float = 0.1
    nu: int = 0
    eps0: float = 0.3
    ratio: float = 0.5

    def __post_init__(self):
        lower = tuple(float(x) for x in self.lower)
        upper = lower if self.upper is None else tuple(float(x) for x in self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(upper) != len(lower) or any(u < l for l, u in zip(lower, upper)):
            raise ValueError("singular box needs lower <= upper componentwise")
        if self.profile not in ("ramp", "log"):
            raise ValueError(f"unknown cutoff profile {self.profile!r}")
        if self.profile == "ramp" and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.profile == "log" and not (0 < self.eps0 < 1 and 0 < self.ratio < 1):
            raise ValueError("log profile needs 0 < eps0 < 1 and 0 < ratio < 1")
        if self.codimension <= 2:
            raise DimensionError(f"singular set codimension must exceed 2, got {self.codimension}")

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def side_lengths(self):
        return [u - l for l, u in zip(self.lower, self.upper) if u > l]

    @property
    def codimension(self) -> int:
        return self.n - len(self.side_lengths)

    @property
    def midpoint(self):
        return tuple(0.5 * (l + u) for l, u in zip(self.lower, self.upper))

    @property
    def eps(self) -> float:
        return self.eps0 * self.ratio**self.nu

    @property
    def transition(self):
        """Distance interval on which the cutoff varies."""
        if self.profile == "ramp":
            return self.sigma, 2.0 * self.sigma
        return self.eps**2, self.eps

    def distance(self, X):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        gap = np.maximum(np.maximum(lo - X, X - hi), 0.0)
        return np.sqrt(np.sum(gap**2, axis=-1))

    def chi(self, d):
        d = np.asarray(d, dtype=float)
        if self.profile == "ramp":
            return 1.0 - np.clip((d - self.sigma) / self.sigma, 0.0, 1.0)
        e = self.eps
        with np.errstate(divide="ignore"):
            val = np.log(np.maximum(d, 1e-300) / e) / math.log(e)
        return np.clip(val, 0.0, 1.0)

    def chi_prime(self, d):
        """d chi / d(dist); nonzero only on the open transition interval."""
        d = np.asarray(d, dtype=float)
        a, b = self.transition
        inside = (d > a) & (d < b)
        if self.profile == "ramp":
            return np.where(inside, -1.0 / self.sigma, 0.0)
        with np.errstate(divide="ignore"):
            val = 1.0 / (np.maximum(d, 1e-300) * math.log(self.eps))
        return np.where(inside, val, 0.0)

    def max_slope(self) -> float:
        a, _ = self.transition
        return float(abs(self.chi_prime(np.nextafter(a, np.inf))))

    def tube_area(self, d):
        """Area of {dist = d} around the box (derivative of the Steiner polynomial)."""
        L = self.side_lengths
        k = len(L)
        total = 0.0
        for j in range(k + 1):
            ej = sum(math.prod(c) for c in itertools.combinations(L, j))
            p = self.n - j
            total += ej * p * unit_ball_volume(p) * d ** (p - 1)
        return total

    def grad_norm(self, m: float | None = None) -> float:
        """||grad chi||_{L^m} over R^n by the coarea formula (m defaults to the codimension)."""
        m = self.codimension if m is None else m
        a, b = self.transition
        val, _ = quad(lambda d: abs(float(self.chi_prime(d))) ** m * self.tube_area(d), a, b,
                      limit=200, epsabs=0.0, epsrel=1e-12)
        return float(val ** (1.0 / m))


@dataclass
class CutoffTerms:
    grad_norm_Lm: float
    q_norm_dual: float
    annulus_e: float
    annulus_radial: float
    var_e: float
    var_radial: float
    max_slope: float


def _region_fraction(K, dist_fn, a, b, quadrature):
    h = np.asarray(K.spacing)
    Xc = K.top_centers()
    if quadrature == "center":
        offsets = [np.zeros(K.n)]
    else:
        k = int(quadrature)
        ticks = (np.arange(k) + 0.5) / k - 0.5
        offsets = [h * np.array(t) for t in itertools.product(ticks, repeat=K.n)]
    w = np.zeros(K.top_shape)
    for off in offsets:
        d = dist_fn(Xc + off)
        w += (d >= a) & (d < b)
    return w / len(offsets)


def cutoff_terms(f: FormField, model, spec: CutoffSpec, eta: VariationSpec, center=None,
                 quadrature="center") -> CutoffTerms:
    """Quantities bounding the extra terms a cutoff introduces into the variation.

    grad_norm_Lm    ||grad chi||_{L^m}, m the codimension of the singular set
    q_norm_dual     ||Q||_{L^{m/(m-1)}} over the support of eta
    annulus_e       int over the transition region of e(Q) eta
    annulus_radial  int over the transition region of rho(Q) eta |d/dr -| w|^2
    var_e, var_radial  the same integrands weighted by |chi'| r (the terms
                    the cutoff actually adds), midpoint rule at cell centers
    """
    K = f.complex
    if spec.n != K.n:
        raise GeometryError("singular set and complex differ in dimension")
    center = spec.midpoint if center is None else tuple(center)
    if eta.support > K.inscribed_radius(center) + 1e-12:
        raise GeometryError("support of eta leaves the domain")
    corners = np.array(list(itertools.product(*zip(spec.lower, spec.upper))))
    if np.max(np.linalg.norm(corners - np.asarray(center), axis=1)) > eta.tau:
        raise GeometryError("singular set is not inside the plateau of eta")
    a, b = spec.transition
    if b + np.max(np.linalg.norm(corners - np.asarray(center), axis=1)) > eta.support + 1e-12:
        raise GeometryError("cutoff transition region leaves the support of eta")

    m = spec.codimension
    vol = K.cell_volume
    Q = cell_Q(f)
    rad2, r = radial_contraction_sq(f, center)
    eta_c = eta.eta(r)
    e = model.e(Q)
    rho = model.rho(Q)

    support = K.ball_weights(center, eta.support, "center")
    p_dual = m / (m - 1.0)
    q_norm = float((vol * np.sum(support * Q**p_dual)) ** (1.0 / p_dual))

    w = _region_fraction(K, spec.distance, a, b, quadrature)
    annulus_e = float(vol * np.sum(w * e * eta_c))
    annulus_radial = float(vol * np.sum(w * rho * eta_c * rad2))

    d_c = spec.distance(K.top_centers())
    slope = np.abs(spec.chi_prime(d_c))
    var_e = float(vol * np.sum(e * slope * r * eta_c))
    var_radial = float(vol * np.sum(rho * slope * r * eta_c * rad2))
    return CutoffTerms(spec.grad_norm(m), q_norm, annulus_e, annulus_radial, var_e, var_radial,
                       spec.max_slope())


def fit_rate(params, values) -> float:
    """OLS slope of log(values) against log(params)."""
    x, y = np.log(np.asarray(params, float)), np.log(np.asarray(values, float))
    return float(np.polyfit(x, y, 1)[0])
