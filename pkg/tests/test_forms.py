import math

import numpy as np
import pytest
from scipy.special import comb

from nlhodge.catalog import harmonic_quadratic, random_cochain, uniform
from nlhodge.density import DensityModel
from nlhodge.errors import DegreeError, GeometryError, ShapeMismatchError
from nlhodge.forms import (
    CubicalComplex,
    FormField,
    ball_energy,
    cell_Q,
    codifferential,
    energy,
    exterior_derivative,
    inner_product,
    pointwise_Q,
    sample_form,
    sample_potential,
)

CONST = DensityModel("constant")


def _grid(n, N, seed=0):
    rng = np.random.default_rng(seed)
    ext = [(float(a), float(a + L)) for a, L in zip(rng.uniform(-1, 0, n), rng.uniform(0.5, 2, n))]
    return CubicalComplex(ext, list(rng.integers(2, N + 1, n)))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_cell_counts(n):
    K = _grid(n, 4)
    nodes = [r + 1 for r in K.resolution]
    for q in range(n + 1):
        total = 0
        for S in K.components(q):
            total += math.prod(K.resolution[i] if i in S else nodes[i] for i in range(n))
        assert K.num_cells(q) == total
        assert len(K.components(q)) == comb(n, q, exact=True)
    assert K.cell_volume == pytest.approx(math.prod(K.spacing))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_dd_is_zero(n):
    K = _grid(n, 5 if n < 5 else 3, seed=n)
    rng = np.random.default_rng(n)
    for q in range(n - 1):
        f = random_cochain(K, q, rng)
        ddf = exterior_derivative(exterior_derivative(f))
        scale = np.max(abs(K.d_matrix(q + 1)) @ (abs(K.d_matrix(q)) @ np.abs(f.coeffs)))
        assert np.max(np.abs(ddf.coeffs)) <= 1e-14 * scale


@pytest.mark.parametrize("n", [2, 3, 4])
def test_adjointness_random(n):
    K = _grid(n, 5, seed=10 + n)
    rng = np.random.default_rng(n)
    for q in range(n):
        a = random_cochain(K, q, rng)
        b = random_cochain(K, q + 1, rng)
        lhs = inner_product(exterior_derivative(a), b)
        rhs = inner_product(a, codifferential(b))
        scale = np.sqrt(inner_product(exterior_derivative(a), exterior_derivative(a)) * inner_product(b, b))
        assert abs(lhs - rhs) <= 1e-12 * scale


def test_adjointness_compact_support_8cubed():
    K = CubicalComplex.cube(3, 1.0, 8)
    rng = np.random.default_rng(3)
    a = FormField(K, 0, rng.standard_normal(K.num_cells(0)) * K.interior_mask(0))
    b = random_cochain(K, 1, rng)
    assert abs(inner_product(exterior_derivative(a), b) - inner_product(a, codifferential(b))) < 1e-12 * 100


def test_linear_potential_gives_unit_edges():
    K = _grid(3, 6, seed=4)
    f = exterior_derivative(sample_potential(K, lambda X: X[..., 0]))
    assert np.allclose(f.component((0,)), 1.0, atol=1e-13)
    assert np.max(np.abs(f.component((1,)))) == 0.0
    assert np.max(np.abs(f.component((2,)))) == 0.0


def test_hand_computed_plaquettes():
    # A = x^1 dx^2 on a 4^3 grid of [0,1]^3: every (0,1)-plaquette equals 1
    K = CubicalComplex([(0, 1)] * 3, [4, 4, 4])
    A = sample_form(K, 1, lambda S, X: X[..., 0] if S == (1,) else 0 * X[..., 0])
    F = exterior_derivative(A)
    assert np.allclose(F.component((0, 1)), 1.0, atol=1e-14)
    assert np.max(np.abs(F.component((0, 2)))) < 1e-14
    assert np.max(np.abs(F.component((1, 2)))) < 1e-14


def test_degree_errors():
    K = CubicalComplex.cube(2, 1.0, 3)
    with pytest.raises(DegreeError):
        exterior_derivative(FormField(K, 2))
    with pytest.raises(DegreeError):
        codifferential(FormField(K, 0))
    with pytest.raises(ShapeMismatchError):
        FormField(K, 1, np.zeros(5))
    with pytest.raises(ShapeMismatchError):
        inner_product(FormField(K, 1), FormField(CubicalComplex.cube(2, 1.0, 4), 1))


def test_codifferential_of_harmonic_gradient():
    errs = []
    for N in (16, 32):
        K = CubicalComplex.cube(3, 1.0, N)
        w = harmonic_quadratic(K)
        r = codifferential(w).coeffs[K.interior_mask(0)]
        errs.append(np.max(np.abs(r)))
    # exact Laplacian of a quadratic: interior residual vanishes to rounding
    assert max(errs) < 1e-10


def test_inner_products_on_unit_cube():
    for N in (3, 7, 10):
        K = CubicalComplex([(0, 1)] * 3, [N] * 3)
        dx1 = uniform(K, 1)
        assert inner_product(dx1, dx1) == pytest.approx(1.0, abs=1e-12)
        dx2 = FormField(K, 1)
        dx2.component((1,))[...] = 1.0
        assert inner_product(dx1, dx2) == 0.0
        assert inner_product(FormField(K, 1), FormField(K, 1)) == 0.0


def test_pointwise_Q_examples():
    K = CubicalComplex.cube(3, 1.0, 6)
    assert np.all(pointwise_Q(FormField(K, 2)) == 0)
    assert np.allclose(pointwise_Q(uniform(K, 1)), 1.0)
    for N in (8, 16):
        K = CubicalComplex.cube(3, 1.0, N)
        X = K.nodes()
        exact = 4 * X[..., 0] ** 2 + X[..., 1] ** 2 + X[..., 2] ** 2
        assert np.max(np.abs(pointwise_Q(harmonic_quadratic(K)) - exact)) <= 1e-12
    errs = []
    for N in (8, 16, 32):
        K = CubicalComplex.cube(3, 1.0, N)
        X = K.nodes()
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        f = exterior_derivative(sample_potential(K, lambda P: np.sin(P[..., 0]) * np.cos(P[..., 1]) + P[..., 2] ** 3))
        exact = (np.cos(x) * np.cos(y)) ** 2 + (np.sin(x) * np.sin(y)) ** 2 + 9 * z**4
        errs.append(np.max(np.abs(pointwise_Q(f) - exact)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_cell_Q_nonnegative_random():
    K = CubicalComplex.cube(3, 1.0, 5)
    f = random_cochain(K, 2, np.random.default_rng(0))
    assert np.all(cell_Q(f) >= 0) and np.all(pointwise_Q(f) >= 0)


@pytest.mark.parametrize("quad", ["center", "corners", 3])
def test_ball_energy_analytic(quad):
    K = CubicalComplex.cube(3, 1.25, 64)
    u, hq = uniform(K, 1), harmonic_quadratic(K)
    assert ball_energy(u, CONST, (0, 0, 0), 1.0, quad) == pytest.approx(4 * math.pi / 3, rel=0.01)
    assert ball_energy(u, CONST, (0, 0, 0), 0.5, quad) == pytest.approx(4 * math.pi / 3 / 8, rel=0.01)
    assert ball_energy(hq, CONST, (0, 0, 0), 1.0, quad) == pytest.approx(8 * math.pi / 5, rel=0.01)
    assert ball_energy(hq, CONST, (0, 0, 0), 0.5, quad) == pytest.approx(8 * math.pi / 5 / 32, rel=0.01)


def test_ball_energy_converges():
    Ns = (8, 16, 32, 64)
    for build, exact in ((uniform, 4 * math.pi / 3), (harmonic_quadratic, 8 * math.pi / 5)):
        errs = [abs(ball_energy(build(CubicalComplex.cube(3, 1.25, N)), CONST, (0, 0, 0), 1.0) - exact)
                for N in Ns]
        order = -np.polyfit(np.log(Ns), np.log(errs), 1)[0]
        assert order >= 1.0


def test_ball_energy_monotone_and_geometry():
    K = CubicalComplex.cube(3, 1.0, 12)
    f = random_cochain(K, 1, np.random.default_rng(2)) * 0.3
    vals = [ball_energy(f, CONST, (0, 0, 0), r) for r in np.linspace(0.1, 1.0, 10)]
    assert np.all(np.diff(vals) >= 0)
    assert ball_energy(FormField(K, 1), CONST, (0, 0, 0), 0.7) == 0.0
    with pytest.raises(GeometryError):
        ball_energy(f, CONST, (0.5, 0, 0), 0.6)
    assert energy(uniform(K, 1, 0.5), CONST) == pytest.approx(0.25 * 8)
