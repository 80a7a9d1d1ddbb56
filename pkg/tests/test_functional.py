import numpy as np
import pytest

from pgpkit.direct import fit_functional_direct
from pgpkit.errors import InputError
from pgpkit.functional import (
    CurveSample,
    DegenerateBasisError,
    FunctionBasis,
    NaturalCubicSplineBasis,
    basis_gram,
    functional_gram_matrix,
    functional_kernel,
    principal_band,
    project_curve,
    project_curves,
    reconstruct,
    rescale_grid,
)
from pgpkit.kernels import KernelSpec, cross, diag, functional_gram_for, gram
from pgpkit.pgpda import ScreeParams, fit

LEGENDRE = FunctionBasis([lambda t: np.ones_like(t), lambda t: np.sqrt(3) * (2 * t - 1)])


def sinusoids(rng, n_per=20, m=120):
    t = np.linspace(0, 1, m)
    curves, labels = [], []
    for c, (f, a) in enumerate([(1.0, 1.0), (2.0, 0.6)]):
        for _ in range(n_per):
            amp = a * (1 + 0.3 * rng.normal())
            curves.append(amp * np.sin(2 * np.pi * f * t + 0.3 * rng.normal()) + 0.1 * rng.normal(size=m))
            labels.append(c)
    return t, np.array(curves), np.array(labels)


def test_orthonormal_basis_identity():
    np.testing.assert_allclose(basis_gram(LEGENDRE, 2001).B, np.eye(2), atol=1e-6)


def test_constant_basis():
    B = basis_gram(FunctionBasis([lambda t: np.ones_like(t)]), 101).B
    np.testing.assert_allclose(B, [[1.0]], atol=1e-15)


def test_spline_gram_converges():
    basis = NaturalCubicSplineBasis(20)
    a = basis_gram(basis, 4001).B
    b = basis_gram(basis, 8001).B
    np.testing.assert_array_equal(a, a.T)
    assert np.abs(a - b).max() / np.abs(b).max() < 1e-5
    assert np.isfinite(np.linalg.cond(a))


def test_spline_basis_is_natural():
    basis = NaturalCubicSplineBasis(8)
    d2 = basis.second_derivative(np.array([0.0, 1.0]))
    np.testing.assert_allclose(d2, 0.0, atol=1e-10)
    np.testing.assert_allclose(basis(basis.knots), np.eye(8), atol=1e-12)


def test_duplicate_functions_are_degenerate():
    f = lambda t: t  # noqa: E731
    with pytest.raises(DegenerateBasisError):
        basis_gram(FunctionBasis([f, f]), 201)
    with pytest.raises(InputError):
        basis_gram(LEGENDRE, 50)


def test_projection_cases():
    bg = basis_gram(LEGENDRE, 4001)
    t = np.linspace(0, 1, 400)
    np.testing.assert_allclose(project_curve(CurveSample(t, np.zeros_like(t)), bg), 0.0)
    np.testing.assert_allclose(project_curve(CurveSample(t, np.ones_like(t)), bg), [1, 0], atol=1e-5)


def test_projection_of_spline_combination():
    basis = NaturalCubicSplineBasis(10)
    bg = basis_gram(basis, 4001)
    t = np.linspace(0, 1, 2001)
    coef = np.zeros(10)
    coef[:2] = [2, 3]
    x = reconstruct(coef, basis, t)
    np.testing.assert_allclose(project_curves(t, x, bg)[0], bg.B @ coef, atol=1e-5)


def test_projection_input_checks():
    bg = basis_gram(LEGENDRE, 201)
    with pytest.raises(InputError):
        project_curves(np.array([0, 0.5, 1.0]), np.ones(3), bg)
    with pytest.raises(InputError):
        project_curves(np.linspace(0.2, 1, 10), np.ones(10), bg)
    with pytest.raises(InputError):
        CurveSample(np.array([0.0, 0.5, 0.4]), np.ones(3))


def test_rescale_grid():
    np.testing.assert_allclose(rescale_grid(np.arange(1, 366))[[0, -1]], [0, 1])


def test_kernel_values(rng):
    bg = basis_gram(LEGENDRE, 4001)
    a, b = rng.normal(size=2), rng.normal(size=2)
    assert functional_kernel(a, b, bg) == pytest.approx(a @ b, rel=1e-5)
    scalar = basis_gram(FunctionBasis([lambda t: 2 * np.ones_like(t)]), 101)
    assert functional_kernel(np.array([1.0]), np.array([1.0]), scalar) == pytest.approx(0.25)


def test_functional_gram_psd(rng):
    bg = functional_gram_for(KernelSpec.functional(12))
    G = rng.normal(size=(30, 12))
    K = functional_gram_matrix(G, bg)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.diag(K).max()


@pytest.mark.parametrize("model", ["M0", "M2", "M4", "M6"])
def test_kernel_path_matches_basis_covariance_path(rng, model):
    t, X, y = sinusoids(rng)
    spec = KernelSpec.functional(15)
    bg = functional_gram_for(spec)
    G = project_curves(t, X.T, bg)
    scree = ScreeParams(tau=0.2)
    km = fit(gram(spec, G), y, model, scree)
    dm = fit_functional_direct(G, y, bg.B, model, scree)
    _, Xt, _ = sinusoids(np.random.default_rng(9), n_per=5)
    Gt = project_curves(t, Xt.T, bg)
    a = km.score_rows(cross(spec, Gt, G), diag(spec, Gt))
    b = dm.score(Gt)
    np.testing.assert_array_equal(a.argmin(1), b.argmin(1))
    assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)) < 1e-6


def test_principal_band(rng):
    t, X, y = sinusoids(rng, n_per=15)
    spec = KernelSpec.functional(15)
    bg = functional_gram_for(spec)
    basis = NaturalCubicSplineBasis(15)
    G = project_curves(t, X.T, bg)
    model = fit(gram(spec, G), y, "M0", ScreeParams(tau=0.2))
    tt, mean, plus, minus = principal_band(model, G, bg, basis, 0, 1)
    assert tt.shape == (365,)
    # the mean is the reconstruction of the class mean projection coefficients
    coef = np.linalg.solve(bg.B, G[y == 0].mean(0))
    np.testing.assert_allclose(mean, reconstruct(coef, basis, tt), atol=1e-8)
    # half-width 2 sqrt(var) |q(t)| with q unit-norm in L2
    c = model.classes[0]
    half = (plus - minus) / 2
    q = half / (2 * np.sqrt(c.variances[0]))
    fine = np.linspace(0, 1, 365)
    assert np.trapezoid(q ** 2, fine) == pytest.approx(1.0, rel=1e-2)
    np.testing.assert_allclose(plus + minus, 2 * mean, atol=1e-10)
    with pytest.raises(InputError):
        principal_band(model, G, bg, basis, 0, c.d + 1)


def test_band_collapses_for_single_curve(rng):
    t, X, y = sinusoids(rng, n_per=6)
    y = y.copy()
    y[0] = 5  # a one-curve class
    spec = KernelSpec.functional(10)
    bg = functional_gram_for(spec)
    basis = NaturalCubicSplineBasis(10)
    G = project_curves(t, X.T, bg)
    with pytest.warns(UserWarning):
        model = fit(gram(spec, G), y, "M0", ScreeParams(tau=0.2))
    i = model.labels.index(5)
    tt, mean, plus, minus = principal_band(model, G, bg, basis, i, 1)
    np.testing.assert_array_equal(plus, mean)
    np.testing.assert_array_equal(minus, mean)
    np.testing.assert_allclose(mean, reconstruct(np.linalg.solve(bg.B, G[0]), basis, tt), atol=1e-8)
