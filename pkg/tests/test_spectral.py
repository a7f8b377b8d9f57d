import numpy as np
import pytest

from dysonrg import (
    GridSpec,
    ModelParams,
    build_linearization,
    eigen_spectrum,
    exponents_from_spectrum,
    gaussian_density,
    gaussian_fixed_point,
    hermite_G,
)
from dysonrg.errors import NotAFixedPoint


@pytest.fixture(scope="module")
def grid1024():
    return GridSpec(L=10.0, N=1024)


@pytest.fixture(scope="module")
def op125(grid1024):
    params = ModelParams(1.25)
    return params, build_linearization(gaussian_fixed_point(params, grid1024), params)


def test_requires_fixed_point(grid1024):
    params = ModelParams(1.25)
    not_fp = gaussian_density(params.sigma * 1.3, grid1024)
    with pytest.raises(NotAFixedPoint):
        build_linearization(not_fp, params)


def test_apply_to_fixed_point_gives_two(op125):
    params, op = op125
    base = op.base_point
    out = op.apply(base.values)
    err = np.trapezoid(np.abs(out - 2.0 * base.values), dx=base.h)
    assert err < 1e-5


def test_apply_to_first_excited(op125):
    params, op = op125
    base = op.base_point
    f = hermite_G(1, base.nodes(), params) * base.values
    out = op.apply(f)
    lam = 2.0 ** (params.a - 1.0)
    scale = np.trapezoid(np.abs(f), dx=base.h)
    assert np.trapezoid(np.abs(out - lam * f), dx=base.h) / scale < 1e-5


def test_apply_to_zero_function(op125):
    _, op = op125
    out = op.apply(np.zeros(op.base_point.N + 1))
    assert np.all(out == 0.0)


def test_spectrum_matches_formula(op125):
    params, op = op125
    spec = eigen_spectrum(op, 5)
    pred = 2.0 ** (1.0 - (2.0 - params.a) * np.arange(5))
    assert np.max(np.abs(spec.eigenvalues / pred - 1.0)) < 1e-3
    assert np.all(spec.residuals <= 1e-6)


def test_eigenfunctions_match_hermite_family(op125):
    params, op = op125
    base = op.base_point
    s = base.nodes()
    w = base.grid.trapezoid_weights()
    spec = eigen_spectrum(op, 5)
    for j in range(5):
        target = hermite_G(j, s, params) * base.values
        target = target / np.sqrt(np.sum(w * target * target))
        cos = abs(float(np.sum(w * spec.eigenfunctions[j] * target)))
        assert cos > 0.999


def test_spectrum_grid_stability(grid1024):
    params = ModelParams(1.4)
    lam_coarse = eigen_spectrum(
        build_linearization(gaussian_fixed_point(params, grid1024), params), 5
    ).eigenvalues
    fine = GridSpec(L=10.0, N=2048)
    lam_fine = eigen_spectrum(
        build_linearization(gaussian_fixed_point(params, fine), params), 5
    ).eigenvalues
    assert np.max(np.abs(lam_coarse / lam_fine - 1.0)) < 1e-4


def test_spectrum_deterministic(op125):
    _, op = op125
    s1 = eigen_spectrum(op, 4)
    s2 = eigen_spectrum(op, 4)
    assert np.array_equal(s1.eigenvalues, s2.eigenvalues)
    assert np.array_equal(s1.eigenfunctions, s2.eigenfunctions)


def test_eigen_k_validation(op125):
    _, op = op125
    with pytest.raises(ValueError):
        eigen_spectrum(op, 0)
    with pytest.raises(ValueError):
        eigen_spectrum(op, 11)


def test_exponents_classical_consistency():
    # Gaussian-point unstable eigenvalue gives gamma = 1 for any a
    for a in [1.1, 1.25, 1.4]:
        params = ModelParams(a)
        gamma, _ = exponents_from_spectrum(2.0 ** (a - 1.0), params)
        assert gamma == pytest.approx(1.0, rel=1e-12)
    # marginal point with lambda1 = sqrt(2): classical pair (1, 1/2)
    gamma, beta = exponents_from_spectrum(np.sqrt(2.0), ModelParams(1.5))
    assert gamma == pytest.approx(1.0)
    assert beta == pytest.approx(0.5)


def test_exponents_reject_stable_lambda():
    with pytest.raises(ValueError):
        exponents_from_spectrum(1.0, ModelParams(1.55))
    with pytest.raises(ValueError):
        exponents_from_spectrum(0.9, ModelParams(1.55))


def test_epsilon_trend_of_lambda2(default_grid, fp_non_gauss_002, fp_non_gauss_005):
    # (1 - lambda2)/eps is approximately constant across eps
    from dysonrg import find_non_gaussian_fixed_point

    ratios = []
    solutions = {
        0.02: fp_non_gauss_002,
        0.05: fp_non_gauss_005,
        0.08: find_non_gaussian_fixed_point(ModelParams(1.58), default_grid),
    }
    for eps, result in solutions.items():
        params = ModelParams(1.5 + eps)
        op = build_linearization(result.density, params)
        lam2 = float(eigen_spectrum(op, 3).eigenvalues[2])
        assert lam2 < 1.0
        ratios.append((1.0 - lam2) / eps)
    assert max(ratios) / min(ratios) < 1.35
