import math

import numpy as np
import pytest
from numpy.polynomial.hermite import hermval

from dysonrg import (
    GridDensity,
    GridSpec,
    ModelParams,
    gaussian_density,
    hermite_G,
    moments,
    project_to_hermite,
)
from dysonrg.density import HermiteBasis
from dysonrg.errors import GridContainmentError, ProjectionConditionError


def H(n, x):
    c = np.zeros(n + 1)
    c[n] = 1.0
    return hermval(x, c)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("a", [1.1, 1.25, 1.5, 1.75, 1.9])
def test_params_derived_constants(a):
    p = ModelParams(a)
    assert p.kappa == a / 2.0
    assert 0.5 < p.kappa < 1.0
    assert p.sigma == pytest.approx(1.0 - 2.0 ** (1.0 - a))
    assert 0.0 < p.sigma < 1.0
    assert p.epsilon == pytest.approx(a - 1.5)
    assert p.gamma_bare == pytest.approx(math.sqrt(1.0 - 2.0 ** (a - 2.0)))
    # eigenfunction scale carries the kernel-width correction
    assert p.gamma_scale == pytest.approx(p.gamma_bare * math.sqrt(1.0 + 1.0 / p.sigma))


@pytest.mark.parametrize("a", [0.9, 1.0, 2.0, 2.5])
def test_params_rejects_a_outside_window(a):
    with pytest.raises(ValueError):
        ModelParams(a)


def test_block_scale(p15):
    assert p15.block_scale == pytest.approx(2.0 ** 0.25)


# ---------------------------------------------------------------------------
# grid densities
# ---------------------------------------------------------------------------

def test_gaussian_variance(default_grid):
    for tau in [0.1, 0.3, 0.7]:
        p = gaussian_density(tau, default_grid)
        assert moments(p, 2) == pytest.approx(tau, abs=1e-8)


def test_gaussian_containment_boundary():
    # 8*sqrt(0.25) = 4 exactly: the check fires at the boundary
    with pytest.raises(GridContainmentError):
        gaussian_density(0.25, GridSpec(L=4.0, N=512))
    gaussian_density(0.24, GridSpec(L=4.0, N=512))


def test_gaussian_rejects_bad_tau(default_grid):
    with pytest.raises(ValueError):
        gaussian_density(-1.0, default_grid)


def test_moments_normalization_and_odd(fp_gauss_125):
    assert moments(fp_gauss_125, 0) == pytest.approx(1.0, abs=1e-12)
    assert moments(fp_gauss_125, 3) == 0.0
    with pytest.raises(ValueError):
        moments(fp_gauss_125, 8)


def test_gaussian_fourth_moment(default_grid):
    tau = 0.4
    p = gaussian_density(tau, default_grid)
    assert moments(p, 4) == pytest.approx(3.0 * tau * tau, rel=1e-8)


def test_fixed_point_variance_is_sigma(p125, fp_gauss_125):
    assert moments(fp_gauss_125, 2) == pytest.approx(p125.sigma, abs=1e-8)


def test_evenness_exact(fp_gauss_125):
    v = fp_gauss_125.values
    assert np.array_equal(v, v[::-1])


def test_from_values_symmetrizes_and_normalizes(small_grid, rng):
    raw = np.abs(rng.normal(size=small_grid.N + 1)) + 0.1
    p = GridDensity.from_values(small_grid, raw)
    assert np.array_equal(p.values, p.values[::-1])
    assert p.mass() == pytest.approx(1.0, abs=1e-12)


def test_evaluate_matches_gaussian(default_grid, rng):
    tau = 0.3
    p = gaussian_density(tau, default_grid)
    x = rng.uniform(-5, 5, size=200)
    exact = np.exp(-x * x / (2 * tau)) / math.sqrt(2 * math.pi * tau)
    assert np.max(np.abs(p.evaluate(x) - exact)) < 2e-8
    assert p.evaluate(np.array([11.0, -12.0])) == pytest.approx([0.0, 0.0])
    assert p.evaluate(np.array([2.3])) == p.evaluate(np.array([-2.3]))


def test_csv_json_roundtrip(tmp_path, fp_gauss_125):
    csv = tmp_path / "d.csv"
    fp_gauss_125.to_csv(csv)
    back = GridDensity.from_csv(csv)
    assert back.L == fp_gauss_125.L and back.N == fp_gauss_125.N
    assert np.array_equal(back.values, fp_gauss_125.values)

    js = tmp_path / "d.json"
    fp_gauss_125.to_json(js)
    back2 = GridDensity.from_json(js)
    assert np.array_equal(back2.values, fp_gauss_125.values)


# ---------------------------------------------------------------------------
# Hermite family
# ---------------------------------------------------------------------------

def test_hermite_G_lowest(p125):
    s = np.linspace(-3, 3, 41)
    g = p125.gamma_scale
    assert hermite_G(0, s, p125) == pytest.approx(np.ones_like(s))
    assert hermite_G(1, s, p125) == pytest.approx(4 * g * g * s * s - 2.0)
    assert hermite_G(2, 0.0, p125) == pytest.approx(12.0)


def test_hermite_G_degree_limit(p125):
    with pytest.raises(ValueError):
        hermite_G(13, 0.0, p125)


def test_hermite_recurrence():
    # physicists' convention: H_{k+1}(x) = 2 x H_k(x) - 2 k H_{k-1}(x)
    x = np.linspace(-10, 10, 201)
    for k in range(1, 25):
        lhs = H(k + 1, x)
        rhs = 2 * x * H(k, x) - 2 * k * H(k - 1, x)
        scale = np.max(np.abs(lhs)) + 1.0
        assert np.max(np.abs(lhs - rhs)) / scale < 1e-9


def test_hermite_G_uses_scaled_argument(p15):
    s = np.linspace(-2, 2, 17)
    assert hermite_G(3, s, p15) == pytest.approx(H(6, p15.gamma_scale * s))


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def test_project_fixed_point_is_first_basis_element(p125, fp_gauss_125):
    c = project_to_hermite(fp_gauss_125, 8, p125)
    assert c.coeffs[0] == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(c.coeffs[1:])) < 1e-9


def test_projection_round_trip(p125, default_grid, rng):
    basis = HermiteBasis(p125, default_grid, 10)
    c = np.zeros(10)
    c[0] = 1.0
    c[1:5] = 1e-3 * rng.normal(size=4) / basis.scales[1:5]
    f = basis.reconstruct(c)
    assert basis.project(f) == pytest.approx(c, abs=1e-8)


def test_projection_linear_perturbation_readout(p125, fp_gauss_125):
    s = fp_gauss_125.nodes()
    g2 = np.asarray(hermite_G(1, s, p125))
    f = fp_gauss_125.values * (1.0 + 0.01 * g2)
    basis = HermiteBasis(p125, fp_gauss_125.grid, 8)
    c = basis.project(f)
    assert c[1] == pytest.approx(0.01, abs=1e-8)


def test_projection_condition_guard(p125, default_grid):
    basis = HermiteBasis(p125, default_grid, 12)
    assert basis.condition < 1e12
    basis.condition = 1e13
    with pytest.raises(ProjectionConditionError):
        basis.project(np.zeros(default_grid.N + 1))


def test_hermite_coeffs_validation(p125, fp_gauss_125):
    with pytest.raises(ValueError):
        project_to_hermite(fp_gauss_125, 1, p125)
