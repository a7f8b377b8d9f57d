import itertools

import numpy as np
import pytest

from dysonrg import (
    AtomicMeasure,
    enumerate_total_spin,
    hamiltonian,
    hierarchical_distance,
    rg_step_atomic,
)
from dysonrg.model import distance_matrix


def test_distance_examples():
    assert hierarchical_distance(5, 5, 3) == 0.0
    assert hierarchical_distance(1, 2, 3) == 1.0
    assert hierarchical_distance(1, 5, 3) == 4.0


def test_distance_symmetric_and_levels():
    assert hierarchical_distance(3, 4, 2) == 1.0
    assert hierarchical_distance(2, 3, 2) == 2.0
    for x, y in [(1, 8), (4, 5), (7, 2)]:
        assert hierarchical_distance(x, y, 3) == hierarchical_distance(y, x, 3)


def test_distance_out_of_range():
    with pytest.raises(ValueError):
        hierarchical_distance(0, 1, 3)
    with pytest.raises(ValueError):
        hierarchical_distance(1, 9, 3)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_distance_ultrametric(n):
    d = distance_matrix(n)
    size = 2**n
    for x, y, z in itertools.product(range(size), repeat=3):
        assert d[x, z] <= max(d[x, y], d[y, z]) + 1e-15


def test_hamiltonian_single_pair(rng):
    for _ in range(5):
        s1, s2 = rng.normal(size=2)
        assert hamiltonian(np.array([s1, s2]), 1.5) == pytest.approx(-s1 * s2)


def test_hamiltonian_all_ones_a1():
    # two pairs at distance 1 and four pairs at distance 2
    assert hamiltonian(np.ones(4), 1.0) == pytest.approx(-4.0)


def test_hamiltonian_zero_config():
    assert hamiltonian(np.zeros(8), 1.3) == 0.0


def test_hamiltonian_validates_a():
    with pytest.raises(ValueError):
        hamiltonian(np.ones(2), 2.5)
    with pytest.raises(ValueError):
        hamiltonian(np.ones(2), -0.3)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_hamiltonian_block_decomposition(n, rng):
    # H_n(sigma) = -sum_u sigma(2u-1) sigma(2u) + H_{n-1}(block spins)
    a = 1.4
    for _ in range(3):
        sigma = rng.normal(size=2**n)
        pair_sum = float(np.sum(sigma[0::2] * sigma[1::2]))
        blocks = (sigma[0::2] + sigma[1::2]) / 2.0 ** (a / 2.0)
        inner = hamiltonian(blocks, a) if n > 1 else 0.0
        assert hamiltonian(sigma, a) == pytest.approx(-pair_sum + inner, abs=1e-10)


def test_enumerate_n1_closed_form():
    a, beta = 1.5, 0.8
    nu = AtomicMeasure.two_point(1.0)
    out = enumerate_total_spin(1, nu, beta, a)
    loc = 2.0 ** (1.0 - a / 2.0)
    z = 2.0 * np.exp(beta) + 2.0 * np.exp(-beta)
    assert out.locations == pytest.approx([-loc, 0.0, loc])
    assert out.weights == pytest.approx(
        [np.exp(beta) / z, 2.0 * np.exp(-beta) / z, np.exp(beta) / z]
    )


def test_enumerate_beta0_binomial():
    nu = AtomicMeasure.two_point(1.0)
    out1 = enumerate_total_spin(1, nu, 0.0, 1.5)
    assert out1.weights == pytest.approx([0.25, 0.5, 0.25])
    out2 = enumerate_total_spin(2, nu, 0.0, 1.5)
    assert out2.weights == pytest.approx(np.array([1, 4, 6, 4, 1]) / 16.0)


def test_enumerate_symmetric_output():
    nu = AtomicMeasure.create([-1.5, -0.5, 0.5, 1.5], [0.2, 0.3, 0.3, 0.2])
    out = enumerate_total_spin(2, nu, 0.6, 1.3)
    assert out.is_symmetric()


def test_enumerate_budget():
    nu = AtomicMeasure.create(np.linspace(-1, 1, 8), np.full(8, 0.125))
    with pytest.raises(ValueError, match="budget"):
        enumerate_total_spin(3, nu, 0.1, 1.5)


def test_rg_step_atomic_delta0():
    nu = AtomicMeasure.create([0.0], [1.0])
    out = rg_step_atomic(nu, 0.7, 1.5)
    assert out.n_atoms == 1
    assert out.locations[0] == 0.0
    assert out.weights[0] == 1.0


def test_rg_step_atomic_coin_beta0():
    a = 1.5
    out = rg_step_atomic(AtomicMeasure.two_point(1.0), 0.0, a)
    loc = 2.0 ** (1.0 - a / 2.0)
    assert out.locations == pytest.approx([-loc, 0.0, loc])
    assert out.weights == pytest.approx([0.25, 0.5, 0.25])


def test_rg_step_atomic_preserves_symmetry():
    nu = AtomicMeasure.create([-2.0, -1.0, 1.0, 2.0], [0.1, 0.4, 0.4, 0.1])
    out = rg_step_atomic(nu, 1.2, 1.7)
    assert out.is_symmetric()


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_keystone_equivalence_small(n, beta):
    # n-fold measure-level recursion reproduces the exact Gibbs enumeration
    a = 1.5
    nu = AtomicMeasure.two_point(1.0)
    exact = enumerate_total_spin(n, nu, beta, a)
    recursed = nu
    for _ in range(n):
        recursed = rg_step_atomic(recursed, beta, a)
    assert exact.total_variation_distance(recursed) < 1e-10


def test_atoms_merge_within_tolerance():
    nu = AtomicMeasure.create([-1.0, -1.0 + 5e-13, 1.0 - 5e-13, 1.0],
                              [0.25, 0.25, 0.25, 0.25])
    assert nu.n_atoms == 2
    assert nu.weights == pytest.approx([0.5, 0.5])


def test_atomic_validation():
    with pytest.raises(ValueError):
        AtomicMeasure.create([0.0, 1.0], [0.5, -0.5])
    with pytest.raises(ValueError):
        AtomicMeasure.create([0.0], [0.0])
