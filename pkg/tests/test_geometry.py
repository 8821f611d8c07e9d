import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from droplet_lab.geometry import (
    Configuration,
    GradientFlowInstabilityError,
    ReducedSystem,
    droplet_statistic,
    droplet_statistic_pairwise,
    gradient_flow,
    grad_hamiltonian,
    hamiltonian,
    hessian_at_zero,
    hessian_hamiltonian,
    laplacian_hamiltonian,
    lift,
    minimax_barrier_grid,
    project,
    projection_matrix,
    reduced_basis,
    valley_depth,
)
from droplet_lab.potential import PotentialSpec, delta_gap

GW = PotentialSpec.gaussian_well()


def configs(max_n=6, max_d=3):
    return st.tuples(st.integers(2, max_n), st.integers(1, max_d)).flatmap(
        lambda nd: arrays(np.float64, nd, elements=st.floats(-2, 2, allow_nan=False)))


@given(st.integers(2, 7), st.integers(1, 3))
def test_basis_orthonormal_and_spans_zero_mean(N, d):
    B = reduced_basis(N, d)
    np.testing.assert_allclose(B.T @ B, np.eye((N - 1) * d), atol=1e-12)
    # columns have zero particle mean in every component
    np.testing.assert_allclose(B.reshape(N, d, -1).sum(axis=0), 0, atol=1e-12)
    P = projection_matrix(N, d)
    np.testing.assert_allclose(P @ P, P, atol=1e-12)


@given(configs())
def test_projection_roundtrip(x):
    N, d = x.shape
    p = project(x)
    np.testing.assert_allclose(p.positions.mean(axis=0), 0, atol=1e-12)
    back = lift(p.reduced, N, d)
    np.testing.assert_allclose(back.positions, p.positions, atol=1e-12)
    np.testing.assert_allclose(project(p.positions).positions, p.positions, atol=1e-12)
    assert droplet_statistic(p) == pytest.approx(droplet_statistic_pairwise(x), abs=1e-12)


@given(configs(), arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_energy_translation_and_permutation_invariant(x, shift):
    N, d = x.shape
    h = hamiltonian(GW, x)
    assert hamiltonian(GW, x + shift[:d]) == pytest.approx(h, abs=1e-12)
    assert hamiltonian(GW, x[::-1]) == pytest.approx(h, abs=1e-12)
    # translation invariance means the forces sum to zero
    np.testing.assert_allclose(grad_hamiltonian(GW, x).sum(axis=0), 0, atol=1e-12)


def _fd_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = eps
        g[idx] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(30):
        N, d = rng.integers(2, 9), rng.integers(1, 4)
        x = rng.normal(size=(N, d))
        g = grad_hamiltonian(GW, x)
        fd = _fd_grad(lambda z: hamiltonian(GW, z), x)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(g), 1e-12)


def test_hessian_and_laplacian_consistent():
    rng = np.random.default_rng(1)
    for N, d in [(2, 1), (3, 2), (4, 3)]:
        x = rng.normal(size=(N, d))
        Hs = hessian_hamiltonian(GW, x)
        fd = np.zeros_like(Hs)
        eps = 1e-5
        for i in range(N * d):
            e = np.zeros(N * d)
            e[i] = eps
            fd[:, i] = (grad_hamiltonian(GW, x + e.reshape(N, d)) - grad_hamiltonian(GW, x - e.reshape(N, d))).ravel() / (2 * eps)
        np.testing.assert_allclose(Hs, fd, atol=1e-7)
        assert laplacian_hamiltonian(GW, x) == pytest.approx(np.trace(Hs), abs=1e-10)


def test_reduced_gradient_is_projected_gradient():
    rng = np.random.default_rng(2)
    s = ReducedSystem(GW, 4, 2)
    Y = rng.normal(size=(5, s.reduced_dim))
    g = s.grad(Y)
    fd = np.array([_fd_grad(lambda z: s.energy(z), y) for y in Y])
    np.testing.assert_allclose(g, fd, atol=1e-7)
    lap_fd = []
    eps = 1e-4
    for y in Y:
        tot = 0.0
        for i in range(s.reduced_dim):
            e = np.zeros(s.reduced_dim)
            e[i] = eps
            tot += (s.energy(y + e) - 2 * s.energy(y) + s.energy(y - e)) / eps**2
        lap_fd.append(tot)
    np.testing.assert_allclose(s.laplacian(Y), lap_fd, atol=1e-5)


@pytest.mark.parametrize("N,d", [(2, 1), (3, 1), (3, 2), (5, 3)])
def test_hessian_at_zero_spectrum(N, d):
    hz = hessian_at_zero(GW, N, d)
    expected = np.sort([0.0] * d + [2.0] * ((N - 1) * d))
    np.testing.assert_allclose(hz.spectrum, expected, atol=1e-8)
    np.testing.assert_allclose(hz.reduced_spectrum, 2.0, atol=1e-8)


def test_reduced_energy_two_particles():
    s = ReducedSystem(GW, 2, 1)
    y = np.linspace(-0.7, 0.7, 11)[:, None]
    np.testing.assert_allclose(s.energy(y), 0.5 * (1 - np.exp(-2 * y[:, 0] ** 2)), atol=1e-14)


def test_valley_depth_values():
    v = valley_depth(GW, 2, 1, 0.5)
    # U on the sphere |y| = √2 δ for N = 2, d = 1
    assert v.value == pytest.approx(0.5 * (1 - math.exp(-1.0)), abs=1e-12)
    assert v.value >= v.lower_bound == pytest.approx(float(delta_gap(GW, 0.5)))
    v3 = valley_depth(GW, 3, 1, 0.5)
    grid = minimax_barrier_grid(ReducedSystem(GW, 3, 1), math.sqrt(3) * 0.5, 401)
    assert v3.value == pytest.approx(grid, abs=2e-3)
    assert v3.value == pytest.approx(0.45023, abs=1e-4)
    v22 = valley_depth(GW, 2, 2, 0.5)
    assert v22.value == pytest.approx(v.value, abs=1e-8)


def test_gradient_flow_decreases_energy_and_contracts():
    s = ReducedSystem(GW, 3, 2)
    y0 = np.random.default_rng(3).normal(size=s.reduced_dim) * 0.3
    path = gradient_flow(s, y0, 0.01, 5.0, stride=10)
    assert np.all(np.diff(path.energies) <= 1e-15)
    # linear rate w''(0) = 2 near the origin (explicit Euler factor (1 - 2dt) per step)
    ratio = np.linalg.norm(path.path[-1]) / np.linalg.norm(path.path[-11])
    assert ratio == pytest.approx((1 - 0.02) ** 100, rel=1e-3)
    with pytest.raises(GradientFlowInstabilityError):
        gradient_flow(s, y0, 2.0, 10.0)


def test_configuration_validation():
    with pytest.raises(ValueError):
        Configuration(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        Configuration(np.array([[0.0], [np.nan]]))
