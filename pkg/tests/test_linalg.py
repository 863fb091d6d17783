import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qficoe.hamiltonian import SX, SY, SZ, flipflop
from qficoe.linalg import (IntegrationError, NotHermitianError, hermitian_eig, kron,
                           propagate_grid, propagate_linear, psd_factor, singular_values,
                           sqrtm_psd, svd3)
from qficoe.dynamics import DEFAULT_JUMPS, liouvillian, vec

from _helpers import random_hermitian

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def check_eigensystem(a, eig):
    w, v = eig
    norm_a = max(np.linalg.norm(a), 1e-300)
    assert np.all(np.diff(w) >= 0)
    assert np.max(np.abs(v.conj().T @ v - np.eye(a.shape[0]))) <= 1e-10
    for k in range(a.shape[0]):
        assert np.linalg.norm(a @ v[:, k] - w[k] * v[:, k]) <= 1e-10 * norm_a
        # largest-magnitude entry (first one on near-ties) is real and non-negative
        mags = np.abs(v[:, k])
        j = int(np.nonzero(mags >= (1 - 1e-9) * mags.max())[0][0])
        assert abs(v[j, k].imag) <= 1e-12 and v[j, k].real >= 0


# hermitian_eig

def test_eig_identity():
    eig = hermitian_eig(np.eye(4))
    assert np.allclose(eig.eigenvalues, 1.0)
    check_eigensystem(np.eye(4), eig)


def test_eig_diagonal_returns_standard_basis():
    eig = hermitian_eig(np.diag([-3.0, -1.0, 1.0, 3.0]))
    assert np.allclose(eig.eigenvalues, [-3, -1, 1, 3], atol=1e-15)
    assert np.allclose(eig.eigenvectors, np.eye(4), atol=1e-15)


def test_eig_flipflop_unit_coupling():
    # Characteristic polynomial of the flip-flop matrix: x^2 (x^2 - 1).
    eig = hermitian_eig(flipflop(1.0).matrix(1.0))
    assert np.allclose(eig.eigenvalues, [-1, 0, 0, 1], atol=1e-14)


def test_eig_reconstruction_on_random_matrices(rng):
    for _ in range(1000):
        a = random_hermitian(rng)
        w, v = hermitian_eig(a)
        assert np.linalg.norm((v * w) @ v.conj().T - a) <= 1e-10 * np.linalg.norm(a)


def test_eig_matches_reference_solver(rng):
    for _ in range(50):
        a = random_hermitian(rng, n=int(rng.integers(2, 17)))
        assert np.allclose(hermitian_eig(a).eigenvalues, np.linalg.eigvalsh(a), atol=1e-11)


def test_eig_is_deterministic(rng):
    a = random_hermitian(rng)
    e1, e2 = hermitian_eig(a), hermitian_eig(a.copy())
    assert np.array_equal(e1.eigenvalues, e2.eigenvalues)
    assert np.array_equal(e1.eigenvectors, e2.eigenvectors)


def test_eig_degenerate_cluster_orthonormal(rng):
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    a = q @ np.diag([1.0, 1.0, 1.0, -2.0]) @ q.conj().T
    a = 0.5 * (a + a.conj().T)
    check_eigensystem(a, hermitian_eig(a))


def test_eig_rejects_non_hermitian():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(NotHermitianError, match="max"):
        hermitian_eig(a)


def test_eig_rejects_oversize():
    with pytest.raises(ValueError):
        hermitian_eig(np.eye(17))


@given(arrays(float, (4, 4), elements=finite), arrays(float, (4, 4), elements=finite))
def test_eig_invariants_property(re, im):
    z = re + 1j * im
    a = 0.5 * (z + z.conj().T)
    check_eigensystem(a, hermitian_eig(a))


# svd3

def check_svd(m, res):
    u, d, v = res
    assert np.linalg.norm(u @ np.diag(d) @ v.T - m) <= 1e-12 * max(np.linalg.norm(m), 1e-300)
    for r in (u, v):
        assert np.max(np.abs(r.T @ r - np.eye(3))) <= 1e-12
        assert abs(np.linalg.det(r) - 1.0) <= 1e-12
    assert np.all(np.diff(np.abs(d)) <= 1e-12 * max(1.0, np.abs(d).max()))


def test_svd_identity():
    u, d, v = svd3(np.eye(3))
    assert np.allclose(u, np.eye(3)) and np.allclose(v, np.eye(3)) and np.allclose(d, 1)


def test_svd_diagonal():
    u, d, v = svd3(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(d, [3, 2, 1]) and np.allclose(u, np.eye(3)) and np.allclose(v, np.eye(3))


def test_svd_moves_reflection_sign_into_smallest_entry():
    m = np.diag([3.0, 2.0, -1.0])
    u, d, v = svd3(m)
    check_svd(m, (u, d, v))
    assert np.allclose(d, [3, 2, -1])


def test_svd_random_including_rank_deficient(rng):
    for i in range(1000):
        m = rng.uniform(-1, 1, (3, 3))
        rank = i % 3 + 1
        if rank < 3:
            m = rng.standard_normal((3, rank)) @ rng.standard_normal((rank, 3))
        check_svd(m, svd3(m))


def test_svd_zero_matrix():
    check_svd(np.zeros((3, 3)), svd3(np.zeros((3, 3))))


@given(arrays(float, (3, 3), elements=finite))
def test_svd_property(m):
    check_svd(m, svd3(m))


# kron

def test_kron_examples():
    assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.array_equal(kron(SZ, SZ), np.diag([1, -1, -1, 1]))
    # 2x2 blocks: sx (x) sy = [[0, sy], [sy, 0]], whose antidiagonal reads (-i, i, -i, i).
    xy = kron(SX, SY)
    assert np.array_equal(np.fliplr(xy).diagonal(), [-1j, 1j, -1j, 1j])
    assert np.count_nonzero(xy) == 4


def test_kron_rejects_oversize():
    with pytest.raises(ValueError, match="exceeds"):
        kron(np.eye(4), np.eye(8))


# square roots and factors

def test_sqrtm_and_factor(rng):
    z = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    a = z @ z.conj().T
    s = sqrtm_psd(a)
    assert np.allclose(s @ s, a, atol=1e-12)
    w = psd_factor(a)
    assert w.shape == (4, 2)
    assert np.allclose(w @ w.conj().T, a, atol=1e-12)


def test_singular_values_match_reference(rng):
    for _ in range(50):
        a = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        assert np.allclose(singular_values(a), np.linalg.svd(a, compute_uv=False), atol=1e-12)


# propagation

@pytest.mark.parametrize("method", ["expm", "rk45"])
def test_propagate_zero_generator(method):
    v0 = np.array([1.0, 2.0j, -3.0])
    assert np.allclose(propagate_linear(np.zeros((3, 3)), v0, 7.0, method=method), v0)


@pytest.mark.parametrize("method", ["expm", "rk45"])
def test_propagate_scalar_decay(method):
    kappa = 0.5
    v0 = np.array([1.0, -2.0, 0.5j])
    out = propagate_linear(-kappa * np.eye(3), v0, 1.0 / kappa, tol=1e-10, method=method)
    assert np.allclose(out, v0 * np.exp(-1.0), rtol=1e-9, atol=0)


def test_rk45_matches_expm(rng):
    a = random_hermitian(rng)
    lmat = liouvillian(a, DEFAULT_JUMPS, 0.3)
    v0 = vec(np.diag([0.25, 0.25, 0.25, 0.25]).astype(complex))
    x = propagate_linear(lmat, v0, 2.0, tol=1e-10, method="rk45")
    y = propagate_linear(lmat, v0, 2.0, method="expm")
    assert np.max(np.abs(x - y)) < 1e-8


def test_propagate_grid_matches_pointwise(rng):
    lmat = liouvillian(random_hermitian(rng), DEFAULT_JUMPS, 0.2)
    v0 = vec(np.diag([1.0, 0, 0, 0]).astype(complex))
    times = np.linspace(0.0, 3.0, 7)
    for method in ("expm", "rk45"):
        rows = propagate_grid(lmat, v0, times, 1e-10, method)
        for t, r in zip(times, rows):
            assert np.max(np.abs(r - propagate_linear(lmat, v0, t, method="expm"))) < 1e-8


def test_propagate_trace_preserved_under_gksl(rng):
    for _ in range(20):
        h = random_hermitian(rng)
        jumps = [rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)) for _ in range(2)]
        lmat = liouvillian(h, jumps, 0.7)
        z = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = z @ z.conj().T
        rho /= np.trace(rho)
        t = 1.5
        for method in ("expm", "rk45"):
            out = propagate_linear(lmat, vec(rho), t, tol=1e-10, method=method)
            assert abs(np.trace(out.reshape(4, 4, order="F")) - 1.0) <= 1e-8 * t


def test_propagate_step_underflow_is_reported():
    with pytest.raises(IntegrationError, match="underflow"):
        propagate_linear(-np.eye(2), np.ones(2), 1.0, tol=1e-300, method="rk45")


def test_propagate_rejects_bad_input():
    with pytest.raises(ValueError):
        propagate_linear(np.eye(3), np.ones(2), 1.0)
    with pytest.raises(ValueError):
        propagate_linear(np.eye(2), np.ones(2), 1.0, tol=0.0)
    with pytest.raises(ValueError):
        propagate_linear(np.eye(2), np.ones(2), 1.0, method="euler")
