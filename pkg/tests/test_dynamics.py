import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qficoe.dynamics import (DEFAULT_JUMPS, AnalyticOpenProbe, ClosedProbe, NoiseSpec, OpenProbe,
                             Trajectory, analytic_open_entangled, analytic_open_matrix,
                             analytic_open_separable, closed_trajectory, evolve_closed, evolve_open,
                             liouvillian, open_trajectory, rotate_jump_operators, rotate_single,
                             unvec, vec)
from qficoe.hamiltonian import (I2, SIGMA_MINUS, SIGMA_PLUS, SX, SY, SZ, CouplingMatrix,
                                axis_angle_unitary, canonical, canonicalize, flipflop)
from qficoe.states import (DensityMatrix, PureState, concurrence_pure, named_state,
                           random_density_matrix, random_pure_state)

from _helpers import random_hermitian

TOL = 1e-9
FLIPFLOP = canonicalize(flipflop(1.0))
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def dissipator_direct(h, jumps, kappa, rho):
    out = -1j * (h @ rho - rho @ h)
    for op in jumps:
        ldl = op.conj().T @ op
        out = out + kappa * (op @ rho @ op.conj().T - 0.5 * (ldl @ rho + rho @ ldl))
    return out


# closed evolution

def test_closed_initial_time_is_identity():
    s = random_pure_state(1)
    assert np.allclose(evolve_closed(s, canonical(0.3, -0.2, 0.7), 1.0, 0.0).vector(), s.vector(), atol=1e-15)


def test_closed_flipflop_entangles_then_swaps():
    s = named_state("psi_opt")
    assert concurrence_pure(evolve_closed(s, FLIPFLOP, 1.0, math.pi / 4)) == pytest.approx(1.0, abs=1e-14)
    swapped = evolve_closed(s, FLIPFLOP, 1.0, math.pi / 2).vector()
    assert abs(abs(swapped[2]) - 1.0) < 1e-14


def test_closed_norm_preserved(rng):
    for _ in range(100):
        ch = canonical(*rng.uniform(-1, 1, 3))
        s = random_pure_state(rng)
        v = evolve_closed(s, ch, rng.uniform(0.1, 2), rng.uniform(0, 20)).vector()
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-12


def test_closed_matches_matrix_exponential(rng):
    from scipy.linalg import expm
    for _ in range(20):
        ch = canonical(*rng.uniform(-1, 1, 3))
        g, t = rng.uniform(0.1, 2), rng.uniform(0, 5)
        s = random_pure_state(rng)
        expected = expm(-1j * ch.matrix(g) * t) @ s.vector()
        assert np.allclose(evolve_closed(s, ch, g, t).vector(), expected, atol=1e-12)


def test_closed_probe_exact_derivative(rng):
    probe = ClosedProbe(canonical(0.8, 0.1, -0.4), random_pure_state(5))
    g, t, h = 0.9, 2.3, 1e-5
    fd = (probe.state(g + h, t) - probe.state(g - h, t)) / (2 * h)
    assert np.allclose(probe.dstate(g, t), fd, atol=1e-8)


# Liouvillian

def test_liouvillian_matches_direct_master_equation(rng):
    h = random_hermitian(rng)
    jumps = [rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)) for _ in range(2)]
    rho = random_density_matrix(3).matrix()
    lhs = unvec(liouvillian(h, jumps, 0.4) @ vec(rho))
    rhs = dissipator_direct(h, jumps, 0.4, rho)
    assert np.allclose(lhs, 0.5 * (rhs + rhs.conj().T), atol=1e-13)
    assert np.allclose(vec(rho).reshape(4, 4, order="F"), rho)


# open evolution

def test_open_zero_noise_reduces_to_closed():
    for seed in range(5):
        s = random_pure_state(seed)
        ch = canonical(0.9, 0.4, -0.3)
        for method in ("rk45", "expm"):
            rho = evolve_open(s.density(), ch, NoiseSpec(0.0), 1.2, 3.0, TOL, method).matrix()
            v = evolve_closed(s, ch, 1.2, 3.0).vector()
            assert np.max(np.abs(rho - np.outer(v, v.conj()))) <= 10 * TOL


def test_open_flipflop_matches_closed_form():
    g, kappa = 1.0, 0.5
    rho0 = named_state("psi_opt").density()
    for t in np.linspace(0, 2 * math.pi, 9):
        rho = evolve_open(rho0, FLIPFLOP, NoiseSpec(kappa), g, t, TOL, "rk45").matrix()
        assert np.max(np.abs(rho - analytic_open_matrix(1.0, g, kappa, t))) <= 10 * TOL
        # ground-state population |11><11| fills as 1 - exp(-kappa t)
        assert rho[3, 3].real == pytest.approx(1 - math.exp(-kappa * t), abs=10 * TOL)


def test_open_trace_and_psd_along_trajectory(rng):
    for seed in range(5):
        cm = CouplingMatrix(rng.uniform(-1, 1, (3, 3)))
        rho0 = random_density_matrix(seed, rank=2)
        traj = open_trajectory(rho0, cm, NoiseSpec(0.3), 1.0, np.linspace(0.1, 8, 40), TOL, "rk45")
        for d in traj.states:
            assert abs(np.trace(d.matrix()) - 1) <= 1e-8
            assert np.min(np.linalg.eigvalsh(d.matrix())) >= -1e-7
        assert traj.provenance == "open-integrated"


@pytest.mark.parametrize("g,kappa", [(1.0, 0.5), (0.5, 0.1), (2.0, 1.5)])
def test_open_grid_matches_closed_form(g, kappa):
    times = np.linspace(0.05, 6.0, 50)
    traj = open_trajectory(named_state("psi_opt").density(), canonicalize(flipflop(1.0, g)),
                           NoiseSpec(kappa), g, times, TOL, "rk45")
    for t, d in zip(times, traj.states):
        assert np.max(np.abs(d.matrix() - analytic_open_matrix(1.0, g, kappa, t))) <= 10 * TOL


def test_open_bare_operator_hamiltonian():
    h = FLIPFLOP.generator()
    a = evolve_open(named_state("psi_opt").density(), h, NoiseSpec(0.5), 1.3, 2.0, method="expm").matrix()
    b = evolve_open(named_state("psi_opt").density(), FLIPFLOP, NoiseSpec(0.5), 1.3, 2.0, method="expm").matrix()
    assert np.allclose(a, b, atol=1e-14)


def test_open_probe_sources_agree():
    numeric = OpenProbe(FLIPFLOP, named_state("psi_e_alpha", 0.25), NoiseSpec(0.5))
    analytic = AnalyticOpenProbe(0.25, 0.5)
    for t in (0.3, 1.7, 4.4):
        assert np.allclose(numeric.state(1.0, t), analytic.state(1.0, t), atol=1e-12)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(-0.1)
    with pytest.raises(ValueError):
        NoiseSpec(math.nan)
    with pytest.raises(ValueError):
        NoiseSpec(0.1, (np.eye(2),))


# closed forms

def test_separable_closed_form_examples():
    assert np.allclose(analytic_open_separable(1.0, 0.5, 0.0).matrix(),
                       np.outer([0, 1, 0, 0], [0, 1, 0, 0]))
    t = math.pi / 4
    rho = analytic_open_separable(1.0, 0.5, t).matrix()
    assert rho[1, 1].real == pytest.approx(math.exp(-math.pi / 8) / 2, abs=1e-15)
    assert rho[2, 2].real == pytest.approx(math.exp(-math.pi / 8) / 2, abs=1e-15)


def test_separable_without_decay_is_closed_flipflop():
    for t in np.linspace(0, 5, 11):
        v = evolve_closed(named_state("psi_opt"), FLIPFLOP, 1.0, t).vector()
        assert np.allclose(analytic_open_separable(1.0, 0.0, t).matrix(), np.outer(v, v.conj()), atol=1e-14)


def test_entangled_closed_form_examples():
    for t in (0.0, 0.4, 3.3):
        assert np.allclose(analytic_open_entangled(1.0, 1.0, 0.5, t).matrix(),
                           analytic_open_separable(1.0, 0.5, t).matrix())
    kappa, t = 0.5, math.pi / 4
    rho = analytic_open_entangled(0.5, 1.0, kappa, t).matrix()
    assert rho[1, 1].real == pytest.approx(math.exp(-kappa * t) / 2, abs=1e-15)
    assert np.allclose(analytic_open_entangled(0.25, 1.0, 0.5, 0.0).matrix(),
                       named_state("psi_e_alpha", 0.25).density().matrix())


def test_entangled_closed_form_matches_integration():
    for alpha in (0.0, 0.25, 0.6):
        rho0 = named_state("psi_e_alpha", alpha).density()
        for t in (0.5, 2.0, 5.0):
            rho = evolve_open(rho0, FLIPFLOP, NoiseSpec(0.5), 1.0, t, TOL, "rk45").matrix()
            assert np.max(np.abs(rho - analytic_open_matrix(alpha, 1.0, 0.5, t))) <= 10 * TOL


@given(st.floats(0, 1), st.floats(0.01, 5), st.floats(0, 3), st.floats(0, 20))
def test_entangled_closed_form_is_a_state(alpha, g, kappa, t):
    rho = analytic_open_matrix(alpha, g, kappa, t)
    assert abs(np.trace(rho) - 1) <= 1e-12
    DensityMatrix(rho)


def test_closed_form_rejects_bad_alpha():
    with pytest.raises(ValueError):
        analytic_open_matrix(1.2, 1.0, 0.5, 1.0)


# jump operators in the original frame

def test_rotate_identity_unchanged():
    out = rotate_jump_operators(I2, I2)
    assert all(np.allclose(a, b) for a, b in zip(out, DEFAULT_JUMPS))


def test_rotated_jumps_for_permutation_frame():
    u1 = axis_angle_unitary((-1, 1, 0), math.pi)
    u2 = axis_angle_unitary((-1, 0, 1), math.pi)
    l1 = rotate_single(u1)
    l2 = rotate_single(u2)
    assert np.allclose(l1, (1j * SX - SY) / 2) and np.allclose(l1, 1j * SIGMA_PLUS)
    assert np.allclose(l2, (1j * SY - SZ) / 2)
    # (i sy - sz)/2 is the Hadamard image of the raising operator
    assert np.allclose(l2, -HADAMARD @ SIGMA_PLUS @ HADAMARD)
    both = rotate_jump_operators(u1, u2)
    assert np.allclose(both[0], np.kron(l1, I2)) and np.allclose(both[1], np.kron(I2, l2))


def test_frame_equivalence_small(rng):
    for seed in range(10):
        cm = CouplingMatrix(rng.uniform(-1, 1, (3, 3)), g=1.0)
        ch = canonicalize(cm)
        k = ch.local_unitary
        rho_c = random_density_matrix(seed, rank=2).matrix()
        t = rng.uniform(0.5, 4)
        canonical_out = evolve_open(rho_c, ch, NoiseSpec(0.4), 1.0, t, method="expm").matrix()
        jumps = rotate_jump_operators(ch.u1, ch.u2)
        original = evolve_open(k.conj().T @ rho_c @ k, cm, NoiseSpec(0.4, jumps), 1.0, t,
                               method="expm").matrix()
        assert np.max(np.abs(k @ original @ k.conj().T - canonical_out)) <= 10 * TOL


# trajectories

def test_trajectory_validation_and_csv(tmp_path):
    times = np.linspace(0, 1, 5)
    traj = closed_trajectory(named_state("psi_opt"), FLIPFLOP, 1.0, times)
    path = tmp_path / "traj.csv"
    traj.to_csv(path, {"seed": 3})
    lines = path.read_text().splitlines()
    assert lines[0] == "# provenance = closed-analytic"
    header = next(l for l in lines if not l.startswith("#"))
    assert header.split(",")[:4] == ["t", "g", "re_a0", "im_a0"]
    assert sum(1 for l in lines if not l.startswith("#")) == 6
    with pytest.raises(ValueError):
        Trajectory(times[::-1], 1.0, traj.states, "closed-analytic")
    with pytest.raises(ValueError):
        Trajectory(times, 1.0, traj.states, "guessed")


def test_open_trajectory_csv_has_matrix_columns(tmp_path):
    traj = open_trajectory(named_state("psi_opt").density(), FLIPFLOP, NoiseSpec(0.5), 1.0,
                           np.linspace(0.1, 1, 3))
    path = tmp_path / "open.csv"
    traj.to_csv(path)
    header = next(l for l in path.read_text().splitlines() if not l.startswith("#")).split(",")
    assert len(header) == 2 + 32 and header[2] == "re_rho00"
