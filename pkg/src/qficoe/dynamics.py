"""Closed and amplitude-damped evolution of two-qubit probes.

Density matrices are vectorized by column stacking, vec(rho) = rho.flatten("F"),
so vec(A X B) = (B^T (x) A) vec(X).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tolerances as tol_
from .hamiltonian import BELL, I2, SIGMA_MINUS, CanonicalHamiltonian, CouplingMatrix, bell_omegas
from .linalg import kron, propagate_grid, propagate_linear
from .states import DensityMatrix, PureState

I4 = np.eye(4, dtype=complex)
DEFAULT_JUMPS = (kron(SIGMA_MINUS, I2), kron(I2, SIGMA_MINUS))


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    kappa: float = 0.0
    jump_ops: tuple = DEFAULT_JUMPS

    def __post_init__(self):
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and non-negative, got {self.kappa}")
        ops = tuple(np.asarray(op, dtype=complex) for op in self.jump_ops)
        for op in ops:
            if op.shape != (4, 4):
                raise ValueError(f"jump operators must be 4x4, got {op.shape}")
        object.__setattr__(self, "jump_ops", ops)


PROVENANCES = ("closed-analytic", "open-integrated", "open-analytic")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    g: float
    states: list
    provenance: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ValueError("trajectory time grid must be strictly increasing")
        if len(self.states) != times.size:
            raise ValueError("one state per time point is required")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "times", times)

    def to_csv(self, path, header: dict | None = None) -> None:
        """Columns t, g, then interleaved re/im of amplitudes (pure) or rho entries (mixed)."""
        pure = isinstance(self.states[0], PureState)
        n = 4 if pure else 16
        label = "a" if pure else "rho"
        names = []
        for k in range(n):
            idx = f"{k}" if pure else f"{k // 4}{k % 4}"
            names += [f"re_{label}{idx}", f"im_{label}{idx}"]
        with open(path, "w", newline="") as fh:
            fh.write(f"# provenance = {self.provenance}\n")
            for key, val in {**self.meta, **(header or {})}.items():
                fh.write(f"# {key} = {val}\n")
            w = csv.writer(fh)
            w.writerow(["t", "g"] + names)
            for t, s in zip(self.times, self.states):
                flat = (s.vector() if pure else s.matrix()).reshape(-1)
                row = [repr(float(t)), repr(float(self.g))]
                for z in flat:
                    row += [repr(float(z.real)), repr(float(z.imag))]
                w.writerow(row)


def _hamiltonian_matrix(ham, g: float) -> np.ndarray:
    if isinstance(ham, (CanonicalHamiltonian, CouplingMatrix)):
        return ham.matrix(g)
    return g * np.asarray(ham, dtype=complex)


def liouvillian(h: np.ndarray, jumps: Sequence[np.ndarray], kappa: float) -> np.ndarray:
    """-i(I (x) H - H^T (x) I) + kappa sum_j [conj(L) (x) L - (I (x) L^H L + (L^H L)^T (x) I)/2]."""
    h = np.asarray(h, dtype=complex)
    lmat = -1j * (kron(I4, h) - kron(h.T, I4))
    for op in jumps:
        op = np.asarray(op, dtype=complex)
        ldl = op.conj().T @ op
        lmat = lmat + kappa * (kron(op.conj(), op) - 0.5 * (kron(I4, ldl) + kron(ldl.T, I4)))
    return lmat


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).flatten(order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    rho = np.asarray(v, dtype=complex).reshape(4, 4, order="F")
    return 0.5 * (rho + rho.conj().T)


def closed_vector(amplitudes: np.ndarray, omegas: np.ndarray, g: float, t: float) -> np.ndarray:
    """Computational amplitudes after time t: Bell components pick up exp(-i g w_ab t)."""
    bell_amps = BELL.conj().T @ amplitudes
    return BELL @ (np.exp(-1j * g * omegas * t) * bell_amps)


def evolve_closed(s0: PureState, ch: CanonicalHamiltonian, g: float, t: float) -> PureState:
    """Evolve a state given in the frame where the Hamiltonian is g sum_k eta_k s_k s_k."""
    omegas = bell_omegas(ch.eta_x, ch.eta_y, ch.eta_z)
    v = closed_vector(s0.vector(), omegas, g, t)
    return PureState(v / np.linalg.norm(v))


def _repair_floor(tol: float, t: float) -> float:
    """Negative eigenvalues within the integrator's global error (10 tol per unit time) are round-off."""
    return min(tol_.PSD_REPAIR_FLOOR, -10.0 * tol * max(1.0, abs(t)))


def evolve_open(rho0, ham, noise: NoiseSpec, g: float, t: float,
                tol: float = tol_.INTEGRATOR_TOL, method: str = "rk45") -> DensityMatrix:
    """Solve d rho/dt = -i[H, rho] + kappa sum_j D[L_j] rho up to time t.

    ``ham`` is a CanonicalHamiltonian, a CouplingMatrix, or a bare 4x4 operator h
    (then H = g h). ``method`` picks adaptive RK45 or the matrix exponential.
    """
    rho0 = rho0.matrix() if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    lmat = liouvillian(_hamiltonian_matrix(ham, g), noise.jump_ops, noise.kappa)
    rho = unvec(propagate_linear(lmat, vec(rho0), t, tol, method))
    return DensityMatrix.repaired(rho, floor=_repair_floor(tol, t))


def open_matrix(rho0: np.ndarray, ham, noise: NoiseSpec, g: float, t: float,
                tol: float = tol_.INTEGRATOR_TOL, method: str = "expm") -> np.ndarray:
    """Like evolve_open but returns the bare symmetrized matrix without validation."""
    lmat = liouvillian(_hamiltonian_matrix(ham, g), noise.jump_ops, noise.kappa)
    return unvec(propagate_linear(lmat, vec(rho0), t, tol, method))


def closed_trajectory(s0: PureState, ch: CanonicalHamiltonian, g: float, times) -> Trajectory:
    states = [evolve_closed(s0, ch, g, t) for t in times]
    return Trajectory(times, g, states, "closed-analytic")


def open_trajectory(rho0, ham, noise: NoiseSpec, g: float, times,
                    tol: float = tol_.INTEGRATOR_TOL, method: str = "rk45") -> Trajectory:
    rho0 = rho0.matrix() if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    lmat = liouvillian(_hamiltonian_matrix(ham, g), noise.jump_ops, noise.kappa)
    rows = propagate_grid(lmat, vec(rho0), times, tol, method)
    states = [DensityMatrix.repaired(unvec(r), floor=_repair_floor(tol, t)) for r, t in zip(rows, times)]
    return Trajectory(times, g, states, "open-integrated", {"kappa": noise.kappa, "method": method})


def analytic_open_entangled(alpha: float, g: float, kappa: float, t: float) -> DensityMatrix:
    """Closed-form rho(t) for alpha|01> + sqrt(1-alpha^2)|10> under the flip-flop
    Hamiltonian g(s+ s- + s- s+) with amplitude damping at rate kappa on both qubits.

    Decayed population collects in |11>, the ground state of sigma_-.
    """
    return DensityMatrix(analytic_open_matrix(alpha, g, kappa, t))


def analytic_open_matrix(alpha: float, g: float, kappa: float, t: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    decay = math.exp(-kappa * t)
    amp = 1.0 - 2.0 * alpha * alpha
    beta = math.sqrt(max(0.0, 1.0 - alpha * alpha))
    cos2, sin2 = math.cos(2 * g * t), math.sin(2 * g * t)
    rho = np.zeros((4, 4), dtype=complex)
    rho[3, 3] = 1.0 - decay
    rho[1, 1] = 0.5 * decay * (1.0 - amp * cos2)
    rho[2, 2] = 0.5 * decay * (1.0 + amp * cos2)
    rho[1, 2] = 0.5 * decay * (2 * alpha * beta - 1j * amp * sin2)
    rho[2, 1] = np.conj(rho[1, 2])
    return rho


def analytic_open_separable(g: float, kappa: float, t: float) -> DensityMatrix:
    """Closed-form rho(t) for |01> (alpha = 1 of the entangled family)."""
    return analytic_open_entangled(1.0, g, kappa, t)


def rotate_jump_operators(u1: np.ndarray, u2: np.ndarray, jumps=None) -> list[np.ndarray]:
    """Express jump operators of the canonical frame in the original frame: K^H L K, K = u1 (x) u2."""
    k = kron(u1, u2)
    jumps = DEFAULT_JUMPS if jumps is None else jumps
    return [k.conj().T @ np.asarray(op, dtype=complex) @ k for op in jumps]


def rotate_single(u: np.ndarray, op: np.ndarray = SIGMA_MINUS) -> np.ndarray:
    """u^H op u for a single-qubit operator."""
    return u.conj().T @ op @ u


# Parametric state sources. Each exposes state(g, t) in the computational
# basis: an amplitude vector when ``pure`` is true, else a 4x4 matrix.

class ClosedProbe:
    pure = True

    def __init__(self, ch: CanonicalHamiltonian, initial: PureState):
        self.ch = ch
        self.initial = initial.vector()
        self.omegas = bell_omegas(ch.eta_x, ch.eta_y, ch.eta_z)
        self._generator = ch.generator()

    def state(self, g: float, t: float) -> np.ndarray:
        return closed_vector(self.initial, self.omegas, g, t)

    def dstate(self, g: float, t: float) -> np.ndarray:
        """Exact d|psi>/dg = -i t h |psi> with H = g h."""
        return -1j * t * (self._generator @ self.state(g, t))

    def drho(self, g: float, t: float) -> np.ndarray:
        psi = self.state(g, t)
        dpsi = self.dstate(g, t)
        return np.outer(dpsi, psi.conj()) + np.outer(psi, dpsi.conj())


class OpenProbe:
    pure = False

    def __init__(self, ham, initial, noise: NoiseSpec, method: str = "expm",
                 tol: float = tol_.INTEGRATOR_TOL):
        if isinstance(initial, PureState):
            initial = initial.density()
        self.ham = ham
        self.rho0 = initial.matrix() if isinstance(initial, DensityMatrix) else np.asarray(initial, dtype=complex)
        self.noise = noise
        self.method = method
        self.tol = tol

    def state(self, g: float, t: float) -> np.ndarray:
        return open_matrix(self.rho0, self.ham, self.noise, g, t, self.tol, self.method)


class AnalyticOpenProbe:
    pure = False

    def __init__(self, alpha: float, kappa: float):
        self.alpha = alpha
        self.kappa = kappa

    def state(self, g: float, t: float) -> np.ndarray:
        return analytic_open_matrix(self.alpha, g, self.kappa, t)
