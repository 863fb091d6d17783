"""Two-qubit interaction Hamiltonians and their anisotropic-Heisenberg form.

A generic interaction ``g * sum_jk eta_jk sigma_j (x) sigma_k`` is brought to
``g * sum_k eta_k sigma_k (x) sigma_k`` by a local unitary ``u1 (x) u2``. The
rotations come from a proper-rotation SVD of ``eta``; each SO(3) factor is
lifted to SU(2).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol_
from .linalg import kron, svd3

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SX, SY, SZ)
# sigma_- = (sigma_x - i sigma_y) / 2 = |1><0|; |1> is the ground state.
SIGMA_MINUS = 0.5 * (SX - 1j * SY)
SIGMA_PLUS = SIGMA_MINUS.conj().T

_PAULI_PAIRS = [[kron(PAULIS[j], PAULIS[k]) for k in range(3)] for j in range(3)]

BELL_LABELS = ("00", "01", "10", "11")


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    eta: np.ndarray
    g: float = 1.0

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(eta)) or not math.isfinite(self.g):
            raise ValueError("coupling matrix entries and g must be finite")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    def matrix(self, g: float | None = None) -> np.ndarray:
        return build_matrix(self, g)


@dataclass(frozen=True, eq=False)
class CanonicalHamiltonian:
    eta_x: float
    eta_y: float
    eta_z: float
    u1: np.ndarray = field(default_factory=lambda: I2.copy())
    u2: np.ndarray = field(default_factory=lambda: I2.copy())
    g: float = 1.0
    rot1: np.ndarray = field(default_factory=lambda: np.eye(3))
    rot2: np.ndarray = field(default_factory=lambda: np.eye(3))

    @property
    def etas(self) -> np.ndarray:
        return np.array([self.eta_x, self.eta_y, self.eta_z])

    @property
    def local_unitary(self) -> np.ndarray:
        return kron(self.u1, self.u2)

    def generator(self) -> np.ndarray:
        """The g-independent operator h with H = g h."""
        return sum(e * _PAULI_PAIRS[k][k] for k, e in enumerate(self.etas))

    def matrix(self, g: float | None = None) -> np.ndarray:
        return (self.g if g is None else g) * self.generator()


@dataclass(frozen=True, eq=False)
class BellEigensystem:
    omegas: np.ndarray        # (w00, w01, w10, w11)
    bell_vectors: np.ndarray  # columns |beta_00>, |beta_01>, |beta_10>, |beta_11>

    def omega(self, a: int, b: int) -> float:
        return float(self.omegas[2 * a + b])


def build_matrix(cm: CouplingMatrix, g: float | None = None) -> np.ndarray:
    g = cm.g if g is None else g
    h = np.zeros((4, 4), dtype=complex)
    for j in range(3):
        for k in range(3):
            if cm.eta[j, k] != 0.0:
                h += cm.eta[j, k] * _PAULI_PAIRS[j][k]
    return g * h


def su2_from_so3(rot, tol: float = tol_.ROTATION_TOL) -> np.ndarray:
    """Lift a proper rotation R to u in SU(2) with u s_k u^H = sum_l R_kl s_l.

    The overall sign is fixed by making Tr(u) real and non-negative; for
    half-turns (Tr u = 0) the first non-zero axis component is made positive.
    """
    r = np.asarray(rot, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol or abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError(f"not a proper rotation (det = {np.linalg.det(r):.6g})")
    # u rotates Pauli vectors by q = R^T.
    q = r.T
    tr = q[0, 0] + q[1, 1] + q[2, 2]
    choice = int(np.argmax([tr, q[0, 0], q[1, 1], q[2, 2]]))
    if choice == 0:
        w = 0.5 * math.sqrt(max(1.0 + tr, 0.0))
        x = (q[2, 1] - q[1, 2]) / (4 * w)
        y = (q[0, 2] - q[2, 0]) / (4 * w)
        z = (q[1, 0] - q[0, 1]) / (4 * w)
    elif choice == 1:
        x = 0.5 * math.sqrt(max(1.0 + q[0, 0] - q[1, 1] - q[2, 2], 0.0))
        w = (q[2, 1] - q[1, 2]) / (4 * x)
        y = (q[0, 1] + q[1, 0]) / (4 * x)
        z = (q[0, 2] + q[2, 0]) / (4 * x)
    elif choice == 2:
        y = 0.5 * math.sqrt(max(1.0 - q[0, 0] + q[1, 1] - q[2, 2], 0.0))
        w = (q[0, 2] - q[2, 0]) / (4 * y)
        x = (q[0, 1] + q[1, 0]) / (4 * y)
        z = (q[1, 2] + q[2, 1]) / (4 * y)
    else:
        z = 0.5 * math.sqrt(max(1.0 - q[0, 0] - q[1, 1] + q[2, 2], 0.0))
        w = (q[1, 0] - q[0, 1]) / (4 * z)
        x = (q[0, 2] + q[2, 0]) / (4 * z)
        y = (q[1, 2] + q[2, 1]) / (4 * z)
    quat = np.array([w, x, y, z])
    quat /= np.linalg.norm(quat)
    if abs(quat[0]) > 1e-15:
        quat *= np.sign(quat[0])
    else:
        quat[0] = 0.0
        lead = quat[1:][np.abs(quat[1:]) > 1e-15][0]
        quat *= np.sign(lead)
    w, x, y, z = quat
    return w * I2 - 1j * (x * SX + y * SY + z * SZ)


def axis_angle_unitary(axis, angle: float) -> np.ndarray:
    """exp(-i angle/2 n.sigma) for a unit vector n (axis is normalized here)."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    return math.cos(angle / 2) * I2 - 1j * math.sin(angle / 2) * (n[0] * SX + n[1] * SY + n[2] * SZ)


def canonicalize(cm: CouplingMatrix) -> CanonicalHamiltonian:
    svd = svd3(cm.eta)
    order = np.argsort(-svd.D, kind="stable")
    perm = np.eye(3)[:, order]
    u = svd.U @ perm
    v = svd.V @ perm
    d = svd.D[order]
    if np.linalg.det(perm) < 0:
        u[:, 2] = -u[:, 2]
        v[:, 2] = -v[:, 2]
    u1 = su2_from_so3(u)
    u2 = su2_from_so3(v)
    return CanonicalHamiltonian(float(d[0]), float(d[1]), float(d[2]), u1, u2, cm.g, u, v)


def bell_vectors() -> np.ndarray:
    """Columns |beta_ab> = (|0,b> + (-1)^a |1,b_bar>)/sqrt(2) in the order 00, 01, 10, 11."""
    out = np.zeros((4, 4), dtype=complex)
    for a in (0, 1):
        for b in (0, 1):
            col = 2 * a + b
            out[b, col] = 1.0              # |0,b>
            out[2 + (1 - b), col] = (-1) ** a  # |1,b_bar>
    return out / math.sqrt(2)


BELL = bell_vectors()


def bell_omegas(eta_x: float, eta_y: float, eta_z: float) -> np.ndarray:
    return np.array([(-1) ** a * eta_x - (-1) ** (a + b) * eta_y + (-1) ** b * eta_z
                     for a in (0, 1) for b in (0, 1)], dtype=float)


def bell_eigensystem(ch: CanonicalHamiltonian) -> BellEigensystem:
    return BellEigensystem(bell_omegas(ch.eta_x, ch.eta_y, ch.eta_z), BELL.copy())


def canonical(eta_x: float, eta_y: float, eta_z: float, g: float = 1.0) -> CanonicalHamiltonian:
    """A Hamiltonian that is already in anisotropic-Heisenberg form."""
    return CanonicalHamiltonian(float(eta_x), float(eta_y), float(eta_z), g=g)


def flipflop(eta_xy: float = 1.0, g: float = 1.0) -> CouplingMatrix:
    """g*eta_xy*(s+ s- + s- s+), i.e. eta_x = eta_y = eta_xy/2."""
    return CouplingMatrix(np.diag([eta_xy / 2, eta_xy / 2, 0.0]), g)


def heisenberg(eta_x: float, eta_y: float, eta_z: float, g: float = 1.0) -> CouplingMatrix:
    return CouplingMatrix(np.diag([eta_x, eta_y, eta_z]), g)


def permutation(eta_xy: float, eta_yz: float, eta_zx: float, g: float = 1.0) -> CouplingMatrix:
    eta = np.zeros((3, 3))
    eta[0, 1] = eta_xy
    eta[1, 2] = eta_yz
    eta[2, 0] = eta_zx
    return CouplingMatrix(eta, g)


_NAMED = {"flipflop": (flipflop, 1), "heisenberg": (heisenberg, 3), "permutation": (permutation, 3)}


def parse_eta(text: str) -> np.ndarray:
    """Nine reals, whitespace or comma separated, row-major."""
    parts = [p for p in re.split(r"[\s,]+", text.strip()) if p]
    if len(parts) != 9:
        raise ValueError(f"eta needs 9 numbers, got {len(parts)}")
    return np.array([float(p) for p in parts]).reshape(3, 3)


def parse_hamiltonian(text: str, g: float = 1.0) -> CouplingMatrix:
    """Either nine numbers or ``name(args)`` with name in flipflop/heisenberg/permutation."""
    m = re.fullmatch(r"\s*(\w+)\s*\(([^)]*)\)\s*", text)
    if m is None:
        return CouplingMatrix(parse_eta(text), g)
    name, args = m.group(1), m.group(2)
    if name not in _NAMED:
        raise ValueError(f"unknown Hamiltonian {name!r}; expected one of {sorted(_NAMED)}")
    fn, nargs = _NAMED[name]
    values = [float(a) for a in re.split(r"[\s,]+", args.strip()) if a]
    if len(values) != nargs:
        raise ValueError(f"{name} takes {nargs} argument(s), got {len(values)}")
    return fn(*values, g=g)
