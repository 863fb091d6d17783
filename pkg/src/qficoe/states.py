"""Two-qubit states, basis changes, concurrence and fidelity.

Computational basis order is |00>, |01>, |10>, |11>. The Bell basis is the
column order of ``hamiltonian.BELL``: beta_00, beta_01, beta_10, beta_11.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import tolerances as tol_
from .hamiltonian import BELL, SY
from .linalg import hermitian_eig, kron, psd_factor, singular_values

log = logging.getLogger(__name__)

BASES = ("computational", "bell")
YY = kron(SY, SY)


def _check_basis(basis: str) -> None:
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}, got {basis!r}")


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray
    basis: str = "computational"

    def __post_init__(self):
        _check_basis(self.basis)
        amps = np.array(self.amplitudes, dtype=complex).reshape(4)
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > tol_.NORM_TOL:
            raise ValueError(f"state not normalized: |psi| = {norm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes, basis: str = "computational") -> "PureState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(4)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("zero vector cannot be normalized")
        return cls(amps / norm, basis)

    def vector(self) -> np.ndarray:
        """Amplitudes in the computational basis."""
        return self.amplitudes.copy() if self.basis == "computational" else BELL @ self.amplitudes

    def density(self) -> "DensityMatrix":
        v = self.vector()
        return DensityMatrix(np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    rho: np.ndarray
    basis: str = "computational"

    def __post_init__(self):
        _check_basis(self.basis)
        rho = np.array(self.rho, dtype=complex).reshape(4, 4)
        dev = float(np.max(np.abs(rho - rho.conj().T)))
        if dev > tol_.DENSITY_TOL:
            raise ValueError(f"density matrix not Hermitian: max|rho - rho^H| = {dev:.3e}")
        tr = complex(np.trace(rho))
        if abs(tr - 1.0) > tol_.DENSITY_TOL:
            raise ValueError(f"density matrix trace {tr.real:.12g} != 1")
        rho = 0.5 * (rho + rho.conj().T)
        lam_min = float(hermitian_eig(rho).eigenvalues[0])
        if lam_min < tol_.PSD_REPAIR_FLOOR:
            raise ValueError(f"density matrix has eigenvalue {lam_min:.3e} below {tol_.PSD_REPAIR_FLOOR}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def repaired(cls, rho, basis: str = "computational",
                 floor: float = tol_.PSD_REPAIR_FLOOR) -> "DensityMatrix":
        """Symmetrize, clamp eigenvalues in [floor, 0) to zero and renormalize."""
        rho = np.asarray(rho, dtype=complex)
        rho = 0.5 * (rho + rho.conj().T)
        eig = hermitian_eig(rho)
        w = eig.eigenvalues.copy()
        if w[0] < floor:
            raise ValueError(f"eigenvalue {w[0]:.3e} below repair floor {floor}")
        neg = w < 0
        if np.any(neg):
            log.debug("PSD repair clamped %d eigenvalue(s), largest magnitude %.3e",
                      int(neg.sum()), float(-w[neg].min()))
            w[neg] = 0.0
            vecs = eig.eigenvectors
            rho = (vecs * w) @ vecs.conj().T
        rho = rho / np.trace(rho).real
        return cls(rho, basis)

    def matrix(self) -> np.ndarray:
        """rho in the computational basis."""
        return self.rho.copy() if self.basis == "computational" else BELL @ self.rho @ BELL.conj().T


def to_bell(s):
    if s.basis == "bell":
        return s
    if isinstance(s, PureState):
        return PureState(BELL.conj().T @ s.amplitudes, "bell")
    return DensityMatrix(BELL.conj().T @ s.rho @ BELL, "bell")


def to_computational(s):
    if s.basis == "computational":
        return s
    if isinstance(s, PureState):
        return PureState(BELL @ s.amplitudes, "computational")
    return DensityMatrix(BELL @ s.rho @ BELL.conj().T, "computational")


def _as_vector(s) -> np.ndarray:
    return s.vector() if isinstance(s, PureState) else np.asarray(s, dtype=complex).reshape(4)


def _as_matrix(s) -> np.ndarray:
    if isinstance(s, DensityMatrix):
        return s.matrix()
    if isinstance(s, PureState):
        v = s.vector()
        return np.outer(v, v.conj())
    return np.asarray(s, dtype=complex)


def concurrence_pure(s) -> float:
    """2|a00 a11 - a01 a10| of a PureState or raw computational amplitude vector."""
    a = _as_vector(s)
    return float(min(1.0, 2.0 * abs(a[0] * a[3] - a[1] * a[2])))


def concurrence_mixed(s) -> float:
    """Wootters concurrence max(0, l1 - l2 - l3 - l4).

    With rho = W W^H the l_k are the singular values of W^T (sy x sy) W, which
    equal the square roots of the eigenvalues of rho (sy x sy) rho* (sy x sy).
    Working with singular values avoids the square-root noise near zero.
    """
    rho = _as_matrix(s)
    w = psd_factor(rho)
    if w.shape[1] == 0:
        return 0.0
    tau = w.T @ YY @ w
    lam = np.zeros(4)
    sv = singular_values(tau)
    lam[:sv.size] = sv
    return float(min(1.0, max(0.0, lam[0] - lam[1] - lam[2] - lam[3])))


def uhlmann_fidelity(sigma, chi) -> float:
    """[Tr sqrt(sqrt(sigma) chi sqrt(sigma))]^2, computed as the squared nuclear norm of W_s^H W_c."""
    ws = psd_factor(_as_matrix(sigma))
    wc = psd_factor(_as_matrix(chi))
    if ws.shape[1] == 0 or wc.shape[1] == 0:
        return 0.0
    root = float(np.sum(singular_values(ws.conj().T @ wc)))
    return min(1.0, root * root)


def bures_distance(sigma, chi) -> float:
    root = math.sqrt(uhlmann_fidelity(sigma, chi))
    return math.sqrt(max(0.0, 2.0 * (1.0 - root)))


def _check_alpha(alpha) -> float:
    if alpha is None:
        raise ValueError("this family needs alpha")
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


FAMILIES = ("psi_opt", "psi_alpha", "phi_alpha", "psi_e_alpha")


def named_state(family: str, alpha: float | None = None) -> PureState:
    """Initial states used throughout.

    psi_opt      |01>
    psi_alpha    alpha|beta_01> + sqrt(1-alpha^2)|beta_11>
    phi_alpha    (alpha|0> + sqrt(1-alpha^2)|1>) (x) |1>
    psi_e_alpha  alpha|01> + sqrt(1-alpha^2)|10>
    """
    if family == "psi_opt":
        return PureState([0, 1, 0, 0])
    if family not in FAMILIES:
        raise ValueError(f"unknown state family {family!r}; expected one of {FAMILIES}")
    a = _check_alpha(alpha)
    b = math.sqrt(max(0.0, 1.0 - a * a))
    if family == "psi_alpha":
        return PureState(BELL @ np.array([0, a, 0, b]))
    if family == "phi_alpha":
        return PureState([0, a, 0, b])
    return PureState([0, a, b, 0])


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_pure_state(seed) -> PureState:
    """Haar-random state: four complex standard normals, normalized."""
    rng = _rng(seed)
    z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return PureState.normalized(z)


def random_density_matrix(seed, rank: int = 4) -> DensityMatrix:
    """Partial trace of a Haar-random pure state on C^4 (x) C^rank."""
    if not 1 <= rank <= 4:
        raise ValueError(f"rank must be in 1..4, got {rank}")
    rng = _rng(seed)
    z = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    z /= np.linalg.norm(z)
    return DensityMatrix.repaired(z @ z.conj().T)


def random_local_unitary(seed) -> np.ndarray:
    """u1 (x) u2 with each factor Haar on U(2) (QR of a complex Ginibre matrix)."""
    rng = _rng(seed)
    out = []
    for _ in range(2):
        z = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        q, r = np.linalg.qr(z)
        out.append(q * (np.diag(r) / np.abs(np.diag(r))))
    return kron(out[0], out[1])


def _interleave(a: np.ndarray) -> list[float]:
    flat = np.asarray(a, dtype=complex).reshape(-1)
    return [float(x) for pair in zip(flat.real, flat.imag) for x in pair]


def to_json_line(s) -> str:
    if isinstance(s, PureState):
        payload = {"kind": "pure", "basis": s.basis, "data": _interleave(s.amplitudes)}
    else:
        payload = {"kind": "mixed", "basis": s.basis, "data": _interleave(s.rho)}
    return json.dumps(payload)


def from_json_line(line: str):
    obj = json.loads(line)
    data = np.asarray(obj["data"], dtype=float)
    z = data[0::2] + 1j * data[1::2]
    if obj["kind"] == "pure":
        if z.size != 4:
            raise ValueError("pure state needs 8 reals")
        return PureState(z, obj["basis"])
    if z.size != 16:
        raise ValueError("mixed state needs 32 reals")
    return DensityMatrix(z.reshape(4, 4), obj["basis"])
