"""Quantum Fisher information, SLD readout structure and curvature of entanglement.

All derivatives are taken with respect to the coupling g at fixed time t.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import tolerances as tol_
from .hamiltonian import BELL, CanonicalHamiltonian, bell_omegas
from .linalg import HermitianEigenSystem, hermitian_eig
from .states import YY, concurrence_mixed, concurrence_pure, uhlmann_fidelity

log = logging.getLogger(__name__)

SCHEMES = ("central-3pt", "central-5pt", "richardson")


@dataclass(frozen=True)
class DerivativeConfig:
    """Finite-difference settings for derivatives in g.

    The base step defaults to 1e-4 * max(1, |g|). With ``time_scaled`` the
    step is divided by t (clipped to a factor 1e3 either way), because every
    state here depends on g through the phase g*t.
    """
    step: float | None = None
    scheme: str = "central-5pt"
    kink_tolerance: float = tol_.KINK_TOLERANCE
    stencil_agreement: float = tol_.STENCIL_AGREEMENT
    time_scaled: bool = True

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValueError(f"derivative step must be positive, got {self.step}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    def step_for(self, g: float, t: float | None = None) -> float:
        base = self.step if self.step is not None else 1e-4 * max(1.0, abs(g))
        if self.time_scaled and t is not None:
            base *= min(1e3, max(1e-3, 1.0 / t if t > 0 else 1e3))
        return base


class SLDOperator(NamedTuple):
    matrix: np.ndarray
    eigen: HermitianEigenSystem
    support_dim: int


class FidelityCheck(NamedTuple):
    residual: float
    qfi_estimate: float
    fidelity: float


@dataclass(frozen=True, eq=False)
class MetrologySample:
    t: float
    g: float
    F: float
    CoE: float | None
    C: float
    C_SLD: tuple
    coincidence_flags: tuple
    sld: SLDOperator | None = None
    sld_pairs: tuple = ()
    degenerate: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.F < 0:
            raise ValueError(f"negative QFI {self.F}")
        if not -1e-12 <= self.C <= 1 + 1e-12:
            raise ValueError(f"concurrence {self.C} outside [0, 1]")


def _density(state) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    return np.outer(state, state.conj()) if state.ndim == 1 else state


def state_concurrence(state) -> float:
    """Concurrence of an amplitude vector or a density matrix."""
    state = np.asarray(state)
    return concurrence_pure(state) if state.ndim == 1 else concurrence_mixed(state)


# Quantum Fisher information.

def qfi_pure(s0, ch: CanonicalHamiltonian, g: float, t: float) -> float:
    """4 t^2 times the variance of the Bell frequencies weighted by |beta_ab|^2.

    Independent of g for closed evolution; g is accepted for a uniform signature.
    """
    amps = s0.vector() if hasattr(s0, "vector") else np.asarray(s0, dtype=complex)
    weights = np.abs(BELL.conj().T @ amps) ** 2
    omegas = bell_omegas(ch.eta_x, ch.eta_y, ch.eta_z)
    mean = float(weights @ omegas)
    var = float(weights @ omegas ** 2) - mean * mean
    return 4.0 * t * t * max(var, 0.0)


def _support_pairs(eigvals: np.ndarray, threshold: float):
    total = float(np.sum(eigvals))
    cut = threshold * max(total, 1e-300)
    n = eigvals.size
    return [(a, b) for a in range(n) for b in range(n) if eigvals[a] + eigvals[b] > cut]


def qfi_mixed(rho, drho, threshold: float = tol_.SUPPORT_THRESHOLD) -> float:
    """2 sum |<a|d rho|b>|^2 / (l_a + l_b) over pairs with l_a + l_b above threshold * Tr(rho)."""
    rho = _density(rho)
    drho = np.asarray(drho, dtype=complex)
    eig = hermitian_eig(rho)
    pairs = _support_pairs(eig.eigenvalues, threshold)
    if not pairs:
        log.warning("no eigenvalue pair above the support threshold; QFI set to 0")
        return 0.0
    vecs = eig.eigenvectors
    d = vecs.conj().T @ drho @ vecs
    lam = eig.eigenvalues
    return float(sum(2.0 * abs(d[a, b]) ** 2 / (lam[a] + lam[b]) for a, b in pairs))


def sld(rho, drho, threshold: float = tol_.SUPPORT_THRESHOLD) -> SLDOperator:
    """L = sum 2 <a|d rho|b> / (l_a + l_b) |a><b| over the supported pairs."""
    rho = _density(rho)
    drho = np.asarray(drho, dtype=complex)
    eig = hermitian_eig(rho)
    pairs = _support_pairs(eig.eigenvalues, threshold)
    if not pairs:
        log.warning("no eigenvalue pair above the support threshold; SLD set to 0")
    vecs = eig.eigenvectors
    d = vecs.conj().T @ drho @ vecs
    lam = eig.eigenvalues
    coef = np.zeros((4, 4), dtype=complex)
    for a, b in pairs:
        coef[a, b] = 2.0 * d[a, b] / (lam[a] + lam[b])
    mat = vecs @ coef @ vecs.conj().T
    mat = 0.5 * (mat + mat.conj().T)
    return SLDOperator(mat, hermitian_eig(mat), len(pairs))


# SLD eigenvector concurrences.

def _computational_first(span: np.ndarray) -> np.ndarray:
    """Orthonormal basis of a subspace built greedily from its largest projections of |00>..|11>."""
    out = []
    rest = span.copy()
    for _ in range(span.shape[1]):
        proj = rest @ rest.conj().T
        k = int(np.argmax(np.real(np.diag(proj))))
        v = proj[:, k]
        v = v / np.linalg.norm(v)
        out.append(v)
        # drop v from the remaining span
        rest = rest - np.outer(v, v.conj() @ rest)
        q, r = np.linalg.qr(rest)
        keep = np.abs(np.diag(r)) > 1e-10
        rest = q[:, keep]
    return np.column_stack(out)


def _product_first(span: np.ndarray) -> np.ndarray:
    """Canonical basis of a 2-dim subspace: a product vector (if one exists) and its complement.

    A vector x = z1 v1 + z2 v2 is a product state exactly when
    x^T (sy (x) sy) x = 0, a quadratic in z2/z1.
    """
    v1, v2 = span[:, 0], span[:, 1]
    t11, t12, t22 = v1 @ YY @ v1, v1 @ YY @ v2, v2 @ YY @ v2
    if max(abs(t11), abs(t12), abs(t22)) < 1e-12:
        return _computational_first(span)
    cands = []
    if abs(t22) > 1e-14:
        for z in np.roots([t22, 2 * t12, t11]):
            cands.append(v1 + z * v2)
    else:
        cands.append(v2)
        if abs(t12) > 1e-14:
            cands.append(v1 - t11 / (2 * t12) * v2)
    cands = [c / np.linalg.norm(c) for c in cands]
    first = max(cands, key=lambda c: float(np.max(np.abs(c))))
    other = v1 - np.vdot(first, v1) * first
    if np.linalg.norm(other) < 1e-8:
        other = v2 - np.vdot(first, v2) * first
    other = other / np.linalg.norm(other)
    return np.column_stack([first, other])


def _canonical_cluster(span: np.ndarray) -> np.ndarray:
    if span.shape[1] == 1:
        return span
    if span.shape[1] == 2:
        return _product_first(span)
    return _computational_first(span)


def sld_eigen_concurrences(L: SLDOperator, zero_eig: float = tol_.SLD_ZERO_EIG,
                           gap: float = tol_.DEGENERACY_GAP):
    """(eigenvalue, concurrence) for every SLD eigenvector, plus a degeneracy flag.

    Inside a degenerate cluster (including the kernel, |eig| <= zero_eig) the
    individual vectors are not unique; a product-first canonical basis is used.
    """
    w = L.eigen.eigenvalues
    v = L.eigen.eigenvectors
    labels = np.where(np.abs(w) <= zero_eig, 0.0, w)
    out = []
    degenerate = False
    start = 0
    for k in range(1, w.size + 1):
        if k == w.size or abs(labels[k] - labels[k - 1]) >= gap:
            block = _canonical_cluster(v[:, start:k])
            if k - start > 1 and labels[start] != 0.0:
                degenerate = True
            for j in range(block.shape[1]):
                out.append((float(labels[start]), concurrence_pure(block[:, j])))
            start = k
    return out, degenerate


def reported_csld(pairs, product_tol: float = tol_.PRODUCT_STATE_TOL) -> list[float]:
    """Concurrences of eigenvectors with non-zero eigenvalue, then entangled kernel vectors."""
    nonzero = [c for e, c in pairs if e != 0.0]
    kernel = [c for e, c in pairs if e == 0.0 and c > product_tol]
    return nonzero + kernel


# Derivatives in g.

def _stencil(fn: Callable, g: float, h: float, offsets):
    return [fn(g + k * h) for k in offsets]


def drho_dg(rho_of_g: Callable, g: float, cfg: DerivativeConfig = DerivativeConfig(),
            t: float | None = None) -> np.ndarray:
    """Finite-difference d rho/dg of a parametric source (vector or matrix valued)."""
    def f(x):
        return _density(rho_of_g(x))

    h = cfg.step_for(g, t)
    if cfg.scheme == "central-3pt":
        fm, fp = _stencil(f, g, h, (-1, 1))
        d = (fp - fm) / (2 * h)
    elif cfg.scheme == "central-5pt":
        fm2, fm1, fp1, fp2 = _stencil(f, g, h, (-2, -1, 1, 2))
        d = (8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * h)
    else:
        # Richardson table on central differences with steps 4h, 2h, h.
        vals = {k: f(g + k * h) for k in (-4, -2, -1, 1, 2, 4)}
        d1 = [(vals[s] - vals[-s]) / (2 * s * h) for s in (4, 2, 1)]
        d2 = [(4 * d1[i + 1] - d1[i]) / 3 for i in range(2)]
        d = (16 * d2[1] - d2[0]) / 15
    return 0.5 * (d + d.conj().T)


def coe(C_of_g: Callable, g: float, cfg: DerivativeConfig = DerivativeConfig(),
        t: float | None = None, scale: float = 0.0) -> float | None:
    """-d^2 C/dg^2, or None where the stencil touches a kink of C.

    Undefined when a stencil point has C below the kink tolerance, or when the
    3-point and 5-point estimates differ by more than the agreement tolerance
    relative to max(|CoE|, scale).
    """
    h = cfg.step_for(g, t)
    return coe_from_stencil(_stencil(C_of_g, g, h, (-2, -1, 0, 1, 2)), h, cfg, scale)


def coe_from_stencil(c, h: float, cfg: DerivativeConfig = DerivativeConfig(),
                     scale: float = 0.0) -> float | None:
    """CoE from concurrence values at g + k h, k = -2..2."""
    if min(c) < cfg.kink_tolerance:
        return None
    c3 = -(c[1] - 2 * c[2] + c[3]) / (h * h)
    c5 = -(-c[0] + 16 * c[1] - 30 * c[2] + 16 * c[3] - c[4]) / (12 * h * h)
    # round-off in C of order 1e-13 must not read as a kink where C is flat
    noise = 1e-13 * max(c) / (h * h)
    if abs(c3 - c5) > cfg.stencil_agreement * max(abs(c5), scale, noise):
        return None
    return c3 if cfg.scheme == "central-3pt" else c5


# Closed-form oracles.

FORM_FAMILIES = ("psi_opt", "psi_alpha", "phi_alpha", "open_separable", "open_entangled", "bell_pair")


def _curvature_factor(a2: float, c: float) -> float:
    """(1 - 2c^2 + a^2 c^4) / (1 - a^2 c^2)^{3/2}."""
    return (1 - 2 * c * c + a2 * c ** 4) / (1 - a2 * c * c) ** 1.5


def closed_form_suite(family: str, params: dict, g: float, t: float):
    """Exact (F, C, CoE, C_SLD) for the analytically solved families.

    CoE is None at kinks of C; C_SLD is None where no closed form is known.
    Open families assume the flip-flop coupling with unit strength.
    """
    p = dict(params)
    if family in ("psi_opt", "psi_alpha", "phi_alpha"):
        eta = float(p.get("eta_xy", p.get("eta", 1.0)))
        u = 2 * g * eta * t
        s, c = abs(math.sin(u)), math.cos(u)
        if family == "psi_opt":
            F = 4 * t * t * eta * eta
            return F, s, (F * s if s > 0 else None), abs(c)
        alpha = float(p["alpha"])
        if family == "psi_alpha":
            a2 = 4 * alpha ** 2 * (1 - alpha ** 2)
            F = 4 * t * t * eta * eta * a2
            C = math.sqrt(max(0.0, 1 - a2 * c * c))
            coe_ = F * _curvature_factor(a2, c) if C > 0 else None
            return F, C, coe_, abs(c)
        F = 4 * alpha ** 2 * t * t * eta * eta
        return F, alpha ** 2 * s, (F * s if s > 0 and alpha > 0 else None), None
    if family in ("open_separable", "open_entangled"):
        kappa = float(p["kappa"])
        alpha = 1.0 if family == "open_separable" else float(p["alpha"])
        decay = math.exp(-kappa * t)
        a2 = (1 - 2 * alpha ** 2) ** 2
        c = math.cos(2 * g * t)
        F = 4 * t * t * decay * a2
        C = decay * math.sqrt(max(0.0, 1 - a2 * c * c))
        coe_ = F * _curvature_factor(a2, c) if C > 0 else None
        return F, C, coe_, abs(c)
    if family == "bell_pair":
        omegas = bell_omegas(*p["etas"])
        first, second = p["pair"]
        i, j = int(first, 2), int(second, 2)
        eta = 0.5 * (omegas[i] - omegas[j])
        u = 2 * g * eta * t
        same_parity = (first.count("1") - second.count("1")) % 2 == 0
        C = abs(math.cos(u)) if same_parity else abs(math.sin(u))
        F = 4 * eta * eta * t * t
        return F, C, (F * C if C > 0 else None), None
    raise ValueError(f"unknown family {family!r}; expected one of {FORM_FAMILIES}")


# Fidelity relation.

def fidelity_relation_check(rho_of_g: Callable, g: float, delta_g: float) -> FidelityCheck:
    """Concurrence loss against fidelity loss for a step delta_g from g.

    residual = [C(g) - C(g + dg)] - 4[1 - sqrt(F_U)], and the finite-step QFI
    estimate is 8[1 - sqrt(F_U)]/dg^2.
    """
    here, there = rho_of_g(g), rho_of_g(g + delta_g)
    if np.ndim(here) == 1:
        root = float(abs(np.vdot(here, there)))
        fid = root * root
    else:
        fid = uhlmann_fidelity(here, there)
        root = math.sqrt(fid)
    loss = 1.0 - root
    residual = (state_concurrence(here) - state_concurrence(there)) - 4.0 * loss
    return FidelityCheck(residual, 8.0 * loss / (delta_g * delta_g), fid)


# Samples and sweeps.

def _parabola_peak(lo: float, mid: float, hi: float, spacing: float):
    """Vertex offset and curvature of the parabola through three equally spaced values."""
    curv = lo - 2 * mid + hi
    if curv == 0:
        return math.inf, 0.0
    return 0.5 * spacing * (lo - hi) / curv, curv / (spacing * spacing)


def is_local_max(values, spacing: float, window: float) -> bool:
    lo, mid, hi = values
    if lo is None or mid is None or hi is None:
        return False
    offset, curv = _parabola_peak(lo, mid, hi, spacing)
    return bool(curv < 0 and abs(offset) <= window)


def sample(probe, g: float, t: float, cfg: DerivativeConfig = DerivativeConfig(),
           resolution: float | None = None,
           ratio_tol: float = tol_.COINCIDENCE_RATIO_TOL,
           csld_tol: float = tol_.COINCIDENCE_CSLD_TOL) -> MetrologySample:
    """Evaluate F, CoE, C and the SLD structure at one (g, t).

    ``probe`` exposes state(g, t); closed probes with an exact drho(g, t) use
    it, others are differentiated numerically. ``resolution`` is the g-window
    for the "C maximal" and "CoE maximal" flags; without it those flags are False.
    """
    state = probe.state(g, t)
    rho = _density(state)
    if hasattr(probe, "drho"):
        drho = probe.drho(g, t)
    else:
        drho = drho_dg(lambda x: probe.state(x, t), g, cfg, t)
    L = sld(rho, drho)
    F = max(0.0, float(np.real(np.trace(rho @ L.matrix @ L.matrix))))

    def conc(x):
        return state_concurrence(probe.state(x, t))

    C = state_concurrence(state)
    CoE = coe(conc, g, cfg, t, scale=F)
    pairs, degenerate = sld_eigen_concurrences(L)
    csld = reported_csld(pairs)

    flag3 = CoE is not None and F > 0 and abs(CoE / F - 1.0) < ratio_tol
    flag4 = all(c < csld_tol for c in csld)
    flag1 = flag2 = False
    if resolution:
        cs = [conc(g - resolution), C, conc(g + resolution)]
        flag1 = is_local_max(cs, resolution, 0.5 * resolution)
        coes = [coe(conc, g - resolution, cfg, t, scale=F), CoE, coe(conc, g + resolution, cfg, t, scale=F)]
        flag2 = is_local_max(coes, resolution, 0.5 * resolution)
    return MetrologySample(float(t), float(g), F, CoE, C, tuple(csld),
                           (flag1, flag2, flag3, flag4), L, tuple(pairs), degenerate)


def sweep(probe, g: float, times, cfg: DerivativeConfig = DerivativeConfig(),
          flags: bool = True) -> list[MetrologySample]:
    """Samples along a time grid at fixed g; the flag window is one grid step in g*t."""
    times = np.asarray(times, dtype=float)
    dt = float(np.min(np.diff(times))) if times.size > 1 else 0.0
    out = []
    for t in times:
        res = g * dt / t if (flags and t > 0 and dt > 0) else None
        out.append(sample(probe, g, float(t), cfg, res))
    return out


CSV_COLUMNS = ["t", "gt", "g2F", "g2CoE", "C", "C_SLD_1", "C_SLD_2", "C_SLD_3", "flags"]


def sample_row(s: MetrologySample) -> list[str]:
    g2 = s.g * s.g
    csld = [repr(c) for c in s.C_SLD[:3]] + [""] * (3 - min(3, len(s.C_SLD)))
    return ([repr(s.t), repr(s.g * s.t), repr(g2 * s.F),
             "" if s.CoE is None else repr(g2 * s.CoE), repr(s.C)]
            + csld + ["".join("1" if f else "0" for f in s.coincidence_flags)])


def write_samples_csv(samples, path, header: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, val in (header or {}).items():
            fh.write(f"# {key} = {val}\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for s in samples:
            w.writerow(sample_row(s))
