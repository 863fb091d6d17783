"""Randomized bound scans, coincidence finding, transcendental roots and figure data."""
from __future__ import annotations

import json
import math
import multiprocessing as mp
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import __version__
from . import tolerances as tol_
from .dynamics import AnalyticOpenProbe, ClosedProbe, NoiseSpec, OpenProbe
from .hamiltonian import BELL, CouplingMatrix, bell_omegas, canonicalize, flipflop
from .metrology import (DerivativeConfig, MetrologySample, coe, coe_from_stencil, is_local_max,
                        sample, state_concurrence, sweep, write_samples_csv)
from .states import named_state

STENCIL = np.arange(-2, 3)


# Conjecture scan.

@dataclass(frozen=True)
class ScanConfig:
    seed: int = 0
    n_hamiltonians: int = 1000
    n_states: int = 10
    gt_grid: tuple = (0.1, 10.0, 10)
    tolerance: float = tol_.SCAN_TOLERANCE
    g: float = 1.0

    def __post_init__(self):
        if self.n_hamiltonians <= 0 or self.n_states <= 0:
            raise ValueError("n_hamiltonians and n_states must be positive")
        lo, hi, n = self.gt_grid
        if not (int(n) >= 1 and lo > 0 and hi >= lo and (n == 1 or hi > lo)):
            raise ValueError(f"invalid gt grid {self.gt_grid}: need 0 < min <= max and points >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.tolerance > 0 or not self.g > 0:
            raise ValueError("tolerance and g must be positive")

    @property
    def gt_values(self) -> np.ndarray:
        lo, hi, n = self.gt_grid
        return np.linspace(lo, hi, int(n))

    @property
    def instances(self) -> int:
        return self.n_hamiltonians * self.n_states * int(self.gt_grid[2])


@dataclass
class ScanReport:
    config: dict
    instances: int = 0
    undefined: int = 0
    worst_margin: float = math.inf
    worst_relative_margin: float = math.inf
    worst_instance: dict | None = None
    violations: list = field(default_factory=list)
    wall_time: float = 0.0
    workers: int = 1
    distributions: str = ("eta entries iid uniform on [-1, 1]; Bell amplitudes Haar "
                          "(normalized complex Gaussians); per-Hamiltonian streams "
                          "SeedSequence(seed, spawn_key=(index,))")

    def merge(self, other: "ScanReport") -> "ScanReport":
        """Associative merge: counts add, margins take the minimum, violations concatenate."""
        out = ScanReport(self.config, self.instances + other.instances,
                         self.undefined + other.undefined, workers=self.workers,
                         distributions=self.distributions)
        best = min((self, other), key=lambda r: (r.worst_margin, _coord_key(r.worst_instance)))
        out.worst_margin = best.worst_margin
        out.worst_instance = best.worst_instance
        out.worst_relative_margin = min(self.worst_relative_margin, other.worst_relative_margin)
        out.violations = sorted(self.violations + other.violations, key=_coord_key)
        out.wall_time = self.wall_time + other.wall_time
        return out

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("violations")
        d["n_violations"] = len(self.violations)
        return d

    def deterministic_view(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        d.pop("workers")
        return d

    def to_json_lines(self) -> str:
        lines = [json.dumps({"type": "summary", **self.summary()})]
        lines += [json.dumps({"type": "violation", **v}) for v in self.violations]
        return "\n".join(lines) + "\n"


def _coord_key(c):
    if c is None:
        return (math.inf, math.inf, math.inf)
    return (c["hamiltonian"], c["state"], c["gt"])


def _pure_concurrence_rows(amps: np.ndarray) -> np.ndarray:
    """2|a00 a11 - a01 a10| along the last axis."""
    return np.minimum(1.0, 2.0 * np.abs(amps[..., 0] * amps[..., 3] - amps[..., 1] * amps[..., 2]))


def _scan_block(args) -> ScanReport:
    cfg, start, stop = args
    report = ScanReport(asdict(cfg))
    dcfg = DerivativeConfig()
    g = cfg.g
    ts = cfg.gt_values / g
    hs = np.array([dcfg.step_for(g, t) for t in ts])
    # g values on the stencil, shape (n_t, 5)
    gs = g + hs[:, None] * STENCIL[None, :]
    for j in range(start, stop):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(j,)))
        eta = rng.uniform(-1.0, 1.0, (3, 3))
        ch = canonicalize(CouplingMatrix(eta, g))
        omegas = bell_omegas(ch.eta_x, ch.eta_y, ch.eta_z)
        for k in range(cfg.n_states):
            z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            beta = z / np.linalg.norm(z)
            weights = np.abs(beta) ** 2
            mean = weights @ omegas
            var = max(0.0, float(weights @ omegas ** 2 - mean * mean))
            F = 4.0 * ts ** 2 * var
            phases = np.exp(-1j * omegas[None, None, :] * (gs * ts[:, None])[:, :, None])
            amps = (phases * beta) @ BELL.T
            cvals = _pure_concurrence_rows(amps)
            for i, t in enumerate(ts):
                report.instances += 1
                value = coe_from_stencil(cvals[i], hs[i], dcfg, scale=F[i])
                if value is None:
                    report.undefined += 1
                    continue
                margin = F[i] - value
                rel = margin / max(1.0, F[i])
                coord = {"hamiltonian": j, "state": k, "gt": float(g * t)}
                if margin < report.worst_margin:
                    report.worst_margin = float(margin)
                    report.worst_instance = {**coord, "F": float(F[i]), "CoE": float(value),
                                             "eta": eta.tolist(),
                                             "beta": [[float(b.real), float(b.imag)] for b in beta]}
                report.worst_relative_margin = min(report.worst_relative_margin, float(rel))
                if rel < -cfg.tolerance:
                    report.violations.append({**coord, "F": float(F[i]), "CoE": float(value),
                                              "margin": float(margin)})
    return report


def inequality_scan(cfg: ScanConfig, workers: int = 1, chunks: int | None = None) -> ScanReport:
    """Test F - CoE >= -tol * max(1, F) on random Hamiltonians, states and times.

    Each Hamiltonian index owns an independent random stream, so the report
    does not depend on the number of workers.
    """
    t0 = time.perf_counter()
    workers = max(1, int(workers))
    n = cfg.n_hamiltonians
    chunks = chunks or max(1, min(n, 4 * workers))
    edges = np.linspace(0, n, chunks + 1).astype(int)
    tasks = [(cfg, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if workers == 1:
        parts = [_scan_block(t) for t in tasks]
    else:
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
        with ctx.Pool(workers) as pool:
            parts = pool.map(_scan_block, tasks)
    report = parts[0]
    for p in parts[1:]:
        report = report.merge(p)
    report.workers = workers
    report.wall_time = time.perf_counter() - t0
    return report


# Coincidence events.

class CoincidenceEvent(NamedTuple):
    t: float
    gt: float
    index: int
    sample: MetrologySample
    flags: tuple


def find_coincidences(samples: list[MetrologySample], probe,
                      cfg: DerivativeConfig = DerivativeConfig(),
                      ratio_tol: float = tol_.COINCIDENCE_RATIO_TOL,
                      csld_tol: float = tol_.COINCIDENCE_CSLD_TOL,
                      window: int = 3) -> list[CoincidenceEvent]:
    """Locate points where CoE meets F and evaluate the other coincidence properties there.

    Runs of samples with |CoE/F - 1| < ratio_tol are grouped; in each group the
    touching time is refined by a parabola through CoE/F - 1 and the probe is
    resampled. Flags 1 and 2 test whether C and CoE peak in g within one grid
    step (a g-grid of +-window steps with parabolic refinement); flag 4 tests
    that every reported SLD concurrence is below csld_tol.
    """
    close = [i for i, s in enumerate(samples)
             if s.CoE is not None and s.F > 0 and abs(s.CoE / s.F - 1.0) < ratio_tol]
    groups: list[list[int]] = []
    for i in close:
        if groups and i == groups[-1][-1] + 1:
            groups[-1].append(i)
        else:
            groups.append([i])
    events = []
    for grp in groups:
        i = min(grp, key=lambda k: abs(samples[k].CoE - samples[k].F) / samples[k].F)
        s = samples[i]
        t_star = s.t
        if 0 < i < len(samples) - 1:
            lo, hi = samples[i - 1], samples[i + 1]
            if lo.CoE is not None and hi.CoE is not None and lo.F > 0:
                # CoE/F - 1 touches zero from below; unlike CoE - F it is not skewed by F ~ t^2
                d = [lo.CoE / lo.F - 1, s.CoE / s.F - 1, hi.CoE / hi.F - 1]
                h = 0.5 * (hi.t - lo.t)
                curv = d[0] - 2 * d[1] + d[2]
                if curv < 0:
                    shift = 0.5 * h * (d[0] - d[2]) / curv
                    if abs(shift) <= h:
                        t_star = s.t + shift
        dt = (samples[i + 1].t - samples[i - 1].t) / 2 if 0 < i < len(samples) - 1 else 0.0
        g = s.g
        res = g * dt / t_star if t_star > 0 and dt > 0 else cfg.step_for(g, t_star)
        refined = sample(probe, g, t_star, cfg)
        flag3 = (refined.CoE is not None and refined.F > 0
                 and abs(refined.CoE / refined.F - 1.0) < ratio_tol)

        def conc(x):
            return state_concurrence(probe.state(x, t_star))

        flag1 = bool(_peaks_within(conc, g, res, window))
        flag2 = bool(_peaks_within(lambda x: coe(conc, x, cfg, t_star, refined.F), g, res, window))
        flag4 = all(c < csld_tol for c in refined.C_SLD)
        events.append(CoincidenceEvent(t_star, g * t_star, i, refined, (flag1, flag2, flag3, flag4)))
    return events


def _peaks_within(fn, g: float, spacing: float, window: int) -> bool:
    """True when the sampled maximum of fn on g + k*spacing (|k| <= window) refines to within one spacing of g."""
    ks = np.arange(-window, window + 1)
    vals = [fn(g + k * spacing) for k in ks]
    if any(v is None for v in vals):
        return False
    m = int(np.argmax(vals))
    if m == 0 or m == len(vals) - 1:
        return False
    if not is_local_max(vals[m - 1:m + 2], spacing, spacing):
        return False
    lo, mid, hi = vals[m - 1:m + 2]
    offset = 0.5 * spacing * (lo - hi) / (lo - 2 * mid + hi)
    return abs(ks[m] * spacing + offset) <= spacing


# Transcendental equations.

class Root(NamedTuple):
    n: int
    x: float          # the dimensionless product g*eta*t (closed) or g*t (open)
    t: float
    residual: float


def _closed_residual(x: float) -> float:
    return math.tan(2 * x) + x


def _open_residual(x: float, ratio: float) -> float:
    return math.tan(2 * x) - 2 * x / (ratio * x - 2)


def transcendental_roots(kind: str, params: dict | None = None, bracket_count: int = 20,
                         residual_tol: float = tol_.ROOT_RESIDUAL) -> list[Root]:
    """Positive roots, in increasing order, of

    closed: tan(2x) = -x with x = g*eta*t
    open:   tan(2x) = 2x/(r x - 2) with x = g*t and r = kappa/g

    Brackets are the branches of tan(2x) between its poles (and, for the open
    kind, the pole of the right-hand side); both sides are monotone there, so
    each bracket holds at most one root. The trivial root x = 0 is excluded.
    Closed-kind root n lies just above (2n+1)pi/4.
    """
    params = dict(params or {})
    g = float(params.get("g", 1.0))
    if kind == "closed":
        eta = float(params.get("eta", 1.0))
        if g * eta <= 0:
            raise ValueError("closed-kind roots need g*eta > 0")
        fn = _closed_residual
        scale = g * eta
        cuts = []
    elif kind == "open":
        kappa = float(params.get("kappa", 0.5))
        if g <= 0 or kappa < 0:
            raise ValueError("open-kind roots need g > 0 and kappa >= 0")
        ratio = kappa / g
        fn = lambda x: _open_residual(x, ratio)
        scale = g
        cuts = [2.0 / ratio] if ratio > 0 else []
    else:
        raise ValueError(f"unknown kind {kind!r}; expected 'closed' or 'open'")

    roots: list[Root] = []
    m = 0
    while len(roots) < bracket_count:
        lo_pole = (2 * m - 1) * math.pi / 4
        hi_pole = (2 * m + 1) * math.pi / 4
        edges = [max(lo_pole, 0.0)] + [c for c in cuts if lo_pole < c < hi_pole] + [hi_pole]
        for a, b in zip(edges[:-1], edges[1:]):
            width = b - a
            lo, hi = a + 1e-12 * max(1.0, a), b - 1e-12 * max(1.0, b)
            if a == 0.0:
                lo = 1e-9 * width
            flo, fhi = fn(lo), fn(hi)
            if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
                continue
            x = brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
            res = abs(fn(x))
            if res >= residual_tol:
                # polish on the steep side with a few Newton steps in extended form
                x, res = _polish(fn, x, lo, hi)
            if res >= residual_tol:
                raise ArithmeticError(f"root near x = {x} has residual {res:.2e}")
            roots.append(Root(len(roots), x, x / scale, res))
            if len(roots) >= bracket_count:
                break
        m += 1
        if m > 100 * (bracket_count + 1):
            raise ArithmeticError("empty bracket: no further roots found")
    return roots


def _polish(fn, x, lo, hi):
    best = (x, abs(fn(x)))
    for cand in np.nextafter(x, [lo, hi]):
        r = abs(fn(cand))
        if r < best[1]:
            best = (float(cand), r)
    return best


# Figure data.

FIGURES = {
    "fig1": {"family": "psi_alpha", "alpha": 0.3, "eta_xy": 1.0, "kappa": 0.0},
    "fig2": {"family": "phi_alpha", "alpha": 0.3, "eta_xy": 1.0, "kappa": 0.0},
    "fig3": {"family": "psi_opt", "alpha": 1.0, "eta_xy": 1.0, "kappa": 0.5},
    "fig4": {"family": "psi_e_alpha", "alpha": 0.25, "eta_xy": 1.0, "kappa": 0.5},
}

_PLOT_TEMPLATE = '''"""Plot {name} from {csv_name}."""
import csv
import sys

import matplotlib.pyplot as plt


def column(rows, key):
    return [float(r[key]) if r[key] != "" else float("nan") for r in rows]


with open("{csv_name}") as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))

gt = column(rows, "gt")
fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
top.plot(gt, column(rows, "g2F"), "b--", label="g^2 F")
top.plot(gt, column(rows, "g2CoE"), "r-", label="g^2 CoE")
top.legend()
bottom.plot(gt, column(rows, "C"), "g--", label="C")
for k in (1, 2, 3):
    vals = column(rows, f"C_SLD_{{k}}")
    if any(v == v for v in vals):
        bottom.plot(gt, vals, label=f"C_SLD {{k}}")
bottom.set_xlabel("gt")
bottom.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "{name}.png", dpi=150)
'''


def figure_probe(which: str, params: dict | None = None):
    """Probe and resolved parameters for one of the figure presets."""
    if which not in FIGURES:
        raise ValueError(f"unknown figure {which!r}; expected one of {sorted(FIGURES)}")
    p = {**FIGURES[which], "g": 1.0, "points": 801, "gt_max": 2 * math.pi, "source": "numeric",
         **(params or {})}
    ch = canonicalize(flipflop(p["eta_xy"], p["g"]))
    alpha = None if p["family"] == "psi_opt" else p["alpha"]
    initial = named_state(p["family"], alpha)
    if which in ("fig1", "fig2"):
        probe = ClosedProbe(ch, initial)
    elif p["source"] == "analytic":
        if p["eta_xy"] != 1.0:
            raise ValueError("the analytic open source assumes eta_xy = 1")
        probe = AnalyticOpenProbe(p["alpha"], p["kappa"])
    elif p["source"] == "numeric":
        probe = OpenProbe(ch, initial, NoiseSpec(p["kappa"]), method="expm")
    else:
        raise ValueError(f"unknown source {p['source']!r}; expected 'numeric' or 'analytic'")
    return probe, p


def figure_samples(which: str, params: dict | None = None,
                   cfg: DerivativeConfig = DerivativeConfig()):
    probe, p = figure_probe(which, params)
    if int(p["points"]) < 2:
        raise ValueError("need at least two grid points")
    times = np.linspace(0.0, p["gt_max"], int(p["points"])) / p["g"]
    return sweep(probe, p["g"], times, cfg), probe, p


def emit_figure(which: str, params: dict | None = None, out=".",
                cfg: DerivativeConfig = DerivativeConfig(), header: dict | None = None):
    """Write <which>.csv and <which>_plot.py into ``out``; returns both paths and the samples."""
    samples, probe, p = figure_samples(which, params, cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{which}.csv"
    meta = {"figure": which, "version": __version__, **p, **(header or {})}
    write_samples_csv(samples, csv_path, meta)
    script = out / f"{which}_plot.py"
    script.write_text(_PLOT_TEMPLATE.format(name=which, csv_name=csv_path.name))
    return csv_path, script, samples


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1
