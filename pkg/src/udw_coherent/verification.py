"""Reproducible checks of spectral invariance and the supporting identities.

Each ``run_*`` function returns a :class:`VerificationReport`.  A check passes
only when every measured quantity meets its threshold; quadrature or guard
failures make it ``ERROR`` instead of ``FAIL``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .detectors import DetectorSpec, GaussianSmearing, GaussianSwitching
from .field_state import CoherentAmplitude, Packet
from .perturbation import (
    PerturbativeTerms,
    assemble_terms,
    compute_L_mu_nu,
    direct_Lbar_mu_nu,
    direct_Mbar,
)
from .quadrature import QuadratureConfig, QuadratureError
from .state_assembly import (
    DEFAULT_GUARD,
    PerturbativeGuardError,
    assemble_rho_A,
    assemble_rho_AB,
    charpoly_coefficients,
    eig_hermitian,
    hermiticity_defect,
    negativity,
    partial_transpose_B,
    pt_eigs_closed,
    rho_A_eigs_closed,
    rho_ab_eigs_closed,
)

PASS, FAIL, ERROR, INSUFFICIENT = "PASS", "FAIL", "ERROR", "INSUFFICIENT_POINTS"


def baseline_detectors(separation: float = 2.0, coupling: float = 1.0):
    """Identical Gaussian detectors (sigma = T = Omega = 1) along the x axis."""
    mk = lambda label, x: DetectorSpec(label, 1.0, (x, 0.0, 0.0), coupling,
                                       GaussianSmearing(1.0), GaussianSwitching(1.0))
    return mk("A", 0.0), mk("B", separation)


def baseline_amplitudes() -> list[CoherentAmplitude]:
    """Vacuum, one packet near the gap resonance, and a two-packet superposition."""
    single = CoherentAmplitude(3, (Packet(50.0, (0.0, 0.0, 1.0), 0.5),))
    double = CoherentAmplitude(3, (
        Packet(30.0 * np.exp(1j * math.pi / 3), (0.8, 0.3, 0.0), 0.4),
        Packet(-20.0j, (0.0, -1.5, 0.5), 0.7),
    ))
    return [CoherentAmplitude.vacuum(3), single, double]


@dataclass
class ScanSpec:
    detector_A: DetectorSpec
    detector_B: DetectorSpec
    amplitudes: list[CoherentAmplitude]
    lambda_values: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    seed: int = 42
    n_random: int = 100
    n_random_closed: int = 50
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    gap_factor: float = 100.0
    slope_min: float = 2.7
    floor: float = 1e-13
    appendix_rtol: float = 1e-6
    guard: float = DEFAULT_GUARD
    threads: int = 1

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambda_values)
        if any(x <= 0 for x in lam) or any(b >= a for a, b in zip(lam, lam[1:])):
            raise ValueError("lambda_values must be positive and strictly decreasing")
        self.lambda_values = lam
        n = self.detector_A.n
        if not any(a.is_vacuum for a in self.amplitudes):
            self.amplitudes = [CoherentAmplitude.vacuum(n)] + list(self.amplitudes)

    @classmethod
    def default(cls, **kw) -> "ScanSpec":
        A, B = baseline_detectors()
        return cls(A, B, baseline_amplitudes(), **kw)

    def coupled(self, lam: float) -> tuple[DetectorSpec, DetectorSpec]:
        return self.detector_A.with_coupling(lam), self.detector_B.with_coupling(lam)

    @property
    def vacuum(self) -> CoherentAmplitude:
        return CoherentAmplitude.vacuum(self.detector_A.n)


@dataclass
class CheckResult:
    name: str
    status: str
    measured: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    runtime: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "measured": _plain(self.measured),
                "thresholds": _plain(self.thresholds), "runtime": self.runtime,
                "message": self.message}


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def status(self) -> str:
        states = {c.status for c in self.checks}
        if ERROR in states:
            return ERROR
        if states - {PASS}:
            return FAIL
        return PASS

    def __add__(self, other: "VerificationReport") -> "VerificationReport":
        return VerificationReport(self.checks + other.checks)

    def to_dict(self) -> dict:
        return {"status": self.status, "checks": [c.to_dict() for c in self.checks]}

    def lines(self) -> list[str]:
        return [f"{c.status:<20} {c.name:<40} {c.message}" for c in self.checks]


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _map(fn: Callable, items: list, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def fit_slope(lambdas, gaps, floor: float):
    """Least-squares slope of log(gap) vs log(lambda) over points above ``floor``."""
    pts = [(math.log(l), math.log(g)) for l, g in zip(lambdas, gaps) if g > floor]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def _checked(name: str, body: Callable[[], CheckResult]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        res = body()
    except (QuadratureError, PerturbativeGuardError, ArithmeticError, ValueError) as exc:
        res = CheckResult(name, ERROR, message=f"{type(exc).__name__}: {exc}")
    res.runtime = time.perf_counter() - t0
    return res


class _Structure:
    """Running maxima of the structural defects of assembled matrices."""

    def __init__(self):
        self.herm = 0.0
        self.trace_exact = True
        self.count = 0

    def see(self, m: np.ndarray):
        self.herm = max(self.herm, hermiticity_defect(m))
        self.trace_exact &= bool(np.trace(m).real == 1.0)
        self.count += 1

    def ok(self) -> bool:
        return self.trace_exact and self.herm <= 1e-12

    def summary(self) -> dict:
        return {"matrices": self.count, "max_hermiticity_defect": self.herm,
                "trace_exactly_one": self.trace_exact}


def _gap_verdict(name, lambdas, per_amp_gaps: dict, scan: ScanSpec, structure: _Structure,
                 extra: dict | None = None) -> CheckResult:
    measured = {"lambda": list(lambdas)}
    ok = True
    slopes = {}
    for key, gaps in per_amp_gaps.items():
        measured[key] = list(gaps)
        for lam, g in zip(lambdas, gaps):
            ok &= g <= scan.gap_factor * lam ** 3
        s = fit_slope(lambdas, gaps, scan.floor)
        slopes[key] = s
        if s is not None:
            ok &= s >= scan.slope_min
    measured["slopes"] = slopes
    measured["structure"] = structure.summary()
    measured.update(extra or {})
    ok &= structure.ok()
    thresholds = {"gap": f"{scan.gap_factor} * lambda^3", "slope_min": scan.slope_min,
                  "censor_floor": scan.floor}
    fitted = [s for s in slopes.values() if s is not None]
    msg = ("slopes " + ", ".join(f"{s:.2f}" for s in fitted)) if fitted else "all gaps at floor"
    return CheckResult(name, PASS if ok else FAIL, measured, thresholds, message=msg)


def run_theorem1(scan: ScanSpec) -> VerificationReport:
    """Single-detector spectra: coherent versus vacuum."""

    def body():
        lambdas = scan.lambda_values
        if len(lambdas) < 2:
            return CheckResult("theorem1", INSUFFICIENT, message="need at least two lambda values")
        structure = _Structure()
        cells = [(i, lam) for i in range(len(scan.amplitudes)) for lam in lambdas]

        def cell(c):
            i, lam = c
            A, _ = scan.coupled(lam)
            vac = assemble_rho_A(assemble_terms(A, None, scan.vacuum, scan.quadrature), scan.guard)
            coh = assemble_rho_A(assemble_terms(A, None, scan.amplitudes[i], scan.quadrature),
                                 scan.guard)
            gap = float(np.max(np.abs(eig_hermitian(coh.matrix) - eig_hermitian(vac.matrix))))
            dp = coh.excitation_probability - vac.excitation_probability
            return gap, dp, (vac.matrix, coh.matrix)

        out = dict(zip(cells, _map(cell, cells, scan.threads)))
        gaps, dprob = {}, {}
        for i in range(len(scan.amplitudes)):
            gaps[f"amp{i}"] = [out[(i, lam)][0] for lam in lambdas]
            dprob[f"amp{i}"] = [out[(i, lam)][1] for lam in lambdas]
            for lam in lambdas:
                for m in out[(i, lam)][2]:
                    structure.see(m)
        return _gap_verdict("theorem1", lambdas, gaps, scan, structure,
                            {"excitation_increase": dprob})

    return VerificationReport([_checked("theorem1", body)])


def _pair_cell(scan: ScanSpec, amp: CoherentAmplitude, lam: float):
    A, B = scan.coupled(lam)
    terms = assemble_terms(A, B, amp, scan.quadrature)
    rho = assemble_rho_AB(terms, scan.guard)
    pt = partial_transpose_B(rho)
    return terms, rho, pt


def run_theorem2(scan: ScanSpec) -> VerificationReport:
    """Two-detector and partial-transpose spectra, and negativity."""

    def body():
        lambdas = scan.lambda_values
        if len(lambdas) < 2:
            return CheckResult("theorem2", INSUFFICIENT, message="need at least two lambda values")
        structure = _Structure()
        vac = {lam: _pair_cell(scan, scan.vacuum, lam) for lam in lambdas}
        cells = [(i, lam) for i in range(len(scan.amplitudes)) for lam in lambdas]
        out = dict(zip(cells, _map(lambda c: _pair_cell(scan, scan.amplitudes[c[0]], c[1]),
                                   cells, scan.threads)))
        gaps = {}
        neg = {}
        for i in range(len(scan.amplitudes)):
            g_rho, g_pt, g_neg = [], [], []
            for lam in lambdas:
                _, rho, pt = out[(i, lam)]
                _, rho0, pt0 = vac[lam]
                for m in (rho.matrix, pt.matrix, rho0.matrix):
                    structure.see(m)
                e_pt, e_pt0 = eig_hermitian(pt.matrix), eig_hermitian(pt0.matrix)
                g_rho.append(float(np.max(np.abs(eig_hermitian(rho.matrix)
                                                 - eig_hermitian(rho0.matrix)))))
                g_pt.append(float(np.max(np.abs(e_pt - e_pt0))))
                g_neg.append(abs(negativity(e_pt) - negativity(e_pt0)))
            gaps[f"amp{i}.rho_AB"] = g_rho
            gaps[f"amp{i}.pt"] = g_pt
            gaps[f"amp{i}.negativity"] = g_neg
            neg[f"amp{i}"] = [negativity(eig_hermitian(out[(i, lam)][2].matrix)) for lam in lambdas]
        return _gap_verdict("theorem2", lambdas, gaps, scan, structure, {"negativity": neg})

    return VerificationReport([_checked("theorem2", body)])


def run_charpoly_check(scan: ScanSpec) -> VerificationReport:
    """Partial-transpose characteristic polynomial against its vacuum leading order."""

    def body():
        structure = _Structure()
        ok = True
        measured = {"lambda": list(scan.lambda_values)}
        for i, amp in enumerate(scan.amplitudes):
            d3, d2, d1 = [], [], []
            for lam in scan.lambda_values:
                terms, _, pt = _pair_cell(scan, amp, lam)
                structure.see(pt.matrix)
                c = charpoly_coefficients(pt.matrix)
                C2 = terms.L_AA + terms.L_BB
                C4 = abs(terms.M) ** 2 - terms.L_AA * terms.L_BB
                d3.append(abs(c[1] + 1.0))
                d2.append(abs(c[2] - C2))
                d1.append(abs(c[3] - C4))
                ok &= d2[-1] <= scan.gap_factor * lam ** 3
                ok &= d1[-1] <= scan.gap_factor * lam ** 5
                ok &= d3[-1] <= 1e-15
            measured[f"amp{i}"] = {"x3": d3, "x2": d2, "x1": d1,
                                   "x2_slope": fit_slope(scan.lambda_values, d2, scan.floor)}
        ok &= structure.ok()
        measured["structure"] = structure.summary()
        thresholds = {"x3": 1e-15, "x2": f"{scan.gap_factor} * lambda^3",
                      "x1": f"{scan.gap_factor} * lambda^5"}
        return CheckResult("charpoly", PASS if ok else FAIL, measured, thresholds)

    return VerificationReport([_checked("charpoly", body)])


def _rel(a: complex, b: complex) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def run_appendixA(scan: ScanSpec) -> VerificationReport:
    """Direct double time integrals against the stored products of ``Lbar``."""

    def body():
        lam = scan.lambda_values[0]
        A, B = scan.coupled(lam)
        cfg = scan.quadrature
        worst = 0.0
        measured = {}
        for i, amp in enumerate(scan.amplitudes):
            t = assemble_terms(A, B, amp, cfg)
            pairs = {
                "Lbar_AA": (direct_Lbar_mu_nu(A, A, amp, cfg).value, t.Lbar_AA),
                "Lbar_BB": (direct_Lbar_mu_nu(B, B, amp, cfg).value, t.Lbar_BB),
                "Lbar_AB": (direct_Lbar_mu_nu(A, B, amp, cfg).value, t.Lbar_AB),
                "Mbar": (direct_Mbar(A, B, amp, cfg).value, t.Mbar),
            }
            rel = {k: _rel(complex(d), complex(s)) for k, (d, s) in pairs.items()}
            measured[f"amp{i}"] = rel
            worst = max(worst, max(rel.values()))
        ok = worst <= scan.appendix_rtol
        return CheckResult("appendixA", PASS if ok else FAIL, measured,
                           {"rel_diff": scan.appendix_rtol}, message=f"max rel diff {worst:.2e}")

    return VerificationReport([_checked("appendixA", body)])


def random_pair(rng: np.random.Generator, coupling: float, n: int = 3):
    """Detector pair drawn from the well-conditioned perturbative box."""
    direction = rng.normal(size=n)
    direction /= np.linalg.norm(direction)
    d = rng.uniform(0.5, 4.0)

    def one(label, pos):
        return DetectorSpec(label, rng.uniform(0.5, 2.0), tuple(pos), coupling,
                            GaussianSmearing(rng.uniform(0.2, 1.0)),
                            GaussianSwitching(rng.uniform(0.5, 2.0)))

    return one("A", np.zeros(n)), one("B", d * direction)


def run_appendixB(scan: ScanSpec) -> VerificationReport:
    """Cauchy-Schwarz inequality for the vacuum terms and E_AB,4 >= 0."""

    def body():
        lam = scan.lambda_values[0]
        cfg = scan.quadrature
        rng = np.random.default_rng(scan.seed)
        pairs = [random_pair(rng, lam, scan.detector_A.n) for _ in range(scan.n_random)]

        def cell(p):
            A, B = p
            laa = compute_L_mu_nu(A, A, cfg).value.real
            lbb = compute_L_mu_nu(B, B, cfg).value.real
            lab = compute_L_mu_nu(A, B, cfg).value
            t = PerturbativeTerms(laa, lbb, lab)
            return (laa * lbb - abs(lab) ** 2) / (laa * lbb), rho_ab_eigs_closed(t)[3]

        res = _map(cell, pairs, scan.threads)
        margins = [r[0] for r in res]
        e4 = [r[1] for r in res]
        A0 = scan.detector_A.with_coupling(lam)
        twin = replace(A0, label="B")
        laa = compute_L_mu_nu(A0, A0, cfg).value.real
        lab = compute_L_mu_nu(A0, twin, cfg).value
        saturation = abs(laa * laa - abs(lab) ** 2) / (laa * laa)
        far = replace(scan.detector_B.with_coupling(lam), position=(50.0,) + (0.0,) * (A0.n - 1))
        lff = compute_L_mu_nu(far, far, cfg).value.real
        lfar = compute_L_mu_nu(A0, far, cfg).value
        far_margin = (laa * lff - abs(lfar) ** 2) / (laa * lff)
        ok = (min(margins) >= -1e-12 and min(e4) >= -1e-12 and saturation <= 1e-9
              and far_margin > 0)
        measured = {"configs": len(pairs), "min_relative_margin": min(margins),
                    "min_E4": min(e4), "colocated_saturation": saturation,
                    "far_relative_margin": far_margin}
        thresholds = {"relative_margin": -1e-12, "E4": -1e-12, "saturation": 1e-9}
        return CheckResult("appendixB", PASS if ok else FAIL, measured, thresholds,
                           message=f"min margin {min(margins):.3e}, min E4 {min(e4):.3e}")

    return VerificationReport([_checked("appendixB", body)])


def run_closed_form_check(scan: ScanSpec) -> VerificationReport:
    """Closed-form spectra against numeric eigenvalues on random seeded configs."""

    def body():
        cfg = scan.quadrature
        rng = np.random.default_rng(scan.seed + 1)
        geoms = [random_pair(rng, 1.0, scan.detector_A.n) for _ in range(scan.n_random_closed)]
        structure = _Structure()
        worst = {lam: 0.0 for lam in scan.lambda_values}

        def cell(j):
            A1, B1 = geoms[j]
            amp = scan.amplitudes[j % len(scan.amplitudes)]
            rows = []
            for lam in scan.lambda_values:
                A, B = A1.with_coupling(lam), B1.with_coupling(lam)
                t = assemble_terms(A, B, amp, cfg)
                rhoA = assemble_rho_A(t, scan.guard)
                rho = assemble_rho_AB(t, scan.guard)
                pt = partial_transpose_B(rho)
                g = max(
                    np.max(np.abs(eig_hermitian(rhoA.matrix) - np.array(rho_A_eigs_closed(t)))),
                    np.max(np.abs(eig_hermitian(rho.matrix) - np.sort(rho_ab_eigs_closed(t))[::-1])),
                    np.max(np.abs(eig_hermitian(pt.matrix) - np.sort(pt_eigs_closed(t))[::-1])),
                )
                rows.append((lam, float(g), (rhoA.matrix, rho.matrix, pt.matrix)))
            return rows

        for rows in _map(cell, list(range(len(geoms))), scan.threads):
            for lam, g, mats in rows:
                worst[lam] = max(worst[lam], g)
                for m in mats:
                    structure.see(m)
        ok = all(worst[lam] <= scan.gap_factor * lam ** 3 for lam in worst) and structure.ok()
        measured = {"configs": len(geoms), "max_gap": {str(k): v for k, v in worst.items()},
                    "structure": structure.summary()}
        return CheckResult("closed_form", PASS if ok else FAIL, measured,
                           {"gap": f"{scan.gap_factor} * lambda^3"},
                           message=", ".join(f"{k:g}: {v:.2e}" for k, v in worst.items()))

    return VerificationReport([_checked("closed_form", body)])


SUITES = {
    "theorem1": run_theorem1,
    "theorem2": run_theorem2,
    "charpoly": run_charpoly_check,
    "appendixA": run_appendixA,
    "appendixB": run_appendixB,
    "closed_form": run_closed_form_check,
}


def run_all(scan: ScanSpec | None) -> VerificationReport:
    if scan is None:
        return VerificationReport()
    report = VerificationReport()
    for fn in SUITES.values():
        report = report + fn(scan)
    return report
