"""Acceptance gate: one test per criterion, each printing a pass/fail line."""

import time
from dataclasses import replace

import numpy as np
import pytest

from udw_coherent.perturbation import assemble_terms, compute_M
from udw_coherent.quadrature import QuadratureConfig
from udw_coherent.state_assembly import (
    assemble_rho_A,
    assemble_rho_AB,
    partial_transpose_B,
    spectrum_report,
)
from udw_coherent.verification import (
    PASS,
    ScanSpec,
    baseline_amplitudes,
    baseline_detectors,
    random_pair,
    run_appendixA,
    run_appendixB,
    run_closed_form_check,
    run_theorem1,
    run_theorem2,
)

RUNNERS = {"theorem1": run_theorem1, "theorem2": run_theorem2, "closed_form": run_closed_form_check,
           "appendixA": run_appendixA, "appendixB": run_appendixB}
_cache = {}


def _check(name):
    if name not in _cache:
        t0 = time.perf_counter()
        rep = RUNNERS[name](ScanSpec.default())
        _cache[name] = (rep.checks[0], time.perf_counter() - t0)
    return _cache[name]


def test_criterion_1_single_detector_invariance(record_criterion):
    c, wall = _check("theorem1")
    ok = c.status == PASS and wall <= 60.0
    record_criterion(1, "rho_A spectrum independent of amplitude", ok,
                     f"{c.message}; {wall:.2f}s (limit 60s)")
    assert ok, c.to_dict()


def test_criterion_2_pair_invariance(record_criterion):
    c, wall = _check("theorem2")
    neg = max(max(v) for k, v in c.measured.items() if k.endswith(".negativity"))
    ok = c.status == PASS and wall <= 300.0
    record_criterion(2, "rho_AB and partial transpose spectra independent of amplitude", ok,
                     f"{c.message}; max negativity gap {neg:.2e}; {wall:.2f}s (limit 300s)")
    assert ok, c.to_dict()


def test_criterion_3_closed_forms(record_criterion):
    c, _ = _check("closed_form")
    worst = c.measured["max_gap"]
    ok = c.status == PASS and c.measured["configs"] >= 50
    record_criterion(3, "closed-form eigenvalues match the eigensolver", ok,
                     f"{c.measured['configs']} configs, max gaps "
                     + ", ".join(f"{g:.1e}" for g in worst.values()))
    assert ok, c.to_dict()


def test_criterion_4_factorisation_identities(record_criterion):
    c, _ = _check("appendixA")
    ok = c.status == PASS
    record_criterion(4, "fused one-point integrals factorise", ok, c.message)
    assert ok, c.to_dict()


def test_criterion_5_cauchy_schwarz(record_criterion):
    c, _ = _check("appendixB")
    ok = c.status == PASS and c.measured["configs"] >= 100
    record_criterion(5, "L_AA L_BB >= |L_AB|^2 and E4 >= 0", ok,
                     f"{c.message}; co-located saturation {c.measured['colocated_saturation']:.1e}")
    assert ok, c.to_dict()


def _assembled_matrices():
    scan = ScanSpec.default()
    rng = np.random.default_rng(scan.seed)
    pairs = [scan.coupled(lam) for lam in scan.lambda_values]
    pairs += [random_pair(rng, 1e-2) for _ in range(10)]
    for A, B in pairs:
        for amp in scan.amplitudes:
            t = assemble_terms(A, B, amp, scan.quadrature)
            yield assemble_rho_AB(t, guard=scan.guard)
            yield assemble_rho_A(t, guard=scan.guard)


def test_criterion_6_structural_invariants(record_criterion):
    summaries = [_check(n)[0].measured["structure"] for n in ("theorem1", "theorem2", "closed_form")]
    count = sum(s["matrices"] for s in summaries)
    herm = max(s["max_hermiticity_defect"] for s in summaries)
    exact = all(s["trace_exactly_one"] for s in summaries)
    involution = True
    extra = 0
    for rho in _assembled_matrices():
        extra += 1
        exact &= bool(np.trace(rho.matrix).real == 1.0)
        if rho.matrix.shape == (4, 4):
            pt = partial_transpose_B(rho)
            exact &= bool(np.trace(pt.matrix).real == 1.0)
            back = partial_transpose_B(pt, allow_double=True)
            involution &= bool(np.array_equal(back.matrix, rho.matrix))
    ok = exact and herm <= 1e-12 and involution
    record_criterion(6, "trace exactly 1, Hermitian, PT involution bit-exact", ok,
                     f"{count + extra} matrices, max Hermiticity defect {herm:.1e}, "
                     f"involution {'exact' if involution else 'broken'}")
    assert ok


TERM_FIELDS = ("L_AA", "L_BB", "L_AB", "M", "Lbar_A", "Lbar_B", "Lbar_AB", "Mbar")


def _tolerance_shift(cfg):
    A, B = baseline_detectors(coupling=1e-2)
    amp = baseline_amplitudes()[1]
    a = assemble_terms(A, B, amp, cfg)
    b = assemble_terms(A, B, amp, replace(cfg, abs_tol=cfg.abs_tol / 2))
    return max(abs(getattr(a, f) - getattr(b, f)) for f in TERM_FIELDS)


def test_criterion_7_quadrature_self_consistency(record_criterion):
    shifts = {}
    for cfg in (QuadratureConfig(), QuadratureConfig(abs_tol=1e-9, rel_tol=1e-14)):
        shifts[cfg.abs_tol] = _tolerance_shift(cfg)
    shift_ok = all(s <= 10 * tol for tol, s in shifts.items())
    A, B = baseline_detectors(coupling=1e-2)
    fast = compute_M(A, B, method="erf").value
    slow = compute_M(A, B, method="triangle").value
    rel = abs(fast - slow) / abs(fast)
    ok = shift_ok and rel <= 1e-7
    record_criterion(7, "results stable under tolerance halving; dual-path M agrees", ok,
                     ", ".join(f"abs_tol {t:.0e}: shift {s:.1e}" for t, s in shifts.items())
                     + f"; M rel diff {rel:.1e}")
    assert ok


def test_criterion_8_physics_sanity(record_criterion):
    amps = baseline_amplitudes()
    A, B = baseline_detectors(coupling=1e-2)
    vac_p = assemble_rho_A(assemble_terms(A, None, amps[0])).excitation_probability
    coh_p = [assemble_rho_A(assemble_terms(A, None, a)).excitation_probability for a in amps[1:]]
    near = spectrum_report(assemble_terms(*baseline_detectors(2.0, 1e-2), amps[1]))
    far = spectrum_report(assemble_terms(*baseline_detectors(20.0, 1e-2), amps[1]))
    ratios = [far.negativity / near.negativity, far.negativity_closed / near.negativity_closed]
    ok = all(p > vac_p for p in coh_p) and max(ratios) <= 1e-2
    record_criterion(8, "coherent excitation exceeds vacuum; negativity decays with separation",
                     ok, f"P_vac {vac_p:.3e}, P_coh " + ", ".join(f"{p:.3e}" for p in coh_p)
                     + f"; N(20)/N(2) numeric {ratios[0]:.1e}, closed {ratios[1]:.1e}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
