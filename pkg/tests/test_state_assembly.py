import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udw_coherent.field_state import CoherentAmplitude, Packet
from udw_coherent.perturbation import PerturbativeTerms, assemble_terms
from udw_coherent.state_assembly import (
    NegativeEigenvalueError,
    NonHermitianError,
    PerturbativeGuardError,
    TwoDetectorState,
    assemble_rho_A,
    assemble_rho_AB,
    charpoly_coefficients,
    eig_hermitian,
    negativity,
    negativity_closed,
    partial_transpose_B,
    pt_eigs_closed,
    rho_A_eigs_closed,
    rho_ab_eigs_closed,
    single_detector_report,
    spectrum_report,
    von_neumann_entropy,
)
from udw_coherent.verification import baseline_amplitudes, baseline_detectors

A1, B1 = baseline_detectors(coupling=1.0)
VAC = CoherentAmplitude.vacuum(3)
# a moderate amplitude: |Lbar| / lambda ~ 0.5, so the O(lambda^3) spectral
# residual of the truncated matrices stays below 10 lambda^3
MODERATE = CoherentAmplitude(3, (Packet(10.0, (0.0, 0.0, 1.0), 0.5),))

small = st.floats(0.0, 1e-3)
cplx = st.builds(complex, st.floats(-1e-3, 1e-3), st.floats(-1e-3, 1e-3))
terms_st = st.builds(PerturbativeTerms, small, small, cplx, cplx, cplx, cplx)


def _terms(lam, amp=MODERATE):
    return assemble_terms(A1.with_coupling(lam), B1.with_coupling(lam), amp)


def test_rho_A_vacuum_is_diagonal():
    t = PerturbativeTerms(0.02)
    np.testing.assert_array_equal(assemble_rho_A(t).matrix, np.diag([0.98, 0.02]))


@settings(max_examples=200)
@given(terms_st)
def test_trace_exactly_one(t):
    assert np.trace(assemble_rho_A(t, guard=None).matrix).real == 1.0
    rho = assemble_rho_AB(t, guard=None)
    assert np.trace(rho.matrix).real == 1.0
    assert np.trace(partial_transpose_B(rho).matrix).real == 1.0
    assert np.max(np.abs(rho.matrix - rho.matrix.conj().T)) <= 1e-12


def test_excitation_increases_with_amplitude():
    t = _terms(0.01)
    coh = assemble_rho_A(t).excitation_probability
    vac = assemble_rho_A(t.vacuum_part()).excitation_probability
    assert coh == pytest.approx(t.L_AA + abs(t.Lbar_A) ** 2)
    assert coh > vac


def test_rho_A_closed_eigenvalues():
    assert rho_A_eigs_closed(PerturbativeTerms(0.0)) == (1.0, 0.0)
    e = rho_A_eigs_closed(PerturbativeTerms(0.01))
    assert e == pytest.approx((0.99, 0.01), abs=1e-16)


def test_rho_A_numeric_vs_closed_is_fourth_order():
    a = assemble_terms(A1.with_coupling(1e-2), None, baseline_amplitudes()[1])
    b = assemble_terms(A1.with_coupling(1e-3), None, baseline_amplitudes()[1])
    ga = single_detector_report(a).max_closed_vs_numeric_gap
    gb = single_detector_report(b).max_closed_vs_numeric_gap
    assert ga / gb == pytest.approx(1e4, rel=1e-3)


def test_rho_AB_structure():
    t = _terms(0.01)
    v = assemble_rho_AB(t.vacuum_part()).matrix
    assert v[0, 1] == 0 and v[0, 2] == 0 and v[1, 1] == t.L_BB and v[2, 2] == t.L_AA
    assert v[3, 0] == t.M and v[2, 1] == t.L_AB
    m = assemble_rho_AB(t).matrix
    assert m[3, 3] == 0 and m[1, 3] == 0 and m[2, 3] == 0


def test_partial_transpose_entries():
    t = _terms(0.01)
    pt = partial_transpose_B(assemble_rho_AB(t)).matrix
    assert pt[0, 3] == np.conj(t.L_AB) + np.conj(t.Lbar_AB)
    assert pt[1, 2] == np.conj(t.M) + np.conj(t.Mbar)


@settings(max_examples=100)
@given(terms_st)
def test_partial_transpose_involution(t):
    rho = assemble_rho_AB(t, guard=None)
    pt = partial_transpose_B(rho)
    with pytest.raises(ValueError):
        partial_transpose_B(pt)
    back = partial_transpose_B(pt, allow_double=True)
    assert np.array_equal(back.matrix, rho.matrix)
    assert not back.is_partial_transpose


def test_eig_hermitian_basics():
    np.testing.assert_array_equal(eig_hermitian(np.eye(4)), np.ones(4))
    np.testing.assert_allclose(eig_hermitian(np.diag([0.1, 0.7, -0.2, 0.4])), [0.7, 0.4, 0.1, -0.2])
    with pytest.raises(NonHermitianError):
        eig_hermitian(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        eig_hermitian(np.ones(3))


@settings(max_examples=100)
@given(st.integers(0, 2 ** 32 - 1))
def test_eig_sum_is_trace(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = x + x.conj().T
    e = eig_hermitian(h)
    assert abs(e.sum() - np.trace(h).real) <= 1e-10
    assert np.all(np.diff(e) <= 0)


def test_pt_closed_forms():
    L, m = 0.003, 0.001
    e = pt_eigs_closed(PerturbativeTerms(L, L, 0j, m * np.exp(0.4j)))
    assert e[2] == pytest.approx(L + m, rel=1e-14) and e[3] == pytest.approx(L - m, rel=1e-12)
    e = pt_eigs_closed(PerturbativeTerms(0.004, 0.001))
    assert (e[2], e[3]) == pytest.approx((0.004, 0.001))
    assert e[0] == pytest.approx(1 - 0.005) and e[1] == 0


def test_rho_ab_closed_forms():
    L = 0.002
    e = rho_ab_eigs_closed(PerturbativeTerms(L, L, complex(L)))
    assert e[2] == pytest.approx(2 * L) and abs(e[3]) <= 1e-18
    e = rho_ab_eigs_closed(PerturbativeTerms(0.003, 0.001, 0j))
    np.testing.assert_allclose(e, [0.996, 0.0, 0.003, 0.001], rtol=1e-14)


@settings(max_examples=200)
@given(st.floats(1e-6, 1e-2), st.floats(1e-6, 1e-2), st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_rho_ab_E4_nonnegative_under_cauchy_schwarz(la, lb, frac, ph):
    lab = frac * math.sqrt(la * lb) * np.exp(1j * ph)
    assert rho_ab_eigs_closed(PerturbativeTerms(la, lb, lab))[3] >= -1e-12


def test_negativity_vanishes_when_M_small():
    rng = np.random.default_rng(9)
    for _ in range(20):
        la, lb = rng.uniform(1e-5, 1e-3, 2)
        m = rng.uniform(0, 1) * math.sqrt(la * lb)
        t = PerturbativeTerms(la, lb, 0j, m * np.exp(1j * rng.uniform(0, 6)))
        assert negativity(t) == 0.0
        assert negativity(partial_transpose_B(assemble_rho_AB(t))) <= 10 * max(la, lb) ** 2


def test_negativity_symmetric_case_numeric_vs_closed():
    for L, m in ((1e-4, 3e-4), (2e-4, 1e-4)):
        t = PerturbativeTerms(L, L, 0j, complex(m))
        assert negativity_closed(t) == pytest.approx(max(0.0, m - L), abs=1e-18)
        num = negativity(partial_transpose_B(assemble_rho_AB(t)))
        assert abs(num - negativity_closed(t)) <= 10 * (L + m) ** 2


def test_negativity_input_checks():
    with pytest.raises(ValueError):
        negativity(assemble_rho_AB(PerturbativeTerms(0.01, 0.01)))
    assert negativity(np.array([0.5, 0.5, -0.1, -0.2])) == pytest.approx(0.3)


@pytest.mark.parametrize("lam", [1e-2, 1e-3, 1e-4])
def test_coherent_vs_vacuum_spectra_within_ten_lambda_cubed(lam):
    t = _terms(lam)
    coh, vac = spectrum_report(t), spectrum_report(t.vacuum_part())
    assert np.max(np.abs(coh.pt_eigenvalues_numeric - coh.pt_eigenvalues_closed)) <= 10 * lam ** 3
    assert abs(coh.negativity - vac.negativity) <= 10 * lam ** 3
    ea = single_detector_report(t)
    eva = single_detector_report(t.vacuum_part())
    s_num = von_neumann_entropy(ea.eigenvalues_numeric)
    s_vac = von_neumann_entropy(eva.eigenvalues_numeric)
    assert abs(s_num - s_vac) <= 10 * lam ** 3
    assert coh.entropy_A == vac.entropy_A


def test_entropy():
    assert von_neumann_entropy([1.0, 0.0]) == 0.0
    assert von_neumann_entropy([0.5, 0.5]) == pytest.approx(math.log(2))
    assert von_neumann_entropy([1.0, -1e-11]) == 0.0
    with pytest.raises(NegativeEigenvalueError):
        von_neumann_entropy([1.0, -1e-9])


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1))
def test_charpoly_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    np.testing.assert_allclose(charpoly_coefficients(x), np.poly(x), atol=1e-10)


def test_spectrum_report_invariants():
    rep = spectrum_report(_terms(0.01))
    assert abs(rep.eigenvalues_numeric.sum() - 1.0) <= 1e-10
    assert rep.negativity >= 0 and rep.negativity_closed >= 0
    assert len(rep.excitation_probabilities) == 2


def test_no_coupling_gives_pure_ground_state():
    rep = spectrum_report(PerturbativeTerms(0.0))
    np.testing.assert_array_equal(rep.eigenvalues_numeric, [1, 0, 0, 0])
    assert rep.negativity == 0 and rep.entropy == 0


def test_guard():
    with pytest.raises(PerturbativeGuardError):
        assemble_rho_A(PerturbativeTerms(0.2))
    with pytest.raises(PerturbativeGuardError):
        assemble_rho_AB(PerturbativeTerms(0.01, 0.01, Lbar_B=0.4))
    assemble_rho_A(PerturbativeTerms(0.2), guard=0.5)


def test_two_detector_state_probabilities():
    s = TwoDetectorState(np.diag([0.9, 0.05, 0.04, 0.01]).astype(complex))
    assert s.excitation_probabilities == pytest.approx((0.05, 0.06))
