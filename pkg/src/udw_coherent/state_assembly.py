"""Detector density matrices, partial transpose and their spectra.

Two-detector matrices use the product basis ``{gg, ge, eg, ee}`` (detector A
first).  All matrices are second-order truncations; their numeric spectra
differ from the leading-order closed forms at O(lambda^4).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .perturbation import PerturbativeTerms

DEFAULT_GUARD = 0.1


class PerturbativeGuardError(ValueError):
    """Excitation probability too large for the second-order expansion."""


class NonHermitianError(ValueError):
    pass


class NegativeEigenvalueError(ValueError):
    pass


@dataclass
class OneDetectorState:
    matrix: np.ndarray

    @property
    def excitation_probability(self) -> float:
        return float(self.matrix[1, 1].real)


@dataclass
class TwoDetectorState:
    matrix: np.ndarray
    is_partial_transpose: bool = False

    @property
    def excitation_probabilities(self) -> tuple[float, float]:
        d = self.matrix.diagonal().real
        return float(d[2] + d[3]), float(d[1] + d[3])


def _pin_trace(m: np.ndarray) -> np.ndarray:
    """Nudge the (0, 0) entry by ulps until ``np.trace`` is exactly one."""
    for _ in range(8):
        tr = np.trace(m).real
        if tr == 1.0:
            break
        m[0, 0] = np.nextafter(m[0, 0].real, -np.inf if tr > 1.0 else np.inf)
    return m


def _guard(p: float, guard: float | None, who: str):
    if guard is not None and p > guard:
        raise PerturbativeGuardError(
            f"excitation probability of detector {who} is {p:.3g} > guard {guard}; "
            "reduce the coupling or the amplitude")


def assemble_rho_A(terms: PerturbativeTerms, guard: float | None = DEFAULT_GUARD) -> OneDetectorState:
    p = terms.L_AA + terms.Lbar_AA
    _guard(p, guard, "A")
    m = np.array([[1.0 - p, np.conj(terms.Lbar_A)],
                  [terms.Lbar_A, p]], dtype=complex)
    return OneDetectorState(_pin_trace(m))


def assemble_rho_AB(terms: PerturbativeTerms, guard: float | None = DEFAULT_GUARD) -> TwoDetectorState:
    pa = terms.L_AA + terms.Lbar_AA
    pb = terms.L_BB + terms.Lbar_BB
    _guard(pa, guard, "A")
    _guard(pb, guard, "B")
    lab = terms.L_AB + terms.Lbar_AB
    mm = terms.M + terms.Mbar
    la, lb = terms.Lbar_A, terms.Lbar_B
    m = np.array([
        [1.0 - pa - pb, np.conj(lb), np.conj(la), np.conj(mm)],
        [lb, pb, np.conj(lab), 0.0],
        [la, lab, pa, 0.0],
        [mm, 0.0, 0.0, 0.0],
    ], dtype=complex)
    return TwoDetectorState(_pin_trace(m))


def partial_transpose_B(state: TwoDetectorState, allow_double: bool = False) -> TwoDetectorState:
    """Transpose detector B's indices.

    Applying it to an already transposed state is refused unless
    ``allow_double`` is set (used to check the involution).
    """
    if state.is_partial_transpose and not allow_double:
        raise ValueError("state is already partially transposed")
    r = state.matrix.reshape(2, 2, 2, 2)
    pt = r.transpose(0, 3, 2, 1).reshape(4, 4).copy()
    return TwoDetectorState(pt, not state.is_partial_transpose)


def hermiticity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T)))


def eig_hermitian(matrix, tol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, descending."""
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if hermiticity_defect(m) > tol:
        raise NonHermitianError(f"matrix is not Hermitian (defect {hermiticity_defect(m):.2e})")
    w, v = np.linalg.eigh(m)
    resid = np.linalg.norm(m @ v - v * w[None, :], axis=0)
    if np.any(resid > tol):
        raise ArithmeticError(f"eigenpair residual {resid.max():.2e} exceeds {tol}")
    return np.sort(w)[::-1]


def rho_A_eigs_closed(terms: PerturbativeTerms) -> tuple[float, float]:
    return (1.0 - terms.L_AA, terms.L_AA)


def _pair_roots(la: float, lb: float, c: complex) -> tuple[float, float]:
    r = math.sqrt((la - lb) ** 2 + 4.0 * abs(c) ** 2)
    return 0.5 * (la + lb + r), 0.5 * (la + lb - r)


def pt_eigs_closed(terms: PerturbativeTerms) -> np.ndarray:
    """Leading-order partial-transpose eigenvalues ``(E1, E2, E3, E4)``."""
    e3, e4 = _pair_roots(terms.L_AA, terms.L_BB, terms.M)
    return np.array([1.0 - terms.L_AA - terms.L_BB, 0.0, e3, e4])


def rho_ab_eigs_closed(terms: PerturbativeTerms) -> np.ndarray:
    """Leading-order eigenvalues of the two-detector state ``(E1, E2, E3, E4)``."""
    e3, e4 = _pair_roots(terms.L_AA, terms.L_BB, terms.L_AB)
    return np.array([1.0 - terms.L_AA - terms.L_BB, 0.0, e3, e4])


def negativity_closed(terms: PerturbativeTerms) -> float:
    return max(0.0, -pt_eigs_closed(terms)[3])


def negativity(x) -> float:
    """Sum of the magnitudes of the negative partial-transpose eigenvalues.

    Accepts a partially transposed :class:`TwoDetectorState`, an eigenvalue
    array, or :class:`PerturbativeTerms` (closed-form leading order).
    """
    if isinstance(x, PerturbativeTerms):
        return negativity_closed(x)
    if isinstance(x, TwoDetectorState):
        if not x.is_partial_transpose:
            raise ValueError("negativity needs the partially transposed state")
        x = eig_hermitian(x.matrix)
    eigs = np.asarray(x, dtype=float)
    return float(np.sum(np.maximum(0.0, -eigs)))


def von_neumann_entropy(eigs, clip: float = 1e-12, reject: float = 1e-10) -> float:
    """``-sum E ln E`` with ``0 ln 0 = 0``.

    Eigenvalues in ``[-clip, 0)`` are treated as zero; anything below
    ``-reject`` means positivity is broken and raises.
    """
    e = np.asarray(eigs, dtype=float)
    if np.any(e < -reject):
        raise NegativeEigenvalueError(f"eigenvalue {e.min():.3e} below -{reject}")
    e = np.clip(e, 0.0, 1.0)
    nz = e[e > 0]
    return float(max(0.0, -np.sum(nz * np.log(nz))))


def charpoly_coefficients(matrix) -> np.ndarray:
    """Coefficients ``[1, c3, c2, c1, c0]`` of ``det(x I - A)`` from principal minors."""
    m = np.asarray(matrix, dtype=complex)
    n = m.shape[0]
    coeffs = [1.0 + 0j]
    for r in range(1, n + 1):
        s = sum(np.linalg.det(m[np.ix_(idx, idx)]) for idx in itertools.combinations(range(n), r))
        coeffs.append((-1) ** r * s)
    return np.array(coeffs)


@dataclass
class SpectrumReport:
    eigenvalues_numeric: np.ndarray
    eigenvalues_closed: np.ndarray
    negativity: float
    entropy: float
    excitation_probabilities: tuple[float, ...]
    max_closed_vs_numeric_gap: float
    pt_eigenvalues_numeric: np.ndarray | None = None
    pt_eigenvalues_closed: np.ndarray | None = None
    negativity_closed: float = 0.0
    entropy_A: float = 0.0
    extras: dict = field(default_factory=dict)


def single_detector_report(terms: PerturbativeTerms, guard: float | None = DEFAULT_GUARD) -> SpectrumReport:
    rho = assemble_rho_A(terms, guard)
    num = eig_hermitian(rho.matrix)
    closed = np.sort(np.array(rho_A_eigs_closed(terms)))[::-1]
    s = von_neumann_entropy(closed)
    return SpectrumReport(num, closed, 0.0, s, (rho.excitation_probability,),
                          float(np.max(np.abs(num - closed))), entropy_A=s)


def spectrum_report(terms: PerturbativeTerms, guard: float | None = DEFAULT_GUARD) -> SpectrumReport:
    """Numeric and closed-form spectra of the two-detector state and its transpose."""
    rho = assemble_rho_AB(terms, guard)
    pt = partial_transpose_B(rho)
    num = eig_hermitian(rho.matrix)
    closed = np.sort(rho_ab_eigs_closed(terms))[::-1]
    pt_num = eig_hermitian(pt.matrix)
    pt_closed = np.sort(pt_eigs_closed(terms))[::-1]
    gap = max(np.max(np.abs(num - closed)), np.max(np.abs(pt_num - pt_closed)))
    # entropies use the leading-order spectrum: the truncated matrices miss
    # O(lambda^3) entries and can carry small negative eigenvalues
    s_ab = von_neumann_entropy(np.clip(closed, 0.0, None))
    s_a = von_neumann_entropy(rho_A_eigs_closed(terms))
    return SpectrumReport(
        eigenvalues_numeric=num,
        eigenvalues_closed=closed,
        negativity=negativity(pt_num),
        entropy=s_ab,
        excitation_probabilities=rho.excitation_probabilities,
        max_closed_vs_numeric_gap=float(gap),
        pt_eigenvalues_numeric=pt_num,
        pt_eigenvalues_closed=pt_closed,
        negativity_closed=negativity_closed(terms),
        entropy_A=s_a,
    )
