"""Scalar coefficients of the second-order detector density matrices.

Vacuum terms ``L_mu_nu``, ``M`` and the amplitude dependent ``Lbar_nu`` are
each reduced to one radial k integral.  The products ``Lbar_mu conj(Lbar_nu)``
and ``Lbar_A Lbar_B`` are exposed as derived quantities; the ``direct_*``
functions integrate the underlying double time integrals instead, so the
product identities can be checked.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import wofz

from .detectors import CompactBump, DetectorSpec, GaussianSwitching
from .field_state import CoherentAmplitude, alpha_plane_wave_mean
from .quadrature import (
    IntegralResult,
    QuadratureConfig,
    QuadratureError,
    angular_kernel,
    integrate_1d,
    integrate_radial_k,
    integrate_triangle,
)


class TermError(QuadratureError):
    """A named perturbative term failed to evaluate."""


def _check_pair(a: DetectorSpec, b: DetectorSpec):
    if a.n != b.n:
        raise ValueError(f"detectors live in different dimensions ({a.n} vs {b.n})")


def _separation(a: DetectorSpec, b: DetectorSpec) -> float:
    return float(np.linalg.norm(np.subtract(a.position, b.position)))


def _radial_L(det: DetectorSpec, k):
    """``L_nu(k)`` without the plane-wave factor ``exp(i k.x_nu)``."""
    return (det.coupling * det.smearing.fourier(k, det.n) / np.sqrt(2.0 * k)
            * det.switching.fourier(k + det.gap))


def mode_amplitude_L(det: DetectorSpec, k):
    """``L_nu(k)`` for a wavevector (or a batch of them, last axis n)."""
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != det.n:
        raise ValueError(f"k must have {det.n} components")
    kn = np.linalg.norm(k, axis=-1)
    if np.any(kn == 0):
        raise ValueError("L(k) is singular at k = 0")
    out = np.exp(1j * (k @ np.asarray(det.position))) * _radial_L(det, kn)
    return complex(out) if out.ndim == 0 else out


def compute_L_mu_nu(mu: DetectorSpec, nu: DetectorSpec,
                    cfg: QuadratureConfig | None = None) -> IntegralResult:
    """``L_mu_nu = int d^n k L_mu(k) conj(L_nu(k))``; real for mu = nu."""
    cfg = cfg or QuadratureConfig()
    _check_pair(mu, nu)
    cfg.check_dimension(mu.n)
    if mu.coupling == 0 or nu.coupling == 0:
        return IntegralResult(0j, 0.0, 0)
    d = _separation(mu, nu)
    same = mu == nu

    def g(k):
        lm = _radial_L(mu, k)
        ln = lm if same else _radial_L(nu, k)
        return lm * np.conj(ln) * angular_kernel(k, d, mu.n)

    res = integrate_radial_k(g, mu.n, cfg).require("L_mu_nu")
    if same or (d == 0 and _same_profile(mu, nu)):
        val = complex(res.value)
        if abs(val.imag) > 1e-12 * max(abs(val.real), 1e-300):
            raise TermError(f"diagonal L term has imaginary part {val.imag:.3e}")
        res.value = complex(val.real, 0.0)
    return res


def _same_profile(a: DetectorSpec, b: DetectorSpec) -> bool:
    return (a.gap, a.coupling, a.smearing, a.switching) == (b.gap, b.coupling, b.smearing, b.switching)


def gaussian_ordered_integral(sa: GaussianSwitching, a, sb: GaussianSwitching, b):
    """Closed form of ``int dt int_{-inf}^t dt' chi_a(t) chi_b(t') e^{i a t} e^{i b t'}``.

    Both switchings Gaussian; ``a`` and ``b`` are real frequency arrays.  The
    ``t`` integral is Gaussian; the remaining half-line Gaussian in
    ``u = t - t'`` is expressed through the Faddeeva function, switching to
    its reflection formula when the argument is in the lower half plane.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = 1.0 / sa.T ** 2
    q = 1.0 / sb.T ** 2
    P = p + q
    A = p * q / P
    Q0 = 2 * p * sa.t0 + 2 * q * sb.t0 + 1j * (a + b)
    Bc = Q0 * q / P - 2 * q * sb.t0 - 1j * b
    C0 = Q0 * Q0 / (4 * P) - p * sa.t0 ** 2 - q * sb.t0 ** 2
    pref = math.sqrt(math.pi / P) * math.sqrt(math.pi) / (2.0 * math.sqrt(A))
    zeta = -1j * Bc / (2.0 * math.sqrt(A))
    upper = zeta.imag >= 0
    zs = np.where(upper, zeta, -zeta)
    wz = wofz(zs)
    direct = np.exp(C0) * wz
    reflected = 2.0 * np.exp(C0 - zeta * zeta) - np.exp(C0) * wz
    return pref * np.where(upper, direct, reflected)


def _switching_breaks(dets) -> list[float]:
    """Centers of every switching, plus the support edges of compact ones."""
    pts = set()
    for d in dets:
        sw = d.switching
        pts.add(sw.t0)
        if isinstance(sw, CompactBump):
            pts.update((sw.t0 - sw.T, sw.t0 + sw.T))
    return sorted(pts)


def _time_window(dets, cfg: QuadratureConfig) -> tuple[float, float]:
    ws = [d.switching.window(cfg.time_window_sigmas) for d in dets]
    return min(w[0] for w in ws), max(w[1] for w in ws)


def ordered_time_integrals(A: DetectorSpec, B: DetectorSpec, k, cfg: QuadratureConfig,
                           method: str = "auto"):
    """``I_AB(k) + I_BA(k)``, the two time-ordered integrals in ``M(k)``."""
    k = np.asarray(k, dtype=float)
    gaussian = isinstance(A.switching, GaussianSwitching) and isinstance(B.switching, GaussianSwitching)
    if method == "auto":
        method = "erf" if gaussian else "triangle"
    if method == "erf":
        if not gaussian:
            raise ValueError("closed-form ordered integral needs Gaussian switchings")
        return (gaussian_ordered_integral(A.switching, A.gap - k, B.switching, B.gap + k)
                + gaussian_ordered_integral(B.switching, B.gap - k, A.switching, A.gap + k))
    if method != "triangle":
        raise ValueError(f"unknown method {method!r}")
    cA, cB = A.switching, B.switching
    lo, hi = _time_window((A, B), cfg)
    ks = k[None, :]

    def f(t, tp):
        t = t[..., None]
        tp = tp[..., None]
        return (cA(t) * cB(tp) * np.exp(1j * ((A.gap - ks) * t + (B.gap + ks) * tp))
                + cB(t) * cA(tp) * np.exp(1j * ((B.gap - ks) * t + (A.gap + ks) * tp)))

    res = integrate_triangle(f, lo, hi, cfg, points=_switching_breaks((A, B)))
    res.require("time-ordered integral")
    return np.asarray(res.value)


def compute_M(A: DetectorSpec, B: DetectorSpec, cfg: QuadratureConfig | None = None,
              method: str = "auto") -> IntegralResult:
    """Vacuum non-local term ``M = int d^n k M(k)``.

    ``method`` is ``"erf"`` (closed form, Gaussian switchings only),
    ``"triangle"`` (generic nested quadrature) or ``"auto"``.
    """
    cfg = cfg or QuadratureConfig()
    _check_pair(A, B)
    cfg.check_dimension(A.n)
    if A.coupling == 0 or B.coupling == 0:
        return IntegralResult(0j, 0.0, 0)
    d = _separation(A, B)
    n = A.n
    inner_cfg = cfg.tightened(10.0)

    def g(k):
        pref = (-A.coupling * B.coupling / (2.0 * k) * A.smearing.fourier(k, n)
                * B.smearing.fourier(k, n) * angular_kernel(k, d, n))
        return pref * ordered_time_integrals(A, B, k, inner_cfg, method)

    return integrate_radial_k(g, n, cfg).require("M")


class SmearedOnePoint:
    """``V(x_nu, t)``: the one-point function smeared over a detector.

    Computed in k-space as
    ``2 Re int d^n k conj(alpha(k)) F~(k) exp(i(|k| t - k.x_nu)) / sqrt(2|k|)``.
    On construction an adaptive radial rule is built that resolves the
    integrand for every ``t`` in the detector's switching window; calls then
    cost one matrix product.  :func:`smeared_one_point_V` is the per-call
    adaptive version.
    """

    def __init__(self, det: DetectorSpec, amp: CoherentAmplitude,
                 cfg: QuadratureConfig | None = None, probe_points: int = 81):
        cfg = cfg or QuadratureConfig()
        self.det, self.amp = det, amp
        self.vacuum = amp.is_vacuum
        if self.vacuum:
            return
        _check_amp(det, amp)
        lo, hi = det.switching.window(cfg.time_window_sigmas)
        probe = np.linspace(lo, hi, probe_points)
        self._nodes = None

        def g(k):
            return _V_integrand(det, amp, k)[:, None] * np.exp(1j * k[:, None] * probe[None, :])

        res, nodes, weights = integrate_radial_k(
            g, amp.n, cfg.tightened(10.0), k_hint=amp.k_hint(),
            points=amp.breakpoints(), return_rule=True)
        res.require("V rule")
        self._nodes = nodes
        self._coef = weights * _V_integrand(det, amp, nodes)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.vacuum:
            return np.zeros(t.shape)
        flat = t.reshape(-1)
        vals = np.exp(1j * flat[:, None] * self._nodes[None, :]) @ self._coef
        return (2.0 * vals.real).reshape(t.shape)


def _check_amp(det: DetectorSpec, amp: CoherentAmplitude):
    if det.n != amp.n:
        raise ValueError(f"detector dimension {det.n} does not match amplitude n={amp.n}")


def _V_integrand(det: DetectorSpec, amp: CoherentAmplitude, k):
    P = alpha_plane_wave_mean(amp, k, np.asarray(det.position))
    return np.conj(P) * det.smearing.fourier(k, det.n) / np.sqrt(2.0 * k)


def smeared_one_point_V(det: DetectorSpec, amp: CoherentAmplitude, t,
                        cfg: QuadratureConfig | None = None):
    """Adaptive evaluation of ``V(x_nu, t)`` at one time or an array of times."""
    cfg = cfg or QuadratureConfig()
    _check_amp(det, amp)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if amp.is_vacuum:
        out = np.zeros(t_arr.shape)
    else:
        cfg.check_dimension(amp.n)

        def g(k):
            return _V_integrand(det, amp, k)[:, None] * np.exp(1j * k[:, None] * t_arr[None, :])

        res = integrate_radial_k(g, amp.n, cfg, k_hint=amp.k_hint(), points=amp.breakpoints())
        out = 2.0 * np.real(res.require("V").value)
    return float(out[0]) if np.ndim(t) == 0 else out


def compute_Lbar(det: DetectorSpec, amp: CoherentAmplitude,
                 cfg: QuadratureConfig | None = None) -> IntegralResult:
    """``Lbar_nu = -i lambda int dt chi(t) e^{i Omega t} V(x_nu, t)``.

    The time integral is done analytically through the switching transform,
    which leaves one radial k integral.
    """
    cfg = cfg or QuadratureConfig()
    _check_amp(det, amp)
    if amp.is_vacuum or det.coupling == 0:
        return IntegralResult(0j, 0.0, 0)
    cfg.check_dimension(amp.n)
    x = np.asarray(det.position)
    sw = det.switching

    def g(k):
        P = alpha_plane_wave_mean(amp, k, x)
        Ft = det.smearing.fourier(k, det.n) / np.sqrt(2.0 * k)
        return Ft * (np.conj(P) * sw.fourier(-(k + det.gap)) + P * sw.fourier(k - det.gap))

    points = amp.breakpoints()
    if det.gap > 0:
        points = sorted(points + [det.gap])
    res = integrate_radial_k(g, amp.n, cfg, k_hint=amp.k_hint(), points=points)
    return res.require("Lbar").scaled(-1j * det.coupling)


@dataclass
class PerturbativeTerms:
    """The scalars entering the one- and two-detector density matrices."""

    L_AA: float
    L_BB: float = 0.0
    L_AB: complex = 0j
    M: complex = 0j
    Lbar_A: complex = 0j
    Lbar_B: complex = 0j
    errors: dict = field(default_factory=dict)

    @property
    def Lbar_AA(self) -> float:
        return abs(self.Lbar_A) ** 2

    @property
    def Lbar_BB(self) -> float:
        return abs(self.Lbar_B) ** 2

    @property
    def Lbar_AB(self) -> complex:
        return self.Lbar_A * self.Lbar_B.conjugate()

    @property
    def Mbar(self) -> complex:
        return self.Lbar_A * self.Lbar_B

    def swapped(self) -> "PerturbativeTerms":
        return PerturbativeTerms(self.L_BB, self.L_AA, self.L_AB.conjugate(), self.M,
                                 self.Lbar_B, self.Lbar_A, dict(self.errors))

    def vacuum_part(self) -> "PerturbativeTerms":
        return PerturbativeTerms(self.L_AA, self.L_BB, self.L_AB, self.M, 0j, 0j,
                                 dict(self.errors))


def assemble_terms(A: DetectorSpec, B: DetectorSpec | None, amp: CoherentAmplitude,
                   cfg: QuadratureConfig | None = None, workers: int = 1) -> PerturbativeTerms:
    """Evaluate every term for detectors ``A`` (and optionally ``B``).

    Independent integrals run on ``workers`` threads; results do not depend on
    the worker count.
    """
    cfg = cfg or QuadratureConfig()
    _check_amp(A, amp)
    if B is not None:
        _check_pair(A, B)
    jobs = {"L_AA": lambda: compute_L_mu_nu(A, A, cfg),
            "Lbar_A": lambda: compute_Lbar(A, amp, cfg)}
    if B is not None:
        jobs.update({
            "L_BB": lambda: compute_L_mu_nu(B, B, cfg),
            "L_AB": lambda: compute_L_mu_nu(A, B, cfg),
            "M": lambda: compute_M(A, B, cfg),
            "Lbar_B": lambda: compute_Lbar(B, amp, cfg),
        })

    def run(name):
        try:
            return jobs[name]()
        except Exception as exc:
            raise TermError(f"term {name} failed: {exc}") from exc

    names = list(jobs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(names, pool.map(run, names)))
    else:
        results = {name: run(name) for name in names}
    values = {k: r.value for k, r in results.items()}
    terms = PerturbativeTerms(
        L_AA=float(values["L_AA"].real),
        L_BB=float(values.get("L_BB", 0j).real),
        L_AB=complex(values.get("L_AB", 0j)),
        M=complex(values.get("M", 0j)),
        Lbar_A=complex(values["Lbar_A"]),
        Lbar_B=complex(values.get("Lbar_B", 0j)),
        errors={k: r.error_estimate for k, r in results.items()},
    )
    return terms


def _plane_integral(f, win_t, win_tp, cfg: QuadratureConfig, pts_t=None, pts_tp=None):
    """``int dt int dt' f(t, t')`` over a rectangle by iterated adaptive quadrature."""
    inner_cfg = cfg.tightened(10.0)

    def outer(t):
        def inner(tp):
            return f(t[None, :], tp[:, None])
        return np.asarray(integrate_1d(inner, *win_tp, inner_cfg, points=pts_tp)
                          .require("inner").value)

    return integrate_1d(outer, *win_t, cfg, points=pts_t).require("plane integral")


def direct_Lbar_mu_nu(mu: DetectorSpec, nu: DetectorSpec, amp: CoherentAmplitude,
                      cfg: QuadratureConfig | None = None) -> IntegralResult:
    """Double time integral behind ``Lbar_mu conj(Lbar_nu)``, integrated directly."""
    cfg = cfg or QuadratureConfig()
    _check_pair(mu, nu)
    if amp.is_vacuum or mu.coupling == 0 or nu.coupling == 0:
        return IntegralResult(0j, 0.0, 0)
    Vm = SmearedOnePoint(mu, amp, cfg)
    Vn = Vm if nu == mu else SmearedOnePoint(nu, amp, cfg)

    def f(t, tp):
        return (mu.switching(tp) * nu.switching(t) * np.exp(1j * (mu.gap * tp - nu.gap * t))
                * Vm(tp) * Vn(t))

    w = cfg.time_window_sigmas
    res = _plane_integral(f, nu.switching.window(w), mu.switching.window(w), cfg,
                          _switching_breaks((nu,)), _switching_breaks((mu,)))
    return res.scaled(mu.coupling * nu.coupling)


def direct_Mbar(A: DetectorSpec, B: DetectorSpec, amp: CoherentAmplitude,
                cfg: QuadratureConfig | None = None) -> IntegralResult:
    """The two time-ordered integrals defining ``Mbar``, before relabeling."""
    cfg = cfg or QuadratureConfig()
    _check_pair(A, B)
    if amp.is_vacuum or A.coupling == 0 or B.coupling == 0:
        return IntegralResult(0j, 0.0, 0)
    VA = SmearedOnePoint(A, amp, cfg)
    VB = SmearedOnePoint(B, amp, cfg)
    cA, cB = A.switching, B.switching

    def f(t, tp):
        return (cA(t) * cB(tp) * np.exp(1j * (A.gap * t + B.gap * tp)) * VA(t) * VB(tp)
                + cB(t) * cA(tp) * np.exp(1j * (B.gap * t + A.gap * tp)) * VB(t) * VA(tp))

    lo, hi = _time_window((A, B), cfg)
    res = integrate_triangle(f, lo, hi, cfg, points=_switching_breaks((A, B)))
    return res.require("Mbar").scaled(-A.coupling * B.coupling)
