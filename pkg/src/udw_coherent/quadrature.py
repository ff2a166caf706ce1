"""Adaptive quadrature for the detector integrals.

All integrands are *vectorized*: they receive a 1-D array of abscissae and
return an array whose leading axis matches it.  Trailing axes are allowed, in
which case the integral is vector valued and the error control uses the max
norm over components.  Values may be complex.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "QuadratureConfig",
    "IntegralResult",
    "QuadratureError",
    "MaxSubdivisionsExceeded",
    "IRDivergence",
    "TailNotConverged",
    "integrate_1d",
    "integrate_triangle",
    "integrate_radial_k",
    "angular_kernel",
    "spherical_mean_exp",
    "sphere_measure",
]


class QuadratureError(RuntimeError):
    """Base class for quadrature failures."""


class MaxSubdivisionsExceeded(QuadratureError):
    pass


class IRDivergence(QuadratureError, ValueError):
    pass


class TailNotConverged(QuadratureError):
    pass


# 10-point Gauss / 21-point Kronrod pair on [-1, 1] (QUADPACK qk21).
_XGK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208745775380,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes sit at odd positions of the 21-point rule.
_gauss_w = np.zeros(21)
_gauss_w[1:10:2] = _WG
_gauss_w[11::2] = _WG[::-1]
GAUSS_WEIGHTS = _gauss_w
del _gauss_w


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and domain controls shared by every integral.

    ``k_min`` must be positive for one spatial dimension, where the
    ``d k / |k|`` measure is log divergent at the origin.
    """

    abs_tol: float = 1e-15
    rel_tol: float = 1e-10
    k_min: float = 0.0
    k_max_auto: bool = True
    k_max_cap: float = 1.0e3
    k_max_initial: float = 8.0
    max_subdivisions: int = 4000
    time_window_sigmas: float = 10.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.k_min < 0:
            raise ValueError("k_min must be non-negative")
        if not self.k_min < self.k_max_cap:
            raise ValueError("k_min must be smaller than k_max_cap")
        if self.k_max_initial <= self.k_min:
            raise ValueError("k_max_initial must exceed k_min")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be a positive integer")
        if self.time_window_sigmas <= 0:
            raise ValueError("time_window_sigmas must be positive")

    def check_dimension(self, n: int) -> None:
        if n not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {n}")
        if n == 1 and self.k_min <= 0:
            raise IRDivergence("n = 1 requires an explicit infrared cutoff k_min > 0")

    def tightened(self, factor: float) -> "QuadratureConfig":
        return replace(self, abs_tol=self.abs_tol / factor, rel_tol=self.rel_tol / factor)


@dataclass
class IntegralResult:
    value: complex | np.ndarray
    error_estimate: float
    evaluations: int
    converged: bool = True

    def __add__(self, other: "IntegralResult") -> "IntegralResult":
        return IntegralResult(
            self.value + other.value,
            self.error_estimate + other.error_estimate,
            self.evaluations + other.evaluations,
            self.converged and other.converged,
        )

    def scaled(self, c) -> "IntegralResult":
        return IntegralResult(self.value * c, self.error_estimate * abs(c),
                              self.evaluations, self.converged)

    def require(self, what: str = "integral") -> "IntegralResult":
        """Raise if the adaptive scheme gave up before meeting tolerance."""
        if not self.converged:
            raise MaxSubdivisionsExceeded(
                f"{what}: tolerance not met (error estimate {self.error_estimate:.3e})")
        return self


def _norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _gk_panels(f, lo: np.ndarray, hi: np.ndarray):
    """Apply the 21-point rule to many panels with one integrand call."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = (mid[:, None] + half[:, None] * KRONROD_NODES[None, :]).ravel()
    fx = np.asarray(f(x))
    fx = fx.reshape((lo.size, 21) + fx.shape[1:])
    extra = (None,) * (fx.ndim - 2)
    wk = KRONROD_WEIGHTS[(None, slice(None)) + extra]
    wg = GAUSS_WEIGHTS[(None, slice(None)) + extra]
    h = half[(slice(None),) + extra]
    kron = h * np.sum(wk * fx, axis=1)
    gauss = h * np.sum(wg * fx, axis=1)
    diff = np.abs(kron - gauss)
    if diff.ndim > 1:
        err = diff.reshape(lo.size, -1).max(axis=1)
    else:
        err = diff
    return kron, err


def integrate_1d(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                 cfg: QuadratureConfig | None = None,
                 points: Sequence[float] | None = None) -> IntegralResult:
    """Globally adaptive Gauss-Kronrod integration of ``f`` over ``[a, b]``.

    ``points`` are optional interior breakpoints used for the initial
    partition (peaks, kinks).  When the subdivision budget runs out the best
    estimate is returned with ``converged=False``.
    """
    return _adaptive(f, a, b, cfg, points)[0]


def _adaptive(f, a, b, cfg, points):
    cfg = cfg or QuadratureConfig()
    if not b > a:
        raise ValueError(f"integration limits must satisfy a < b, got [{a}, {b}]")
    edges = [a]
    for p in sorted(points or ()):
        if a < p < b and p > edges[-1]:
            edges.append(float(p))
    edges.append(b)
    lo = np.array(edges[:-1], dtype=float)
    hi = np.array(edges[1:], dtype=float)
    vals, errs = _gk_panels(f, lo, hi)
    nevals = 21 * lo.size

    # panels keyed by left endpoint so the final sum is order independent
    panels = {float(lo[i]): (float(hi[i]), vals[i], float(errs[i])) for i in range(lo.size)}
    heap = [(-float(errs[i]), float(lo[i])) for i in range(lo.size)]
    heapq.heapify(heap)
    total_err = float(np.sum(errs))

    def current_total():
        keys = sorted(panels)
        return sum((panels[k][1] for k in keys[1:]), panels[keys[0]][1])

    total = current_total()
    n_sub = 0
    converged = True
    while total_err > max(cfg.abs_tol, cfg.rel_tol * _norm(total)):
        if n_sub >= cfg.max_subdivisions:
            converged = False
            break
        _, left = heapq.heappop(heap)
        right, val, err = panels.pop(left)
        mid = 0.5 * (left + right)
        if not (left < mid < right):
            # panel cannot be split further in floating point
            panels[left] = (right, val, 0.0)
            total_err -= err
            continue
        v2, e2 = _gk_panels(f, np.array([left, mid]), np.array([mid, right]))
        nevals += 42
        panels[left] = (mid, v2[0], float(e2[0]))
        panels[mid] = (right, v2[1], float(e2[1]))
        heapq.heappush(heap, (-float(e2[0]), left))
        heapq.heappush(heap, (-float(e2[1]), mid))
        total_err += float(e2[0]) + float(e2[1]) - err
        total = total - val + v2[0] + v2[1]
        n_sub += 1
    total = current_total()
    total_err = math.fsum(p[2] for p in panels.values())
    if np.ndim(total) == 0:
        total = complex(total)
    edges_out = [(k, panels[k][0]) for k in sorted(panels)]
    return IntegralResult(total, total_err, nevals, converged), edges_out


def rule_from_panels(panels) -> tuple[np.ndarray, np.ndarray]:
    """Flatten adapted panels into Kronrod nodes and weights."""
    lo = np.array([p[0] for p in panels])
    hi = np.array([p[1] for p in panels])
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * KRONROD_NODES[None, :]).ravel()
    weights = (half[:, None] * KRONROD_WEIGHTS[None, :]).ravel()
    return nodes, weights


def _iterated(f, lo: float, hi: float, inner_lo, inner_hi, cfg: QuadratureConfig,
              points=None) -> IntegralResult:
    """``int_lo^hi dt int_{inner_lo(t)}^{inner_hi(t)} dt' f(t, t')``.

    The inner range is mapped to ``[0, 1]`` so that every outer node shares
    one vector-valued inner integration.
    """
    inner_cfg = cfg.tightened(10.0)
    inner_errors = []

    def outer(t):
        base = inner_lo(t)
        L = inner_hi(t) - base

        def inner(s):
            T = np.broadcast_to(t[None, :], (s.size, t.size))
            return f(T, base[None, :] + s[:, None] * L[None, :])

        res = integrate_1d(inner, 0.0, 1.0, inner_cfg)
        inner_errors.append(res.error_estimate * float(np.max(np.abs(L))) if L.size else 0.0)
        if not res.converged:
            inner_errors.append(math.inf)
        val = np.asarray(res.value)
        shape = (t.size,) + (1,) * (val.ndim - 1)
        return val * L.reshape(shape)

    res = integrate_1d(outer, lo, hi, cfg, points=points)
    inner_err = (hi - lo) * max(inner_errors, default=0.0)
    converged = res.converged and math.isfinite(inner_err)
    return IntegralResult(res.value, res.error_estimate + (inner_err if converged else 0.0),
                          res.evaluations, converged)


def integrate_triangle(f: Callable[[np.ndarray, np.ndarray], np.ndarray], a: float, b: float,
                       cfg: QuadratureConfig | None = None,
                       points: Sequence[float] | None = None) -> IntegralResult:
    """Integrate ``f(t, t')`` over the triangle ``a <= t' <= t <= b``.

    ``points`` are breakpoints of the integrand in either variable (kinks
    of a switching function, say).  They cut the triangle into rectangles
    below the diagonal and small triangles on it, each integrated
    separately; the triangles use ``u = t - t'`` as the inner variable.
    ``f`` is evaluated elementwise on equal-shape arrays.
    """
    cfg = cfg or QuadratureConfig()
    edges = [a] + sorted(p for p in set(points or ()) if a < p < b) + [b]
    total = None
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        piece = _iterated(f, lo, hi, lambda t, lo=lo: np.full_like(t, lo), lambda t: t, cfg)
        total = piece if total is None else total + piece
        for j in range(i):
            c, d = edges[j], edges[j + 1]
            total = total + _iterated(f, lo, hi, lambda t, c=c: np.full_like(t, c),
                                      lambda t, d=d: np.full_like(t, d), cfg)
    return total


def sphere_measure(n: int) -> float:
    """Total solid angle of the unit sphere in ``n`` dimensions (2 for n = 1)."""
    return {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}[n]


def angular_kernel(k, d: float, n: int):
    """Angular mean of ``exp(i k.d)`` over directions of ``k``."""
    x = np.asarray(k, dtype=float) * d
    if n == 1:
        return np.cos(x)
    if n == 2:
        return special.j0(x)
    if n == 3:
        return np.sinc(x / math.pi)
    raise ValueError(f"unsupported dimension {n}")


def spherical_mean_exp(zz, n: int, log_offset=0.0):
    """``exp(log_offset)`` times the angular mean of ``exp(khat . z)``.

    ``zz = z . z`` for a complex n-vector ``z`` (no conjugation).  The mean is
    sinh(s)/s, I0(s) and cosh(s) for n = 3, 2, 1 with ``s = sqrt(zz)``.  The
    offset is folded into the exponentials so large arguments do not overflow.
    """
    s = np.sqrt(np.asarray(zz, dtype=complex))
    off = np.asarray(log_offset, dtype=complex)
    if n == 1:
        return 0.5 * (np.exp(s + off) + np.exp(-s + off))
    if n == 2:
        return special.ive(0, s) * np.exp(np.abs(s.real) + off)
    if n != 3:
        raise ValueError(f"unsupported dimension {n}")
    small = np.abs(s) < 1e-3
    safe = np.where(small, 1.0, s)
    out = (np.exp(s + off) - np.exp(-s + off)) / (2.0 * safe)
    series = np.exp(off) * (1.0 + zz / 6.0 + zz * zz / 120.0)
    return np.where(small, series, out)


def integrate_radial_k(g: Callable[[np.ndarray], np.ndarray], n: int,
                       cfg: QuadratureConfig | None = None,
                       k_hint: float | None = None,
                       points: Sequence[float] | None = None,
                       return_rule: bool = False):
    """``sphere_measure(n) * int_{k_min}^{k_max} k^(n-1) g(k) dk``.

    ``g`` must already contain every angular factor.  With ``k_max_auto`` the
    upper limit starts at ``max(k_max_initial, k_hint)`` and doubles until a
    whole new segment contributes less than the tolerance and the integrand
    has decayed at its far end.  Structure beyond ``k_hint`` is assumed to be
    monotone decay, so callers must pass the radius of any feature (e.g. a
    packet center) lying past ``k_max_initial``.  With ``return_rule`` the adapted nodes and
    weights (measure included) are returned as well, for reuse on integrands
    resolved by the same partition.
    """
    cfg = cfg or QuadratureConfig()
    if n == 1 and cfg.k_min <= 0:
        raise IRDivergence("n = 1 radial integral requires k_min > 0")
    if n not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {n}")
    omega = sphere_measure(n)

    def h(k):
        v = np.asarray(g(k))
        w = k ** (n - 1) if n > 1 else np.ones_like(k)
        return v * w.reshape((k.size,) + (1,) * (v.ndim - 1))

    upper = max(cfg.k_max_initial, k_hint or 0.0)
    upper = min(upper, cfg.k_max_cap)
    res, panels = _adaptive(h, cfg.k_min, upper, cfg, points)
    while cfg.k_max_auto:
        if upper >= cfg.k_max_cap:
            raise TailNotConverged(f"radial integrand not decayed at k_max_cap={cfg.k_max_cap}")
        nxt = min(2.0 * upper, cfg.k_max_cap)
        seg, seg_panels = _adaptive(h, upper, nxt, cfg, None)
        res = res + seg
        panels += seg_panels
        edge = _norm(h(np.array([nxt]))) * nxt
        tol = max(cfg.abs_tol, cfg.rel_tol * _norm(res.value))
        upper = nxt
        if _norm(seg.value) <= tol and edge <= tol:
            break
    res = res.scaled(omega)
    if not return_rule:
        return res
    nodes, weights = rule_from_panels(panels)
    w = nodes ** (n - 1) if n > 1 else np.ones_like(nodes)
    return res, nodes, omega * weights * w
