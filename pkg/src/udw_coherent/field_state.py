"""Coherent amplitudes and the field correlators they induce.

The amplitude is a finite sum of isotropic Gaussian wavepackets in k-space::

    alpha(k) = sum_p  weight_p * exp(-|k - center_p|^2 / width_p^2)

Weights carry units of k^(-n/2) (delta-normalised modes).  Every k-space
integral below is reduced to a radial one by doing the angular average of the
packet times a plane wave in closed form, see :func:`alpha_plane_wave_mean`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import (
    QuadratureConfig,
    IntegralResult,
    angular_kernel,
    integrate_radial_k,
    spherical_mean_exp,
)


@dataclass(frozen=True)
class Packet:
    weight: complex
    center: tuple[float, ...]
    width: float

    def __post_init__(self):
        object.__setattr__(self, "weight", complex(self.weight))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "width", float(self.width))
        if not self.width > 0:
            raise ValueError(f"packet width must be positive, got {self.width}")


@dataclass(frozen=True)
class CoherentAmplitude:
    """Coherent amplitude as a sum of Gaussian packets; no packets is the vacuum."""

    n: int
    packets: tuple[Packet, ...] = ()

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.n}")
        packets = tuple(p if isinstance(p, Packet) else Packet(**p) for p in self.packets)
        for p in packets:
            if len(p.center) != self.n:
                raise ValueError(
                    f"packet center has dimension {len(p.center)}, amplitude has n={self.n}")
        object.__setattr__(self, "packets", packets)

    @classmethod
    def vacuum(cls, n: int) -> "CoherentAmplitude":
        return cls(n, ())

    @property
    def is_vacuum(self) -> bool:
        return all(p.weight == 0 for p in self.packets)

    def scaled(self, factor: complex) -> "CoherentAmplitude":
        return CoherentAmplitude(
            self.n, tuple(Packet(p.weight * factor, p.center, p.width) for p in self.packets))

    def conjugate_mirror(self) -> "CoherentAmplitude":
        """Amplitude ``conj(alpha(-k))``."""
        return CoherentAmplitude(self.n, tuple(
            Packet(p.weight.conjugate(), tuple(-c for c in p.center), p.width)
            for p in self.packets))

    def __add__(self, other: "CoherentAmplitude") -> "CoherentAmplitude":
        if other.n != self.n:
            raise ValueError("cannot add amplitudes of different dimension")
        return CoherentAmplitude(self.n, self.packets + other.packets)

    def k_hint(self) -> float:
        """Radius beyond which every packet has decayed below ~e^-100."""
        return max((np.linalg.norm(p.center) + 10.0 * p.width for p in self.packets),
                   default=0.0)

    def breakpoints(self) -> list[float]:
        pts = []
        for p in self.packets:
            c = float(np.linalg.norm(p.center))
            pts.extend([c - 4 * p.width, c - p.width, c, c + p.width, c + 4 * p.width])
        return sorted(x for x in pts if x > 0)


@dataclass(frozen=True)
class Regulator:
    """Exponential UV damping ``exp(-epsilon |k|)`` for bare Wightman functions."""

    epsilon: float = field(default=0.1)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("regulator epsilon must be positive")


def eval_alpha(amp: CoherentAmplitude, k) -> complex | np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != amp.n:
        raise ValueError(f"k has dimension {k.shape[-1]}, amplitude has n={amp.n}")
    out = np.zeros(k.shape[:-1], dtype=complex)
    for p in amp.packets:
        d2 = np.sum((k - np.asarray(p.center)) ** 2, axis=-1)
        out = out + p.weight * np.exp(-d2 / p.width ** 2)
    return complex(out) if out.ndim == 0 else out


def alpha_plane_wave_mean(amp: CoherentAmplitude, k, x) -> np.ndarray:
    """Angular mean over directions of k of ``alpha(k) exp(i k.x)``.

    ``k`` is an array of radii (shape ``(K,)``), ``x`` a point ``(n,)`` or a
    batch ``(m, n)``.  Returns shape ``(K,)`` or ``(K, m)``.
    """
    k = np.asarray(k, dtype=float)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = x[None, :] if single else x
    if xs.shape[-1] != amp.n:
        raise ValueError(f"x has dimension {xs.shape[-1]}, amplitude has n={amp.n}")
    out = np.zeros((k.size, xs.shape[0]), dtype=complex)
    kk = k[:, None] ** 2
    for p in amp.packets:
        if p.weight == 0:
            continue
        c = np.asarray(p.center)
        a = 2.0 * c / p.width ** 2
        # z = k (a + i x);  z.z = k^2 (|a|^2 - |x|^2 + 2i a.x)
        zz = kk * ((a @ a) - np.sum(xs ** 2, axis=1) + 2j * (xs @ a))[None, :]
        offset = -(kk + c @ c) / p.width ** 2
        out += p.weight * spherical_mean_exp(zz, amp.n, offset)
    return out[:, 0] if single else out


def _mode_norm(n: int) -> float:
    return 1.0 / math.sqrt(2.0 * (2.0 * math.pi) ** n)


def j_function(amp: CoherentAmplitude, x, t, cfg: QuadratureConfig | None = None,
               with_error: bool = False):
    """``J(x, t) = int d^n k alpha(k) exp(-i(|k| t - k.x)) / sqrt(2 (2 pi)^n |k|)``.

    ``x`` may be a batch ``(m, n)``; ``t`` a scalar or an ``(m,)`` array.
    """
    cfg = cfg or QuadratureConfig()
    n = amp.n
    x = np.asarray(x, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    batch = x.ndim == 2 or t_arr.ndim == 1
    if amp.is_vacuum:
        shape = (x.shape[0],) if x.ndim == 2 else t_arr.shape
        res = IntegralResult(np.zeros(shape, dtype=complex) if batch else 0j, 0.0, 0)
        return res if with_error else res.value
    cfg.check_dimension(n)
    xb = x if x.ndim == 2 else np.broadcast_to(x, (max(t_arr.size, 1), n))
    tb = np.broadcast_to(t_arr, (xb.shape[0],))
    norm = _mode_norm(n)

    def g(k):
        P = alpha_plane_wave_mean(amp, k, xb)
        return P * np.exp(-1j * k[:, None] * tb[None, :]) * (norm / np.sqrt(k))[:, None]

    res = integrate_radial_k(g, n, cfg, k_hint=amp.k_hint(), points=amp.breakpoints())
    res.require("J(x, t)")
    if not batch:
        res = IntegralResult(complex(res.value[0]), res.error_estimate, res.evaluations)
    return res if with_error else res.value


def one_point_v(amp: CoherentAmplitude, x, t, cfg: QuadratureConfig | None = None):
    """Field expectation value ``v = 2 Re J``."""
    return 2.0 * np.real(j_function(amp, x, t, cfg))


def vacuum_wightman(x, t, xp, tp, n: int, reg: Regulator,
                    cfg: QuadratureConfig | None = None) -> complex:
    """Regulated vacuum two-point function (diagnostic only).

    The mode integral is damped by ``exp(-epsilon |k|)``; in n = 3 it equals
    ``1 / (4 pi^2 (|dx|^2 + (epsilon + i dt)^2))``.
    """
    if not isinstance(reg, Regulator):
        reg = Regulator(float(reg))
    cfg = cfg or QuadratureConfig()
    cfg.check_dimension(n)
    dx = np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)
    if dx.shape != (n,):
        raise ValueError(f"points must have dimension {n}")
    d = float(np.linalg.norm(dx))
    dt = float(t) - float(tp)
    eps = reg.epsilon
    pref = 1.0 / (2.0 * (2.0 * math.pi) ** n)

    def g(k):
        return pref / k * np.exp(-(eps + 1j * dt) * k) * angular_kernel(k, d, n)

    res = integrate_radial_k(g, n, cfg, k_hint=40.0 / eps)
    res.require("w_vac")
    return complex(res.value)


def two_point_w(amp: CoherentAmplitude, x, t, xp, tp, reg: Regulator,
                cfg: QuadratureConfig | None = None) -> complex:
    """Full Wightman function ``v(x,t) v(x',t') + w_vac``."""
    if amp.is_vacuum:
        return vacuum_wightman(x, t, xp, tp, amp.n, reg, cfg)
    v1 = float(one_point_v(amp, x, t, cfg))
    v2 = float(one_point_v(amp, xp, tp, cfg))
    return v1 * v2 + vacuum_wightman(x, t, xp, tp, amp.n, reg, cfg)
