"""Detector parameters, smearing and switching profiles.

Conventions: smearing functions integrate to one; switching functions peak at
one, so ``T`` reads directly as the interaction time scale.  Fourier
transforms are::

    F~(k)     = (2 pi)^(-n/2) int d^n x F(x) exp(+i k.x)
    chi~(w)   = int dt chi(t) exp(-i w t)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .quadrature import integrate_1d, QuadratureConfig, sphere_measure


@dataclass(frozen=True)
class PointLike:
    kind = "pointlike"

    def fourier(self, k, n: int):
        k = np.asarray(k, dtype=float)
        return np.full(k.shape, (2.0 * math.pi) ** (-n / 2))

    def scaled(self, length: float) -> "PointLike":
        return self


@dataclass(frozen=True)
class GaussianSmearing:
    """``F(x) = (pi sigma^2)^(-n/2) exp(-|x|^2 / sigma^2)``."""

    sigma: float
    kind = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"smearing sigma must be positive, got {self.sigma}")

    def density(self, x, n: int):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return (math.pi * self.sigma ** 2) ** (-n / 2) * np.exp(-r2 / self.sigma ** 2)

    def fourier(self, k, n: int):
        k = np.asarray(k, dtype=float)
        return (2.0 * math.pi) ** (-n / 2) * np.exp(-0.25 * self.sigma ** 2 * k * k)

    def normalization(self, n: int) -> float:
        """Total integral by radial quadrature (should be 1)."""
        cut = 12.0 * self.sigma
        w = sphere_measure(n)
        res = integrate_1d(lambda r: w * r ** (n - 1) * self.density(r[:, None] * np.eye(n)[0], n),
                           0.0, cut, QuadratureConfig(rel_tol=1e-13))
        return res.value.real

    def scaled(self, length: float) -> "GaussianSmearing":
        return GaussianSmearing(self.sigma / length)


SmearingProfile = PointLike | GaussianSmearing


@dataclass(frozen=True)
class GaussianSwitching:
    """``chi(t) = exp(-(t - t0)^2 / T^2)``."""

    T: float
    t0: float = 0.0
    kind = "gaussian"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"switching time T must be positive, got {self.T}")

    def __call__(self, t):
        s = (np.asarray(t, dtype=float) - self.t0) / self.T
        return np.exp(-s * s)

    def fourier(self, w):
        w = np.asarray(w, dtype=float)
        return (math.sqrt(math.pi) * self.T * np.exp(-0.25 * (self.T * w) ** 2)
                * np.exp(-1j * w * self.t0))

    def window(self, sigmas: float = 10.0) -> tuple[float, float]:
        return (self.t0 - sigmas * self.T, self.t0 + sigmas * self.T)

    def scaled(self, length: float) -> "GaussianSwitching":
        return GaussianSwitching(self.T / length, self.t0 / length)


@dataclass(frozen=True)
class CompactBump:
    """``cos^2(pi (t - t0) / (2T))`` on ``[t0 - T, t0 + T]``, zero outside."""

    T: float
    t0: float = 0.0
    kind = "bump"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"switching half-width T must be positive, got {self.T}")

    def __call__(self, t):
        s = (np.asarray(t, dtype=float) - self.t0) / self.T
        return np.where(np.abs(s) <= 1.0, np.cos(0.5 * math.pi * s) ** 2, 0.0)

    def fourier(self, w):
        # T sinc(y) / (1 - y^2) with y = w T / pi; the |y| > 1/2 branch uses
        # sin(pi y) = sin(pi (1 - y)) to stay finite at y = +-1.
        w = np.asarray(w, dtype=float)
        y = np.abs(w * self.T / math.pi)
        near = np.sinc(1.0 - y) / (np.where(y > 0.5, y, 1.0) * (1.0 + y))
        far = np.sinc(y) / np.where(y > 0.5, 1.0, 1.0 - y * y)
        core = np.where(y > 0.5, near, far)
        return self.T * core * np.exp(-1j * w * self.t0)

    def window(self, sigmas: float = 10.0) -> tuple[float, float]:
        return (self.t0 - self.T, self.t0 + self.T)

    def scaled(self, length: float) -> "CompactBump":
        return CompactBump(self.T / length, self.t0 / length)


SwitchingProfile = GaussianSwitching | CompactBump


@dataclass(frozen=True)
class DetectorSpec:
    label: str
    gap: float
    position: tuple[float, ...]
    coupling: float
    smearing: SmearingProfile
    switching: SwitchingProfile

    def __post_init__(self):
        if self.label not in ("A", "B"):
            raise ValueError(f"detector label must be 'A' or 'B', got {self.label!r}")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "gap", float(self.gap))
        object.__setattr__(self, "coupling", float(self.coupling))
        if len(self.position) not in (1, 2, 3):
            raise ValueError("detector position must have 1, 2 or 3 components")

    @property
    def n(self) -> int:
        return len(self.position)

    def with_coupling(self, coupling: float) -> "DetectorSpec":
        return replace(self, coupling=float(coupling))

    def moved(self, position) -> "DetectorSpec":
        return replace(self, position=tuple(position))

    def scaled(self, length: float) -> "DetectorSpec":
        """Express the detector in units where ``length`` is 1."""
        n = self.n
        return replace(
            self,
            gap=self.gap * length,
            position=tuple(p / length for p in self.position),
            coupling=self.coupling * length ** ((3 - n) / 2),
            smearing=self.smearing.scaled(length),
            switching=self.switching.scaled(length),
        )


def smearing_fourier(s: SmearingProfile, k, n: int):
    """F~ at wavevector(s) ``k`` (last axis of length n)."""
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != n:
        raise ValueError(f"k must have {n} components")
    return s.fourier(np.linalg.norm(k, axis=-1), n)


def switching_fourier(c: SwitchingProfile, w):
    out = c.fourier(w)
    return complex(out) if np.ndim(out) == 0 else out
