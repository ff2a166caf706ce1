import math

import numpy as np
import pytest

from oracles import smearing_fourier_quad, switching_fourier_quad
from udw_coherent.detectors import (
    CompactBump,
    DetectorSpec,
    GaussianSmearing,
    GaussianSwitching,
    PointLike,
    smearing_fourier,
    switching_fourier,
)
from udw_coherent.perturbation import compute_L_mu_nu
from udw_coherent.quadrature import QuadratureConfig


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pointlike_transform(n):
    k = np.random.default_rng(0).normal(size=(5, n))
    np.testing.assert_allclose(smearing_fourier(PointLike(), k, n), (2 * math.pi) ** (-n / 2))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_gaussian_transform_at_origin(n):
    assert smearing_fourier(GaussianSmearing(0.7), np.zeros(n), n) == pytest.approx((2 * math.pi) ** (-n / 2))


def test_gaussian_transform_vs_quadrature():
    rng = np.random.default_rng(1)
    sm = GaussianSmearing(0.8)
    for _ in range(10):
        k = rng.normal(scale=2.0, size=3)
        ref = smearing_fourier_quad(sm, k)
        got = smearing_fourier(sm, k, 3)
        assert abs(got - ref) / abs(ref) <= 1e-8
        assert abs(ref.imag) < 1e-14


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("sigma", [0.2, 1.0, 3.5])
def test_smearing_normalized(n, sigma):
    assert GaussianSmearing(sigma).normalization(n) == pytest.approx(1.0, abs=1e-10)


def test_smearing_fourier_shape_check():
    with pytest.raises(ValueError):
        smearing_fourier(GaussianSmearing(1.0), np.zeros(2), 3)


def test_invalid_profiles():
    for bad in (lambda: GaussianSmearing(0.0), lambda: GaussianSwitching(-1.0),
                lambda: CompactBump(0.0)):
        with pytest.raises(ValueError):
            bad()


def test_gaussian_switching_zero_frequency():
    assert switching_fourier(GaussianSwitching(1.7), 0.0) == pytest.approx(math.sqrt(math.pi) * 1.7)


@pytest.mark.parametrize("T,t0", [(1.0, 0.0), (0.6, 0.0), (2.0, 1.3)])
def test_gaussian_switching_vs_quadrature(T, t0):
    sw = GaussianSwitching(T, t0)
    for w in (-3.0, -0.4, 0.9, 2.5, 6.0):
        ref = switching_fourier_quad(sw, w)
        got = switching_fourier(sw, w)
        assert abs(got - ref) <= 1e-10 * abs(ref) + 1e-15
    assert switching_fourier(GaussianSwitching(T), 1.1) == pytest.approx(
        math.sqrt(math.pi) * T * math.exp(-(T * 1.1) ** 2 / 4), rel=1e-14)


def test_bump_zero_frequency_is_half_width():
    bump = CompactBump(1.9)
    assert switching_fourier(bump, 0.0) == pytest.approx(1.9, rel=1e-15)
    from scipy.integrate import quad
    assert quad(bump, -1.9, 1.9)[0] == pytest.approx(1.9, rel=1e-12)


@pytest.mark.parametrize("t0", [0.0, -0.6])
def test_bump_vs_quadrature_including_branch_points(t0):
    T = 1.3
    bump = CompactBump(T, t0)
    ws = [0.2, 0.5 * math.pi / T, math.pi / T, -math.pi / T, 2.2, 7.0, 2 * math.pi / T + 0.01]
    for w in ws:
        ref = switching_fourier_quad(bump, w)
        got = switching_fourier(bump, w)
        assert abs(got - ref) <= 1e-10 * max(abs(ref), 1e-3)


def test_bump_transform_continuous_at_branch_switch():
    bump = CompactBump(1.0)
    w0 = 0.5 * math.pi
    lo, hi = switching_fourier(bump, w0 * (1 - 1e-12)), switching_fourier(bump, w0 * (1 + 1e-12))
    assert abs(lo - hi) < 1e-10


@pytest.mark.parametrize("sw", [GaussianSwitching(1.2, 0.4), CompactBump(0.8, -0.3)])
def test_switching_real_profile_properties(sw):
    t = np.linspace(-15, 15, 1000)
    assert np.all(sw(t) >= 0)
    for w in (0.3, 1.7, 4.0):
        assert switching_fourier(sw, -w) == pytest.approx(np.conj(switching_fourier(sw, w)), abs=1e-15)


def test_switching_fourier_arrays():
    out = switching_fourier(GaussianSwitching(1.0), np.array([0.0, 1.0]))
    assert out.shape == (2,)


def _detector(n, **kw):
    base = dict(label="A", gap=1.0, position=(0.0,) * n, coupling=0.1,
                smearing=GaussianSmearing(0.5), switching=GaussianSwitching(1.0))
    base.update(kw)
    return DetectorSpec(**base)


def test_detector_validation():
    with pytest.raises(ValueError):
        _detector(3, label="C")
    with pytest.raises(ValueError):
        _detector(3, position=(0.0,) * 4)
    d = _detector(2)
    assert d.n == 2
    assert d.with_coupling(0.3).coupling == 0.3
    assert d.moved((1.0, 2.0)).position == (1.0, 2.0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_rescaling_leaves_probabilities_unchanged(n):
    # L_AA is dimensionless, so expressing every length in units of 2.5
    # (with the coupling carrying length^((n-3)/2)) must not change it
    L = 2.5
    det = _detector(n, gap=0.8, switching=GaussianSwitching(1.4, 0.3))
    k_min = 0.05 if n == 1 else 0.0
    a = compute_L_mu_nu(det, det, QuadratureConfig(k_min=k_min)).value
    s = det.scaled(L)
    b = compute_L_mu_nu(s, s, QuadratureConfig(k_min=k_min * L)).value
    assert b == pytest.approx(a, rel=1e-9)
    assert s.switching.T == pytest.approx(1.4 / L)
