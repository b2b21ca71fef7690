import warnings

import numpy as np
import pytest

from bubbling.domain import DomainSpec, build_domain
from bubbling.spectral import (TruncationWarning, eigenpairs, free_kernel, heat_kernel, tau_min,
                               varadhan_lower_check)

PI2 = np.pi ** 2


def ball_center_kernel(t, nmax=400):
    # continuum p_t(0,0) on the unit ball: phi_n(0)^2 = n^2 pi / 2 for radial modes
    n = np.arange(1, nmax + 1)
    return float(np.sum(np.exp(-n ** 2 * PI2 * t) * n ** 2 * np.pi / 2))


@pytest.mark.golden
def test_ball_radial_modes(ball_sp):
    n = np.arange(1, 4)
    assert np.allclose(ball_sp.lam[:3], n ** 2 * PI2, rtol=2e-5)
    phi0 = ball_sp.at(np.zeros((1, 3)))[0, :3]
    assert np.allclose(phi0 ** 2, n ** 2 * np.pi / 2, rtol=1e-4)
    # phi_n(1/2) = sin(n pi / 2) / (1/2 sqrt(2 pi)), up to sign
    ph = ball_sp.at(np.array([[0.5, 0, 0]]))[0, :3] * np.sign(phi0)
    assert np.allclose(ph, np.sin(n * np.pi / 2) / (0.5 * np.sqrt(2 * np.pi)), atol=1e-4)


def test_box_matches_discrete_symbol():
    d = build_domain(DomainSpec(kind="box", resolution=16))
    s = eigenpairs(d, 4)
    h = d.h[0]
    s1 = 4 / h ** 2 * np.sin(np.pi * h / 2) ** 2
    s2 = 4 / h ** 2 * np.sin(np.pi * h) ** 2
    assert s.lam1 == pytest.approx(3 * s1, rel=1e-9)
    assert np.allclose(s.lam[1:], 2 * s1 + s2, rtol=1e-8)  # triple eigenvalue
    G = (s.phi.T * d.mass) @ s.phi
    assert np.allclose(G, np.eye(4), atol=1e-10)


def test_too_many_modes():
    d = build_domain(DomainSpec(mode="radial", resolution=21))
    with pytest.raises(ValueError):
        eigenpairs(d, 10)


def test_cache_round_trip(tmp_path):
    d = build_domain(DomainSpec(mode="radial", resolution=101))
    a = eigenpairs(d, 3, cache_dir=str(tmp_path))
    assert list(tmp_path.iterdir())
    b = eigenpairs(d, 3, cache_dir=str(tmp_path))
    assert np.array_equal(a.lam, b.lam) and np.array_equal(a.phi, b.phi)


@pytest.mark.golden
@pytest.mark.parametrize("t", [0.01, 0.05, 0.2])
def test_heat_kernel_center(ball_sp, t):
    z = np.zeros(3)
    assert heat_kernel(ball_sp, t, z, z) == pytest.approx(ball_center_kernel(t), rel=2e-3)


def test_heat_kernel_small_time_warns(ball_sp):
    z = np.zeros(3)
    with pytest.warns(TruncationWarning):
        heat_kernel(ball_sp, 1e-5, z, z)
    assert tau_min(ball_sp, z, z) > 1e-5


def test_free_kernel_dominates_short_time(ball_sp):
    # away from the boundary p^Omega ~ p^{R3} for short times (up to O(h^2))
    z = np.zeros(3)
    t = 2e-3
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        p = heat_kernel(eigenpairs(ball_sp.dom, 240), t, z, z)
    assert ball_center_kernel(t) <= free_kernel(t, z, z)
    assert p == pytest.approx(free_kernel(t, z, z), rel=1e-3)


def test_varadhan_lower_bound(ball_sp):
    assert varadhan_lower_check(ball_sp, 0.05, [0.2, 0, 0], 0.5) is True
    with pytest.warns(TruncationWarning):
        assert varadhan_lower_check(ball_sp, 1e-5, [0.2, 0, 0], 0.5) is None


def test_radial_needs_centre(ball_sp):
    with pytest.raises(ValueError):
        heat_kernel(ball_sp, 0.1, [0.1, 0, 0], [0.2, 0, 0])
