import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbling.domain import DomainSpec, build_domain
from bubbling.green import (ALPHA3, GammaStarError, ResonanceError, ball_admissible_radius,
                            ball_h_series, ball_robin_series, bn_bounds, boundary_data, gamma_star,
                            gamma_star_map, grad_gamma_star, regular_part, robin, robin_curve,
                            theta_gamma)
from bubbling.spectral import eigenpairs

# spherical-Bessel series R = -a3 k sum (2l+1) j_l(k rho)^2 y_l(k) / j_l(k), mpmath, 30 digits
ROBIN_ORACLE = [
    (2.0, 0.3, 0.513466884478655),
    (1.0, 0.5, 1.38893350089944),
    (6.0, 0.2, -3.50295855801635),
    (2.0, 0.0, 0.293838759442431),
]
GSTAR_03 = 2.87958068740116      # gamma*(0.3 e1), unit ball
GRAD_GSTAR_03 = 3.09521696097     # d gamma* / d x1 at 0.3 e1
ADMISSIBLE_RADIUS = 0.402176209767  # 3 gamma*(d e1) = pi^2


@pytest.fixture(scope="module")
def rb():
    return build_domain(DomainSpec(mode="radial", resolution=101))


@pytest.mark.golden
@pytest.mark.parametrize("g,rho,val", ROBIN_ORACLE)
def test_series_vs_bessel_oracle(g, rho, val):
    assert ball_robin_series(g, np.array([rho, 0, 0])) == pytest.approx(val, rel=1e-10)


@given(st.floats(0.05, 9.0), st.floats(0.2, 3.0))
@settings(max_examples=30, deadline=None)
def test_series_centre_closed_form_and_scaling(g, R):
    k = np.sqrt(g)
    assert ball_robin_series(g, np.zeros(3)) == pytest.approx(ALPHA3 * k / np.tan(k), rel=1e-9, abs=1e-9)
    # R^{B_R}_g(R x) = R^{B_1}_{g R^2}(x) / R
    if g * R ** 2 < 9.5:
        x = np.array([0.3, 0.0, 0.0])
        assert ball_robin_series(g, R * x, R) == pytest.approx(ball_robin_series(g * R ** 2, x) / R,
                                                                rel=1e-8, abs=1e-10)


def test_h_series_boundary_data():
    y = np.array([0.3, 0.2, 0.0])
    xb = np.array([[0, 0, 1.0], [0.6, 0.8, 0], [-1.0, 0, 0]])
    assert np.allclose(ball_h_series(3.0, xb, y), boundary_data(3.0, y)(xb), rtol=1e-8)
    assert -ball_h_series(3.0, y[None], y)[0] == pytest.approx(ball_robin_series(3.0, y), rel=1e-10)


def test_theta_regular_at_origin():
    r = np.array([1e-9, 1e-3])
    assert np.allclose(theta_gamma(r, 2.0), ALPHA3 * 2.0 * r / 2, rtol=1e-5)


@pytest.mark.golden
def test_radial_H_closed_form(ball, ball_sp):
    gd = regular_part(ball, ball_sp, 2.0, np.zeros(3))
    r = np.array([0.1, 0.5, 0.9])
    k = np.sqrt(2.0)
    exact = ALPHA3 * ((1 - np.cos(k * r)) / r + np.sin(k * r) / (r * np.tan(k)))
    assert np.allclose(gd.H_at(np.c_[r, 0 * r, 0 * r]), exact, atol=1e-5)
    assert gd.R == pytest.approx(ALPHA3 * k / np.tan(k), rel=1e-5)


@pytest.mark.golden
def test_gamma_star_off_centre(rb):
    gs = gamma_star(rb, None, [0.3, 0, 0], method="series", tol=1e-12).gamma
    assert gs == pytest.approx(GSTAR_03, rel=1e-10)
    g = grad_gamma_star(rb, None, [0.3, 0, 0], method="series")
    assert g[0] == pytest.approx(GRAD_GSTAR_03, rel=1e-5)
    assert np.allclose(g[1:], 0, atol=1e-6)


def test_gamma_star_full3d_grid():
    d = build_domain(DomainSpec(resolution=32))
    s = eigenpairs(d, 1, tol=1e-6)
    gs = gamma_star(d, s, [0.3, 0, 0], tol=1e-5).gamma
    assert gs == pytest.approx(GSTAR_03, rel=5e-3)


def test_admissible_radius(rb):
    d = ball_admissible_radius()
    assert d == pytest.approx(ADMISSIBLE_RADIUS, abs=1e-8)
    m = gamma_star_map(rb, None, [[0.2, 0, 0], [0.6, 0, 0]], method="series")
    assert m["admissible"].tolist() == [True, False]
    assert not any(m["errors"])


def test_robin_curve_monotone(ball, ball_sp):
    c = robin_curve(ball, ball_sp, np.zeros(3), np.linspace(0.5, 8, 8))
    assert c.monotone
    assert c.gamma_star == pytest.approx(np.pi ** 2 / 4, rel=1e-5)


def test_resonance_and_bracket_errors(ball, ball_sp, rb):
    with pytest.raises(ResonanceError):
        robin(ball, ball_sp, 0.999 * ball_sp.lam1, np.zeros(3))
    with pytest.raises(ResonanceError):
        robin(rb, None, 10.0, np.zeros(3), method="series")
    with pytest.raises(GammaStarError):
        gamma_star(rb, None, np.zeros(3), method="series", bracket=(0.3, 0.5))


def test_brezis_nirenberg_ball(rb):
    b = bn_bounds(rb, None, method="series")
    assert b["lower"] == pytest.approx(np.pi ** 2 / 4)
    assert b["lower_le_druet"]
    assert b["druet_min"] == pytest.approx(np.pi ** 2 / 4, rel=1e-5)
    # on the unit ball R_0(0)/a3 = 1, so the two bounds meet
    assert b["upper_unit"] == pytest.approx(b["lower"], rel=1e-9)
