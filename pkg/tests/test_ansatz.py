import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbling.ansatz import (BubbleParams, KernelBasis, M_mode, OrthogonalityError, U, Z4, center_error,
                             check_orthogonality_M, dU, energy, error_terms, grad_U, phi3_radial_mode,
                             scaling_exponent, talenti, u1, xi0_coefficients, bubble_integrals)
from bubbling.green import ALPHA3, ball_robin_series, regular_part

GS = np.pi ** 2 / 4


def lap(f, y, h=1e-3):
    y = np.atleast_2d(y)
    out = -6 * f(y)
    for e in np.eye(3):
        out = out + f(y + h * e) + f(y - h * e)
    return out / h ** 2


points = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)


@given(points)
@settings(max_examples=40, deadline=None)
def test_bubble_equation(y):
    assert lap(U, y)[0] + U(y[None])[0] ** 5 == pytest.approx(0, abs=1e-5)


@given(points)
@settings(max_examples=40, deadline=None)
def test_kernel_elements(y):
    kb = KernelBasis()
    for i in (1, 2, 3, 4):
        f = lambda x, i=i: kb.Z(i, x)
        v = lap(f, y)[0] + 5 * U(y[None])[0] ** 4 * f(y[None])[0]
        assert v == pytest.approx(0, abs=1e-4)
    # Z4 = y.grad U + U/2 (generator of dilations)
    assert Z4(y[None])[0] == pytest.approx(y @ grad_U(y)[0] + U(y[None])[0] / 2, abs=1e-12)


def test_radial_derivative_and_scaling():
    r = np.linspace(0, 5, 501)
    assert np.allclose(dU(r), np.gradient(U(r), r, edge_order=2), atol=1e-4)
    x = np.array([[0.01, 0, 0]])
    assert talenti(0.01, (0, 0, 0), x)[0] == pytest.approx(10 * ALPHA3 / np.sqrt(2))


@pytest.mark.golden
def test_bubble_integrals():
    I = bubble_integrals()
    assert I["A"] == pytest.approx(-4 * np.pi * ALPHA3, rel=1e-9)
    assert I["B"] == pytest.approx(np.sqrt(3) * np.pi ** 2 / 4, rel=1e-9)
    assert I["U5"] == pytest.approx(4 * np.pi * ALPHA3, rel=1e-9)


def test_xi0_conventions():
    gR = np.array([1.5, -2.0, 0.0])
    c = xi0_coefficients(gR, GS)
    p = xi0_coefficients(gR, GS, "printed")
    assert np.allclose(np.abs(c), np.abs(p))
    assert np.all(np.sign(c) == np.sign(gR))  # A < 0
    assert np.all(p <= 0)


@pytest.fixture(scope="module")
def off_centre():
    q = np.array([0.3, 0.0, 0.0])
    g = 2.87958068740116
    e = 1e-5
    gR = np.array([(ball_robin_series(g, q + e * v) - ball_robin_series(g, q - e * v)) / (2 * e)
                   for v in np.eye(3)])
    return g, gR


def test_orthogonality_selects_c(off_centre):
    g, gR = off_centre
    c = xi0_coefficients(gR, g)
    assert np.max(np.abs(check_orthogonality_M(c, g, 1e-2, gR))) < 1e-10
    bad = check_orthogonality_M(1.1 * c, g, 1e-2, gR)
    assert abs(bad[0]) > 1e-2
    assert np.allclose(bad[1:], 0, atol=1e-10)


def test_phi3_requires_orthogonality(off_centre):
    g, gR = off_centre
    c = xi0_coefficients(gR, g)
    r = phi3_radial_mode(M_mode(c[0], g, 1e-2, gR[0]))
    assert r.orth_residual < 1e-6
    assert np.isfinite(r.sup_phi) and np.isfinite(r.sup_weighted_dphi)
    with pytest.raises(OrthogonalityError):
        phi3_radial_mode(M_mode(1.1 * c[0], g, 1e-2, gR[0]))


@pytest.mark.golden
def test_center_error_closed_forms():
    mu = np.geomspace(1e-4, 1e-1, 7)
    assert np.allclose(center_error(mu, GS, 0.0), -GS * ALPHA3 / np.sqrt(mu), rtol=1e-14)
    g = 0.6 * GS
    R = ALPHA3 * np.sqrt(g) / np.tan(np.sqrt(g))
    e = center_error(1e-2, g, R)
    assert e == pytest.approx(-8818.6, rel=1e-4)
    assert scaling_exponent(mu, center_error(mu, g, R)) == pytest.approx(-1.5, abs=0.05)
    # same finite part from the term-by-term error at y = 0
    t = error_terms(1e-2, g, np.zeros((1, 3)), np.array([R]))
    assert t["total"][0] == pytest.approx(e, rel=1e-12)


def test_u1_and_error_u1_on_ball(ball, ball_sp):
    gd = regular_part(ball, ball_sp, GS, np.zeros(3))
    p = BubbleParams(1e-2, (0, 0, 0), GS)
    x = ball.points
    v = u1(gd, p, x)
    assert v[0] == pytest.approx(ALPHA3 * 10 - 0.1 * gd.R, rel=1e-12)
    # u1 ~ 0 on the boundary up to the O(mu^{5/2}) bubble mismatch
    assert abs(u1(gd, p, np.array([[1.0, 0, 0]]))[0]) < 1e-4
    with pytest.raises(ValueError):
        u1(gd, BubbleParams(1e-2, (0, 0, 0), 1.0), x)
    with pytest.raises(ValueError):
        BubbleParams(0.0)


def test_energy_of_scaled_eigenfunction(ball, ball_sp):
    phi = ball_sp.phi[:, 0]
    for a in (0.5, 2.0):
        e = energy(ball, a * phi)
        assert e == pytest.approx(a * a * ball_sp.lam1 / 2 - a ** 6 * np.sum(ball.mass * phi ** 6) / 6,
                                  rel=1e-10)
    one = np.ones(ball.n)
    assert energy(ball, one, g=lambda x: np.ones(len(x))) == pytest.approx(-ball.mass.sum() / 6, rel=1e-9)


def test_bubble_params_schedule():
    p = BubbleParams(0.1, (0, 0, 0), GS)
    t = np.array([0.0, 1.0])
    assert np.allclose(p.mu0(t), np.exp(-2 * GS * t))
    assert p.xi0(t, [1.0, 0, 0]).shape == (2, 3)
