import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbling.green import ALPHA3
from bubbling.nonlocal_op import (C1_STAR, ConditioningWarning, duhamel_forward, eigen_weights, i_of_tau,
                                  i_tau_table, i_tilde, residue_c_inf, round_trip, sigma_kernel,
                                  singular_convolution, step_response, weighted_sup_error,
                                  zeros_on_contour)

G = np.pi ** 2 / 4
Q0 = np.zeros(3)

# continuum ball centre, gamma = pi^2/4:
# I(tau) = sum_n exp(-n^2 pi^2 tau) c3 (n^2 pi / 2) / (n^2 pi^2 - gamma)   (mpmath nsum)
I_ORACLE = [(0.01, 7.06470414543883), (0.1, 1.36258246537004), (1.0, 1.81524109946527e-4)]
# exp(g tau) sigma(tau) = inverse Laplace of 1/(p Itilde(p - g)), mpmath Talbot
W_ORACLE = [(0.01, 4.39400489906062), (0.1, 1.73485500178884), (1.0, 1.51967137536874)]


def itilde_exact(xi):
    k = np.sqrt(G)
    if xi == -G:
        return ALPHA3 / 2
    s = np.sqrt(xi)
    return ALPHA3 * (s / np.tanh(s) - k / np.tan(k)) / (G + xi)


@pytest.fixture(scope="module")
def tab(ball_sp):
    return i_tau_table(ball_sp, G, Q0, R=0.0)


@pytest.fixture(scope="module")
def sk(ball_sp):
    return sigma_kernel(ball_sp, G, Q0, R=0.0)


@pytest.mark.golden
@pytest.mark.parametrize("tau,val", I_ORACLE)
def test_i_tau_oracle(tab, tau, val):
    assert tab(np.array([tau]))[0] == pytest.approx(val, rel=5e-5)


def test_table_provenance(tab, ball_sp):
    assert tab.jump < 1e-4
    assert set(tab.provenance) == {"gaussian-split-quadrature", "eigen-sum"}
    assert np.all(tab.tau[tab.provenance == "eigen-sum"] >= tab.switch)
    assert np.allclose(i_of_tau(ball_sp, G, Q0, np.array([0.1, 0.5]), R=0.0), tab(np.array([0.1, 0.5])))
    assert tab.kr(np.array([1e-9]))[0] == pytest.approx(C1_STAR, rel=1e-3)


@pytest.mark.golden
@pytest.mark.parametrize("xi", [1.0, 10.0, 100.0, -G])
def test_symbol_closed_form(ball_sp, xi):
    assert i_tilde(ball_sp, G, Q0, xi).real == pytest.approx(itilde_exact(xi), rel=5e-4)


def test_symbol_large_xi(ball_sp):
    # Itilde sqrt(xi) -> c1* sqrt(pi) = a3
    xi = 1e6
    assert (i_tilde(ball_sp, G, Q0, xi) * np.sqrt(xi)).real == pytest.approx(ALPHA3, rel=1e-2)


@pytest.mark.golden
def test_residue_and_sigma(ball_sp, sk):
    assert residue_c_inf(ball_sp, G, Q0) == pytest.approx(2 / ALPHA3, rel=1e-4)
    assert sk.c_inf == pytest.approx(2 / ALPHA3, rel=1e-4)
    for tau, val in W_ORACLE:
        assert sk.c_inf + sk.l(np.array([tau]))[0] == pytest.approx(val, rel=1e-4)


def test_sigma_structure(sk):
    g = sk.gamma
    assert g < sk.a < sk.lam1
    assert sk.small_tau_exponent == pytest.approx(-0.5, abs=0.05)
    # sqrt(tau) sigma -> 1 / (c1* pi)
    assert sk.lr(np.array([0.0]))[0] == pytest.approx(1 / (C1_STAR * np.pi), rel=1e-3)
    assert sk.decay_rate > 0.9 * (sk.a - g)
    tau = np.array([5.0, 8.0])
    assert np.allclose(np.exp(g * tau) * sk.sigma(tau), sk.c_inf, atol=1e-8)


def test_no_zeros_in_contour(ball_sp):
    assert zeros_on_contour(ball_sp, G, Q0) == 0


def test_weights_guards(ball_sp):
    with pytest.warns(ConditioningWarning):
        eigen_weights(ball_sp, ball_sp.lam1 * (1 - 1e-5), Q0)
    with pytest.raises(ValueError):
        eigen_weights(ball_sp, G, [0.2, 0, 0])


@given(st.floats(0.1, 5.0), st.integers(50, 400))
@settings(max_examples=20, deadline=None)
def test_product_integration_exact(c, n):
    # int_0^t c tau^{-1/2} (1 + (t - tau)) dtau = 2c sqrt(t) + (4/3) c t^{3/2}
    dt = 1e-2
    t = dt * np.arange(n)
    out = singular_convolution(np.full(n, c), 1 + t, dt)
    assert np.allclose(out, 2 * c * np.sqrt(t) + 4 / 3 * c * t ** 1.5, rtol=1e-10, atol=1e-12)


def test_step_response(tab):
    dt = 2e-3
    t = dt * np.arange(1001)
    J = -duhamel_forward(tab, np.ones_like(t), dt)
    # the truncated eigen-sum misses the (saturated) high modes: compare increments
    m = t >= 0.1
    ref = step_response(tab, t[m])
    dJ, dref = J[m] - J[m][0], ref - ref[0]
    assert np.max(np.abs(dJ - dref)) < 1e-4 * np.max(dref)
    assert not np.any(duhamel_forward(tab, np.zeros(10), dt))
    with pytest.raises(ValueError):
        duhamel_forward(tab, np.ones(10), 0.1)


def test_round_trip_history_modes(tab, sk):
    good = round_trip(tab, sk, T=2.0)
    assert good["rel_error"] < 0.02
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rough = round_trip(tab, sk, T=2.0, true_history=False)
    # the smooth extension contaminates the first second through the sigma memory
    assert rough["rel_error"] > good["rel_error"]


def test_weighted_error_scaling():
    t = np.linspace(0, 2, 201)
    e = np.exp(-t)
    assert weighted_sup_error(t, 1.01 * e, e, 0.75, 2 / 3, (0, 2)) == pytest.approx(0.01)
