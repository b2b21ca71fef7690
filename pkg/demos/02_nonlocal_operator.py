"""
The nonlocal operator and its inverse
=====================================

The reduced equation for the scaling parameter is a Volterra equation
with kernel I(tau) = c3 int p_tau(q, y) G_gamma(y, q) dy.  Near
tau = 0 it is weakly singular, sqrt(tau) I -> a3/sqrt(pi); for large tau
it decays like e^{-(lambda1-gamma) tau}.  The inverse is a convolution
with sigma(tau), obtained here by a Bromwich integral.
"""
import numpy as np

from bubbling.domain import DomainSpec, build_domain
from bubbling.green import ALPHA3
from bubbling.nonlocal_op import i_tau_table, i_tilde, round_trip, sigma_kernel
from bubbling.spectral import eigenpairs

dom = build_domain(DomainSpec(kind="unit-ball", mode="radial", resolution=1001))
sp = eigenpairs(dom, 40)
g, q = np.pi ** 2 / 4, np.zeros(3)

tab = i_tau_table(sp, g, q, R=0.0)
print(f"switch tau = {tab.switch:.4g}, quadrature/eigen-sum mismatch = {tab.jump:.2e}")
for t in (1e-6, 1e-3, 0.1, 1.0):
    print(f"tau={t:8.1e}  I={tab(np.array([t]))[0]:.6e}  sqrt(tau) I={tab.kr(np.array([t]))[0]:.5f}")
print(f"a3/sqrt(pi) = {ALPHA3 / np.sqrt(np.pi):.5f}")

# Laplace symbol against the ball closed form
k = np.sqrt(g)
for xi in (1.0, 10.0, 100.0):
    s = np.sqrt(xi)
    exact = ALPHA3 * (s / np.tanh(s) - k / np.tan(k)) / (g + xi)
    print(f"xi={xi:6.1f}  Itilde={i_tilde(sp, g, q, xi).real:.6f}  exact={exact:.6f}")

sk = sigma_kernel(sp, g, q, R=0.0)
print(f"c_inf = {sk.c_inf:.6f}  (2/a3 = {2 / ALPHA3:.6f}), line Re xi = -{sk.a:.3f}")
print(f"small-tau exponent of sigma: {sk.small_tau_exponent:.3f}")

# forward then inverse on Ldot = exp(-2 gamma l1 t)
rt = round_trip(tab, sk, l1=2 / 3)
print(f"round trip weighted error = {rt['rel_error']:.2e}")
