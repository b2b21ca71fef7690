"""
Why gamma must equal gamma*
===========================

The first ansatz u1 = U_{mu,xi} - mu^{1/2} H_gamma(., xi) leaves an error
at the bubble centre.  Its size is mu^{-3/2} R_gamma(xi) + O(mu^{-1/2}),
so only the choice R_gamma(xi) = 0 reduces it to O(mu^{-1/2}).
"""
import numpy as np

from bubbling.ansatz import (M_mode, bubble_integrals, center_error, check_orthogonality_M,
                             phi3_radial_mode, scaling_exponent, xi0_coefficients)
from bubbling.domain import DomainSpec, build_domain
from bubbling.green import ALPHA3, ball_robin_series, gamma_star

gs = np.pi ** 2 / 4
mus = np.geomspace(1e-3, 1e-1, 9)
for f in (1.0, 0.6):
    g = f * gs
    R = ALPHA3 * np.sqrt(g) / np.tan(np.sqrt(g))
    e = center_error(mus, g, R if f != 1.0 else 0.0)
    print(f"gamma={f:.1f} gamma*:  S(xi) at mu=1e-2 = {center_error(1e-2, g, R if f != 1.0 else 0.0):+.1f}"
          f"   exponent {scaling_exponent(mus, e):+.3f}")

I = bubble_integrals()
print(f"A = {I['A']:.6f} (-4 pi a3 = {-4 * np.pi * ALPHA3:.6f}),  B = {I['B']:.6f}")

# off centre the translation rate c is fixed by orthogonality to Z_1..Z_3
dom = build_domain(DomainSpec(mode="radial", resolution=16))
q = np.array([0.3, 0, 0])
g = gamma_star(dom, None, q, method="series", tol=1e-12).gamma
e = 1e-5
gR = np.array([(ball_robin_series(g, q + e * v) - ball_robin_series(g, q - e * v)) / (2 * e) for v in np.eye(3)])
c = xi0_coefficients(gR, g)
print("gamma*(0.3 e1) =", g, " grad R =", gR, " c =", c)
print("normalized int M Z_i:", check_orthogonality_M(c, g, 1e-2, gR))
r = phi3_radial_mode(M_mode(c[0], g, 1e-2, gR[0]))
print(f"phi3: sup {r.sup_phi:.3e}, I ~ rho^{r.exponent_0:.2f} near 0, rho^{r.exponent_inf:.2f} at infinity")
