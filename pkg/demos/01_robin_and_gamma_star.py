"""
Robin function and the critical parameter gamma*
=================================================

On the unit ball the regular part of the Green function of -Lap - gamma
is explicit at the centre, R_gamma(0) = a3 sqrt(gamma) cot(sqrt(gamma)),
which vanishes at gamma* = pi^2/4.  We reproduce this with the
finite-difference solver, then move off centre with the exact series.
"""
import numpy as np

from bubbling.domain import DomainSpec, build_domain
from bubbling.green import ALPHA3, ball_admissible_radius, gamma_star, robin, robin_curve
from bubbling.spectral import eigenpairs

dom = build_domain(DomainSpec(kind="unit-ball", mode="radial", resolution=1001))
sp = eigenpairs(dom, 8)
print(f"lambda1 = {sp.lam1:.6f}   (pi^2 = {np.pi ** 2:.6f})")

# R_gamma(0) decreases through zero
curve = robin_curve(dom, sp, np.zeros(3), [0.5, 1, 2, 3, 4, 6, 8])
for g, r in zip(curve.gammas, curve.values):
    exact = ALPHA3 * np.sqrt(g) / np.tan(np.sqrt(g))
    print(f"gamma={g:4.1f}  R={r:+.6f}  closed form={exact:+.6f}")
print(f"gamma*(0) = {curve.gamma_star:.6f}  (pi^2/4 = {np.pi ** 2 / 4:.6f})")

# off centre: gamma* grows towards lambda1 near the boundary
for x in (0.0, 0.2, 0.4, 0.6, 0.8):
    g = gamma_star(dom, None, [x, 0, 0], method="series", tol=1e-10).gamma
    print(f"|q|={x:.1f}  gamma*={g:.5f}  3 gamma* < lambda1: {3 * g < np.pi ** 2}")

# the admissible set 3 gamma*(q) < lambda1 is a smaller ball
print(f"admissible radius = {ball_admissible_radius():.6f}")

# near lambda1, R_gamma blows up like -4 pi a3 phi1(0)^2 / (lambda1 - gamma)
g = 0.95 * sp.lam1
print("(lambda1-g) R_g(0) =", (sp.lam1 - g) * robin(dom, sp, g, np.zeros(3), margin=1e-3),
      " vs ", -4 * np.pi * ALPHA3 * sp.at(np.zeros((1, 3)))[0, 0] ** 2)
