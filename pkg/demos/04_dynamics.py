"""
Kaplan dichotomy and the threshold solution
===========================================

Small multiples of phi1 decay like e^{-lambda1 t}, large ones blow up in
finite time.  Between them lies a codimension-one threshold; the bubbling
solution lives there, so we follow it by edge tracking (repeated
amplitude bisection) and watch mu_hat = (a3/|u|_inf)^2 shrink.

Usage: python3 04_dynamics.py [T]   (default T = 0.03; T = 0.12 takes ~2 min)
"""
import logging
import sys

import numpy as np

from bubbling.ansatz import BubbleParams, u1
from bubbling.domain import DomainSpec, build_domain
from bubbling.evolve import EvolveConfig, edge_tracking, kaplan_dichotomy, kaplan_threshold, rate_estimate
from bubbling.green import regular_part
from bubbling.spectral import eigenpairs

logging.basicConfig(level=logging.INFO)
T = float(sys.argv[1]) if len(sys.argv) > 1 else 0.03

dom = build_domain(DomainSpec(kind="unit-ball", mode="radial", resolution=401))
sp = eigenpairs(dom, 2)
phi = np.maximum(sp.phi[:, 0], 0)
kd = kaplan_dichotomy(dom, phi, [0.01, 1.0, 2.0, 3.0, 5.0], EvolveConfig(horizon=3.0))
for r in kd["runs"]:
    print(f"alpha={r['alpha']:5.2f}  {r['status']:9s}  rate={r['rate']:.3f}")
print("bracket", kd["bracket"], " Kaplan bound", kaplan_threshold(dom, sp.phi[:, 0], sp.lam1, phi))

dom = build_domain(DomainSpec(kind="unit-ball", mode="radial", resolution=1001))
g = np.pi ** 2 / 4
gd = regular_part(dom, None, g, np.zeros(3))
u0 = np.maximum(u1(gd, BubbleParams(0.05, (0, 0, 0), g), dom.points), 0)
tr = edge_tracking(dom, u0, EvolveConfig(dt0=1e-5, dt_max=2e-3, energy_every=0), T)
a = tr.arrays()
for t in np.linspace(0, a["t"][-1], 7):
    j = min(np.searchsorted(a["t"], t), len(a["t"]) - 1)
    print(f"t={a['t'][j]:.4f}  mu_hat={a['mu_hat'][j]:.5f}")
try:
    est = rate_estimate(tr, (0, a["t"][-1]), min_drop=1.2)
    print(f"slope of ln(1/mu_hat): {est['slope']:.3f}  (asymptotic prediction 2 gamma* = {2 * g:.3f})")
except ValueError as ex:
    print("window too short:", ex)
