"""Regular part of the Green function, Robin function and gamma*.

Conventions
-----------
``G_g(x,y) = Gamma(x-y) - H_g(x,y)`` with ``Gamma = alpha3/|x|`` solves
``-Lap G - g G = c3 delta_y`` with zero Dirichlet data, ``c3 = 4 pi alpha3``.
The regular part is split as ``H_g = theta_g - h_g`` where
``theta_g(x) = alpha3 (1 - cos(sqrt(g)|x|))/|x|`` and ``h_g`` is smooth,
``Lap h + g h = 0`` with ``h = -alpha3 cos(sqrt(g)|x-y|)/|x-y|`` on the
boundary.  The Robin function is ``R_g(y) = H_g(y,y) = -h_g(y,y)``.

Two backends compute ``h``:

``grid``
    finite differences on a :class:`~bubbling.domain.DiscreteDomain`.
``series``
    the exact spherical-harmonic expansion for balls, written with
    ``0F1`` functions so that it stays finite for high orders.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.optimize import bisect
from scipy.special import eval_legendre

from .domain import DiscreteDomain, boundary_distance
from .spectral import Spectrum, sample

ALPHA3 = 3 ** 0.25
OMEGA3 = 4 * np.pi
C3 = ALPHA3 * OMEGA3
GAMMA_BRACKET = (0.02, 0.98)


class ResonanceError(ValueError):
    """gamma too close to the first Dirichlet eigenvalue."""


class GammaStarError(RuntimeError):
    """R_gamma(q) does not change sign on the searchable range."""


def theta_gamma(r, gamma: float):
    """``alpha3 (1 - cos(sqrt(gamma) r)) / r`` with its limit 0 at r=0."""
    r = np.asarray(r, float)
    k = np.sqrt(gamma)
    with np.errstate(invalid="ignore", divide="ignore"):
        # 1-cos(kr) = 2 sin^2(kr/2) avoids cancellation
        v = 2 * ALPHA3 * np.sin(k * r / 2) ** 2 / r
    return np.where(r > 0, v, 0.0)


def boundary_data(gamma: float, y):
    y = np.asarray(y, float)
    k = np.sqrt(gamma)

    def g(x):
        d = np.linalg.norm(np.atleast_2d(x) - y, axis=1)
        return -ALPHA3 * np.cos(k * d) / d

    return g


# ---------------------------------------------------------------- series

def f01(b, z, nterms: int = 90):
    """Vectorized ``0F1(; b; z)`` by direct summation.

    Valid for negative non-integer ``b`` (where scipy returns nan) and
    ``|z|`` of order 10.
    """
    b = np.asarray(b, float)
    z = np.asarray(z, float)
    term = np.ones(np.broadcast(b, z).shape)
    s = term.copy()
    for m in range(nterms):
        term = term * z / ((b + m) * (m + 1))
        s = s + term
    return s


def _nterms(p: float) -> int:
    p = min(max(p, 1e-300), 1 - 1e-12)
    return int(min(6000, max(8, np.ceil(np.log(1e-17) / np.log(p)) + 4)))


def ball_robin_series(gamma: float, q, R: float = 1.0) -> float:
    """Exact Robin function of the ball ``B_R(0)`` at ``q``.

    ``R_g(q) = alpha3 sum_l rho^{2l} F_l(k rho)^2 G_l(k) / F_l(k)`` (unit ball)
    with ``F_l(x) = 0F1(; l+3/2; -x^2/4)``, ``G_l(x) = 0F1(; 1/2-l; -x^2/4)``.
    Other radii by scaling ``R^{B_R}_g(q) = R^{B_1}_{g R^2}(q/R) / R``.
    """
    rho = float(np.linalg.norm(q)) / R
    if rho >= 1:
        raise ValueError("q outside the ball")
    g = gamma * R * R
    k = np.sqrt(g)
    l = np.arange(_nterms(rho * rho))
    z = -g / 4
    Fk = f01(l + 1.5, z)
    Fr = f01(l + 1.5, z * rho * rho)
    Gk = f01(0.5 - l, z)
    val = ALPHA3 * np.sum(rho ** (2 * l) * Fr ** 2 * Gk / Fk)
    if k == 0:
        val = ALPHA3 / (1 - rho * rho)
    return float(val / R)


def ball_h_series(gamma: float, x, y, R: float = 1.0) -> np.ndarray:
    """Smooth part ``h_g(x, y)`` on the ball for points ``x`` (m,3)."""
    x = np.atleast_2d(np.asarray(x, float)) / R
    y = np.asarray(y, float) / R
    g = gamma * R * R
    r = np.linalg.norm(x, axis=1)
    rho = float(np.linalg.norm(y))
    if rho > 0:
        c = (x @ y) / np.where(r > 0, r, 1.0) / rho
    else:
        c = np.ones(len(x))
    c = np.clip(c, -1, 1)
    L = _nterms(max(rho * float(np.max(r, initial=0.0)), 1e-3))
    l = np.arange(L)
    z = -g / 4
    Fk = f01(l + 1.5, z)
    Gk = f01(0.5 - l, z)
    Fy = f01(l + 1.5, z * rho * rho)
    coef = -ALPHA3 * rho ** l * Fy * Gk / Fk  # (L,)
    Fx = f01(l[None, :] + 1.5, z * (r * r)[:, None])  # (m, L)
    P = eval_legendre(l[None, :], c[:, None])
    with np.errstate(invalid="ignore"):
        rl = np.where(l[None, :] == 0, 1.0, r[:, None] ** l[None, :])
    return (rl * Fx * P) @ coef / R


# ---------------------------------------------------------------- grid

@dataclass(frozen=True, eq=False)
class GreenData:
    """Regular part for one source ``y`` and one ``gamma``.

    ``h`` and ``H`` are sampled at ``dom.points`` (grid backend) or are
    ``None`` (series backend, evaluated on demand through :meth:`H_at`).
    """

    gamma: float
    y: np.ndarray
    R: float
    dom: DiscreteDomain | None = None
    h: np.ndarray | None = None
    H: np.ndarray | None = None
    method: str = "grid"

    def h_at(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if self.method == "series":
            return ball_h_series(self.gamma, x, self.y, self.dom.spec.R if self.dom else 1.0)
        bval = None
        if self.dom.radial:
            bval = boundary_data(self.gamma, self.y)(np.array([[self.dom.spec.R, 0, 0]]))
        return sample(self.dom, self.h, x, bval=bval)

    def H_at(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        return theta_gamma(np.linalg.norm(x - self.y, axis=1), self.gamma) - self.h_at(x)


def _check_gamma(sp_: Spectrum | None, gamma: float, margin: float):
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if sp_ is not None and gamma > (1 - margin) * sp_.lam1:
        raise ResonanceError(f"resonant: gamma={gamma:g} within {margin:g} lambda1 of lambda1={sp_.lam1:g}")


def _helmholtz_solve(dom: DiscreteDomain, gamma: float, b: np.ndarray) -> np.ndarray:
    A = (dom.K - gamma * sp.diags(dom.mass)).tocsr()
    if dom.radial:
        return sla.spsolve(A.tocsc(), b)
    import pyamg

    if "amg" not in dom._cache:
        dom._cache["amg"] = pyamg.smoothed_aggregation_solver(dom.K.tocsr())
    M = dom._cache["amg"].aspreconditioner()
    x, info = sla.cg(A, b, M=M, rtol=1e-11, maxiter=2000)
    if info != 0:
        raise RuntimeError(f"CG did not converge (info={info})")
    return x


def regular_part(dom: DiscreteDomain, sp_: Spectrum | None, gamma: float, y,
                 margin: float = 0.01, method: str = "grid") -> GreenData:
    """Regular part ``H_g(., y)`` via the smooth Helmholtz problem for ``h_g``.

    Raises
    ------
    ResonanceError
        ``gamma > (1 - margin) lambda1``.
    """
    y = np.asarray(y, float)
    _check_gamma(sp_, gamma, margin)
    if method == "series":
        _require_ball(dom)
        Rv = ball_robin_series(gamma, y, dom.spec.R)
        return GreenData(gamma, y, Rv, dom=dom, method="series")
    if dom.radial and np.linalg.norm(y) > 0:
        raise ValueError("radial domain: the source must be the centre")
    if not dom.radial:
        d = boundary_distance(dom, y)
        if d < 2 * float(np.max(dom.h)):
            raise ValueError("source closer than 2h to the boundary")
    b = dom.lift(boundary_data(gamma, y))
    h = _helmholtz_solve(dom, gamma, b)
    H = theta_gamma(np.linalg.norm(dom.points - y, axis=1), gamma) - h
    if dom.radial:
        Rv = -float(h[0])
    else:
        Rv = -float(sample(dom, h, y[None, :])[0])
    return GreenData(gamma, y, Rv, dom=dom, h=h, H=H, method="grid")


def _require_ball(dom):
    if dom is None or dom.spec.kind not in ("unit-ball", "ball"):
        raise ValueError("series backend only for balls")


def robin(dom: DiscreteDomain, sp_: Spectrum | None, gamma: float, q, method: str = "grid",
          margin: float = 0.01) -> float:
    """Robin function ``R_g(q) = H_g(q, q)``."""
    if method == "series":
        _require_ball(dom)
        lam1 = np.pi ** 2 / dom.spec.R ** 2
        if gamma >= lam1:
            raise ResonanceError("resonant")
        return ball_robin_series(gamma, np.asarray(q, float), dom.spec.R)
    return regular_part(dom, sp_, gamma, q, margin=margin).R


def lambda1_of(dom, sp_, method):
    if method == "series":
        return np.pi ** 2 / dom.spec.R ** 2
    return sp_.lam1


@dataclass
class RobinCurve:
    q: np.ndarray
    gammas: np.ndarray
    values: np.ndarray
    gamma_star: float
    bracket: tuple

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0))


@dataclass
class GammaStar:
    gamma: float
    bracket: tuple
    R_lo: float
    R_hi: float


def gamma_star(dom: DiscreteDomain, sp_: Spectrum | None, q, tol: float = 1e-6,
               method: str = "grid", bracket=None) -> GammaStar:
    """Root of ``gamma -> R_gamma(q)`` by bisection.

    The default bracket is ``[0.02, 0.98] lambda1`` for the grid backend and
    ``[0.02, 1 - 1e-12] lambda1`` for the exact series.
    """
    q = np.asarray(q, float)
    lam1 = lambda1_of(dom, sp_, method)
    if bracket is None:
        bracket = GAMMA_BRACKET if method == "grid" else (0.02, 1 - 1e-12)
    lo, hi = bracket[0] * lam1, bracket[1] * lam1
    f = lambda g: robin(dom, sp_, g, q, method=method, margin=1 - bracket[1] - 1e-15)
    Rlo, Rhi = f(lo), f(hi)
    if not (Rlo > 0 > Rhi):
        raise GammaStarError(f"no sign change: R({lo:g})={Rlo:g}, R({hi:g})={Rhi:g}")
    xtol = tol * lam1
    a, b = lo, hi
    while b - a > xtol:
        m = 0.5 * (a + b)
        if f(m) > 0:
            a = m
        else:
            b = m
    return GammaStar(0.5 * (a + b), (a, b), Rlo, Rhi)


def robin_curve(dom, sp_, q, gammas, method="grid") -> RobinCurve:
    gammas = np.asarray(gammas, float)
    vals = np.array([robin(dom, sp_, g, q, method=method) for g in gammas])
    gs = gamma_star(dom, sp_, q, method=method)
    return RobinCurve(np.asarray(q, float), gammas, vals, gs.gamma, gs.bracket)


def admissible(dom, sp_, q, method="grid", tol=1e-6):
    """``(3 gamma*(q) < lambda1, lambda1 - 3 gamma*(q))``."""
    gs = gamma_star(dom, sp_, q, tol=tol, method=method).gamma
    margin = lambda1_of(dom, sp_, method) - 3 * gs
    return bool(margin > 0), float(margin)


def _map_one(args):
    dom, sp_, q, method, tol = args
    try:
        gs = gamma_star(dom, sp_, q, tol=tol, method=method).gamma
        return gs, ""
    except Exception as e:  # recorded per point
        return np.nan, f"{type(e).__name__}: {e}"


def gamma_star_map(dom, sp_, qs, method="grid", tol=1e-6, jobs: int = 1) -> dict:
    """gamma* over a set of points with the admissible mask.

    Per-point failures are recorded in ``errors`` and do not abort the map.
    """
    qs = np.atleast_2d(np.asarray(qs, float))
    args = [(dom, sp_, q, method, tol) for q in qs]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            res = list(ex.map(_map_one, args))
    else:
        res = [_map_one(a) for a in args]
    gs = np.array([r[0] for r in res])
    lam1 = lambda1_of(dom, sp_, method)
    margin = lam1 - 3 * gs
    return dict(q=qs, gamma_star=gs, admissible=margin > 0, margin=margin,
                errors=[r[1] for r in res])


def ball_admissible_radius(R: float = 1.0, tol: float = 1e-10) -> float:
    """Radius ``d*`` with ``3 gamma*(d* e1) = lambda1`` on ``B_R`` (series)."""
    lam1 = np.pi ** 2 / R ** 2
    g = lambda s: ball_robin_series(lam1 / 3, np.array([s, 0, 0]), R)
    # R_{lam1/3}(q) > 0 iff gamma*(q) > lam1/3
    return bisect(g, 0.0, 0.999 * R, xtol=tol)


def normal_derivative_sq(sp_: Spectrum, xb) -> float:
    """``[d_nu phi_1(xb)]^2`` at a boundary point ``xb``.

    Radial: spline derivative at ``r=R``.  3-D: quadratic fit of
    ``phi_1`` along the inward normal through the zero at the boundary.
    """
    dom = sp_.dom
    if dom.radial:
        from .spectral import _radial_spline

        s = _radial_spline(dom, sp_.phi[:, :1])
        return float(s(dom.spec.R, 1)[0] ** 2)
    xb = np.asarray(xb, float)
    nrm = xb / np.linalg.norm(xb)
    hh = float(np.max(dom.h))
    ts = np.array([2.0, 3.0, 4.0]) * hh
    v = sample(dom, sp_.phi[:, 0], xb[None, :] - ts[:, None] * nrm[None, :])
    c = np.polyfit(np.r_[0.0, ts], np.r_[0.0, v], 2)
    return float(c[1] ** 2)


def boundary_fit(d, lam1_minus_gstar, dnu2: float) -> dict:
    """Log-log fit ``lam1 - gamma* = C d^p`` and the predicted ``C = 8 pi [d_nu phi1]^2``."""
    d = np.asarray(d, float)
    y = np.asarray(lam1_minus_gstar, float)
    p, logc = np.polyfit(np.log(d), np.log(y), 1)
    theory = 8 * np.pi * dnu2
    C = float(np.exp(logc))
    return dict(exponent=float(p), prefactor=C, theory_prefactor=float(theory),
                prefactor_ratio=C / theory, ratio_to_asymptote=y / (theory * d ** 3))


def grad_gamma_star(dom, sp_, q, method="grid", dx=None, dgamma=None, tol=1e-8) -> np.ndarray:
    """``grad gamma* = -grad_x R / d_gamma R`` by centred differences."""
    q = np.asarray(q, float)
    gs = gamma_star(dom, sp_, q, tol=tol, method=method).gamma
    lam1 = lambda1_of(dom, sp_, method)
    if dx is None:
        dx = 1e-4 if method == "series" else float(np.max(dom.h))
    if dgamma is None:
        dgamma = 1e-4 * lam1
    f = lambda g, x: robin(dom, sp_, g, x, method=method, margin=1e-6)
    dR_dg = (f(gs + dgamma, q) - f(gs - dgamma, q)) / (2 * dgamma)
    if abs(dR_dg) < 1e-12:
        raise ZeroDivisionError("d_gamma R vanishes")
    grad = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = dx
        if dom.radial and method == "grid":
            break
        grad[i] = (f(gs, q + e) - f(gs, q - e)) / (2 * dx)
    return -grad / dR_dg


def bn_bounds(dom, sp_, qs=None, method="grid", tol=1e-6) -> dict:
    """Brezis-Nirenberg sandwich and Druet's minimum of gamma*.

    ``lower = lambda1(Omega*)/4`` with ``Omega*`` the ball of equal volume.
    The upper bound ``lower * min R_0^2`` is reported with ``R_0`` in two
    normalizations: the one used here (including ``alpha3``) and divided
    by ``alpha3`` (so that ``R_0 = 1/(1-|x|^2)`` on the unit ball).
    """
    V = dom.volume()
    Rstar = (3 * V / (4 * np.pi)) ** (1 / 3)
    lower = np.pi ** 2 / Rstar ** 2 / 4
    if qs is None:
        qs = _default_probe(dom)
    qs = np.atleast_2d(qs)
    R0 = np.array([robin(dom, sp_, 0.0, q, method=method) for q in qs])
    m = gamma_star_map(dom, sp_, qs, method=method, tol=tol)
    druet = float(np.nanmin(m["gamma_star"]))
    return dict(lower=float(lower), upper_alpha=float(lower * R0.min() ** 2),
                upper_unit=float(lower * (R0.min() / ALPHA3) ** 2), druet_min=druet,
                lower_le_druet=bool(lower <= druet * (1 + 10 * tol)),
                argmin=m["q"][int(np.nanargmin(m["gamma_star"]))])


def _default_probe(dom):
    if dom.radial:
        return np.zeros((1, 3))
    s = dom.spec
    c = np.asarray(s.edges) / 2 if s.kind == "box" else np.zeros(3)
    return c[None, :]
