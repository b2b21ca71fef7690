"""Talenti bubble, the first ansatz u1 and its error, energy, and the
translation corrector data (xi0 coefficients, orthogonality, phi3)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.special import roots_legendre

from .green import ALPHA3, GreenData

R_INF = 1e4


# ---------------------------------------------------------------- bubble

def U(y) -> np.ndarray:
    """``alpha3 (1+|y|^2)^{-1/2}`` for points (m,3) or radii."""
    r2 = _r2(y)
    return ALPHA3 / np.sqrt(1 + r2)


def _r2(y):
    y = np.asarray(y, float)
    return np.sum(y * y, axis=-1) if y.ndim >= 1 and y.shape[-1:] == (3,) else y * y


def dU(r):
    """Radial derivative ``U'(r)``."""
    r = np.asarray(r, float)
    return -ALPHA3 * r * (1 + r * r) ** -1.5


def grad_U(y) -> np.ndarray:
    y = np.atleast_2d(np.asarray(y, float))
    return -ALPHA3 * y * (1 + np.sum(y * y, 1))[:, None] ** -1.5


def Z4(y) -> np.ndarray:
    r2 = _r2(y)
    return ALPHA3 / 2 * (1 - r2) / (1 + r2) ** 1.5


@dataclass(frozen=True)
class KernelBasis:
    """Bounded kernel of ``Lap + 5 U^4``: ``Z_i = d_i U`` and ``Z_4``."""

    def U(self, y):
        return U(y)

    def Z(self, i: int, y):
        y = np.atleast_2d(np.asarray(y, float))
        if i == 4:
            return Z4(y)
        return grad_U(y)[:, i - 1]

    def lap_U(self, y):
        # Lap U = -3 alpha3 (1+r^2)^{-5/2}
        return -3 * ALPHA3 * (1 + _r2(y)) ** -2.5


def talenti(mu: float, xi, x) -> np.ndarray:
    """``mu^{-1/2} U((x - xi)/mu)``."""
    x = np.atleast_2d(np.asarray(x, float))
    return mu ** -0.5 * U((x - np.asarray(xi, float)) / mu)


# ---------------------------------------------------------------- ansatz

@dataclass(frozen=True)
class BubbleParams:
    """Dilation, centre and spectral parameter.

    ``mu0(t) = exp(-2 gamma t)`` and ``xi0(t) = c exp(-2 gamma t)``.
    """

    mu: float
    xi: tuple = (0.0, 0.0, 0.0)
    gamma: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        object.__setattr__(self, "xi", tuple(float(v) for v in self.xi))

    def mu0(self, t):
        return np.exp(-2 * self.gamma * np.asarray(t, float))

    def xi0(self, t, c):
        return np.outer(self.mu0(t), np.asarray(c, float))


def _check_source(gd: GreenData, p: BubbleParams):
    if not np.allclose(gd.y, p.xi, atol=1e-12):
        raise ValueError("GreenData source does not match the bubble centre")
    if abs(gd.gamma - p.gamma) > 1e-12 * max(1.0, p.gamma):
        raise ValueError("GreenData gamma does not match BubbleParams")


def u1(gd: GreenData, p: BubbleParams, x) -> np.ndarray:
    """``U_{mu,xi}(x) - mu^{1/2} H_gamma(x, xi)``."""
    _check_source(gd, p)
    x = np.atleast_2d(np.asarray(x, float))
    return talenti(p.mu, p.xi, x) - p.mu ** 0.5 * gd.H_at(x)


def _nonlinear_remainder(Uy, muH):
    # (U - m)^5 - U^5 + 5 U^4 m expanded to avoid cancellation
    m = muH
    return 10 * Uy ** 3 * m ** 2 - 10 * Uy ** 2 * m ** 3 + 5 * Uy * m ** 4 - m ** 5


def error_terms(mu, gamma, y, H, dLambda=0.0, dxi=None, dH_dsource=None) -> dict:
    """Term-by-term closed-form error of u1 at scaled points ``y``.

    ``H`` is ``H_gamma(x, xi)`` at the same points.  At ``y = 0`` the
    ``alpha3/|y|`` part of the gamma term (the Lipschitz kink of ``H``) is
    dropped: the returned value is the finite part.
    """
    y = np.atleast_2d(np.asarray(y, float))
    H = np.asarray(H, float)
    r = np.linalg.norm(y, axis=1)
    Uy = U(y)
    z4 = Z4(y)
    with np.errstate(divide="ignore"):
        sing = np.where(r > 0, ALPHA3 / np.where(r > 0, r, 1.0), 0.0)
    t = {}
    t["lambda"] = dLambda * (mu ** -0.5 * 2 * z4 + mu ** 0.5 * H)
    t["gamma"] = -gamma * mu ** -0.5 * (2 * z4 + sing)
    if dxi is not None and np.any(np.asarray(dxi) != 0):
        dxi = np.asarray(dxi, float)
        t["xi"] = mu ** -1.5 * grad_U(y) @ dxi
        if dH_dsource is None:
            raise ValueError("xi-dot terms need grad_{x2} H (dH_dsource)")
        t["xi"] = t["xi"] + mu ** 0.5 * np.asarray(dH_dsource) @ dxi
    else:
        t["xi"] = np.zeros(len(y))
    t["linear"] = -mu ** -1.5 * 5 * Uy ** 4 * H
    t["nonlinear"] = mu ** -2.5 * _nonlinear_remainder(Uy, mu * H)
    t["total"] = sum(v for k, v in t.items())
    return t


def error_u1(gd: GreenData, p: BubbleParams, dLambda: float, dxi, x, dH_dsource=None) -> np.ndarray:
    """Closed-form ``S[u1] = -u1_t + Lap u1 + u1^5`` at points ``x``.

    ``dH_dsource`` is ``grad_{x2} H(x, xi)`` at ``x`` (m,3); needed only
    when ``dxi`` is nonzero.  At ``x = xi`` the finite part is returned.
    """
    _check_source(gd, p)
    x = np.atleast_2d(np.asarray(x, float))
    y = (x - np.asarray(p.xi)) / p.mu
    H = gd.H_at(x)
    return error_terms(p.mu, p.gamma, y, H, dLambda, dxi, dH_dsource)["total"]


def center_error(mu, gamma: float, R: float):
    """Finite part of ``S[u1](xi)`` with ``Lambda' = xi' = 0`` and ``H(xi,xi) = R``."""
    mu = np.asarray(mu, float)
    return (-gamma * ALPHA3 * mu ** -0.5 - 5 * ALPHA3 ** 4 * R * mu ** -1.5
            + mu ** -2.5 * _nonlinear_remainder(ALPHA3, mu * R))


def scaling_exponent(mus, errs) -> float:
    return float(np.polyfit(np.log(mus), np.log(np.abs(errs)), 1)[0])


# ---------------------------------------------------------------- energy

def energy(dom, u, g=None) -> float:
    """``1/2 int |grad u|^2 - 1/6 int u^6`` with the scheme's own quadrature.

    The Dirichlet part is ``1/2 u.K u`` (link differences, boundary links
    one-sided); ``g`` optionally gives nonzero boundary values.
    """
    u = np.asarray(u, float)
    e = 0.5 * u @ (dom.K @ u)
    if g is not None:
        gv = np.asarray(g(dom.link_point), float)
        uu = u[dom.link_node]
        e += 0.5 * np.sum(dom.link_weight * (gv * gv - 2 * uu * gv))
    return float(e - np.sum(dom.mass * u ** 6) / 6)


# ---------------------------------------------------------------- xi0 and orthogonality

def _radial_quad(f, R=R_INF, tail=None) -> float:
    pts = [0, 1, 10, 100, 1000]
    val = 0.0
    edges = [p for p in pts if p < R] + [R]
    for a, b in zip(edges[:-1], edges[1:]):
        val += quad(f, a, b, epsabs=0, epsrel=1e-13, limit=400)[0]
    if tail is not None:
        val += tail(R)
    return val


def bubble_integrals(R=R_INF) -> dict:
    """``A = int 5 U^4 y_i d_i U`` and ``B = int |d_i U|^2`` over R^3.

    Radial quadrature on ``[0, R]`` plus the analytic power-law tail.
    """
    a5 = ALPHA3 ** 5
    fA = lambda r: 5 * 4 * np.pi / 3 * U(r) ** 4 * r * dU(r) * r * r
    tA = lambda R: -20 * np.pi / 3 * a5 * (1 / (2 * R * R) - 7 / (8 * R ** 4))
    fB = lambda r: 4 * np.pi / 3 * dU(r) ** 2 * r * r
    tB = lambda R: 4 * np.pi / 3 * ALPHA3 ** 2 * (1 / R - 1 / R ** 3)
    fU5 = lambda r: 4 * np.pi * U(r) ** 5 * r * r
    tU5 = lambda R: 4 * np.pi * a5 * (1 / (2 * R * R) - 5 / (8 * R ** 4))
    return dict(A=_radial_quad(fA, R, tA), B=_radial_quad(fB, R, tB), U5=_radial_quad(fU5, R, tU5))


def xi0_coefficients(gradR, gamma: float, convention: str = "orthogonal") -> np.ndarray:
    """Coefficients ``c`` of ``xi0(t) = c exp(-2 gamma t)``.

    ``orthogonal``: ``c_i = -d_iR * A / (4 gamma B)``, the value that
    makes the orthogonality conditions hold (sign follows ``d_i R``).
    ``printed``: ``-|d_iR| |A| / (4 gamma B)``, always nonpositive.
    """
    gradR = np.asarray(gradR, float)
    I = bubble_integrals()
    if convention == "printed":
        return -np.abs(gradR) * abs(I["A"]) / (4 * gamma * I["B"])
    return -gradR * I["A"] / (4 * gamma * I["B"])


def M_field(y, c, gamma, mu0, gradR) -> np.ndarray:
    """``M = mu0 xi0' . grad U - 5/2 U^4 mu0 (mu0 y . grad R)``."""
    y = np.atleast_2d(y)
    dxi0 = -2 * gamma * np.asarray(c, float) * mu0
    return mu0 * grad_U(y) @ dxi0 - 2.5 * U(y) ** 4 * mu0 * (mu0 * y @ np.asarray(gradR, float))


def _radial_nodes(R_inf, n):
    """Gauss-Legendre nodes/weights for int_0^R f(r) r^2 dr on log panels."""
    xs, ws = roots_legendre(n)
    edges = [0.0, 1.0]
    while edges[-1] < R_inf:
        edges.append(min(edges[-1] * 10, R_inf))
    r, w = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        r.append(a + (b - a) * (xs + 1) / 2)
        w.append((b - a) / 2 * ws)
    r = np.concatenate(r)
    return r, np.concatenate(w) * r * r


def check_orthogonality_M(c, gamma: float, mu0: float, gradR, R_inf: float = R_INF,
                          n_r: int = 64, n_t: int = 12, n_p: int = 16) -> np.ndarray:
    """Normalized ``int M Z_i`` for i = 1..4 by product quadrature.

    Gauss-Legendre radial panels on ``[0, R_inf]``, Gauss in ``cos theta``,
    trapezoid in ``phi``, plus the analytic power-law tail beyond
    ``R_inf``.  Normalized by ``mu0^2 max|grad R| |A| / 2``.
    """
    gradR = np.asarray(gradR, float)
    r, wr = _radial_nodes(R_inf, n_r)
    ct, wt = roots_legendre(n_t)
    ph = 2 * np.pi * np.arange(n_p) / n_p
    wp = np.full(n_p, 2 * np.pi / n_p)
    C, P = np.meshgrid(ct, ph, indexing="ij")
    C, P = C.ravel(), P.ravel()
    S = np.sqrt(1 - C * C)
    d = np.column_stack([S * np.cos(P), S * np.sin(P), C])
    wd = np.outer(wt, wp).ravel()
    Y = (r[:, None, None] * d[None, :, :]).reshape(-1, 3)
    W = (wr[:, None] * wd[None, :]).ravel()
    Mv = M_field(Y, c, gamma, mu0, gradR)
    kb = KernelBasis()
    out = np.array([np.sum(W * Mv * kb.Z(i, Y)) for i in (1, 2, 3, 4)])
    # tails: int_R^inf of the two radial integrands
    a5 = ALPHA3 ** 5
    tB = 4 * np.pi / 3 * ALPHA3 ** 2 * (1 / R_inf - 1 / R_inf ** 3)
    tA = -20 * np.pi / 3 * a5 * (1 / (2 * R_inf ** 2) - 7 / (8 * R_inf ** 4))
    dxi0 = -2 * gamma * np.asarray(c, float) * mu0
    out[:3] += mu0 * dxi0 * tB - 0.5 * mu0 ** 2 * gradR * tA
    I = bubble_integrals()
    scale = mu0 ** 2 * np.max(np.abs(gradR)) * abs(I["A"]) / 2
    return out / scale if scale > 0 else out


# ---------------------------------------------------------------- phi3

class OrthogonalityError(ValueError):
    pass


@dataclass
class Phi3Result:
    r: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    I: np.ndarray
    sup_phi: float
    sup_weighted_dphi: float
    exponent_0: float
    exponent_inf: float
    orth_residual: float


def M_mode(c_i: float, gamma: float, mu0: float, dR_i: float):
    """Mode-i profile of M (projection on sqrt(3/4pi) theta_i)."""
    k = np.sqrt(4 * np.pi / 3)
    dxi = -2 * gamma * c_i * mu0
    return lambda s: k * (mu0 * dxi * dU(s) - 2.5 * mu0 ** 2 * dR_i * U(s) ** 4 * s)


def z_mode(s):
    return np.sqrt(4 * np.pi / 3) * dU(s)


def _fit(r, v, lo, hi):
    m = (r >= lo) & (r <= hi) & (np.abs(v) > 0)
    if m.sum() < 3:
        return np.nan
    return float(np.polyfit(np.log(r[m]), np.log(np.abs(v[m])), 1)[0])


def phi3_radial_mode(M, rmin=1e-4, rmax=1e6, n=8001, tol=1e-6) -> Phi3Result:
    """Bounded solution of ``phi'' + 2phi'/r - 2phi/r^2 + 5U^4 phi = -M``.

    Variation of constants with ``z = z_i``:
    ``phi(r) = -z(r) int_0^r I(rho) / (rho^2 z(rho)^2) d rho`` and
    ``I(rho) = int_0^rho M z s^2 ds``.

    Raises
    ------
    OrthogonalityError
        ``int_0^inf M z s^2`` not small relative to ``int |M z| s^2``.
    """
    u = np.linspace(np.log(rmin), np.log(rmax), n)
    r = np.exp(u)
    g = M(r) * z_mode(r) * r ** 3  # ds = s du
    # the piece on [0, rmin] behaves like s^5 (M, z ~ s)
    head = M(np.array([rmin]))[0] * z_mode(np.array([rmin]))[0] * rmin ** 3 / 5
    Icum = head + np.concatenate([[0.0], cumulative_simpson(g, x=u)])
    # beyond rmax the log-variable integrand decays like 1/r: tail ~ g(rmax)
    total = Icum[-1] + g[-1]
    scale = head + np.concatenate([[0.0], cumulative_simpson(np.abs(g), x=u)])[-1] + abs(g[-1])
    res = abs(total) / scale if scale > 0 else 0.0
    if scale == 0:
        z = np.zeros_like(r)
        return Phi3Result(r, z, z, z, 0.0, 0.0, np.nan, np.nan, 0.0)
    if res > tol:
        raise OrthogonalityError(f"M not orthogonal to z: relative residual {res:.2e}; "
                                 "I(rho) tends to a nonzero constant instead of decaying like 1/rho")
    # use the tail form beyond r=1 (same value when orthogonal, no cancellation)
    tail = np.concatenate([cumulative_simpson(g[::-1], x=-u[::-1])[::-1], [0.0]])
    tail = tail + g[-1]
    I = np.where(r <= 1, Icum, -tail)
    z = z_mode(r)
    f = I / (r * r * z * z) * r
    head2 = f[0] / 2  # integrand ~ rho near 0, in log variable ~ rho^2
    J = head2 + np.concatenate([[0.0], cumulative_simpson(f, x=u)])
    phi = -z * J
    dz = np.gradient(z, r)
    dphi = -dz * J - z * I / (r * r * z * z)
    return Phi3Result(r, phi, dphi, I, float(np.max(np.abs(phi))),
                      float(np.max((1 + r) * np.abs(dphi))),
                      _fit(r, I, 1e-4, 1e-2), _fit(r, I, 1e2, 1e4), float(res))
