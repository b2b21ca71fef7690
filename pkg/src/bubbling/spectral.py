"""Dirichlet eigenpairs and the truncated heat-kernel expansion."""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as sla
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import gammaincc, gamma as gamma_fn

from .domain import DiscreteDomain


class EigenError(RuntimeError):
    """Eigensolver failed; ``residual`` holds the best achieved value."""

    def __init__(self, msg, residual=np.nan):
        super().__init__(msg)
        self.residual = residual


class TruncationWarning(UserWarning):
    """Heat-kernel series evaluated below its trusted time floor."""


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ordered Dirichlet eigenpairs.

    ``phi[:, k]`` is sampled at ``dom.points`` and normalized so that
    ``sum(mass * phi_k**2) = 1`` (the discrete L2 norm on the domain).
    In radial mode only rotationally symmetric modes are present.
    """

    dom: DiscreteDomain
    lam: np.ndarray
    phi: np.ndarray
    residual: np.ndarray
    tol: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def K(self) -> int:
        return len(self.lam)

    @property
    def lam1(self) -> float:
        return float(self.lam[0])

    @property
    def gap(self) -> float:
        return float(self.lam[1] - self.lam[0]) if self.K > 1 else np.inf

    def at(self, x) -> np.ndarray:
        """Eigenfunctions evaluated at points ``x``; shape (m, K)."""
        return sample(self.dom, self.phi, x)

    def truncate(self, K: int) -> "Spectrum":
        return Spectrum(self.dom, self.lam[:K], self.phi[:, :K], self.residual[:K], self.tol)


def _radial_spline(dom: DiscreteDomain, U: np.ndarray, bval=None):
    r = dom.axes[0]
    U2 = U if U.ndim == 2 else U[:, None]
    tail = np.zeros((1, U2.shape[1])) if bval is None else np.atleast_2d(bval)
    Y = np.vstack([U2, tail])
    # even extension: u'(0)=0
    return CubicSpline(r, Y, bc_type=((1, np.zeros(Y.shape[1])), "not-a-knot"))


def _stencil_3d(dom: DiscreteDomain, x: np.ndarray):
    """Unknown numbers and Lagrange weights of a 3x3x3 stencil around x."""
    axes, h, idx = dom.axes, dom.h, dom.index
    N = idx.shape
    base = np.array([np.rint((x[a] - axes[a][0]) / h[a]) for a in range(3)], int)
    best = None
    for off in np.ndindex(3, 3, 3):
        c = base + np.array(off) - 1
        if np.any(c < 1) or np.any(c > np.array(N) - 2):
            continue
        block = idx[c[0] - 1:c[0] + 2, c[1] - 1:c[1] + 2, c[2] - 1:c[2] + 2]
        if np.all(block >= 0):
            dist = np.sum(((axes[0][c[0]], axes[1][c[1]], axes[2][c[2]]) - x) ** 2)
            if best is None or dist < best[0]:
                best = (dist, c, block)
    if best is None:
        return None
    _, c, block = best
    ws = []
    for a in range(3):
        nodes = axes[a][c[a] - 1:c[a] + 2]
        w = np.ones(3)
        for i in range(3):
            for j in range(3):
                if i != j:
                    w[i] *= (x[a] - nodes[j]) / (nodes[i] - nodes[j])
        ws.append(w)
    W = np.einsum("i,j,k->ijk", *ws)
    return block.ravel(), W.ravel()


def sample(dom: DiscreteDomain, U: np.ndarray, x, bval=None) -> np.ndarray:
    """Evaluate grid function(s) ``U`` (n,) or (n, m) at points ``x``.

    Radial mode uses a clamped cubic spline in ``|x|`` with boundary value
    ``bval`` (default 0).  Full 3-D mode uses triquadratic Lagrange
    interpolation on the nearest 3x3x3 block of unknowns; points too close
    to the boundary for such a block fall back to trilinear interpolation
    with zero exterior values.
    """
    x = np.atleast_2d(np.asarray(x, float))
    vec = U.ndim == 1
    U2 = U[:, None] if vec else U
    if dom.radial:
        s = _radial_spline(dom, U2, bval)
        out = s(np.linalg.norm(x, axis=1))
    else:
        out = np.empty((len(x), U2.shape[1]))
        for i, p in enumerate(x):
            st = _stencil_3d(dom, p)
            if st is None:
                out[i] = _trilinear(dom, U2, p)
            else:
                out[i] = st[1] @ U2[st[0]]
    return out[:, 0] if vec else out


def _trilinear(dom, U2, p):
    axes, h, idx = dom.axes, dom.h, dom.index
    f = np.array([(p[a] - axes[a][0]) / h[a] for a in range(3)])
    i0 = np.floor(f).astype(int)
    t = f - i0
    val = np.zeros(U2.shape[1])
    for off in np.ndindex(2, 2, 2):
        c = i0 + np.array(off)
        if np.any(c < 0) or np.any(c >= np.array(idx.shape)):
            continue
        j = idx[tuple(c)]
        if j >= 0:
            w = np.prod(np.where(np.array(off) == 1, t, 1 - t))
            val += w * U2[j]
    return val


def _normalize(dom, phi):
    nrm = np.sqrt(np.sum(dom.mass[:, None] * phi * phi, axis=0))
    phi = phi / nrm
    # sign: positive mean (phi_1 > 0), otherwise positive at the first large entry
    for k in range(phi.shape[1]):
        j = np.argmax(np.abs(phi[:, k]))
        s = np.sign(np.sum(dom.mass * phi[:, k])) if k == 0 else np.sign(phi[j, k])
        phi[:, k] *= s if s != 0 else 1.0
    return phi


def eigenpairs(dom: DiscreteDomain, K: int, tol: float = 1e-8, maxiter: int = 400,
               seed: int = 0, cache_dir: str | None = None) -> Spectrum:
    """Lowest ``K`` Dirichlet eigenpairs of ``dom``.

    Radial domains use a tridiagonal symmetric solver; 3-D domains use
    LOBPCG preconditioned with smoothed-aggregation AMG.

    Raises
    ------
    ValueError
        ``K`` larger than a quarter of the unknown count.
    EigenError
        Residual above ``tol * lambda_k`` after ``maxiter`` iterations.
    """
    if K > dom.n // 4:
        raise ValueError(f"K={K} exceeds n/4={dom.n // 4}")
    cache_dir = cache_dir if cache_dir is not None else os.environ.get("BUBBLING_CACHE")
    path = None
    if cache_dir:
        path = os.path.join(cache_dir, f"spectrum-{dom.spec.key()}-{K}-{tol:g}.npz")
        if os.path.exists(path):
            z = np.load(path)
            return Spectrum(dom, z["lam"], z["phi"], z["res"], tol)
    A = dom.A
    if dom.radial:
        lam, psi = eigh_tridiagonal(A.diagonal(), A.diagonal(1), select="i", select_range=(0, K - 1))
    else:
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(A)
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((dom.n, K))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lam, psi = sla.lobpcg(A, X, M=ml.aspreconditioner(), largest=False,
                                  tol=tol * 1e-2, maxiter=maxiter)
        o = np.argsort(lam)
        lam, psi = lam[o], psi[:, o]
    psi = psi / np.linalg.norm(psi, axis=0)
    res = np.linalg.norm(A @ psi - psi * lam, axis=0)
    if np.any(res > tol * lam):
        raise EigenError(f"eigensolver residual {res.max():.3e} above tol", float(res.max()))
    phi = _normalize(dom, psi / np.sqrt(dom.mass)[:, None])
    s = Spectrum(dom, lam, phi, res, tol)
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        np.savez(path, lam=lam, phi=phi, res=res)
    return s


def _weyl_power(sp: Spectrum) -> float:
    # counting function N(lam) ~ lam^p: radial modes lam_k ~ k^2, 3-D Weyl lam^{3/2}
    return 0.5 if sp.dom.radial else 1.5


def tail_bound(sp: Spectrum, t: float, fx: np.ndarray, fy: np.ndarray) -> float:
    """Estimate of the dropped tail ``sum_{k>K} e^{-lam_k t} |phi_k(x) phi_k(y)|``.

    The sup of ``|phi_k(x) phi_k(y)|`` is taken empirically over the last
    quarter of the computed modes and the mode count is extrapolated with
    ``N(lam) = K (lam / lam_K)^p``.
    """
    K = sp.K
    q = max(1, K // 4)
    C = float(np.max(np.abs(fx[-q:] * fy[-q:])))
    p = _weyl_power(sp)
    lk = sp.lam[-1]
    z = lk * t
    # K p lam_K^{-p} int_{lam_K}^inf lam^{p-1} e^{-lam t} d lam
    return C * K * gamma_fn(p) * gammaincc(p, z) / z ** p * p


def tau_min(sp: Spectrum, x, y, tol: float = 1e-6) -> float:
    """Smallest time at which the estimated truncation tail is <= ``tol``."""
    fx = sp.at(x)[0]
    fy = sp.at(y)[0]
    g = lambda t: np.log(tail_bound(sp, t, fx, fy) + 1e-300) - np.log(tol)
    lo, hi = 1e-8, 1.0
    while g(hi) > 0:
        hi *= 2
    if g(lo) < 0:
        return lo
    return brentq(g, lo, hi, xtol=1e-12)


def _check_radial(sp, x, y):
    if sp.dom.radial:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if np.linalg.norm(x) > 1e-12 and np.linalg.norm(y) > 1e-12:
            raise ValueError("radial spectrum: one of x, y must be the centre")


def heat_kernel(sp: Spectrum, t: float, x, y, tol: float = 1e-6) -> float:
    """Truncated expansion ``sum_k e^{-lam_k t} phi_k(x) phi_k(y)``.

    Emits :class:`TruncationWarning` when ``t`` is below the trusted floor.
    """
    _check_radial(sp, x, y)
    fx = sp.at(x)[0]
    fy = sp.at(y)[0]
    if tail_bound(sp, t, fx, fy) > tol:
        warnings.warn(f"t={t:g} below trusted floor for K={sp.K}", TruncationWarning, stacklevel=2)
    return float(np.sum(np.exp(-sp.lam * t) * fx * fy))


def free_kernel(t, x, y) -> float:
    r2 = float(np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2))
    return (4 * np.pi * t) ** -1.5 * np.exp(-r2 / (4 * t))


def varadhan_lower_check(sp: Spectrum, tau: float, y, delta: float, tol: float = 1e-6):
    """Check ``p^{R3}(0,y)(1-exp(-delta^2/4tau)) <= p^Omega(0,y) + tol``.

    Returns ``True``/``False``, or ``None`` (with a warning) when ``tau`` is
    below the trusted floor and the check is skipped.
    """
    x0 = np.zeros(3)
    fx = sp.at(x0)[0]
    fy = sp.at(y)[0]
    if tail_bound(sp, tau, fx, fy) > tol:
        warnings.warn("tau below trusted floor: Varadhan check skipped", TruncationWarning, stacklevel=2)
        return None
    lhs = free_kernel(tau, x0, y) * (1 - np.exp(-delta ** 2 / (4 * tau)))
    rhs = float(np.sum(np.exp(-sp.lam * tau) * fx * fy))
    return bool(lhs <= rhs + tol)
