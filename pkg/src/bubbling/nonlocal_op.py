"""The nonlocal operator of the reduced Lambda equation.

``I(tau) = int p_tau(q, y) G_g(y, q) dy`` is the kernel, ``Itilde`` its
Laplace transform and ``sigma`` the inversion kernel with
``sigmatilde(xi) = 1 / ((xi + g) Itilde(xi))``.  The forward map is the
Duhamel convolution

    J(q, t) = - int_0^s exp(g tau) Ldot(s - tau) I(tau) dtau,   s = t - (t0 - 1),

and the inverse map recovers ``Lambda`` from ``h = J(q, .)`` through
``beta = -Lambda``, ``beta(s) = beta(0) + int_0^s exp(g tau) sigma(tau) h(s - tau) dtau``.

The module is called ``nonlocal_op`` because ``nonlocal`` is a Python keyword.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from .green import ALPHA3, C3, robin
from .spectral import Spectrum, tail_bound

# local Weyl density of sum_k phi_k(q)^2 delta(lam - lam_k) is sqrt(lam)/(4 pi^2)
WEYL = C3 / (4 * np.pi ** 2)
# sqrt(tau) I(tau) -> ALPHA3/sqrt(pi) as tau -> 0
C1_STAR = ALPHA3 / np.sqrt(np.pi)


class ConditioningWarning(UserWarning):
    """gamma close to an eigenvalue: the corresponding term is ill-conditioned."""


class DecayWindowWarning(UserWarning):
    """Input decays too slowly for the inversion estimates."""


class InversionError(RuntimeError):
    """Oscillatory quadrature of the Bromwich integral did not converge."""

    def __init__(self, msg, tail=np.nan):
        super().__init__(msg)
        self.tail = tail


# ---------------------------------------------------------------- I(tau)

def eigen_weights(sp: Spectrum, gamma: float, q) -> np.ndarray:
    """``c3 phi_k(q)^2 / (lam_k - gamma)``: coefficients of ``G_g(., q)``."""
    if not 0 < gamma < sp.lam1:
        raise ValueError("gamma must lie in (0, lambda1)")
    q = np.asarray(q, float)
    if sp.dom.radial and np.linalg.norm(q) > 1e-12:
        raise ValueError("radial spectrum: q must be the centre")
    f = sp.at(q[None, :])[0]
    gap = np.abs(sp.lam - gamma) / sp.lam
    if gap.min() < 1e-3:
        k = int(np.argmin(gap))
        warnings.warn(f"gamma within {gap[k]:.1e} of lambda_{k + 1}", ConditioningWarning, stacklevel=2)
    return C3 * f * f / (sp.lam - gamma)


def _i_eigen(sp, w, tau):
    tau = np.atleast_1d(np.asarray(tau, float))
    return np.exp(-np.outer(tau, sp.lam)) @ w


def _i_quad(tau: float, gamma: float, R: float, eps: float) -> float:
    """Gaussian-split quadrature of ``I(tau)`` for small ``tau``.

    Inside ``B_eps(q)`` the heat kernel is replaced by the free Gaussian and
    ``G_g(., q)`` by its spherical mean, which is exact there:
    ``alpha3 cos(k r)/r - R sin(k r)/(k r)`` with ``k = sqrt(g)``.  In the
    scaled variable ``r = 2 sqrt(tau) u`` the ``1/r`` part is integrated with
    the ``r^2`` polar weight, so no singularity is left.
    """
    k = np.sqrt(gamma)
    st = np.sqrt(tau)
    umax = min(eps / (2 * st), 9.0)

    def f(u):
        r = 2 * st * u
        return u * u * np.exp(-u * u) * (-R * np.sinc(k * r / np.pi)) + \
            u * np.exp(-u * u) * ALPHA3 * np.cos(k * r) / (2 * st)

    return 4 / np.sqrt(np.pi) * quad(f, 0, umax, epsabs=0, epsrel=1e-12, limit=200)[0]


@dataclass(frozen=True, eq=False)
class ITauTable:
    """Tabulated ``I(tau)`` at ``q`` with provenance per node.

    Nodes below ``switch`` come from the Gaussian-split quadrature, the
    rest from the eigen-sum.  Calling the table evaluates the eigen-sum
    exactly above the switch and a spline of ``sqrt(tau) I`` below it.
    """

    q: np.ndarray
    gamma: float
    tau: np.ndarray
    I: np.ndarray
    provenance: np.ndarray
    switch: float
    jump: float
    R: float
    sp: Spectrum = field(repr=False)
    weights: np.ndarray = field(repr=False)
    _spl: CubicSpline = field(repr=False, default=None)

    def __call__(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, float))
        out = np.empty_like(tau)
        hi = tau >= self.switch
        out[hi] = _i_eigen(self.sp, self.weights, tau[hi])
        lo = ~hi
        if np.any(lo):
            t = np.maximum(tau[lo], self.tau[0])
            out[lo] = self._spl(np.log(t)) / np.sqrt(tau[lo])
        return out

    def kr(self, tau) -> np.ndarray:
        """``sqrt(tau) exp(g tau) I(tau)`` with its limit ``c1*`` at 0."""
        tau = np.atleast_1d(np.asarray(tau, float))
        out = np.full_like(tau, C1_STAR)
        pos = tau > 0
        out[pos] = np.sqrt(tau[pos]) * np.exp(self.gamma * tau[pos]) * self(tau[pos])
        return out

    def rows(self):
        return [(float(t), float(v), str(p)) for t, v, p in zip(self.tau, self.I, self.provenance)]


def i_tau_table(sp: Spectrum, gamma: float, q, tau_lo: float = 1e-7, tau_hi: float = 10.0,
                n: int = 121, R: float | None = None, method: str = "grid", tol: float = 0.01) -> ITauTable:
    """Build an :class:`ITauTable` on a log grid.

    The switch is the overlap node where quadrature and eigen-sum agree
    best; overlap nodes are those where the estimated eigen-sum tail is
    below ``1e-4 I`` and the quadrature ball still carries the Gaussian.
    """
    from .domain import boundary_distance

    q = np.asarray(q, float)
    w = eigen_weights(sp, gamma, q)
    if R is None:
        R = robin(sp.dom, sp, gamma, q, method=method)
    eps = float(sp.dom.spec.R if sp.dom.radial else boundary_distance(sp.dom, q))
    tau = np.geomspace(tau_lo, tau_hi, n)
    fq = sp.at(q[None, :])[0]
    ie = _i_eigen(sp, w, tau)
    tb = np.array([tail_bound(sp, t, fq, fq) for t in tau]) * C3 / (sp.lam[-1] - gamma)
    iq = np.array([_i_quad(t, gamma, R, eps) if eps ** 2 / (4 * t) > 2 else np.nan for t in tau])
    ok = (tb < 1e-4 * np.abs(ie)) & np.isfinite(iq)
    if not np.any(ok):
        raise ValueError("no overlap between quadrature and eigen-sum ranges; increase K")
    rel = np.where(ok, np.abs(iq - ie) / np.abs(ie), np.inf)
    j = int(np.argmin(rel))
    jump = float(rel[j])
    if jump > tol:
        warnings.warn(f"I(tau) provenance jump {jump:.2e} exceeds {tol:g}", ConditioningWarning, stacklevel=2)
    switch = float(tau[j])
    I = np.where(tau < switch, iq, ie)
    prov = np.where(tau < switch, "gaussian-split-quadrature", "eigen-sum")
    lo = tau < switch
    spl = CubicSpline(np.log(tau[lo | (np.arange(n) == j)]),
                      (np.sqrt(tau) * np.where(lo, iq, ie))[lo | (np.arange(n) == j)])
    return ITauTable(q, float(gamma), tau, I, prov, switch, jump, float(R), sp, w, spl)


def i_of_tau(sp: Spectrum, gamma: float, q, tau, R: float | None = None, method: str = "grid"):
    """``I(tau)``; eigen-sum above the calibrated switch, quadrature below."""
    return i_tau_table(sp, gamma, q, R=R, method=method)(tau)


# ---------------------------------------------------------------- Laplace symbol

def _weyl_edge(sp: Spectrum) -> float:
    lam = sp.lam
    return float(lam[-1] + 0.5 * (lam[-1] - lam[-2]))


def _weyl_tail(xi, gamma: float, lam_edge: float):
    # WEYL int_L^inf sqrt(l) dl / ((l - g)(l + xi)), closed form
    k = np.sqrt(gamma)
    S = np.sqrt(lam_edge)
    s = np.sqrt(xi + 0j)
    L = np.log((S + k) / (S - k))
    xi = np.asarray(xi, complex)
    near = np.abs(xi + gamma) < 1e-6 * gamma
    den = np.where(near, 1.0, gamma + xi)
    val = WEYL / den * (k * L + 2 * s * np.arctan(s / S))
    # removable point xi = -g: derivative of the bracket
    lim = WEYL * (np.arctanh(k / S) / k + S / (S * S - gamma))
    return np.where(near, lim, val)


def i_tilde(sp: Spectrum, gamma: float, q, xi, weights=None, pole_tol: float = 1e-10):
    """``Itilde(xi) = sum_k c3 phi_k(q)^2 / ((lam_k - g)(lam_k + xi))`` + Weyl tail.

    Accepts scalar or array ``xi`` (complex allowed).
    """
    w = eigen_weights(sp, gamma, q) if weights is None else weights
    xi = np.asarray(xi, complex)
    d = np.min(np.abs(xi[..., None] + sp.lam), axis=-1)
    if np.any(d < pole_tol * sp.lam[0]):
        raise ValueError("xi too close to a pole -lambda_k")
    val = (w / (sp.lam + xi[..., None])).sum(-1) + _weyl_tail(xi, gamma, _weyl_edge(sp))
    return val if val.ndim else complex(val)


def residue_c_inf(sp: Spectrum, gamma: float, q, weights=None) -> float:
    """``c_inf = 1 / Itilde(-g)``, the residue of ``exp(xi t) sigmatilde`` at ``-g``."""
    return float(1.0 / i_tilde(sp, gamma, q, -gamma, weights).real)


def zeros_on_contour(sp, gamma, q, radius=None, center=None, n=400, weights=None) -> int:
    """Winding number of ``Itilde`` around a circle in ``Re xi > -lambda1``.

    Zero means no zeros inside (argument principle on the sampled contour).
    """
    lam1 = sp.lam1
    if center is None:
        center = 0.0
    if radius is None:
        radius = 0.95 * (center + lam1)
    th = np.linspace(0, 2 * np.pi, n + 1)
    z = center + radius * np.exp(1j * th)
    v = i_tilde(sp, gamma, q, z, weights)
    return int(np.rint(np.sum(np.diff(np.unwrap(np.angle(v)))) / (2 * np.pi)))


# ---------------------------------------------------------------- sigma

@dataclass(frozen=True, eq=False)
class SigmaKernel:
    """Inversion kernel ``l(tau) = exp(g tau) sigma(tau) - c_inf``.

    ``l = rem + sum_n d_n exp(-(lam1-g) tau) tau^{n/2-1} / Gamma(n/2)``
    where ``rem`` is the Bromwich line integral on ``Re xi = -a`` of the
    symbol minus its three explicit large-``xi`` pieces, tabulated on
    ``tau`` and splined.
    """

    gamma: float
    c_inf: float
    a: float
    lam1: float
    d: np.ndarray
    tau: np.ndarray
    rem: np.ndarray
    small_tau_exponent: float
    decay_rate: float
    _spl: CubicSpline = field(repr=False, default=None)

    def _explicit(self, tau):
        tau = np.asarray(tau, float)
        e = np.exp(-(self.lam1 - self.gamma) * tau)
        with np.errstate(divide="ignore"):
            return e * (self.d[0] / np.sqrt(np.pi * tau) + self.d[1]
                        + self.d[2] * 2 * np.sqrt(tau / np.pi))

    def remainder(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, float))
        t_end = self.tau[-1]
        inside = self._spl(np.clip(tau, self.tau[0], t_end))
        b = self.a - self.gamma
        return np.where(tau <= t_end, inside, self.rem[-1] * np.exp(-b * (tau - t_end)))

    def l(self, tau) -> np.ndarray:
        """``exp(g tau) sigma(tau) - c_inf`` (singular like ``tau^{-1/2}`` at 0)."""
        return self._explicit(tau) + self.remainder(tau)

    def lr(self, tau) -> np.ndarray:
        """``sqrt(tau) l(tau)``, bounded, with its limit at 0."""
        tau = np.atleast_1d(np.asarray(tau, float))
        e = np.exp(-(self.lam1 - self.gamma) * tau)
        st = np.sqrt(tau)
        return e * (self.d[0] / np.sqrt(np.pi) + self.d[1] * st + self.d[2] * 2 * tau / np.sqrt(np.pi)) \
            + st * self.remainder(tau)

    def sigma(self, tau) -> np.ndarray:
        tau = np.asarray(tau, float)
        return np.exp(-self.gamma * tau) * (self.c_inf + self.l(tau))


def _symbol_W(sp, gamma, q, w):
    """``p -> 1 / (p Itilde(p - g))`` = Laplace transform of ``exp(g tau) sigma``."""
    def W(p):
        p = np.asarray(p, complex)
        return 1.0 / (p * i_tilde(sp, gamma, q, p - gamma, w))
    return W


def sigma_kernel(sp: Spectrum, gamma: float, q, tau=None, R: float | None = None,
                 a_frac: float = 0.8, method: str = "grid", weights=None,
                 tau_max: float = 8.0, n: int = 100) -> SigmaKernel:
    """Numerical inverse Laplace transform of ``sigmatilde``.

    Bromwich line ``Re xi = -a`` with ``a = g + a_frac (lam1 - g)``.  The
    residue at ``-g`` and the pieces ``d_n (xi + lam1)^{-n/2}``, n=1,2,3,
    are inverted in closed form; the remaining absolutely convergent part
    is done by QAWF (Fourier-weighted) quadrature.

    Raises
    ------
    InversionError
        QAWF reports non-convergence.
    """
    q = np.asarray(q, float)
    w = eigen_weights(sp, gamma, q) if weights is None else weights
    if R is None:
        R = robin(sp.dom, sp, gamma, q, method=method)
    lam1 = sp.lam1
    a = gamma + a_frac * (lam1 - gamma)
    b = a - gamma
    c_inf = residue_c_inf(sp, gamma, q, w)
    # W(p) = 1/(alpha3 sqrt(xi) - R + ...), xi = p - g = zeta - lam1
    d = np.array([1 / ALPHA3, R / ALPHA3 ** 2, R ** 2 / ALPHA3 ** 3 + lam1 / (2 * ALPHA3)])
    W = _symbol_W(sp, gamma, q, w)

    def rem(om):
        p = -b + 1j * om
        zeta = p + (lam1 - gamma)
        sz = np.sqrt(zeta)
        return W(p) - d[0] / sz - d[1] / zeta - d[2] / (zeta * sz)

    fr = lambda om: rem(om).real
    fi = lambda om: rem(om).imag
    if tau is None:
        # the discrete symbol leaves a slowly decaying 1/omega tail, so the
        # grid starts just above 0 and the spline is held constant below it
        tau = np.geomspace(1e-4, tau_max, n)
    tau = np.asarray(tau, float)
    out = np.empty_like(tau)
    err_last = np.nan
    for j, t in enumerate(tau):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            try:
                c, e1 = quad(fr, 0, np.inf, weight="cos", wvar=t, limlst=400, epsabs=1e-9)
                s, e2 = quad(fi, 0, np.inf, weight="sin", wvar=t, limlst=400, epsabs=1e-9)
                v, err = c - s, e1 + e2
            except Exception as ex:  # IntegrationWarning promoted
                raise InversionError(f"Bromwich quadrature failed at tau={t:g}: {ex}", tail=err_last) from ex
        err_last = err
        out[j] = np.exp(-b * t) * v / np.pi
    spl = CubicSpline(tau, out)
    sk = SigmaKernel(float(gamma), c_inf, float(a), float(lam1), d, tau, out, np.nan, np.nan, spl)
    # small-tau exponent of l and large-tau decay rate of the remainder
    ts = np.geomspace(1e-4, 1e-3, 8)
    e0 = float(np.polyfit(np.log(ts), np.log(np.abs(sk.l(ts))), 1)[0])
    tl = tau[tau > 0.5 * tau_max]
    lv = sk.l(tl)
    rate = float(-np.polyfit(tl, np.log(np.abs(lv) + 1e-300), 1)[0]) if len(tl) > 2 else np.nan
    object.__setattr__(sk, "small_tau_exponent", e0)
    object.__setattr__(sk, "decay_rate", rate)
    return sk


# ---------------------------------------------------------------- convolutions

def _product_weights(n: int, dt: float):
    """Per-panel weights of ``int tau^{-1/2} g`` with ``g`` linear on panels."""
    a = dt * np.arange(n)
    b = a + dt
    m0 = 2 * (np.sqrt(b) - np.sqrt(a))
    m1 = 2 / 3 * (b ** 1.5 - a ** 1.5)
    return (b * m0 - m1) / dt, (m1 - a * m0) / dt


def singular_convolution(kr: np.ndarray, f: np.ndarray, dt: float) -> np.ndarray:
    """``c_i = int_0^{t_i} k(tau) f(t_i - tau) dtau`` with ``k = kr / sqrt(tau)``.

    ``kr`` and ``f`` are sampled on the same uniform grid ``t_j = j dt``.
    Product integration: ``kr(tau) f(t - tau)`` is linear on each panel and
    integrated exactly against ``tau^{-1/2}``.
    """
    n = len(f)
    W0, W1 = _product_weights(n, dt)
    c = W0.copy()
    c[1:] += W1[:-1]
    full = fftconvolve(c * kr, f)[:n]
    # at node i the last weight is W1[i-1] only
    corr = W0 * kr * f[0]
    out = full - corr
    out[0] = 0.0
    return out


def duhamel_forward(itab: ITauTable, dLambda: np.ndarray, dt: float) -> np.ndarray:
    """``J(q, t_i) = - int_0^{s_i} exp(g tau) I(tau) Ldot(s_i - tau) dtau``.

    ``dLambda`` is sampled on the uniform grid ``s_i = i dt`` starting at
    ``t0 - 1``.
    """
    dLambda = np.asarray(dLambda, float)
    if dt > itab.switch and dt > 0.05:
        raise ValueError(f"dt={dt:g} too coarse for the tau^(-1/2) kernel")
    if not np.any(dLambda):
        return np.zeros_like(dLambda)
    s = dt * np.arange(len(dLambda))
    return -singular_convolution(itab.kr(s), dLambda, dt)


def step_response(itab: ITauTable, s) -> np.ndarray:
    """``int_0^s exp(g tau) I(tau) dtau`` by term-by-term eigen integration.

    Valid when the quadrature range below the switch is negligible; used
    as an oracle for the forward map with a unit step input.
    """
    s = np.atleast_1d(np.asarray(s, float))
    lam, w, g = itab.sp.lam, itab.weights, itab.gamma
    return ((1 - np.exp(-np.outer(s, lam - g))) / (lam - g)) @ w


# ---------------------------------------------------------------- inverse

def smooth_extension(h_t0: float, n: int) -> np.ndarray:
    """``eta(t) h(t0)`` on ``n`` uniform nodes of ``[t0-1, t0)``.

    ``eta`` is the smooth C-infinity step with ``eta(t0-1)=0``, ``eta(t0)=1``.
    """
    x = np.arange(n) / n

    def psi(z):
        return np.where(z > 0, np.exp(-1 / np.where(z > 0, z, 1)), 0.0)

    eta = psi(x) / (psi(x) + psi(1 - x))
    return eta * h_t0


@dataclass
class Inversion:
    t: np.ndarray
    h: np.ndarray
    Lambda: np.ndarray
    dLambda: np.ndarray
    beta0: float
    decay_weight: float


def _decay_tail(h, dt):
    # analytic tail of int h beyond the last sample from an exponential fit
    n = len(h)
    m = max(4, n // 10)
    hv = h[-m:]
    if np.max(np.abs(h)) == 0 or abs(h[-1]) <= 1e-12 * np.max(np.abs(h)):
        return 0.0, np.inf
    if np.any(hv == 0) or np.any(np.sign(hv) != np.sign(hv[-1])):
        return 0.0, np.nan
    rate = -np.polyfit(dt * np.arange(m), np.log(np.abs(hv)), 1)[0]
    if rate <= 0:
        return 0.0, rate
    return h[-1] / rate, rate


def invert_nonlocal(itab: ITauTable, sk: SigmaKernel, h: np.ndarray, t0: float, dt: float,
                    history: np.ndarray | None = None) -> Inversion:
    """Recover ``Lambda`` and ``Ldot`` from ``h = J(q, .)`` on ``[t0, inf)``.

    ``h`` is sampled on ``t_i = t0 + i dt``.  On ``[t0-1, t0)`` the input
    is extended by ``eta h(t0)`` unless ``history`` (the true values there,
    ``round(1/dt)`` samples) is given.  ``beta(0) = -c_inf int h0*`` with the
    infinite range closed by an exponential tail fit.
    """
    h = np.asarray(h, float)
    m = int(round(1 / dt))
    if abs(m * dt - 1) > 1e-9:
        raise ValueError("dt must divide 1")
    ext = smooth_extension(h[0], m) if history is None else np.asarray(history, float)
    if len(ext) != m:
        raise ValueError(f"history needs {m} samples")
    h0 = np.concatenate([ext, h])
    n = len(h0)
    s = dt * np.arange(n)
    t = s + (t0 - 1)
    if not np.any(h0):
        z = np.zeros(n)
        return Inversion(t, h0, z, z, 0.0, np.nan)
    tail, rate = _decay_tail(h0, dt)
    c_lim = (sk.lam1 - sk.gamma) / (2 * sk.gamma)
    c_fit = rate / (2 * sk.gamma) if np.isfinite(rate) else np.inf
    if not c_fit > 0:
        warnings.warn("h does not decay: estimates not guaranteed", DecayWindowWarning, stacklevel=2)
    elif c_fit > c_lim and np.isfinite(c_fit):
        pass  # fast decay is inside the window (weight capped by c_lim)
    # trapezoid for int h0*
    total = dt * (np.sum(h0) - 0.5 * (h0[0] + h0[-1])) + tail
    beta0 = -sk.c_inf * total
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (h0[1:] + h0[:-1]))])
    beta2 = singular_convolution(sk.lr(s), h0, dt)
    beta = beta0 + sk.c_inf * cum + beta2
    dbeta = sk.c_inf * h0 + np.gradient(beta2, dt, edge_order=2)
    return Inversion(t, h0, -beta, -dbeta, float(beta0), float(c_fit))


def weighted_sup_error(t, approx, exact, gamma: float, l1: float, window) -> float:
    """``sup |approx - exact| mu0^{-l1} / sup |exact| mu0^{-l1}`` on ``window``."""
    t = np.asarray(t)
    m = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    wgt = np.exp(2 * gamma * l1 * t[m])
    return float(np.max(np.abs(approx[m] - exact[m]) * wgt) / np.max(np.abs(exact[m]) * wgt))


def round_trip(itab: ITauTable, sk: SigmaKernel, l1: float = 2 / 3, t0: float = 1.0,
               T: float = 3.0, dt: float = 2e-3, true_history: bool = True) -> dict:
    """Forward then inverse map on ``Ldot = exp(-2 g l1 t)``; weighted error."""
    g = itab.gamma
    m = int(round(1 / dt))
    t = (t0 - 1) + dt * np.arange(m + int(round(T / dt)) + 1)
    dL = np.exp(-2 * g * l1 * t)
    J = duhamel_forward(itab, dL, dt)
    inv = invert_nonlocal(itab, sk, J[m:], t0, dt, history=J[:m] if true_history else None)
    err = weighted_sup_error(t, inv.dLambda, dL, g, l1, (t0, t0 + T))
    return dict(t=t, dLambda=dL, J=J, dLambda_rec=inv.dLambda, Lambda_rec=inv.Lambda,
                rel_error=err, beta0=inv.beta0)
