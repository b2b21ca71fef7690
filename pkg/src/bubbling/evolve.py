"""Time integration of ``u_t = Lap u + u^5`` and of linear inhomogeneous
heat problems, with blow-up detection and rate estimation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .ansatz import energy
from .domain import DiscreteDomain
from .green import ALPHA3, C3

log = logging.getLogger(__name__)

# running: horizon reached with the solution neither decayed nor blown up
# stalled: edge tracking used all its segments before reaching T
STATUSES = ("running", "decayed", "blown-up", "stalled")


class SchemeError(RuntimeError):
    """NaN/Inf appeared without the blow-up threshold tripping."""


@dataclass(frozen=True)
class EvolveConfig:
    """Stepping parameters.

    ``M_max`` is the blow-up threshold on the sup norm; ``None`` means
    1000 times the initial sup norm (and never less than 10 times).
    The step is accepted when ``|u' - u|_inf <= rel_change |u|_inf`` and
    ``|u|_inf^4 dt <= safety``.
    """

    scheme: str = "strang-split"
    dt0: float = 1e-4
    dt_min: float = 1e-14
    dt_max: float = 1e-2
    rel_change: float = 0.05
    safety: float = 0.05
    M_max: float | None = None
    horizon: float = 1.0
    decay_tol: float = 1e-3
    snapshot_every: int = 0
    energy_every: int = 1

    def validate(self):
        if self.scheme not in ("strang-split", "imex-bdf2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.dt_min <= self.dt0 <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt0 <= dt_max")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class Trajectory:
    """Measured quantities along an evolution."""

    times: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    mu_hat: list = field(default_factory=list)
    xi_hat: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    status: str = "running"
    T_est: float = np.nan
    snapshots: list = field(default_factory=list)
    rejected: int = 0

    def arrays(self):
        return dict(t=np.array(self.times), sup=np.array(self.sup), mu_hat=np.array(self.mu_hat),
                    xi=np.array(self.xi_hat).reshape(-1, 3), energy=np.array(self.energy),
                    dt=np.array(self.dt))

    def rows(self):
        a = self.arrays()
        return [(t, s, m, x[0], x[1], x[2], e, d)
                for t, s, m, x, e, d in zip(a["t"], a["sup"], a["mu_hat"], a["xi"], a["energy"], a["dt"])]


# ---------------------------------------------------------------- diffusion solves

class _Diffusion:
    """Cached solvers for ``(M + c K) x = b`` keyed by ``c``."""

    def __init__(self, dom: DiscreteDomain):
        self.dom = dom
        self.M = sp.diags(dom.mass)
        self._cache = {}

    def solve(self, c: float, b: np.ndarray, shift: float = 0.0) -> np.ndarray:
        key = (c, shift)
        if key not in self._cache:
            A = (self.M * (1 - shift * c) + c * self.dom.K).tocsc()
            if self.dom.radial or self.dom.n < 40000:
                self._cache[key] = sla.splu(A).solve
            else:
                import pyamg

                ml = pyamg.smoothed_aggregation_solver(A.tocsr())
                self._cache[key] = lambda r, ml=ml: ml.solve(r, tol=1e-12, accel="cg")
            if len(self._cache) > 64:
                self._cache.pop(next(iter(self._cache)))
        return self._cache[key](b)


def _ode_half(u, dt):
    # exact flow of u' = u^5 over dt/2
    den = 1 - 2 * dt * u ** 4
    if np.any(den <= 0):
        return None
    return u * den ** -0.25


def step(dom: DiscreteDomain, u: np.ndarray, dt: float, diff: _Diffusion | None = None,
         scheme: str = "strang-split", u_prev=None, dt_prev=None):
    """One step of size ``dt``; returns ``None`` when the ODE branch blows up.

    ``strang-split``: exact nonlinear half step, backward-Euler diffusion
    ``(M + dt K) u = M u``, exact nonlinear half step.  ``imex-bdf2``:
    implicit diffusion, explicit nonlinearity (needs ``u_prev``; falls back
    to IMEX Euler on the first step).
    """
    diff = diff or _Diffusion(dom)
    M = dom.mass
    if scheme == "strang-split":
        v = _ode_half(u, dt)
        if v is None:
            return None
        v = diff.solve(dt, M * v)
        return _ode_half(v, dt)
    if u_prev is None or dt_prev != dt:
        return diff.solve(dt, M * (u + dt * u ** 5))
    # (3/2 u' - 2 u + 1/2 u_prev)/dt = -A u' + 2 f(u) - f(u_prev)
    rhs = M * (2 * u - 0.5 * u_prev + dt * (2 * u ** 5 - u_prev ** 5))
    return diff.solve(dt / 1.5, rhs / 1.5)


def _measure(dom, u):
    j = int(np.argmax(np.abs(u)))
    s = float(abs(u[j]))
    return s, dom.points[j].copy()


def evolve(dom: DiscreteDomain, u0: np.ndarray, cfg: EvolveConfig) -> Trajectory:
    """Integrate from ``u0`` until blow-up, decay or the horizon.

    Raises
    ------
    SchemeError
        Non-finite values without the threshold tripping.
    """
    cfg.validate()
    u = np.asarray(u0, float).copy()
    if not np.all(np.isfinite(u)):
        raise ValueError("u0 not finite")
    s0, x0 = _measure(dom, u)
    M_max = cfg.M_max if cfg.M_max is not None else 1000 * s0
    M_max = max(M_max, 10 * s0)
    diff = _Diffusion(dom)
    tr = Trajectory()

    def record(t, u, dt):
        s, x = _measure(dom, u)
        tr.times.append(t)
        tr.sup.append(s)
        tr.mu_hat.append((ALPHA3 / s) ** 2 if s > 0 else np.inf)
        tr.xi_hat.append(x)
        tr.energy.append(energy(dom, u) if cfg.energy_every and len(tr.times) % cfg.energy_every == 0 else np.nan)
        tr.dt.append(dt)

    t, dt = 0.0, cfg.dt0
    record(t, u, 0.0)
    u_prev, dt_prev = None, None
    nstep = 0
    while t < cfg.horizon * (1 - 1e-12):
        s = float(np.max(np.abs(u)))
        dt = min(dt, cfg.dt_max, cfg.safety / max(s ** 4, 1e-300))
        if dt < cfg.dt_min:
            tr.status = "blown-up"
            tr.T_est = t + 1 / (4 * s ** 4)
            break
        # quantize dt on a sqrt(2) ladder so the diffusion factorizations are reused
        dt = cfg.dt_max * 2.0 ** (np.floor(2 * np.log2(dt / cfg.dt_max)) / 2)
        if t + dt > cfg.horizon:
            dt = cfg.horizon - t
        un = step(dom, u, dt, diff, cfg.scheme, u_prev, dt_prev)
        if un is None:
            dt /= 2
            tr.rejected += 1
            continue
        if not np.all(np.isfinite(un)):
            raise SchemeError(f"non-finite values at t={t:g}")
        change = np.max(np.abs(un - u)) / max(s, 1e-300)
        if change > cfg.rel_change:
            dt /= 2
            tr.rejected += 1
            continue
        u_prev, dt_prev = u, dt
        u, t = un, t + dt
        nstep += 1
        record(t, u, dt)
        if cfg.snapshot_every and nstep % cfg.snapshot_every == 0:
            tr.snapshots.append((t, u.copy()))
        s = tr.sup[-1]
        if s >= M_max:
            tr.status = "blown-up"
            tr.T_est = t + 1 / (4 * s ** 4)
            break
        if s <= cfg.decay_tol * s0:
            tr.status = "decayed"
            break
        if change < 0.25 * cfg.rel_change:
            dt *= np.sqrt(2)
    else:
        tr.status = "running"
    tr.final = u
    return tr


# ---------------------------------------------------------------- rates

def rate_estimate(traj: Trajectory | dict, window, min_drop: float = 2.0) -> dict:
    """Least-squares slope of ``ln(1/mu_hat)`` against ``t`` on ``window``.

    Returns slope, a 95% interval half width and the mu_hat drop factor.

    Raises
    ------
    ValueError
        Fewer than 5 samples, or ``mu_hat`` drops by less than ``min_drop``.
    """
    a = traj.arrays() if isinstance(traj, Trajectory) else traj
    t, mu = np.asarray(a["t"]), np.asarray(a["mu_hat"])
    m = (t >= window[0]) & (t <= window[1])
    if m.sum() < 5:
        raise ValueError("window too short: fewer than 5 samples")
    drop = float(mu[m].max() / mu[m].min())
    if drop < min_drop:
        raise ValueError(f"mu_hat drops only by {drop:.2f} on the window")
    x, y = t[m], np.log(1 / mu[m])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    n = len(x)
    s2 = float(np.sum((y - A @ coef) ** 2) / max(n - 2, 1))
    se = np.sqrt(s2 / np.sum((x - x.mean()) ** 2))
    return dict(slope=float(coef[0]), ci=float(1.96 * se), drop=drop, n=int(n))


def decay_rate(traj: Trajectory, frac: float = 0.5) -> float:
    """``-d ln|u|_inf / dt`` fitted on the last ``frac`` of the run."""
    a = traj.arrays()
    t, s = a["t"], a["sup"]
    m = t >= t[0] + (1 - frac) * (t[-1] - t[0])
    return float(-np.polyfit(t[m], np.log(s[m]), 1)[0])


def energy_monotone(traj: Trajectory, tol: float = 1e-9) -> bool:
    e = np.asarray(traj.energy)
    e = e[np.isfinite(e)]
    return bool(np.all(np.diff(e) <= tol * max(1.0, np.max(np.abs(e)))))


# ---------------------------------------------------------------- Kaplan

def kaplan_threshold(dom: DiscreteDomain, phi1: np.ndarray, lam1: float, profile: np.ndarray) -> float:
    """Amplitude above which ``alpha * profile`` must blow up.

    With ``w = phi1 / int phi1`` and ``y = int u w``, Jensen gives
    ``y' >= -lam1 y + y^5``, which blows up once ``y > lam1^{1/4}``.
    """
    m = dom.mass
    w = phi1 / np.sum(m * phi1)
    return float(lam1 ** 0.25 / np.sum(m * profile * w))


def kaplan_dichotomy(dom: DiscreteDomain, phi: np.ndarray, alphas, cfg: EvolveConfig,
                     jobs: int = 1) -> dict:
    """Classify ``u0 = alpha phi`` for each ``alpha``.

    Returns per-alpha status, decay rates for decayed runs, the bracket
    ``(alpha_decay, alpha_blow)`` and whether the classification is
    monotone in ``alpha``.
    """
    phi = np.asarray(phi, float)
    if np.any(phi < 0) or not np.any(phi):
        raise ValueError("phi must be nonnegative and nonzero")
    alphas = np.sort(np.asarray(alphas, float))
    out = []
    for a in alphas:
        tr = evolve(dom, a * phi, cfg)
        rate = decay_rate(tr) if tr.status == "decayed" else np.nan
        out.append(dict(alpha=float(a), status=tr.status, rate=rate, T_est=tr.T_est,
                        energy_monotone=energy_monotone(tr)))
    st = [o["status"] for o in out]
    dec = [o["alpha"] for o in out if o["status"] == "decayed"]
    blw = [o["alpha"] for o in out if o["status"] == "blown-up"]
    monotone = not (dec and blw and max(dec) > min(blw))
    bracket = (max(dec) if dec else np.nan, min(blw) if blw else np.nan)
    undecided = [o["alpha"] for o in out if o["status"] not in ("decayed", "blown-up")]
    return dict(runs=out, statuses=st, bracket=bracket, monotone=monotone, undecided=undecided)


def threshold_bisection(dom: DiscreteDomain, profile: np.ndarray, lo: float, hi: float,
                        cfg: EvolveConfig, iters: int = 30, rtol: float = 1e-12) -> dict:
    """Bisection on the amplitude of ``alpha * profile`` between decay and blow-up.

    ``lo`` must decay and ``hi`` must blow up.  Returns the final bracket,
    its widths and the trajectory of the last ``lo`` run (the one shadowing
    the threshold solution longest on the decaying side) and of ``hi``.
    """
    tlo = evolve(dom, lo * profile, cfg)
    thi = evolve(dom, hi * profile, cfg)
    if tlo.status != "decayed" or thi.status != "blown-up":
        raise ValueError(f"bad bracket: lo {tlo.status}, hi {thi.status}")
    widths = [hi - lo]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        tm = evolve(dom, mid * profile, cfg)
        if tm.status == "blown-up":
            hi, thi = mid, tm
        elif tm.status == "decayed":
            lo, tlo = mid, tm
        else:
            break
        widths.append(hi - lo)
        if hi - lo <= rtol * hi:
            break
    return dict(lo=lo, hi=hi, widths=widths, traj_lo=tlo, traj_hi=thi)


# ---------------------------------------------------------------- linear problems

def discrete_green(dom: DiscreteDomain, gamma: float, node: int = 0) -> np.ndarray:
    """``c3 (K - gamma M)^{-1} e_node``, the grid Green function of ``-Lap - gamma``."""
    e = np.zeros(dom.n)
    e[node] = 1.0
    A = (dom.K - gamma * sp.diags(dom.mass)).tocsc()
    return C3 * sla.spsolve(A, e)


def linear_inhomogeneous(dom: DiscreteDomain, gamma: float, f, T: float, dt: float,
                         probe: int = 0, lam1: float | None = None) -> dict:
    """BDF2 for ``v_t = Lap v + gamma v + f(t)``, ``v(0) = 0``.

    ``f(t)`` returns nodal values.  Records ``v`` at node ``probe`` and the
    sup norm at every step.

    Raises
    ------
    ValueError
        ``gamma >= lam1`` (exponential instability).
    """
    if lam1 is not None and gamma >= lam1:
        raise ValueError("gamma >= lambda1: the linear problem is unstable")
    n = int(round(T / dt))
    diff = _Diffusion(dom)
    M = dom.mass
    v = np.zeros(dom.n)
    t = dt * np.arange(n + 1)
    probe_v = np.zeros(n + 1)
    sup = np.zeros(n + 1)
    # first step: backward Euler
    v_prev = v
    v = diff.solve(dt, M * (v + dt * f(t[1])), shift=gamma)
    probe_v[1], sup[1] = v[probe], np.max(np.abs(v))
    for i in range(2, n + 1):
        rhs = M * (2 * v - 0.5 * v_prev + dt * f(t[i]))
        v_prev, v = v, diff.solve(dt / 1.5, rhs / 1.5, shift=gamma)
        probe_v[i], sup[i] = v[probe], np.max(np.abs(v))
    return dict(t=t, probe=probe_v, sup=sup, final=v)


def edge_tracking(dom: DiscreteDomain, u0: np.ndarray, cfg: EvolveConfig, T: float,
                  width: float = 1e-9, sep_tol: float = 1e-2, max_segments: int = 400) -> Trajectory:
    """Shadow the threshold solution through ``u0`` up to time ``T``.

    Repeated amplitude bisection: bracket ``alpha * u`` between decay
    (sup norm halves) and blow-up, run both sides until their sup norms
    differ by ``sep_tol``, restart from the decaying side's state just
    before that time.  The concatenated record is a pseudo-orbit on the
    threshold manifold.
    """
    from dataclasses import replace

    u = np.asarray(u0, float).copy()
    out = Trajectory()
    t_off = 0.0
    for _ in range(max_segments):
        s0 = float(np.max(np.abs(u)))
        sub = replace(cfg, horizon=max(T - t_off, cfg.dt_min) + 1.0, decay_tol=0.5, M_max=10 * s0,
                      snapshot_every=1, energy_every=1)
        lo, hi = 0.9, 1.1
        while evolve(dom, lo * u, replace(sub, snapshot_every=0)).status != "decayed":
            lo -= 0.1 * (1.1 - lo) + 0.05
            if lo <= 0:
                raise RuntimeError("no decaying amplitude found")
        while evolve(dom, hi * u, replace(sub, snapshot_every=0)).status != "blown-up":
            hi *= 1.5
        while hi - lo > width * hi:
            mid = 0.5 * (lo + hi)
            st = evolve(dom, mid * u, replace(sub, snapshot_every=0)).status
            if st == "blown-up":
                hi = mid
            else:
                lo = mid
        tl = evolve(dom, lo * u, sub)
        th = evolve(dom, hi * u, sub)
        al, ah = tl.arrays(), th.arrays()
        sh = np.interp(al["t"], ah["t"], ah["sup"], right=np.inf)
        sep = np.abs(sh - al["sup"]) > sep_tol * al["sup"]
        j = int(np.argmax(sep)) if np.any(sep) else len(al["t"]) - 1
        j = max(1, int(0.8 * j))
        t_end = al["t"][j]
        keep = slice(0 if not out.times else 1, j + 1)
        out.times += list(al["t"][keep] + t_off)
        out.sup += list(al["sup"][keep])
        out.mu_hat += list(al["mu_hat"][keep])
        out.xi_hat += list(al["xi"][keep])
        out.energy += list(al["energy"][keep])
        out.dt += list(al["dt"][keep])
        snap = {round(tt, 15): v for tt, v in tl.snapshots}
        u = snap[round(t_end, 15)]
        t_off += t_end
        log.debug("edge segment: t=%.5f bracket=(%.12f, %.12f) mu_hat=%.5g", t_off, lo, hi, out.mu_hat[-1])
        if t_off >= T:
            out.status = "running"
            break
    else:
        out.status = "stalled"
    out.final = u
    return out
