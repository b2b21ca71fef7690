"""Supported domains and their finite-difference Dirichlet Laplacians.

Two discretizations are provided:

* ``full3d``: a uniform Cartesian grid with the 7-point stencil.  Curved
  boundaries are handled with a symmetric ghost-point treatment: a link that
  leaves the domain at fraction ``theta`` of the spacing contributes
  ``1/(theta h^2)`` to the diagonal and moves the boundary value to the
  right-hand side.  This keeps the operator symmetric (and an M-matrix).
* ``radial``: a vertex-centred finite-volume reduction of
  ``u'' + (2/r) u'`` on ``[0, R]``.  The first cell is the half cell
  ``[0, h/2]`` so that ``u'(0) = 0`` is built in.

In both cases the discrete problem is written as ``K u = M f + b`` with
``K`` symmetric (stiffness), ``M`` diagonal (cell volumes) and ``b`` the
boundary lift, so that ``-Lap u ~ M^{-1} K u``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from scipy.special import eval_legendre

KINDS = ("unit-ball", "ball", "box", "perturbed-ball")
DEFORMATIONS = ("ellipsoid", "p2", "p3")
MIN_RESOLUTION = 8
THETA_MIN = 1e-3


class DomainError(ValueError):
    """Invalid domain specification."""


@dataclass(frozen=True)
class DomainSpec:
    """Description of a supported domain.

    Parameters
    ----------
    kind : str
        One of ``unit-ball``, ``ball``, ``box``, ``perturbed-ball``.
    resolution : int
        Nodes per axis (full3d) or radial node count including ``r=0`` and
        the boundary node (radial).
    mode : str
        ``full3d`` or ``radial``.
    radius : float
        Ball radius (ignored unless ``kind == 'ball'``).
    edges : tuple of float
        Box edge lengths; the box is ``[0,lx] x [0,ly] x [0,lz]``.
    deformation : str
        Perturbation id for ``perturbed-ball``: ``ellipsoid`` maps
        ``x -> x + t (x1, 0, 0)``; ``p2``/``p3`` map the unit sphere to
        ``r = 1 + t P_n(cos theta)``.
    amplitude : float
        Perturbation amplitude ``t``.
    """

    kind: str = "unit-ball"
    resolution: int = 64
    mode: str = "full3d"
    radius: float = 1.0
    edges: tuple = (1.0, 1.0, 1.0)
    deformation: str = "ellipsoid"
    amplitude: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}")
        if self.mode not in ("full3d", "radial"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if int(self.resolution) < MIN_RESOLUTION and not (self.mode == "radial" and self.resolution >= 4):
            raise DomainError(f"resolution {self.resolution} < {MIN_RESOLUTION}")
        if self.kind == "ball" and not self.radius > 0:
            raise DomainError("radius must be positive")
        if self.kind == "box" and (len(self.edges) != 3 or min(self.edges) <= 0):
            raise DomainError("box edges must be three positive lengths")
        if self.kind == "perturbed-ball":
            if self.deformation not in DEFORMATIONS:
                raise DomainError(f"unknown deformation {self.deformation!r}")
            # ellipsoid: 1+t>0; Legendre: 1+tP_n>0 for |t|<1.  Keep a margin.
            if not abs(self.amplitude) < 0.5:
                raise DomainError("perturbation amplitude too large: map not injective")
        if self.mode == "radial" and self.kind not in ("unit-ball", "ball"):
            raise DomainError("radial mode needs a rotationally symmetric domain")

    @property
    def R(self) -> float:
        return self.radius if self.kind == "ball" else 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    def key(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:16]


def boundary_radius(spec: DomainSpec, d: np.ndarray) -> np.ndarray:
    """Distance from the origin to the boundary along unit directions ``d``.

    Only for the star-shaped kinds (balls and perturbed balls).
    """
    d = np.atleast_2d(d)
    if spec.kind in ("unit-ball", "ball"):
        return np.full(len(d), spec.R)
    t = spec.amplitude
    if spec.deformation == "ellipsoid":
        return 1.0 / np.sqrt(d[:, 0] ** 2 / (1 + t) ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2)
    n = 2 if spec.deformation == "p2" else 3
    return 1.0 + t * eval_legendre(n, d[:, 2])


def level(spec: DomainSpec, x: np.ndarray) -> np.ndarray:
    """Signed level function, negative inside the domain."""
    x = np.atleast_2d(x)
    if spec.kind == "box":
        lo = -x
        hi = x - np.asarray(spec.edges)
        return np.max(np.concatenate([lo, hi], axis=1), axis=1)
    r = np.linalg.norm(x, axis=1)
    d = np.where(r[:, None] > 0, x / np.where(r > 0, r, 1.0)[:, None], np.array([0.0, 0.0, 1.0]))
    return r - boundary_radius(spec, d)


def _fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = np.pi * (1 + 5 ** 0.5) * k
    s = np.sqrt(1 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Grid, stiffness/mass pair and boundary data for one domain.

    Attributes
    ----------
    spec : DomainSpec
    points : (n, 3) array
        Unknown (interior) node coordinates.  Radial nodes sit on the x axis.
    h : ndarray
        Spacing per axis (3,) or the radial spacing (1,).
    K : csr_matrix
        Symmetric stiffness, ``K u ~ -M Lap u``.
    mass : (n,) array
        Diagonal of ``M``.
    link_node, link_point, link_weight : arrays
        Boundary links.  The lift of Dirichlet data ``g`` is
        ``b[link_node] += link_weight * g(link_point)``.
    dist : (n,) array
        Distance from each unknown to the boundary.
    axes : list of arrays
        Grid coordinates per axis (full3d) or ``[r]`` including the
        boundary node (radial).
    index : ndarray of int
        Grid-shaped map from grid node to unknown number, -1 if not an
        unknown.
    """

    spec: DomainSpec
    points: np.ndarray
    h: np.ndarray
    K: sp.csr_matrix
    mass: np.ndarray
    link_node: np.ndarray
    link_point: np.ndarray
    link_weight: np.ndarray
    dist: np.ndarray
    axes: list
    index: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.mass)

    @property
    def radial(self) -> bool:
        return self.spec.mode == "radial"

    @property
    def A(self) -> sp.csr_matrix:
        """Symmetric form ``M^{-1/2} K M^{-1/2}`` of ``-Lap``."""
        if "A" not in self._cache:
            s = sp.diags(1.0 / np.sqrt(self.mass))
            self._cache["A"] = (s @ self.K @ s).tocsr()
        return self._cache["A"]

    def lift(self, g) -> np.ndarray:
        """Right-hand side contribution of Dirichlet data ``g(points)``."""
        b = np.zeros(self.n)
        if len(self.link_node):
            np.add.at(b, self.link_node, self.link_weight * np.asarray(g(self.link_point), float))
        return b

    def volume(self) -> float:
        """Exact (or quadrature) volume of the continuous domain."""
        s = self.spec
        if s.kind == "box":
            return float(np.prod(s.edges))
        if s.kind in ("unit-ball", "ball"):
            return 4 * np.pi * s.R ** 3 / 3
        d = _fibonacci_sphere(200000)
        return float(4 * np.pi * np.mean(boundary_radius(s, d) ** 3) / 3)


def _build_radial(spec: DomainSpec) -> DiscreteDomain:
    N = int(spec.resolution)
    R = spec.R
    h = R / (N - 1)
    r = np.arange(N) * h
    n = N - 1
    rm = np.maximum(r[:n] - h / 2, 0.0)
    rp = r[:n] + h / 2
    mass = 4 * np.pi / 3 * (rp ** 3 - rm ** 3)
    area = 4 * np.pi * rp ** 2  # face j+1/2
    c = area / h
    main = c.copy()
    main[1:] += c[:-1]
    K = sp.diags([main, -c[:-1], -c[:-1]], [0, 1, -1], format="csr")
    pts = np.column_stack([r[:n], np.zeros(n), np.zeros(n)])
    return DiscreteDomain(
        spec=spec, points=pts, h=np.array([h]), K=K, mass=mass,
        link_node=np.array([n - 1]), link_point=np.array([[R, 0.0, 0.0]]),
        link_weight=np.array([c[-1]]), dist=R - r[:n], axes=[r],
        index=np.r_[np.arange(n), -1],
    )


def _crossing(spec: DomainSpec, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Fraction s in (0,1] where the segment p->q leaves the domain."""
    if spec.kind == "box":
        e = np.asarray(spec.edges)
        s = np.ones(len(p))
        dq = q - p
        for a in range(3):
            with np.errstate(divide="ignore", invalid="ignore"):
                s_lo = np.where(dq[:, a] < 0, -p[:, a] / dq[:, a], np.inf)
                s_hi = np.where(dq[:, a] > 0, (e[a] - p[:, a]) / dq[:, a], np.inf)
            s = np.minimum(s, np.minimum(s_lo, s_hi))
        return s
    if spec.kind in ("unit-ball", "ball"):
        d = q - p
        a = np.sum(d * d, 1)
        b = 2 * np.sum(p * d, 1)
        c = np.sum(p * p, 1) - spec.R ** 2
        return (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    # perturbed: vectorized bisection on the level function
    lo = np.zeros(len(p))
    hi = np.ones(len(p))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = level(spec, p + mid[:, None] * (q - p)) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _build_full3d(spec: DomainSpec) -> DiscreteDomain:
    N = int(spec.resolution)
    if spec.kind == "box":
        axes = [np.linspace(0.0, L, N) for L in spec.edges]
    else:
        B = float(np.max(boundary_radius(spec, _fibonacci_sphere(20000)))) * (1 + 1e-9)
        axes = [np.linspace(-B, B, N)] * 3
    h = np.array([a[1] - a[0] for a in axes])
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    tol = 1e-12 * float(np.max(h))
    inside = (level(spec, X) < -tol).reshape(N, N, N)
    index = -np.ones((N, N, N), int)
    index[inside] = np.arange(inside.sum())
    ijk = np.argwhere(inside)
    pts = np.column_stack([axes[a][ijk[:, a]] for a in range(3)])
    n = len(pts)
    vol = float(np.prod(h))
    mass = np.full(n, vol)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    lnode, lpt, lw = [], [], []
    me = np.arange(n)
    for a in range(3):
        for sgn in (-1, 1):
            nb = ijk.copy()
            nb[:, a] += sgn
            ok = (nb[:, a] >= 0) & (nb[:, a] < N)
            j = np.full(n, -1)
            j[ok] = index[nb[ok, 0], nb[ok, 1], nb[ok, 2]]
            w = vol / h[a] ** 2
            reg = j >= 0
            rows.append(me[reg])
            cols.append(j[reg])
            vals.append(np.full(reg.sum(), -w))
            diag[reg] += w
            out = ~reg
            if out.any():
                p = pts[out]
                q = p.copy()
                q[:, a] += sgn * h[a]
                s = _crossing(spec, p, q)
                s = np.clip(s, THETA_MIN, 1.0)
                wb = w / s
                diag[out] += wb
                lnode.append(me[out])
                lpt.append(p + s[:, None] * (q - p))
                lw.append(wb)
    rows.append(me)
    cols.append(me)
    vals.append(diag)
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    K = (0.5 * (K + K.T)).tocsr()
    dom = DiscreteDomain(
        spec=spec, points=pts, h=h, K=K, mass=mass,
        link_node=np.concatenate(lnode) if lnode else np.zeros(0, int),
        link_point=np.concatenate(lpt) if lpt else np.zeros((0, 3)),
        link_weight=np.concatenate(lw) if lw else np.zeros(0),
        dist=np.zeros(n), axes=axes, index=index,
    )
    object.__setattr__(dom, "dist", boundary_distance(dom, pts))
    return dom


def build_domain(spec: DomainSpec) -> DiscreteDomain:
    """Assemble grid and operator for ``spec``."""
    spec.validate()
    if spec.mode == "radial":
        return _build_radial(spec)
    return _build_full3d(spec)


def _boundary_tree(dom: DiscreteDomain):
    if "tree" not in dom._cache:
        d = _fibonacci_sphere(400000)
        bp = d * boundary_radius(dom.spec, d)[:, None]
        dom._cache["tree"] = cKDTree(bp)
    return dom._cache["tree"]


def boundary_distance(dom: DiscreteDomain, x) -> np.ndarray | float:
    """Distance from ``x`` to the boundary.

    Exact for balls and boxes; for perturbed balls it is the distance to a
    dense boundary sample (400k points, spacing about 6e-3).
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    s = dom.spec
    lv = level(s, x)
    if np.any(lv > 1e-12):
        raise DomainError("point outside the closed domain")
    if s.kind == "box":
        e = np.asarray(s.edges)
        d = np.min(np.concatenate([x, e - x], 1), 1)
    elif s.kind in ("unit-ball", "ball"):
        d = s.R - np.linalg.norm(x, axis=1)
    else:
        tree = _boundary_tree(dom)
        d, _ = tree.query(x)
    d = np.maximum(d, 0.0)
    return float(d[0]) if single else d
