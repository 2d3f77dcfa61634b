"""Quasicircles and quasiconformal extension of boundary data from a square.

The extension of data ``b`` on the boundary of a square ``D`` follows

    u = phi2^-1 o BA(h) o phi1,    h = phi2 o b o phi1^-1 on the real line,

where ``phi1`` maps ``D`` conformally onto the upper half-plane (Jacobi sn of
a 1:2 rectangle), ``phi2`` maps the region bounded by ``b(dD)`` onto the
half-plane (boundary correspondence from Symm's integral equation, interior
values by a barycentric Cauchy formula) and ``BA`` is the averaging extension
of a line homeomorphism.
"""

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import ellipj, ellipk

from . import geometry
from .errors import (
    ImageNotSimple,
    ModulusUnbounded,
    NotQuasisymmetric,
    NotSimple,
    SchemaError,
)
from .planar_maps import GridMap, Rect
from .quasisymmetry import Homeo1D, m_condition

M_LIMIT = 1e6
HALFPLANE_WINDOW = 4.0


@dataclass
class PlanarCurve:
    vertices: np.ndarray
    closed: bool = True

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
            raise ValueError("need at least three 2-D vertices")
        if not np.all(np.isfinite(V)):
            raise ValueError("non-finite vertex")
        seg = np.diff(np.vstack([V, V[:1]]) if self.closed else V, axis=0)
        if np.any(np.all(seg == 0, axis=1)):
            raise ValueError("consecutive vertices must be distinct")
        self.vertices = V

    def is_simple(self):
        if self.closed:
            return geometry.is_simple_closed(self.vertices)
        return geometry.is_simple_open(self.vertices)

    def length(self):
        V = np.vstack([self.vertices, self.vertices[:1]]) if self.closed else self.vertices
        return float(geometry.cumulative_length(V)[-1])

    def to_dict(self):
        return {"closed": bool(self.closed), "vertices": self.vertices.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(np.array(d["vertices"], dtype=float), bool(d.get("closed", True)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"invalid PlanarCurve JSON: {exc}") from exc


@dataclass
class BoundaryMap:
    """Samples of a map from the boundary of a square to the plane.

    ``params`` are counter-clockwise arc-length positions on the square
    boundary, starting at its lower-left corner, in ``[0, 4*side)``.
    """

    params: np.ndarray
    points: np.ndarray
    side: float = 1.0
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.params.ndim != 1 or self.points.shape != (len(self.params), 2):
            raise ValueError("params (n,) and points (n, 2) required")
        if np.any(np.diff(self.params) <= 0) or self.params[0] < 0 or self.params[-1] >= 4 * self.side:
            raise ValueError("params must increase within [0, 4*side)")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("non-finite boundary point")

    @property
    def perimeter(self):
        return 4.0 * self.side

    def __call__(self, p):
        """Piecewise-linear periodic interpolation in the parameter."""
        P = self.perimeter
        t = np.concatenate([self.params, [self.params[0] + P]])
        V = np.vstack([self.points, self.points[:1]])
        q = np.mod(np.asarray(p, dtype=float) - self.params[0], P) + self.params[0]
        return np.stack([np.interp(q, t, V[:, 0]), np.interp(q, t, V[:, 1])], axis=-1)

    def curve(self):
        return PlanarCurve(self.points, closed=True)

    @classmethod
    def from_function(cls, f, n_per_side=64, side=1.0, origin=(0.0, 0.0)):
        """Sample ``f(x, y)`` (vectorized) at ``4*n_per_side`` boundary points."""
        p = np.arange(4 * n_per_side) * (side / n_per_side)
        xy = square_boundary_points(p, side, origin)
        U, V = f(xy[:, 0], xy[:, 1])
        return cls(p, np.stack([np.broadcast_to(U, p.shape), np.broadcast_to(V, p.shape)], axis=-1), side, origin)

    def to_dict(self):
        return {
            "params": self.params.tolist(),
            "points": self.points.tolist(),
            "side": self.side,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                np.array(d["params"], dtype=float),
                np.array(d["points"], dtype=float),
                float(d.get("side", 1.0)),
                tuple(float(v) for v in d.get("origin", (0.0, 0.0))),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"invalid BoundaryMap JSON: {exc}") from exc

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc


def square_boundary_points(p, side=1.0, origin=(0.0, 0.0)):
    """Points at counter-clockwise arc length ``p`` from the lower-left corner."""
    q = np.mod(np.asarray(p, dtype=float), 4 * side) / side
    e = np.floor(q).astype(int)
    f = q - e
    x = np.select([e == 0, e == 1, e == 2, e >= 3], [f, np.ones_like(f), 1 - f, np.zeros_like(f)])
    y = np.select([e == 0, e == 1, e == 2, e >= 3], [np.zeros_like(f), f, np.ones_like(f), 1 - f])
    return np.stack([origin[0] + side * x, origin[1] + side * y], axis=-1)


def square_boundary_params(xy, side=1.0, origin=(0.0, 0.0)):
    """Inverse of :func:`square_boundary_points` for points on the boundary."""
    x = (xy[..., 0] - origin[0]) / side
    y = (xy[..., 1] - origin[1]) / side
    tol = 1e-12
    p = np.where(
        y <= tol,
        x,
        np.where(x >= 1 - tol, 1 + y, np.where(y >= 1 - tol, 3 - x, 4 - y)),
    )
    return np.mod(p, 4.0) * side


# ---------------------------------------------------------------- quasicircles


def _triple_scan(V, pair_arcs):
    D = np.linalg.norm(V[:, None] - V[None], axis=-1)
    best = (1.0, (0, 0, 0))
    n = len(V)
    for i in range(n):
        S = D[i][None, :] + D  # S[j, k] = |z_i - z_k| + |z_j - z_k|
        arc = pair_arcs(i)  # (n, n) bool: k on the relevant arc between i and j
        S = np.where(arc, S, -np.inf)
        kmax = np.argmax(S, axis=1)
        num = S[np.arange(n), kmax]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(D[i] > 0, num / D[i], -np.inf)
        j = int(np.argmax(ratio))
        if ratio[j] > best[0]:
            best = (float(ratio[j]), (i, j, int(kmax[j])))
    return best


def quasicircle_constant(c, max_vertices=512):
    """Best constant in the arc condition over sampled vertex triples.

    For a closed curve z3 ranges over the shorter arc between z1 and z2; for an
    open arc over the sub-arc between them.
    """
    if not c.is_simple():
        raise NotSimple("curve self-intersects")
    V = c.vertices
    if len(V) > max_vertices:
        V = V[np.linspace(0, len(V) - 1, max_vertices).round().astype(int)]
    n = len(V)
    idx = np.arange(n)
    if c.closed:
        cum = geometry.cumulative_length(np.vstack([V, V[:1]]))
        total = cum[-1]
        s = cum[:-1]

        def arcs(i):
            fwd_len = np.mod(s - s[i], total)  # length i -> j forward
            k_fwd = np.mod(s[None, :] - s[i], total) <= fwd_len[:, None]
            use_fwd = fwd_len <= total / 2
            return np.where(use_fwd[:, None], k_fwd, ~k_fwd | (idx[None, :] == i))

    else:

        def arcs(i):
            lo = np.minimum(i, idx)[:, None]
            hi = np.maximum(i, idx)[:, None]
            return (idx[None, :] >= lo) & (idx[None, :] <= hi)

    val, (i, j, k) = _triple_scan(V, arcs)
    return {"c_best": val, "witness": [V[i].tolist(), V[j].tolist(), V[k].tolist()]}


# ---------------------------------------------------------- square -> half-plane


@lru_cache(maxsize=None)
def _sn_parameter():
    """Parameter m with K(1-m) / K(m) = 2, i.e. a 1:2 rectangle."""
    return brentq(lambda m: ellipk(1 - m) / ellipk(m) - 2.0, 1e-6, 0.5, xtol=1e-15, rtol=1e-15)


def sn_complex(u, v, m):
    """Jacobi sn(u + i v | m) via the addition formula."""
    s, c, d, _ = ellipj(u, m)
    s1, c1, d1, _ = ellipj(v, 1 - m)
    den = c1 * c1 + m * s * s * s1 * s1
    with np.errstate(divide="ignore", invalid="ignore"):
        return (s * d1 + 1j * c * d * s1 * c1) / den


def phi_square(xy):
    """Conformal map of the unit square onto the upper half-plane.

    Bottom midpoint -> 0, bottom corners -> -1, 1, top corners -> -1/k, 1/k,
    top midpoint -> infinity.
    """
    m = _sn_parameter()
    K = ellipk(m)
    xy = np.asarray(xy, dtype=float)
    u = 2 * K * (xy[..., 0] - 0.5)
    v = 2 * K * xy[..., 1]
    w = sn_complex(u, v, m)
    # points on the real-axis edges are exactly real
    w = np.where(xy[..., 1] == 0, w.real + 0j, w)
    return w


def square_to_halfplane(resolution=64, window=HALFPLANE_WINDOW):
    """Sample the square -> half-plane map on the unit square.

    Nodes whose image leaves ``|x| <= window, 0 <= y <= window`` are undefined.
    """
    n = int(resolution)
    g = GridMap.from_function(lambda X, Y: (X, Y), Rect(0.0, 0.0, 1.0, 1.0), 1.0 / n)
    w = phi_square(g.nodes())
    ok = np.isfinite(w) & (np.abs(w.real) <= window) & (w.imag >= 0) & (w.imag <= window)
    vals = np.where(ok[..., None], np.stack([w.real, w.imag], axis=-1), np.nan)
    return GridMap(g.domain, g.spacing, vals, ok, tag="sn")


# ------------------------------------------------------------ Beurling-Ahlfors


class _LineHomeo:
    """Piecewise-linear line homeomorphism with affine continuation and its antiderivative."""

    def __init__(self, x, y, left_slope, right_slope):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.ls = float(left_slope)
        self.rs = float(right_slope)
        seg = np.diff(self.x) * 0.5 * (self.y[:-1] + self.y[1:])
        self.H = np.concatenate([[0.0], np.cumsum(seg)])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.x, self.y)
        out = np.where(t < self.x[0], self.y[0] + self.ls * (t - self.x[0]), out)
        return np.where(t > self.x[-1], self.y[-1] + self.rs * (t - self.x[-1]), out)

    def antiderivative(self, t):
        t = np.asarray(t, dtype=float)
        x, y = self.x, self.y
        k = np.clip(np.searchsorted(x, t, side="right") - 1, 0, len(x) - 2)
        dt = t - x[k]
        slope = (y[k + 1] - y[k]) / (x[k + 1] - x[k])
        inner = self.H[k] + y[k] * dt + 0.5 * slope * dt * dt
        dl = t - x[0]
        left = y[0] * dl + 0.5 * self.ls * dl * dl
        dr = t - x[-1]
        right = self.H[-1] + y[-1] * dr + 0.5 * self.rs * dr * dr
        return np.where(t < x[0], left, np.where(t > x[-1], right, inner))


def ba_values(hl, X, Y):
    """Averaging extension at points ``(X, Y)`` with ``Y >= 0``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Hp = hl.antiderivative(X + Y)
    Hm = hl.antiderivative(X - Y)
    H0 = hl.antiderivative(X)
    pos = Y > 0
    Ys = np.where(pos, Y, 1.0)
    alpha = np.where(pos, (Hp - Hm) / (2 * Ys), hl(X))
    beta = np.where(pos, (Hp - 2 * H0 + Hm) / (2 * Ys), 0.0)
    return alpha, beta


def beurling_ahlfors(h, domain=None, spacing=None, check=True):
    """Averaging extension of ``h`` (continued affinely with slope b/a).

    Returns ``F(x, y) = (alpha, beta)`` sampled on ``domain`` (default
    ``[0, a] x [0, a/2]``), with ``F(x, 0) = (h(x), 0)``.
    """
    a, b = h.a, h.b
    if check:
        M = m_condition(h).M
        if not M <= M_LIMIT:
            raise ModulusUnbounded(f"M = {M:.3g} exceeds {M_LIMIT:.0g}")
    if domain is None:
        domain = Rect(0.0, 0.0, a, a / 2)
    if spacing is None:
        spacing = a / 64
    hl = _LineHomeo(h.breakpoints, h.values, b / a, b / a)

    def f(X, Y):
        return ba_values(hl, X, Y)

    g = GridMap.from_function(f, domain, spacing, tag="ba")
    if domain.y0 == 0:
        # exact trace on the axis
        g.values[0, :, 0] = hl(g.nodes()[0, :, 0])
        g.values[0, :, 1] = 0.0
    return g


# ------------------------------------------------------------- curve -> disc


def _segment_log_integral(P, Q, Z):
    """``int_P^Q log|z - w| |dw|`` for every ``z`` in ``Z`` and segment ``P -> Q``."""
    d = Q - P
    L = np.abs(d)
    e = d / L
    rel = (Z[:, None] - P[None, :]) / e[None, :]
    x = rel.real
    bb = np.abs(rel.imag)

    def F(u):
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = u * u + bb * bb
            lg = np.where(r2 > 0, u * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
            at = np.where(bb > 0, 2 * bb * np.arctan(u / np.where(bb > 0, bb, 1.0)), 0.0)
        return 0.5 * (lg - 2 * u + at)

    return F(L[None, :] - x) - F(-x)


class CurveConformalMap:
    """Conformal map from the interior of a polygon onto the unit disc.

    Boundary correspondence comes from Symm's first-kind equation
    ``int log|z - w| sigma(w) |dw| = log|z - z0|`` with piecewise-constant
    density; ``2*pi*sigma`` is the derivative of the boundary angle.
    """

    def __init__(self, vertices, n_segments=512, n_dense=8192):
        V = np.asarray(vertices, dtype=float)
        Z = V[:, 0] + 1j * V[:, 1]
        self.scale = float(np.max(np.abs(Z[:, None] - Z[None])))
        self.shift = Z.mean()
        Zn = (Z - self.shift) / self.scale  # diameter 1, capacity < 1
        loop = np.concatenate([Zn, Zn[:1]])
        edge = np.abs(np.diff(loop))
        total = edge.sum()
        pieces = np.maximum(1, np.ceil(n_segments * edge / total).astype(int))
        pts = [loop[i] + (loop[i + 1] - loop[i]) * np.arange(pieces[i]) / pieces[i] for i in range(len(Zn))]
        nodes = np.concatenate(pts)
        P = nodes
        Q = np.roll(nodes, -1)
        mid = 0.5 * (P + Q)
        self.z0 = self._interior_point(loop)
        A = _segment_log_integral(P, Q, mid)
        rhs = np.log(np.abs(mid - self.z0))
        sigma = np.linalg.solve(A, rhs)
        L = np.abs(Q - P)
        sigma = np.maximum(sigma, 1e-12 * np.abs(sigma).max())
        mass = sigma * L
        mass /= mass.sum()
        self.nodes = nodes
        self.theta = 2 * np.pi * np.concatenate([[0.0], np.cumsum(mass)])  # at nodes + closing node
        self.s_nodes = np.concatenate([[0.0], np.cumsum(L)])
        # dense boundary samples for the Cauchy formula
        sd = np.linspace(0.0, self.s_nodes[-1], n_dense, endpoint=False)
        closed = np.concatenate([nodes, nodes[:1]])
        self.dense_z = np.interp(sd, self.s_nodes, closed.real) + 1j * np.interp(sd, self.s_nodes, closed.imag)
        th = np.interp(sd, self.s_nodes, self.theta)
        self.dense_zeta = np.exp(1j * th)
        thn = np.concatenate([th, [th[0] + 2 * np.pi]])
        thp = np.concatenate([[th[-1] - 2 * np.pi], th])
        self.dense_w = 0.5 * (thn[1:] - thp[:-1])

    @staticmethod
    def _interior_point(loop):
        lo = np.array([loop.real.min(), loop.imag.min()])
        hi = np.array([loop.real.max(), loop.imag.max()])
        g = np.linspace(0.02, 0.98, 21)
        X, Y = np.meshgrid(lo[0] + g * (hi[0] - lo[0]), lo[1] + g * (hi[1] - lo[1]))
        cand = np.stack([X.ravel(), Y.ravel()], axis=1)
        poly = np.stack([loop.real[:-1], loop.imag[:-1]], axis=1)
        inside = geometry.point_in_polygon(cand, poly)
        cand = cand[inside]
        dist = geometry.point_polyline_distance(cand, np.stack([loop.real, loop.imag], axis=1))
        k = int(np.argmax(dist))
        return cand[k, 0] + 1j * cand[k, 1]

    def angle_at_length(self, s):
        """Angle for arc length ``s`` (original units) from the first vertex."""
        return np.interp(np.mod(s / self.scale, self.s_nodes[-1]), self.s_nodes, self.theta)

    def boundary_angle(self, pts):
        """Angle of the image on the circle for points on the polygon boundary."""
        Z = ((pts[..., 0] + 1j * pts[..., 1]) - self.shift) / self.scale
        closed = np.concatenate([self.nodes, self.nodes[:1]])
        a, b = closed[:-1], closed[1:]
        ab = b - a
        t = np.clip(((Z[:, None] - a[None]) * np.conj(ab[None])).real / np.abs(ab[None]) ** 2, 0, 1)
        dist = np.abs(a[None] + t * ab[None] - Z[:, None])
        k = np.argmin(dist, axis=1)
        s = self.s_nodes[k] + t[np.arange(len(Z)), k] * np.abs(ab[k])
        return np.interp(s, self.s_nodes, self.theta)

    def inverse(self, zeta):
        """Disc -> polygon interior via the barycentric Cauchy formula."""
        zeta = np.asarray(zeta, dtype=complex)
        flat = zeta.ravel()
        out = np.empty(flat.shape, dtype=complex)
        wz = self.dense_w * self.dense_zeta
        for s0 in range(0, len(flat), 512):
            w = flat[s0 : s0 + 512]
            diff = self.dense_zeta[None, :] - w[:, None]
            hit = np.abs(diff) < 1e-14
            diff = np.where(hit, 1.0, diff)
            c = wz[None, :] / diff
            val = (c @ self.dense_z) / c.sum(axis=1)
            anyhit = hit.any(axis=1)
            if anyhit.any():
                val[anyhit] = self.dense_z[np.argmax(hit[anyhit], axis=1)]
            out[s0 : s0 + 512] = val
        res = out.reshape(zeta.shape) * self.scale + self.shift
        return np.stack([res.real, res.imag], axis=-1)


def _cayley(phi):
    """Angle on the unit circle -> real axis, angle 0 -> infinity."""
    return -1.0 / np.tan(0.5 * phi)


def arc_length_pullback(b):
    """Homeo1D from boundary parameter to arc length along the image curve."""
    pts = np.vstack([b.points, b.points[:1]])
    s = geometry.cumulative_length(pts)
    t = np.concatenate([b.params - b.params[0], [b.perimeter]])
    return Homeo1D(t, s)


def extend_on_square(b, resolution=32, n_segments=512):
    """Quasiconformal extension of boundary data into the square.

    Returns a GridMap on the square with spacing ``side / resolution`` whose
    boundary nodes equal ``b`` exactly.
    """
    curve = b.curve()
    if not curve.is_simple():
        raise ImageNotSimple("boundary image self-intersects")
    if geometry.signed_area(curve.vertices) <= 0:
        raise ImageNotSimple("boundary image is negatively oriented")
    try:
        M = m_condition(arc_length_pullback(b)).M
    except ValueError as exc:
        raise NotQuasisymmetric(str(exc)) from exc
    if not M <= M_LIMIT:
        raise NotQuasisymmetric(f"arc-length modulus M = {M:.3g} exceeds {M_LIMIT:.0g}")

    side, origin = b.side, b.origin
    cmap = CurveConformalMap(curve.vertices, n_segments=n_segments)

    # boundary correspondence on the real line, top midpoint -> infinity
    n_b = 4096
    p = (np.arange(n_b) + 0.5) * (4.0 / n_b)  # unit-square parameters; skips 2.5
    p = np.concatenate([p, [0.5, 1.0]])
    sq = square_boundary_points(p)
    x1 = phi_square(sq).real
    pcum = geometry.cumulative_length(np.vstack([b.points, b.points[:1]]))
    tpar = np.concatenate([b.params, [b.params[0] + b.perimeter]])

    def angle(par):
        q = np.mod(par - b.params[0], b.perimeter) + b.params[0]
        return cmap.angle_at_length(np.interp(q, tpar, pcum))

    th_top = float(angle(np.array([2.5 * side]))[0])
    th = angle(p * side)
    x2 = _cayley(np.mod(th - th_top, 2 * np.pi))
    x_mid, x_corner = x2[-2], x2[-1]
    scale = x_corner - x_mid
    h_real = (x2 - x_mid) / scale
    order = np.argsort(x1)
    xs, hs = x1[order], h_real[order]
    keep = np.concatenate([[True], np.diff(xs) > 0])
    xs, hs = xs[keep], hs[keep]
    if np.any(np.diff(hs) <= 0):
        hs = np.maximum.accumulate(hs)
        keep = np.concatenate([[True], np.diff(hs) > 0])
        xs, hs = xs[keep], hs[keep]
    q = max(2, len(xs) // 8)
    ls = (hs[q] - hs[0]) / (xs[q] - xs[0])
    rs = (hs[-1] - hs[-1 - q]) / (xs[-1] - xs[-1 - q])
    hl = _LineHomeo(xs, hs, ls, rs)

    n = int(resolution)
    h = side / n
    grid = GridMap.from_function(lambda X, Y: (X, Y), Rect(origin[0], origin[1], side, side), h)
    unit = (grid.nodes() - np.array(origin)) / side
    interior = np.zeros(unit.shape[:2], dtype=bool)
    interior[1:-1, 1:-1] = True
    w = phi_square(unit[interior])
    alpha, beta = ba_values(hl, w.real, w.imag)
    W = x_mid + scale * (alpha + 1j * beta)
    zeta = (W - 1j) / (W + 1j) * np.exp(1j * th_top)
    vals = np.empty(unit.shape)
    vals[interior] = cmap.inverse(zeta)
    bnodes = grid.nodes()[~interior]
    vals[~interior] = b(square_boundary_params(bnodes, side, origin))
    return GridMap(grid.domain, h, vals, tag="extension")
