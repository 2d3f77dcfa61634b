"""Cut-off of a quasiconformal map towards prescribed boundary values.

Given two nearby maps ``y`` and ``yk`` on a rectangle, build ``omega`` equal to
``y`` on an outer shell of cells, to ``yk`` on the inner bulk, and joined across
a one-cell ring by bridge curves on the ring's cross edges and per-square
quasiconformal extension.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry, linalg
from .errors import (
    ClosenessViolated,
    DomainTooSmall,
    EpsTooSmall,
    GammaUnbounded,
    NotQuasicircle,
    PreconditionError,
    RadiusOutOfBounds,
)
from .extension import BoundaryMap, PlanarCurve, extend_on_square, quasicircle_constant, square_boundary_points
from .planar_maps import GridMap, Rect, ciarlet_necas, distortion, locate, multiplicity, node_sets
from .quasisymmetry import Homeo1D, reparam_join

OUTER, MID, INNER = 0, 1, 2
GAMMA_MAX = 64
QUASICIRCLE_LIMIT = 50.0
N_CIRCLE = 256
N_BRIDGE = 128


def _ratio(length, step):
    q = int(round(length / step))
    if q < 1 or abs(q * step - length) > 1e-9 * max(length, step):
        raise ValueError(f"{step} does not divide {length}")
    return q


def _circle(center, radius, n, d=(1.0, 0.0)):
    th = 2 * np.pi * np.arange(n) / n
    d = np.asarray(d, dtype=float)
    nrm = np.array([-d[1], d[0]])
    return center + radius * (np.cos(th)[:, None] * d + np.sin(th)[:, None] * nrm)


def choose_delta(y, eps, n_circle=64):
    """``min(eps/5.01, min_x0 max_{|x-x0|=eps} |y(x0) - y(x)|)``.

    ``x0`` ranges over lattice nodes at distance at least ``eps`` from the
    domain boundary.
    """
    if eps < 4 * y.spacing * (1 - 1e-9):
        raise EpsTooSmall(f"eps = {eps} < 4h = {4 * y.spacing}")
    d = y.domain
    X = y.nodes()
    tol = 1e-12 * max(d.w, d.h)
    ok = (
        (X[..., 0] - d.x0 >= eps - tol)
        & (d.x1 - X[..., 0] >= eps - tol)
        & (X[..., 1] - d.y0 >= eps - tol)
        & (d.y1 - X[..., 1] >= eps - tol)
        & y.mask
    )
    if not ok.any():
        raise EpsTooSmall("no node at distance eps from the boundary")
    x0 = X[ok]
    y0 = y.values[ok]
    ring = _circle(np.zeros(2), eps, n_circle)
    best = np.inf
    for s in range(0, len(x0), 256):
        pts = x0[s : s + 256, None, :] + ring[None]
        yv = y.evaluate(pts, clamp=1e-12)
        reach = np.nanmax(np.linalg.norm(yv - y0[s : s + 256, None, :], axis=-1), axis=1)
        best = min(best, float(np.min(reach)))
    return min(eps / 5.01, best)


@dataclass
class EtaTable:
    """Sampled ``t -> eta(t)`` at ``t = 1/gamma``."""

    gammas: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        g = int(round(1.0 / t))
        k = np.searchsorted(self.gammas, g)
        if k < len(self.gammas) and self.gammas[k] == g:
            return float(self.values[k])
        return float("inf")


def map_eta(maps, eps, gammas=range(1, GAMMA_MAX + 1), n_circle=64, stride=None):
    """Empirical ``eta(1/gamma)`` as the largest ratio

    ``max_{|x-x0|=eps} |y(x)-y(x0)| / min_{|x-x0|=gamma eps} |y(x)-y(x0)|``

    over centres ``x0`` on the eps-lattice whose outer circle fits in the domain.
    """
    ref = maps[0]
    d = ref.domain
    nxe = _ratio(d.w, eps)
    nye = _ratio(d.h, eps)
    I, J = np.meshgrid(np.arange(nxe + 1), np.arange(nye + 1))
    centres = np.stack([d.x0 + I * eps, d.y0 + J * eps], axis=-1).reshape(-1, 2)
    if stride:
        centres = centres[::stride]
    small = _circle(np.zeros(2), eps, n_circle)
    gammas = np.array(list(gammas))
    out = np.full(len(gammas), np.inf)
    for m, g in enumerate(gammas):
        R = g * eps
        fit = (
            (centres[:, 0] - d.x0 >= R)
            & (d.x1 - centres[:, 0] >= R)
            & (centres[:, 1] - d.y0 >= R)
            & (d.y1 - centres[:, 1] >= R)
        )
        if not fit.any():
            break
        c = centres[fit]
        worst = 0.0
        for y in maps:
            yc = y.evaluate(c, clamp=1e-12)
            num = np.max(np.linalg.norm(y.evaluate(c[:, None] + small[None], clamp=1e-12) - yc[:, None], axis=-1), axis=1)
            big = _circle(np.zeros(2), R, n_circle)
            den = np.min(np.linalg.norm(y.evaluate(c[:, None] + big[None], clamp=1e-12) - yc[:, None], axis=-1), axis=1)
            worst = max(worst, float(np.nanmax(num / den)))
        out[m] = worst
        if worst <= 0.25:
            gammas, out = gammas[: m + 1], out[: m + 1]
            break
    return EtaTable(gammas[: len(out)], out)


@dataclass
class Partition:
    domain: Rect
    eps: float
    gamma: int
    labels: np.ndarray  # (nye, nxe) of OUTER / MID / INNER
    G: list = field(default_factory=list)  # ((I, J) outer node, (dI, dJ) unit step towards inner)

    def cells(self, label):
        J, I = np.nonzero(self.labels == label)
        return list(zip(I.tolist(), J.tolist()))

    @property
    def outer(self):
        return self.cells(OUTER)

    @property
    def mid(self):
        return self.cells(MID)

    @property
    def inner(self):
        return self.cells(INNER)

    def shell_measure(self):
        return float(np.sum(self.labels != INNER)) * self.eps**2

    def node(self, IJ):
        return np.array([self.domain.x0 + IJ[0] * self.eps, self.domain.y0 + IJ[1] * self.eps])

    def to_dict(self):
        return {
            "eps": self.eps,
            "gamma": self.gamma,
            "n_outer": len(self.outer),
            "n_mid": len(self.mid),
            "n_inner": len(self.inner),
            "n_bridges": len(self.G),
            "shell_measure": self.shell_measure(),
        }


def _gamma_from(eta):
    for g in range(1, GAMMA_MAX + 1):
        val = eta(1.0 / g) if callable(eta) else float(eta.eta_at(1.0 / g))
        if val <= 0.25:
            return g
    raise GammaUnbounded(f"eta(1/gamma) > 1/4 for all gamma <= {GAMMA_MAX}")


def partition_domain(omega, eps, eta):
    """Tile ``omega`` by eps-cells and split into outer shell, ring and bulk.

    ``eta`` is a callable ``t -> eta(t)`` or a QSReport.  Outer cells lie within
    ``2 gamma eps`` of the boundary, inner cells do not touch outer cells, the
    ring between them is the mid set.  An empty inner set is reported, not
    raised.
    """
    if not isinstance(omega, Rect):
        omega = Rect(*omega)
    nxe = _ratio(omega.w, eps)
    nye = _ratio(omega.h, eps)
    gamma = _gamma_from(eta)
    I, J = np.meshgrid(np.arange(nxe), np.arange(nye))
    dist = np.minimum.reduce([I, J, nxe - 1 - I, nye - 1 - J])  # in units of eps
    labels = np.where(dist < 2 * gamma, OUTER, INNER)
    outer = labels == OUTER
    touch = outer.copy()
    pad = np.pad(outer, 1, constant_values=True)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            touch |= pad[1 + dj : 1 + dj + nye, 1 + di : 1 + di + nxe]
    labels = np.where(outer, OUTER, np.where(touch, MID, INNER))

    # node classes
    node_outer = np.zeros((nye + 1, nxe + 1), dtype=bool)
    node_inner = np.zeros((nye + 1, nxe + 1), dtype=bool)
    for dj in (0, 1):
        for di in (0, 1):
            node_outer[dj : dj + nye, di : di + nxe] |= labels == OUTER
            node_inner[dj : dj + nye, di : di + nxe] |= labels == INNER
    mid = labels == MID
    G = []
    # horizontal edges (I, J) -> (I+1, J): cells below (J-1) and above (J)
    for Jn in range(1, nye):
        for In in range(nxe):
            if mid[Jn - 1, In] and mid[Jn, In]:
                G.append(_orient_edge((In, Jn), (In + 1, Jn), node_outer, node_inner))
    for Jn in range(nye):
        for In in range(1, nxe):
            if mid[Jn, In - 1] and mid[Jn, In]:
                G.append(_orient_edge((In, Jn), (In, Jn + 1), node_outer, node_inner))
    return Partition(omega, eps, gamma, labels, G)


def _orient_edge(a, b, node_outer, node_inner):
    ao, bo = node_outer[a[1], a[0]], node_outer[b[1], b[0]]
    ai, bi = node_inner[a[1], a[0]], node_inner[b[1], b[0]]
    if ao and bi and not bo:
        return (a, (b[0] - a[0], b[1] - a[1]))
    if bo and ai and not ao:
        return (b, (a[0] - b[0], a[1] - b[1]))
    raise ValueError(f"ring edge {a}-{b} does not join the outer shell to the bulk")


@dataclass
class Bridge:
    edge: tuple
    P: np.ndarray
    Q: np.ndarray
    eps: float
    delta: float
    r: float
    z0: np.ndarray
    x1: np.ndarray  # y^-1(z0)
    x2: np.ndarray  # yk^-1(z0)
    phi1: np.ndarray
    phi2: np.ndarray
    curve: PlanarCurve
    invariants: dict
    y: GridMap = field(repr=False, default=None)
    yk: GridMap = field(repr=False, default=None)
    param: Homeo1D = None  # t -> s, identity unless reparametrized
    reparametrized: bool = False
    info: dict = field(default_factory=dict)

    def omega_alpha(self, s):
        """Bridge image at native parameter ``s`` in ``[0, eps]``."""
        s = np.asarray(s, dtype=float)
        e = self.eps
        left = s < 0.5 * e
        u = np.where(left, 2 * s / e, 2 * (e - s) / e)[..., None]
        a = self.P + u * (self.x1 - self.P)
        b = self.Q + u * (self.x2 - self.Q)
        ya = self.y.evaluate(a, clamp=1e-9)
        yb = self.yk.evaluate(b, clamp=1e-9)
        return np.where(left[..., None], ya, yb)

    def __call__(self, t):
        s = t if self.param is None else self.param(t)
        return self.omega_alpha(s)

    def to_dict(self):
        d = {
            "edge": [list(self.edge[0]), list(self.edge[1])],
            "r": self.r,
            "z0": self.z0.tolist(),
            "x1": self.x1.tolist(),
            "x2": self.x2.tolist(),
            "phi1": self.phi1.tolist(),
            "phi2": self.phi2.tolist(),
            "reparametrized": self.reparametrized,
        }
        d.update({k: _jsonable(v) for k, v in self.invariants.items()})
        d.update({k: _jsonable(v) for k, v in self.info.items()})
        return d


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _images_touch(y, yk, P, Q, s, d, n):
    cp = y.evaluate(_circle(P, s, n, d), clamp=1e-9)
    cq = yk.evaluate(_circle(Q, s, n, -d), clamp=1e-9)
    A = np.vstack([cp, cp[:1]])
    B = np.vstack([cq, cq[:1]])
    ip, iq, tp, tq = geometry.segment_intersections(A[:-1], A[1:], B[:-1], B[1:])
    return ip, iq, tp, tq


def _newton_preimage(m, z, x, iters=30):
    """Solve ``m(x) = z`` near ``x`` using cell gradients of the bilinear map."""
    h = m.spacing
    for _ in range(iters):
        f = m.evaluate(x, clamp=1e-9) - z
        if np.linalg.norm(f) < 1e-14 * max(1.0, np.linalg.norm(z)):
            break
        J = np.empty((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1e-3 * h
            J[:, k] = (m.evaluate(x + e, clamp=1e-9) - m.evaluate(x - e, clamp=1e-9)) / (2e-3 * h)
        x = x - np.linalg.solve(J, f)
    return x


def bridge_edge(y, yk, edge, eps, delta, n_circle=N_CIRCLE, tol=None):
    """Bridge curve on the grid edge from ``edge[0]`` (outer side) to the bulk."""
    P = np.asarray(edge[0], dtype=float)
    d = np.asarray(edge[1], dtype=float)
    d = d / np.linalg.norm(d)
    Q = P + eps * d
    tol = y.spacing / 64 if tol is None else tol
    lo, hi = 0.25 * eps, 0.75 * eps
    if len(_images_touch(y, yk, P, Q, lo, d, n_circle)[0]):
        raise RadiusOutOfBounds(f"images of radius-{lo:.3g} circles already meet at edge {tuple(P)}")
    if not len(_images_touch(y, yk, P, Q, hi, d, n_circle)[0]):
        raise RadiusOutOfBounds(f"images of radius-{hi:.3g} circles do not meet at edge {tuple(P)}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if len(_images_touch(y, yk, P, Q, mid, d, n_circle)[0]):
            hi = mid
        else:
            lo = mid
    r = hi
    ip, iq, tp, tq = _images_touch(y, yk, P, Q, r, d, n_circle)
    cp = _circle(P, r, n_circle, d)
    cq = _circle(Q, r, n_circle, -d)
    A = y.evaluate(cp, clamp=1e-9)
    hits = A[ip] + tp[:, None] * (np.roll(A, -1, axis=0)[ip] - A[ip])
    k = np.lexsort((hits[:, 1], hits[:, 0]))[0]
    x1 = cp[ip[k]] + tp[k] * (np.roll(cp, -1, axis=0)[ip[k]] - cp[ip[k]])
    z0 = y.evaluate(x1, clamp=1e-9)
    x2_start = cq[iq[k]] + tq[k] * (np.roll(cq, -1, axis=0)[iq[k]] - cq[iq[k]])
    x2 = _newton_preimage(yk, z0, x2_start)

    n = np.array([-d[1], d[0]])
    frame = np.stack([d, n], axis=1)  # local -> global
    # linear parts in the local frame (columns: images of the local axes)
    L1 = np.stack([frame.T @ (2.0 / eps * (x1 - P)), [0.0, 1.0]], axis=1)
    L2 = np.stack([frame.T @ (-2.0 / eps * (x2 - Q)), [0.0, 1.0]], axis=1)
    lip_bound = 1.0 / (1.0 - delta / eps)

    def bilip(L):
        smax, smin = linalg.singular_values(L)
        return float(max(smax, 1.0 / smin))

    midpt = P + 0.5 * eps * d
    dev1 = float(np.linalg.norm(x1 - midpt))
    dev2 = float(np.linalg.norm(x2 - midpt))
    inv = {
        "r_lower": 0.5 * eps - 0.5 * delta,
        "r_upper": 0.5 * eps + 0.5 * delta,
        "r_ok": bool(0.5 * eps - 0.5 * delta < r < 0.5 * eps + 0.5 * delta),
        "mid_dev_y": dev1,
        "mid_dev_yk": dev2,
        "mid_bound": float(np.sqrt(7 * eps * delta)),
        "mid_ok": bool(max(dev1, dev2) < np.sqrt(7 * eps * delta)),
        "lip_phi1": bilip(L1),
        "lip_phi2": bilip(L2),
        "lip_bound": lip_bound,
        "lip_ok": bool(max(bilip(L1), bilip(L2)) < lip_bound),
    }
    if not (inv["r_lower"] - tol < r < inv["r_upper"] + tol):
        raise RadiusOutOfBounds(
            f"r = {r:.6g} outside ({inv['r_lower']:.6g}, {inv['r_upper']:.6g}) at edge {tuple(P)}"
        )
    b = Bridge(
        (tuple(P.tolist()), tuple(d.tolist())),
        P,
        Q,
        eps,
        delta,
        float(r),
        z0,
        x1,
        x2,
        frame @ L1 @ frame.T,
        frame @ L2 @ frame.T,
        None,
        inv,
        y,
        yk,
    )
    s = np.linspace(0.0, eps, N_BRIDGE + 1)
    b.curve = PlanarCurve(b.omega_alpha(s), closed=False)
    return b


def curve_m(points):
    """Symmetric-ratio constant of a uniformly parametrized polyline."""
    P = np.asarray(points, dtype=float)
    n = len(P) - 1
    i = np.arange(n + 1)[:, None]
    k = np.arange(1, n // 2 + 1)[None, :]
    ok = (i - k >= 0) & (i + k <= n)
    ii, kk = np.broadcast_arrays(i, k)
    ii, kk = ii[ok], kk[ok]
    f = np.linalg.norm(P[ii + kk] - P[ii], axis=1)
    b = np.linalg.norm(P[ii] - P[ii - kk], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.maximum(f / b, b / f)
    return float(np.max(r))


def reparametrize_bridge(b, grid_density=64):
    """Rejoin the bridge parametrization around the meeting point.

    The parameter map stays the identity near both ends and follows a
    chord-length (or the native, whichever has the smaller M)
    parametrization around the meeting point.
    """
    c = quasicircle_constant(b.curve)
    if not c["c_best"] <= QUASICIRCLE_LIMIT:
        raise NotQuasicircle(f"arc constant {c['c_best']:.3g} exceeds {QUASICIRCLE_LIMIT}")
    eps = b.eps
    s_nodes = np.linspace(0.0, eps, N_BRIDGE + 1)
    pts = b.curve.vertices
    cum = geometry.cumulative_length(pts)
    t_nodes = cum / cum[-1] * eps
    t_nodes[-1] = eps
    chord = Homeo1D(t_nodes, s_nodes)  # t -> s
    tt = np.linspace(0.0, eps, N_BRIDGE + 1)
    M_native = curve_m(pts)
    M_chord = curve_m(b.omega_alpha(chord(tt)))
    if M_chord <= M_native:
        s_map, choice, M_in = chord, "chord", M_chord
    else:
        s_map, choice, M_in = Homeo1D.identity(eps), "native", M_native
    m = float(np.interp(0.5 * eps, s_map.values, s_map.breakpoints))  # s(m) = eps/2

    # [0, m]: join r (identity near 0) to s near m
    r_left = Homeo1D(np.array([0.0, 0.5 * m, m]), np.array([0.0, 0.5 * m, 0.5 * eps]))
    s_left = _piece(s_map, 0.0, m, 0.0)
    left, d_left = reparam_join(r_left, s_left, grid_density, return_d=True)
    # [m, eps]: join s near m to r (identity near eps)
    w = eps - m
    r_right = Homeo1D(np.array([0.0, 0.5 * w, w]), np.array([0.0, 0.5 * (eps + m) - 0.5 * eps, 0.5 * eps]))
    s_right = _piece(s_map, m, eps, 0.5 * eps)
    right = reparam_join(s_right, r_right, grid_density)
    bp = np.concatenate([left.breakpoints, m + right.breakpoints[1:]])
    vals = np.concatenate([left.values, 0.5 * eps + right.values[1:]])
    bp[-1], vals[-1] = eps, eps
    param = Homeo1D(bp, vals)
    out = Bridge(**{k: getattr(b, k) for k in b.__dataclass_fields__})
    out.param = param
    out.reparametrized = True
    M_out = curve_m(out(tt))
    out.info = {
        "parametrization": choice,
        "meeting_point": m,
        "M_before": M_native,
        "M_param": M_in,
        "M_after": M_out,
        "arc_constant": c["c_best"],
        "lambda": d_left / 4,
        "identity_until": d_left * m / 4,
    }
    return out


def _piece(s_map, t0, t1, v0):
    """``s_map`` restricted to ``[t0, t1]``, shifted to start at the origin."""
    t = s_map.breakpoints
    keep = (t > t0) & (t < t1)
    bp = np.concatenate([[t0], t[keep], [t1]]) - t0
    v = np.concatenate([[float(s_map(t0))], s_map.values[keep], [float(s_map(t1))]]) - v0
    bp[0], v[0] = 0.0, 0.0
    return Homeo1D(bp, v)


def check_closeness(y, yk, delta, margin=None):
    """Verify ``|y - yk| <= delta`` at nodes and ``|y^-1 - yk^-1| <= delta`` at images of nodes."""
    gap = np.linalg.norm(y.values - yk.values, axis=-1)
    gap = np.where(y.mask & yk.mask, gap, 0.0)
    fwd = float(gap.max())
    if fwd > delta:
        raise ClosenessViolated(f"max |y - yk| = {fwd:.3e} > delta = {delta:.3e}")
    X = y.nodes()
    d = y.domain
    margin = y.spacing if margin is None else margin
    inside = (
        (X[..., 0] - d.x0 >= margin)
        & (d.x1 - X[..., 0] >= margin)
        & (X[..., 1] - d.y0 >= margin)
        & (d.y1 - X[..., 1] >= margin)
    )
    sel = X[inside]
    stride = max(1, len(sel) // 1500)
    sel = sel[::stride]
    z = y.evaluate(sel)
    pre = locate(yk, z)
    ok = np.all(np.isfinite(pre), axis=1)
    inv = float(np.max(np.linalg.norm(pre[ok] - sel[ok], axis=1))) if ok.any() else 0.0
    if inv > delta:
        raise ClosenessViolated(f"max |y^-1 - yk^-1| = {inv:.3e} > delta = {delta:.3e}")
    return {"sup_y_minus_yk": fwd, "sup_inverse_gap": inv}


def _tagged(exc, where):
    cls = type(exc)
    try:
        new = cls(f"{where}: {exc}")
    except TypeError:
        return exc
    return new


def assemble_cutoff(y, yk, eps, delta=None, eta=None, seed=0, check=True, ext_resolution_factor=1):
    """Cut-off ``omega`` with ``omega = y`` near the boundary and ``yk`` in the bulk."""
    if y.values.shape != yk.values.shape or y.domain != yk.domain or y.spacing != yk.spacing:
        raise ValueError("y and yk must share the lattice")
    h = y.spacing
    q = _ratio(eps, h)
    if delta is None:
        delta = choose_delta(y, eps)
    close = check_closeness(y, yk, delta) if check else {}
    if eta is None:
        eta = map_eta([y, yk], eps)
    part = partition_domain(y.domain, eps, eta)
    if not part.inner:
        raise DomainTooSmall(f"no inner cells for eps = {eps}, gamma = {part.gamma}")

    labels_fine = np.kron(part.labels, np.ones((q, q), dtype=int))
    touched_outer, _ = node_sets(labels_fine == OUTER)
    touched_inner, _ = node_sets(labels_fine == INNER)
    vals = np.full(y.values.shape, np.nan)
    vals[touched_outer] = y.values[touched_outer]
    vals[touched_inner] = yk.values[touched_inner]
    assigned = touched_outer | touched_inner

    bridges = []
    t_nodes = np.arange(q + 1) * h
    for In_Jn, dIJ in part.G:
        P = part.node(In_Jn)
        try:
            b = bridge_edge(y, yk, (P, dIJ), eps, delta)
            b = reparametrize_bridge(b)
        except PreconditionError as exc:
            raise _tagged(exc, f"edge {In_Jn}->{dIJ}") from exc
        bridges.append(b)
        jj = In_Jn[1] * q + np.arange(1, q) * dIJ[1]
        ii = In_Jn[0] * q + np.arange(1, q) * dIJ[0]
        vals[jj, ii] = b(t_nodes[1:-1])
        assigned[jj, ii] = True

    n_side = 8 * q * ext_resolution_factor
    for I, J in part.mid:
        origin = (y.domain.x0 + I * eps, y.domain.y0 + J * eps)
        p = np.arange(4 * n_side) * (eps / n_side)
        xy = square_boundary_points(p, eps, origin)
        pts = _boundary_values(xy, y, yk, part, bridges, vals, I, J, q)
        bm = BoundaryMap(p, pts, eps, origin)
        try:
            ext = extend_on_square(bm, resolution=q * ext_resolution_factor, n_segments=128)
        except PreconditionError as exc:
            raise _tagged(exc, f"mid square {(I, J)}") from exc
        step = ext_resolution_factor
        sub = ext.values[::step, ::step]
        j0, i0 = J * q, I * q
        block = np.zeros((q + 1, q + 1), dtype=bool)
        block[1:-1, 1:-1] = True
        vals[j0 : j0 + q + 1, i0 : i0 + q + 1][block] = sub[block]
        assigned[j0 : j0 + q + 1, i0 : i0 + q + 1] |= block
    if not assigned.all():
        raise RuntimeError("cut-off left nodes unassigned")
    omega = GridMap(y.domain, h, vals, tag="cutoff")
    report = cutoff_report(y, yk, omega, part, bridges, delta, seed)
    report["closeness"] = close
    return omega, part, bridges, report


def _boundary_values(xy, y, yk, part, bridges, vals, I, J, q):
    """Boundary data of mid square ``(I, J)``: y / yk on shell sides, bridges on ring edges."""
    eps = part.eps
    d = part.domain
    nye, nxe = part.labels.shape
    out = np.empty_like(xy)
    u = (xy[:, 0] - d.x0) / eps - I
    v = (xy[:, 1] - d.y0) / eps - J
    tol = 1e-9
    side = np.where(v <= tol, 0, np.where(u >= 1 - tol, 1, np.where(v >= 1 - tol, 2, 3)))
    nb = {0: (I, J - 1), 1: (I + 1, J), 2: (I, J + 1), 3: (I - 1, J)}
    by_node = {}
    for b in bridges:
        by_node.setdefault(tuple(np.round(b.P, 12)), []).append(b)
    for k in range(4):
        sel = side == k
        if not sel.any():
            continue
        ni, nj = nb[k]
        lab = part.labels[nj, ni] if 0 <= ni < nxe and 0 <= nj < nye else OUTER
        if lab == OUTER:
            out[sel] = y.evaluate(xy[sel], clamp=1e-9)
        elif lab == INNER:
            out[sel] = yk.evaluate(xy[sel], clamp=1e-9)
        else:
            # shared with another ring cell: a bridge edge
            corners = {
                0: [(I, J), (I + 1, J)],
                1: [(I + 1, J), (I + 1, J + 1)],
                2: [(I, J + 1), (I + 1, J + 1)],
                3: [(I, J), (I, J + 1)],
            }[k]
            br = None
            for c in corners:
                for cand in by_node.get(tuple(np.round(part.node(c), 12)), []):
                    other = part.node(c) + eps * np.asarray(cand.edge[1])
                    if any(np.allclose(other, part.node(c2)) for c2 in corners):
                        br = cand
            if br is None:
                raise RuntimeError(f"missing bridge on side {k} of mid square {(I, J)}")
            t = np.clip(np.linalg.norm(xy[sel] - br.P, axis=1), 0.0, eps)
            out[sel] = br(t)
    # lattice nodes take the assembled values exactly
    h = y.spacing
    gi = np.round((xy[:, 0] - d.x0) / h).astype(int)
    gj = np.round((xy[:, 1] - d.y0) / h).astype(int)
    on_node = (np.abs((xy[:, 0] - d.x0) / h - gi) < 1e-9) & (np.abs((xy[:, 1] - d.y0) / h - gj) < 1e-9)
    out[on_node] = vals[gj[on_node], gi[on_node]]
    return out


def cutoff_report(y, yk, omega, part, bridges, delta, seed=0, n_samples=100):
    eps = part.eps
    h = y.spacing
    q = _ratio(eps, h)
    bound = 3 * eps + delta
    report = {"eps": eps, "delta": delta, "gamma": part.gamma, "h": h, "bound": bound}

    # item 3: boundary trace
    ny, nx = y.ny, y.nx
    edge_cells = np.zeros((ny, nx), dtype=bool)
    edge_cells[0, :] = edge_cells[-1, :] = edge_cells[:, 0] = edge_cells[:, -1] = True
    touched, _ = node_sets(edge_cells)
    report["boundary_exact"] = bool(np.array_equal(omega.values[touched], y.values[touched]))

    # item 1
    sup = float(np.max(np.linalg.norm(omega.values - y.values, axis=-1)))
    report["sup_y_minus_omega"] = sup
    X = y.nodes()
    sel = X[1:-1, 1:-1].reshape(-1, 2)
    sel = sel[:: max(1, len(sel) // 1500)]
    pre = locate(omega, y.evaluate(sel))
    ok = np.all(np.isfinite(pre), axis=1)
    inv = float(np.max(np.linalg.norm(pre[ok] - sel[ok], axis=1))) if ok.any() else float("nan")
    report["sup_inverse_difference"] = inv
    report["item1_ok"] = bool(sup <= bound and inv <= bound)

    # item 4
    diff = np.any(omega.values != yk.values, axis=-1)
    cell_diff = diff[:-1, :-1] | diff[:-1, 1:] | diff[1:, :-1] | diff[1:, 1:]
    modified = float(cell_diff.sum()) * h * h
    report["modified_measure"] = modified
    report["shell_measure"] = part.shell_measure()
    report["item4_ok"] = bool(modified <= part.shell_measure() * (1 + 1e-12))

    # item 2 and injectivity
    dist = distortion(omega)
    report["distortion_sup"] = dist.sup
    report["fraction_nonpositive"] = dist.fraction_nonpositive
    rng = np.random.default_rng(seed)
    d = y.domain
    margin = 4 * h
    counts = []
    tries = 0
    while len(counts) < n_samples and tries < 20 * n_samples:
        tries += 1
        x = np.array([rng.uniform(d.x0 + margin, d.x1 - margin), rng.uniform(d.y0 + margin, d.y1 - margin)])
        p = omega.evaluate(x)
        try:
            counts.append(multiplicity(omega, p))
        except PreconditionError:
            continue
    report["multiplicity_samples"] = len(counts)
    report["multiplicity_one"] = bool(counts and all(c == 1 for c in counts))
    cn = ciarlet_necas(omega)
    report["ciarlet_necas"] = cn
    report["injective"] = bool(report["multiplicity_one"] and cn["satisfied"] and dist.fraction_nonpositive == 0)

    # bridges
    report["bridges"] = [b.to_dict() for b in bridges]
    report["bridge_bounds_ok"] = bool(all(b.invariants["r_ok"] and b.invariants["mid_ok"] for b in bridges))
    report["bridges_disjoint"] = bridges_disjoint(bridges, y, yk, part)
    report["modified_cells_fine"] = int(cell_diff.sum())
    report["n_fine_cells_per_eps"] = q
    return report


def bridges_disjoint(bridges, y, yk, part):
    """Pairwise disjointness of bridge images, ignoring shared end segments."""
    curves = [b(np.linspace(0, b.eps, 65)) for b in bridges]
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            A, B = curves[i], curves[j]
            if np.linalg.norm(A[-1] - B[-1]) < 1e-12 * max(1.0, np.abs(A).max()):
                A, B = A[:-1], B[:-1]
                A = A[:-1]
                B = B[:-1]
            if geometry.polylines_intersect(A, B):
                return False
    # interiors avoid the shell and bulk images: test against their boundary loops
    d = part.domain
    eps = part.eps
    labels = part.labels
    J, I = np.nonzero(labels == INNER)
    inner_rect = Rect(d.x0 + I.min() * eps, d.y0 + J.min() * eps, (I.max() - I.min() + 1) * eps, (J.max() - J.min() + 1) * eps)
    J, I = np.nonzero(labels != OUTER)
    ring_rect = Rect(d.x0 + I.min() * eps, d.y0 + J.min() * eps, (I.max() - I.min() + 1) * eps, (J.max() - J.min() + 1) * eps)
    loops = []
    for m, R in ((yk, inner_rect), (y, ring_rect)):
        per = 2 * (R.w + R.h)
        p = np.linspace(0, per, int(per / m.spacing * 2) + 1)
        sq = _rect_boundary(R, p)
        loops.append(m.evaluate(sq, clamp=1e-9))
    for C in curves:
        inner_part = C[1:-1]
        for L in loops:
            if geometry.polylines_intersect(inner_part, L):
                return False
    return True


def _rect_boundary(R, p):
    w, hh = R.w, R.h
    q = np.mod(p, 2 * (w + hh))
    x = np.where(q < w, q, np.where(q < w + hh, w, np.where(q < 2 * w + hh, 2 * w + hh - q, 0.0)))
    yv = np.where(q < w, 0.0, np.where(q < w + hh, q - w, np.where(q < 2 * w + hh, hh, 2 * (w + hh) - q)))
    return np.stack([R.x0 + x, R.y0 + yv], axis=-1)


def overlay_svg(part, bridges, omega=None, size=512):
    """SVG of the partition with bridge images drawn in domain coordinates."""
    d = part.domain
    nye, nxe = part.labels.shape
    scale = size / max(d.w, d.h)
    W, H = d.w * scale, d.h * scale
    colors = {OUTER: "#c8d7e8", MID: "#f2d49b", INNER: "#d9ecd0"}
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" viewBox="0 0 {W:.3f} {H:.3f}">']
    if omega is not None:
        K = distortion(omega).per_cell
        kmax = float(np.nanmax(K)) if np.isfinite(K).any() else 1.0
    for J in range(nye):
        for I in range(nxe):
            x = I * part.eps * scale
            yv = H - (J + 1) * part.eps * scale
            out.append(
                f'<rect x="{x:.3f}" y="{yv:.3f}" width="{part.eps * scale:.3f}" height="{part.eps * scale:.3f}" '
                f'style="fill:{colors[part.labels[J, I]]};stroke:#888;stroke-width:0.3"/>'
            )
    if omega is not None and kmax > 1:
        ny, nx = K.shape
        hs = omega.spacing * scale
        for j in range(ny):
            for i in range(nx):
                k = K[j, i]
                if np.isfinite(k) and k > 1 + 1e-6:
                    a = min(1.0, (k - 1) / (kmax - 1))
                    out.append(
                        f'<rect x="{i * hs:.3f}" y="{H - (j + 1) * hs:.3f}" width="{hs:.3f}" height="{hs:.3f}" '
                        f'style="fill:#b0172b;fill-opacity:{0.6 * a:.3f}"/>'
                    )
    for b in bridges:
        C = b(np.linspace(0, b.eps, 33))
        pts = " ".join(f"{(x - d.x0) * scale:.3f},{H - (yy - d.y0) * scale:.3f}" for x, yy in C)
        out.append(f'<polyline points="{pts}" style="fill:none;stroke:#222;stroke-width:1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report_json(report):
    return json.dumps(report, sort_keys=True, indent=2, default=_jsonable)
