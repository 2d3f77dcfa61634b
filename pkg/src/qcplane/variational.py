"""Energy densities, integral functionals and a small constrained minimizer.

All norms of matrices are spectral norms.  Quadrature is the midpoint rule on
cells, with gradients taken at cell centres.
"""

import io
import csv
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InfeasibleInit
from .planar_maps import GridMap, gradient_field

DET_FLOOR = 1e-6
LSC_RTOL = 1e-3


@dataclass
class EnergyDensitySpec:
    """A density ``A -> v(A)`` with a growth certificate ``(C, p, q)``.

    The certificate claims ``|v(A)| <= C (1 + |A|^p + |det A|^-q)``.  With
    ``blows_up`` set, ``v = +inf`` wherever ``det A <= 0``.
    """

    name: str
    fn: object
    C: float
    p: float
    q: float
    tag: str = "custom"
    blows_up: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, A):
        A = np.asarray(A, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(self.fn(A), dtype=float)
        if self.blows_up:
            out = np.where(linalg.det(A) > 0, out, np.inf)
        return out

    def growth_bound(self, A):
        A = np.asarray(A, dtype=float)
        n = linalg.spectral_norm(A)
        d = np.abs(linalg.det(A))
        with np.errstate(divide="ignore"):
            inv = d ** (-self.q) if self.q > 0 else np.ones_like(d)
        return self.C * (1.0 + n**self.p + inv)

    def to_dict(self):
        return {"name": self.name, "C": self.C, "p": self.p, "q": self.q, "tag": self.tag,
                "blows_up": self.blows_up, "params": self.params}


def dirichlet():
    return EnergyDensitySpec("dirichlet", lambda A: linalg.spectral_norm(A) ** 2, 1.0, 2.0, 0.0, "convex")


def det_density():
    return EnergyDensitySpec("det", linalg.det, 1.0, 2.0, 0.0, "null-lagrangian")


def neg_det():
    return EnergyDensitySpec("neg-det", lambda A: -linalg.det(A), 1.0, 2.0, 0.0, "null-lagrangian")


def elastic_pq(p=2.0, q=1.0):
    """``|A|^p + det(A)^-q``; polyconvex for ``p >= 1`` and ``q > 0``."""
    if p < 1 or q <= 0:
        raise ValueError("elastic-pq needs p >= 1 and q > 0")

    def fn(A):
        d = linalg.det(A)
        return linalg.spectral_norm(A) ** p + np.where(d > 0, np.abs(d) ** (-q), np.inf)

    return EnergyDensitySpec("elastic-pq", fn, 1.0, float(p), float(q), "polyconvex", True, {"p": p, "q": q})


def power(p):
    """``|A|^p``; convex for ``p >= 1``."""
    return EnergyDensitySpec("power", lambda A: linalg.spectral_norm(A) ** p, 1.0, float(p), 0.0, "convex",
                             params={"p": p})


def bump(M=None):
    """Concave ``-|A - M|^2``; not quasiconvex, used to show detection of failures."""
    M = np.eye(2) if M is None else np.asarray(M, dtype=float)
    C = 2.0 * max(1.0, float(linalg.spectral_norm(M)) ** 2)
    return EnergyDensitySpec("bump", lambda A: -linalg.spectral_norm(A - M) ** 2, C, 2.0, 0.0, "custom",
                             params={"M": M.tolist()})


def zero():
    return EnergyDensitySpec("zero", lambda A: np.zeros(np.shape(A)[:-2]), 1.0, 0.0, 0.0, "convex")


REGISTRY = {
    "dirichlet": dirichlet,
    "det": det_density,
    "neg-det": neg_det,
    "elastic-pq": elastic_pq,
    "bump": bump,
}


def get_density(name, **kw):
    try:
        make = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown density {name!r}; known: {sorted(REGISTRY)}") from None
    return make(**kw)


def cone_samples(K, n=10_000, seed=0, scale=(1e-3, 1e3)):
    """Random matrices of ``{|A|^2 <= K det A}``; ``|A|`` log-uniform in ``scale``."""
    rng = np.random.default_rng(seed)
    r_max = (K - 1) / (K + 1)
    Q = np.exp(rng.uniform(np.log(scale[0]), np.log(scale[1]), n))
    R = Q * r_max * rng.uniform(0, 1, n)
    a, b = rng.uniform(0, 2 * np.pi, (2, n))
    rot = np.stack([np.stack([np.cos(a), -np.sin(a)], -1), np.stack([np.sin(a), np.cos(a)], -1)], -2)
    ref = np.stack([np.stack([np.cos(b), np.sin(b)], -1), np.stack([np.sin(b), -np.cos(b)], -1)], -2)
    return Q[:, None, None] * rot + R[:, None, None] * ref


def growth_check(v, K=4.0, n=10_000, seed=0):
    """Spot-check the growth certificate on ``n`` cone samples."""
    A = cone_samples(K, n, seed)
    vals = v(A)
    bound = v.growth_bound(A)
    ok = np.abs(vals) <= bound * (1 + 1e-12)
    return {"density": v.name, "samples": n, "K": K, "violations": int((~ok).sum()),
            "nonnegative": bool(np.all(vals >= 0)), "ok": bool(ok.all())}


def _cell_values(y, v):
    g = gradient_field(y)
    vals = v(g.matrices)
    return g, vals


def energy(y, v):
    """Midpoint quadrature of ``v(grad y)`` over the defined cells."""
    g, vals = _cell_values(y, v)
    vals = vals[g.valid]
    if np.any(np.isposinf(vals)):
        return float("inf")
    return float(np.sum(vals) * y.spacing**2)


def distortion_sup(y):
    """Sup of ``|A|^2 / det A`` over defined cells; ``inf`` if any has ``det <= 0``."""
    g = gradient_field(y)
    A = g.matrices[g.valid]
    if np.any(linalg.det(A) <= 0):
        return float("inf")
    return float(np.max(linalg.distortion(A)))


def penalized_energy(y, v, eps_pen):
    J = energy(y, v)
    if eps_pen == 0:
        return J
    return J + eps_pen * distortion_sup(y)


def lsc_experiment(v, seq, limit, tail=None):
    """Compare ``J(limit)`` with the tail of ``J(seq)``.

    ``satisfied`` iff ``J(limit) <= min(tail) + 1e-3 * scale``.  ``equality``
    reports whether the last member already matches ``J(limit)`` within the
    same tolerance, as expected of null Lagrangians.
    """
    Js = [energy(m, v) for m in seq]
    n_tail = tail or max(1, (len(Js) + 1) // 2)
    tail_vals = Js[-n_tail:]
    J_lim = energy(limit, v)
    scale = max(1.0, abs(J_lim))
    liminf = float(min(tail_vals))
    return {
        "density": v.name,
        "J_seq": Js,
        "liminf_seq": liminf,
        "J_limit": J_lim,
        "gap": liminf - J_lim,
        "tolerance": LSC_RTOL * scale,
        "satisfied": bool(J_lim <= liminf + LSC_RTOL * scale),
        "equality": bool(abs(Js[-1] - J_lim) <= LSC_RTOL * scale),
    }


def equiintegrability_profile(seq, p, q, levels=None):
    """``M -> sup_k tail_k(M)`` for ``|grad y_k|^p`` and ``det^-q``.

    ``tail_k(M)`` integrates ``|grad y_k|^p`` over cells where it exceeds ``M``
    plus ``det^-q`` over cells where that exceeds ``M``.
    """
    if levels is None:
        levels = 10.0 ** np.arange(0, 9)
    levels = np.asarray(levels, dtype=float)
    tails = np.zeros((len(seq), len(levels)))
    for k, y in enumerate(seq):
        g = gradient_field(y)
        A = g.matrices[g.valid]
        area = y.spacing**2
        f1 = linalg.spectral_norm(A) ** p
        d = linalg.det(A)
        with np.errstate(divide="ignore"):
            f2 = np.where(d > 0, np.abs(d) ** (-q), np.inf) if q > 0 else np.zeros_like(d)
        for m, M in enumerate(levels):
            tails[k, m] = area * (np.sum(f1[f1 > M]) + np.sum(f2[f2 > M]))
    return {"p": p, "q": q, "levels": levels.tolist(), "tails": tails.tolist(), "sup": tails.max(axis=0).tolist()}


def _tri_dets(V, h):
    """Determinants of the two PL triangles per cell, in units of the cell area."""
    a, b, c, d = V[:-1, :-1], V[:-1, 1:], V[1:, 1:], V[1:, :-1]

    def cross(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    return np.stack([cross(a, b, c), cross(a, c, d)], axis=-1) / (h * h)


def _cell_grad(V, h):
    dx = 0.5 * ((V[:-1, 1:] - V[:-1, :-1]) + (V[1:, 1:] - V[1:, :-1])) / h
    dy = 0.5 * ((V[1:, :-1] - V[:-1, :-1]) + (V[1:, 1:] - V[:-1, 1:])) / h
    return np.stack([dx, dy], axis=-1)


def _feasible(V, h):
    G = _cell_grad(V, h)
    return bool(np.all(linalg.det(G) >= DET_FLOOR) and np.all(_tri_dets(V, h) >= DET_FLOOR))


def minimize_penalized(v, eps_pen, init, boundary=None, sweeps=20, min_step_frac=1 / 64, return_trace=False):
    """Coordinate descent on interior nodes for ``energy + eps_pen * distortion sup``.

    Nodes are visited row-major.  Each node tries the four axis moves at
    steps ``h/2, h/4, ..., h * min_step_frac`` and takes the first one that
    strictly lowers J while every incident cell keeps ``det >= 1e-6`` (for
    the cell gradient and both triangles).  Stops after ``sweeps`` passes or
    a pass without accepted moves.
    """
    h = init.spacing
    if not init.mask.all():
        raise InfeasibleInit("initial map has undefined nodes")
    V = init.values.copy()
    if boundary is not None:
        from .extension import square_boundary_params

        dom = init.domain
        if abs(dom.w - dom.h) > 1e-12 * dom.w:
            raise InfeasibleInit("boundary traces are given on squares only")
        on_edge = np.zeros(V.shape[:2], dtype=bool)
        on_edge[[0, -1], :] = True
        on_edge[:, [0, -1]] = True
        pts = init.nodes()[on_edge]
        target = boundary(square_boundary_params(pts, dom.w, (dom.x0, dom.y0)))
        gap = float(np.max(np.abs(V[on_edge] - target)))
        if gap > 1e-9 * max(1.0, dom.w):
            raise InfeasibleInit(f"initial map misses the boundary trace by {gap:.3e}")
    if not _feasible(V, h):
        raise InfeasibleInit("initial map has a cell with det <= 0")

    G = _cell_grad(V, h)
    cell_v = v(G)
    cell_k = linalg.distortion(G)
    area = h * h

    def total(cv, ck):
        J = float(np.sum(cv) * area)
        return J + eps_pen * float(np.max(ck)) if eps_pen else J

    J = total(cell_v, cell_k)
    trace = [{"sweep": 0, "J": J, "accepted": 0}]
    steps = []
    s = 0.5
    while s >= min_step_frac * (1 - 1e-12):
        steps.append(s * h)
        s /= 2
    dirs = np.array([(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)])
    # candidate displacements in trial order: all directions at h/2, then h/4, ...
    disp = (np.array(steps)[:, None, None] * dirs[None]).reshape(-1, 2)
    ny, nx = V.shape[0] - 1, V.shape[1] - 1
    for sweep in range(1, sweeps + 1):
        accepted = 0
        for j in range(1, ny):
            for i in range(1, nx):
                j0, i0 = j - 1, i - 1
                sub = np.broadcast_to(V[j0 : j + 2, i0 : i + 2], (len(disp), 3, 3, 2)).copy()
                sub[:, 1, 1] += disp
                Gs = _cell_grad(np.moveaxis(sub, 0, 2), h)  # (2, 2, n, 2, 2)
                Gs = np.moveaxis(Gs, 2, 0)
                td = np.moveaxis(_tri_dets(np.moveaxis(sub, 0, 2), h), 2, 0)
                ok = np.all(linalg.det(Gs) >= DET_FLOOR, axis=(1, 2)) & np.all(td >= DET_FLOOR, axis=(1, 2, 3))
                if not ok.any():
                    continue
                nv = v(Gs)
                rest = float(np.sum(cell_v)) - float(np.sum(cell_v[j0 : j + 1, i0 : i + 1]))
                Jc = (rest + nv.sum(axis=(1, 2))) * area
                if eps_pen:
                    nk = linalg.distortion(Gs)
                    saved = cell_k[j0 : j + 1, i0 : i + 1].copy()
                    cell_k[j0 : j + 1, i0 : i + 1] = -np.inf
                    k_rest = float(np.max(cell_k))
                    cell_k[j0 : j + 1, i0 : i + 1] = saved
                    Jc = Jc + eps_pen * np.maximum(k_rest, nk.max(axis=(1, 2)))
                # margin keeps the recomputed total strictly below the previous one
                good = np.nonzero(ok & (Jc < J - 1e-14 * abs(J)))[0]
                if not len(good):
                    continue
                c = good[0]
                V[j, i] = sub[c, 1, 1]
                cell_v[j0 : j + 1, i0 : i + 1] = nv[c]
                if eps_pen:
                    cell_k[j0 : j + 1, i0 : i + 1] = nk[c]
                J = total(cell_v, cell_k)
                accepted += 1
        trace.append({"sweep": sweep, "J": J, "accepted": accepted})
        if accepted == 0:
            break
    out = init.with_values(V, tag="minimized")
    return (out, trace) if return_trace else out


def trace_csv(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["sweep", "J", "accepted"])
    for row in trace:
        w.writerow([row["sweep"], repr(float(row["J"])), row["accepted"]])
    return buf.getvalue()
