"""Laminates, empirical Young measures and the checks run against them."""

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import linalg
from .errors import DensityUndefined, DomainMismatch, NotRankOne, OutsideCone, SchemaError
from .planar_maps import GridMap, Rect, gradient_field

CLUSTER_TOL = 1e-6
WEIGHT_TOL = 1e-9
RANK_TOL = 1e-12
NULL_LAGRANGIAN_TOL = 1e-3
JENSEN_RTOL = 1e-6
CERTIFIED_TAGS = ("convex", "polyconvex", "null-lagrangian")


@dataclass(frozen=True)
class QCMatrixCone:
    K: float

    def __post_init__(self):
        if not self.K >= 1:
            raise ValueError("K must be >= 1")

    def contains(self, A):
        return linalg.in_cone(A, self.K)

    def __contains__(self, A):
        return bool(np.all(self.contains(A)))


def rank_one_split(A, B, tol=RANK_TOL):
    """Return ``(a, n)`` with ``B - A = a (x) n`` and ``|n| = 1``."""
    D = np.asarray(B, dtype=float) - np.asarray(A, dtype=float)
    scale = max(1.0, float(np.abs(D).max()))
    if abs(linalg.det(D)) > tol * scale * scale:
        raise NotRankOne(f"det(B - A) = {linalg.det(D):.3g} is not zero")
    rows = np.linalg.norm(D, axis=1)
    if rows.max() == 0:
        return np.zeros(2), np.array([1.0, 0.0])
    r = D[int(np.argmax(rows))]
    n = r / np.linalg.norm(r)
    return D @ n, n


def _period_cells(lam, max_den=64):
    frac = Fraction(float(lam)).limit_denominator(max_den)
    if abs(float(frac) - lam) > 1e-12:
        return None
    return frac.denominator


def laminate(A, B, lam, k, omega=Rect(0.0, 0.0, 1.0, 1.0), spacing=None, cells_per_period=None):
    """One laminate ``x -> A x + a chi(x . n)`` with ``k`` periods across ``omega``.

    ``chi`` is the continuous sawtooth with slope 0 on the first fraction
    ``lam`` of each period and slope 1 on the rest, so the gradient is ``A``
    on a volume fraction ``lam`` and ``B`` on the remainder.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    a, n = rank_one_split(A, B)
    for name, M in (("A", A), ("B", B)):
        if not linalg.det(M) > 0:
            raise OutsideCone(f"{name} has det <= 0 and lies in no cone")
    if not isinstance(omega, Rect):
        omega = Rect(*omega)
    corners = np.array([[omega.x0, omega.y0], [omega.x1, omega.y0], [omega.x0, omega.y1], [omega.x1, omega.y1]])
    proj = corners @ n
    t0, extent = proj.min(), proj.max() - proj.min()
    period = extent / k
    if spacing is None:
        axis = np.isclose(np.abs(n), 1.0, atol=1e-14).any()
        q = cells_per_period or _period_cells(lam)
        if axis and q:
            spacing = period / q
        else:
            spacing = min(omega.w, omega.h) / (8 * k)

    def f(X, Y):
        t = (X * n[0] + Y * n[1] - t0) / period
        whole = np.floor(t)
        part = np.clip(t - whole - lam, 0.0, 1.0 - lam)
        chi = period * (whole * (1.0 - lam) + part)
        U = A[0, 0] * X + A[0, 1] * Y + a[0] * chi
        V = A[1, 0] * X + A[1, 1] * Y + a[1] * chi
        return U, V

    return GridMap.from_function(f, omega, spacing, tag=f"laminate k={k}")


def laminate_sequence(A, B, lam, k, omega=Rect(0.0, 0.0, 1.0, 1.0), spacing=None, cells_per_period=None):
    """Laminates with ``1, 2, 4, ..., k`` periods (``k`` itself always last)."""
    ks = []
    j = 1
    while j < k:
        ks.append(j)
        j *= 2
    ks.append(int(k))
    return [laminate(A, B, lam, kk, omega, spacing, cells_per_period) for kk in ks]


def affine_limit(A, B, lam, omega, spacing):
    """The weak limit ``x -> (lam A + (1 - lam) B) x`` of a laminate sequence."""
    M = lam * np.asarray(A, dtype=float) + (1 - lam) * np.asarray(B, dtype=float)
    return GridMap.from_function(
        lambda X, Y: (M[0, 0] * X + M[0, 1] * Y, M[1, 0] * X + M[1, 1] * Y), omega, spacing, tag="limit"
    )


@dataclass
class EmpiricalYoungMeasure:
    """Piecewise-constant Young measure on a grid of coarse cells.

    ``atoms[(j, i)]`` is ``(matrices (n,2,2), weights (n,))``; an empty atom
    list marks a cell where no gradient was available.
    """

    domain: Rect
    rects: np.ndarray  # (ny, nx, 4): x0, y0, w, h
    atoms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rects = np.asarray(self.rects, dtype=float)
        ny, nx = self.rects.shape[:2]
        for j in range(ny):
            for i in range(nx):
                mats, w = self.atoms.get((j, i), (np.zeros((0, 2, 2)), np.zeros(0)))
                mats = np.asarray(mats, dtype=float).reshape(-1, 2, 2)
                w = np.asarray(w, dtype=float).reshape(-1)
                if len(mats) != len(w):
                    raise ValueError(f"cell ({i},{j}): {len(mats)} atoms but {len(w)} weights")
                if np.any(w < 0):
                    raise ValueError(f"cell ({i},{j}): negative weight")
                if len(w) and abs(w.sum() - 1.0) > WEIGHT_TOL:
                    raise ValueError(f"cell ({i},{j}): weights sum to {w.sum()!r}")
                if not np.all(np.isfinite(mats)):
                    raise ValueError(f"cell ({i},{j}): non-finite atom")
                order = np.lexsort(mats.reshape(-1, 4).T[::-1]) if len(w) else np.zeros(0, dtype=int)
                self.atoms[(j, i)] = (mats[order], w[order])

    @property
    def shape(self):
        return self.rects.shape[:2]

    def cells(self):
        ny, nx = self.shape
        for j in range(ny):
            for i in range(nx):
                yield j, i, self.atoms[(j, i)]

    def empty_cells(self):
        return [(i, j) for j, i, (_, w) in self.cells() if len(w) == 0]

    def areas(self):
        return self.rects[..., 2] * self.rects[..., 3]

    def centers(self):
        r = self.rects
        return np.stack([r[..., 0] + 0.5 * r[..., 2], r[..., 1] + 0.5 * r[..., 3]], axis=-1)

    def expect(self, v):
        """Per-cell ``int v dnu_x``; NaN on empty cells."""
        out = np.full(self.shape, np.nan)
        for j, i, (mats, w) in self.cells():
            if len(w):
                out[j, i] = float(np.sum(w * np.asarray(v(mats), dtype=float)))
        return out

    def moments(self):
        out = np.full(self.shape + (2, 2), np.nan)
        for j, i, (mats, w) in self.cells():
            if len(w):
                out[j, i] = np.einsum("k,kab->ab", w, mats)
        return out

    def pair(self, xi, v):
        """``<nu, xi (x) v> = sum over cells of xi(centre) |cell| int v dnu``."""
        c = self.centers()
        E = self.expect(v)
        X = np.asarray(xi(c[..., 0], c[..., 1]), dtype=float) * np.ones(self.shape)
        ok = np.isfinite(E)
        return float(np.sum(X[ok] * self.areas()[ok] * E[ok]))

    def second_moment(self):
        E = self.expect(lambda M: linalg.spectral_norm(M) ** 2)
        ok = np.isfinite(E)
        return float(np.sum(self.areas()[ok] * E[ok]))

    def to_dict(self):
        cells = []
        for j, i, (mats, w) in self.cells():
            cells.append(
                {
                    "i": i,
                    "j": j,
                    "rect": [float(v) for v in self.rects[j, i]],
                    "atoms": [{"m": M.tolist(), "w": float(x)} for M, x in zip(mats, w)],
                }
            )
        ny, nx = self.shape
        return {"domain": self.domain.to_dict(), "shape": [nx, ny], "cells": cells}

    @classmethod
    def from_dict(cls, d):
        try:
            dom = d["domain"]
            domain = Rect(float(dom["x0"]), float(dom["y0"]), float(dom["w"]), float(dom["h"]))
            nx, ny = (int(v) for v in d["shape"])
            rects = np.full((ny, nx, 4), np.nan)
            atoms = {}
            for c in d["cells"]:
                i, j = int(c["i"]), int(c["j"])
                rects[j, i] = [float(v) for v in c["rect"]]
                mats = np.array([a["m"] for a in c["atoms"]], dtype=float).reshape(-1, 2, 2)
                w = np.array([a["w"] for a in c["atoms"]], dtype=float)
                atoms[(j, i)] = (mats, w)
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"bad Young-measure JSON: {e}") from e
        if not np.all(np.isfinite(rects)):
            raise SchemaError("Young-measure JSON is missing cells")
        return cls(domain, rects, atoms)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _cluster(mats, tol=CLUSTER_TOL):
    """Greedy clustering of matrices in lexicographic order; returns (means, counts)."""
    flat = mats.reshape(-1, 4)
    order = np.lexsort(flat.T[::-1])
    flat = flat[order]
    reps, members = [], []
    for row in flat:
        for r, mem in zip(reps, members):
            if np.max(np.abs(row - r)) <= tol:
                mem.append(row)
                break
        else:
            reps.append(row)
            members.append([row])
    means = np.array([np.mean(m, axis=0) for m in members]).reshape(-1, 2, 2)
    counts = np.array([len(m) for m in members], dtype=float)
    return means, counts


def _blocks(n, c):
    edges = list(range(0, n, c)) + [n]
    return list(zip(edges[:-1], edges[1:]))


def empirical_measure(seq, coarsening=4):
    """Gradient histogram of the last member of ``seq`` on coarse cells.

    Each coarse cell gathers ``coarsening x coarsening`` fine cells (fewer at
    the far edges when the lattice is not a multiple of ``coarsening``).
    """
    if isinstance(seq, GridMap):
        seq = [seq]
    if not seq:
        raise ValueError("empty sequence")
    dom = seq[0].domain
    for m in seq[1:]:
        if m.domain != dom:
            raise DomainMismatch(f"domain {m.domain} differs from {dom}")
    coarsening = int(coarsening)
    if coarsening < 1:
        raise ValueError("coarsening must be a positive integer")
    y = seq[-1]
    g = gradient_field(y)
    h = y.spacing
    bx, by = _blocks(y.nx, coarsening), _blocks(y.ny, coarsening)
    rects = np.zeros((len(by), len(bx), 4))
    atoms = {}
    for J, (j0, j1) in enumerate(by):
        for I, (i0, i1) in enumerate(bx):
            rects[J, I] = [dom.x0 + i0 * h, dom.y0 + j0 * h, (i1 - i0) * h, (j1 - j0) * h]
            ok = g.valid[j0:j1, i0:i1]
            mats = g.matrices[j0:j1, i0:i1][ok]
            if len(mats) == 0:
                atoms[(J, I)] = (np.zeros((0, 2, 2)), np.zeros(0))
                continue
            means, counts = _cluster(mats)
            w = counts / counts.sum()
            w[-1] = 1.0 - w[:-1].sum()
            atoms[(J, I)] = (means, w)
    return EmpiricalYoungMeasure(dom, rects, atoms)


def support_check(m, K):
    """Weight fraction of atoms inside ``QCMatrixCone(K)`` and the worst atom."""
    cone = QCMatrixCone(K)
    num = den = 0.0
    worst = None
    for j, i, (mats, w) in m.cells():
        if not len(w):
            continue
        area = m.areas()[j, i]
        inside = cone.contains(mats)
        num += area * float(np.sum(w[inside]))
        den += area
        d = linalg.distortion(mats)
        d = np.where(np.isnan(d), np.inf, d)
        k = int(np.argmax(d))
        if worst is None or d[k] > worst["distortion"]:
            worst = {"cell": [i, j], "matrix": mats[k].tolist(), "distortion": float(d[k]), "weight": float(w[k])}
    return {
        "K": float(K),
        "fraction_inside": num / den if den else float("nan"),
        "worst_atom": worst,
        "skipped_cells": m.empty_cells(),
    }


def reference_gradients(m, ref):
    """Average of ``grad ref`` over fine cells whose centres fall in each coarse cell."""
    g = gradient_field(ref)
    c = g.centers
    out = np.full(m.shape + (2, 2), np.nan)
    for j, i, _ in m.cells():
        x0, y0, w, h = m.rects[j, i]
        sel = g.valid & (c[..., 0] >= x0) & (c[..., 0] < x0 + w) & (c[..., 1] >= y0) & (c[..., 1] < y0 + h)
        if sel.any():
            out[j, i] = g.matrices[sel].mean(axis=0)
    return out


def moment_field(m, ref=None):
    """Per-cell first moments and, with ``ref``, their sup deviation from ``grad ref``.

    Deviation is measured in the spectral norm.  A mismatched reference yields
    a large deviation, not an error.
    """
    from .planar_maps import GradientField

    M = m.moments()
    valid = np.all(np.isfinite(M.reshape(M.shape[:2] + (4,))), axis=-1)
    field_ = GradientField(M, m.centers(), valid)
    report = {"cells": int(valid.sum())}
    if ref is not None:
        R = reference_gradients(m, ref)
        ok = valid & np.all(np.isfinite(R.reshape(R.shape[:2] + (4,))), axis=-1)
        dev = linalg.spectral_norm(M - R)
        report["sup_deviation"] = float(np.max(dev[ok])) if ok.any() else float("nan")
        report["compared_cells"] = int(ok.sum())
    return field_, report


def _density_values(v, mats):
    vals = np.asarray(v(mats), dtype=float)
    if getattr(v, "blows_up", False) and np.any(linalg.det(mats) <= 0):
        raise DensityUndefined("atom with det <= 0 for a density that blows up at degenerate matrices")
    if not np.all(np.isfinite(vals)):
        raise DensityUndefined("density is not finite on every atom")
    return vals


def jensen_check(m, v, y, bins=10):
    """Per-cell ``v(grad y) <= int v dnu_x``.

    ``violations`` counts cells where the inequality fails beyond
    ``1e-6 * scale``.  Null-Lagrangian densities must also reach equality
    within ``1e-3 * scale``.  ``in_class`` records whether ``v`` carries a
    quasiconvexity certificate and is nonnegative on the atoms, i.e. belongs
    to the admissible energy class; ``satisfied`` requires both.
    """
    R = reference_gradients(m, y)
    tag = getattr(v, "tag", "custom")
    margins, rel, cells = [], [], []
    nonneg = True
    for j, i, (mats, w) in m.cells():
        if not len(w) or not np.all(np.isfinite(R[j, i])):
            continue
        vals = _density_values(v, mats)
        nonneg &= bool(np.all(vals >= 0))
        rhs = float(np.sum(w * vals))
        lhs = float(np.asarray(v(R[j, i][None]), dtype=float)[0])
        scale = max(1.0, abs(lhs), abs(rhs))
        margins.append(rhs - lhs)
        rel.append((rhs - lhs) / scale)
        cells.append((i, j))
    margins = np.array(margins)
    rel = np.array(rel)
    violated = rel < -JENSEN_RTOL
    out = {
        "density": getattr(v, "name", "custom"),
        "tag": tag,
        "cells": len(margins),
        "violations": int(violated.sum()),
        "violating_cells": [list(c) for c, b in zip(cells, violated) if b],
        "tolerance": JENSEN_RTOL,
        "min_margin": float(margins.min()) if len(margins) else float("nan"),
        "max_margin": float(margins.max()) if len(margins) else float("nan"),
    }
    if len(margins):
        counts, edges = np.histogram(margins, bins=bins)
        out["margin_histogram"] = {"counts": counts.tolist(), "edges": edges.tolist()}
    if tag == "null-lagrangian":
        out["equality_tolerance"] = NULL_LAGRANGIAN_TOL
        out["equality"] = bool(np.all(np.abs(rel) <= NULL_LAGRANGIAN_TOL))
    out["in_class"] = bool(tag in CERTIFIED_TAGS and nonneg)
    out["satisfied"] = bool(out["in_class"] and out["violations"] == 0 and out.get("equality", True))
    return out


def kp_report(m, y, suite, moment_tol=0.02):
    """The three conditions characterizing gradient Young measures of the class.

    1. first moments match ``grad y``;
    2. Jensen's inequality for every density of ``suite``;
    3. finite second moment.
    """
    _, mom = moment_field(m, y)
    item1 = {"sup_deviation": mom["sup_deviation"], "tolerance": moment_tol}
    item1["ok"] = bool(mom["sup_deviation"] <= moment_tol)
    jensen = [jensen_check(m, v, y) for v in suite]
    item2 = {
        "densities": jensen,
        "ok": bool(all(r["violations"] == 0 and r.get("equality", True) for r in jensen)),
    }
    sm = m.second_moment()
    item3 = {"second_moment": sm, "ok": bool(np.isfinite(sm))}
    return {"item1": item1, "item2": item2, "item3": item3, "ok": item1["ok"] and item2["ok"] and item3["ok"]}


def _test_functions():
    return [
        lambda X, Y: np.ones_like(X),
        lambda X, Y: X,
        lambda X, Y: Y * Y,
        lambda X, Y: np.sin(3 * X + 1) * np.cos(2 * Y),
        lambda X, Y: np.exp(-((X - 0.3) ** 2 + (Y - 0.6) ** 2)),
    ]


def weak_diagnostic(seq, limit):
    """Pairings of each member with five fixed test functions, and gradient sup-distance.

    Weak convergence shows as pairing errors decaying along the sequence
    while ``sup |grad y_k - grad limit|`` stays bounded away from zero.
    ``limit`` is taken to be affine; its mean gradient is the comparison matrix.
    """
    xis = _test_functions()
    gl = gradient_field(limit)
    Ml = np.nanmean(gl.matrices.reshape(-1, 2, 2), axis=0)

    def pairings(m):
        c = m.cell_centers()
        vals = m.evaluate(c.reshape(-1, 2)).reshape(c.shape)
        ok = m.cell_mask()
        area = m.spacing**2
        out = []
        for xi in xis:
            w = xi(c[..., 0], c[..., 1])
            out.append([float(np.sum((w * vals[..., comp])[ok]) * area) for comp in (0, 1)])
        return np.array(out)

    ref = pairings(limit)
    rows = []
    for m in seq:
        p = pairings(m)
        g = gradient_field(m)
        dev = linalg.spectral_norm(g.matrices - Ml)
        rows.append(
            {
                "tag": m.tag,
                "pairing_error": float(np.max(np.abs(p - ref))),
                "grad_sup_distance": float(np.nanmax(dev[g.valid])),
            }
        )
    return rows
