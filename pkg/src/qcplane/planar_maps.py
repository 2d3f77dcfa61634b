"""Discrete planar maps on uniform square lattices.

A :class:`GridMap` stores node values of a map ``y: Omega -> R^2`` on a
rectangle.  Between nodes the map is read as piecewise bilinear; for point
location and area computations each cell is split into two triangles along
its ``(i, j) -> (i+1, j+1)`` diagonal.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry, linalg
from .errors import (
    BoundaryMismatch,
    DomainMismatch,
    NearBoundary,
    NonInjective,
    OverlappingSubdomains,
    SchemaError,
)

_SPACING_RTOL = 1e-9


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    w: float
    h: float

    @property
    def x1(self):
        return self.x0 + self.w

    @property
    def y1(self):
        return self.y0 + self.h

    @property
    def area(self):
        return self.w * self.h

    @property
    def perimeter(self):
        return 2 * (self.w + self.h)

    def to_dict(self):
        return {"x0": self.x0, "y0": self.y0, "w": self.w, "h": self.h}


def _lattice_count(length, spacing):
    n = int(round(length / spacing))
    if n < 1 or abs(n * spacing - length) > _SPACING_RTOL * max(length, spacing):
        raise ValueError(f"spacing {spacing} does not divide length {length}")
    return n


@dataclass
class GridMap:
    """Node samples of a planar map on a uniform lattice over ``domain``.

    ``values`` has shape ``(ny+1, nx+1, 2)`` (row index ``j`` runs along y).
    ``mask`` marks nodes where the map is defined; undefined nodes hold NaN.
    """

    domain: Rect
    spacing: float
    values: np.ndarray
    mask: np.ndarray = None
    tag: str = None

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        nx = _lattice_count(self.domain.w, self.spacing)
        ny = _lattice_count(self.domain.h, self.spacing)
        if nx < 2 or ny < 2:
            raise ValueError("lattice needs at least 3 nodes per side")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (ny + 1, nx + 1, 2):
            raise ValueError(f"values shape {self.values.shape} != {(ny + 1, nx + 1, 2)}")
        finite = np.all(np.isfinite(self.values), axis=-1)
        if self.mask is None:
            if not finite.all():
                raise ValueError("non-finite node values without a mask")
            self.mask = np.ones((ny + 1, nx + 1), dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if not finite[self.mask].all():
                raise ValueError("non-finite value at a node marked as defined")
            self.values = np.where(self.mask[..., None], self.values, np.nan)

    @property
    def nx(self):
        return self.values.shape[1] - 1

    @property
    def ny(self):
        return self.values.shape[0] - 1

    @property
    def h(self):
        return self.spacing

    def nodes(self):
        xs = self.domain.x0 + self.spacing * np.arange(self.nx + 1)
        ys = self.domain.y0 + self.spacing * np.arange(self.ny + 1)
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X, Y], axis=-1)

    def cell_centers(self):
        xs = self.domain.x0 + self.spacing * (np.arange(self.nx) + 0.5)
        ys = self.domain.y0 + self.spacing * (np.arange(self.ny) + 0.5)
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X, Y], axis=-1)

    def cell_mask(self):
        m = self.mask
        return m[:-1, :-1] & m[:-1, 1:] & m[1:, :-1] & m[1:, 1:]

    @classmethod
    def from_function(cls, f, domain, spacing, tag=None):
        """Sample ``f(X, Y) -> (U, V)`` at the lattice nodes."""
        if not isinstance(domain, Rect):
            domain = Rect(*domain)
        nx = _lattice_count(domain.w, spacing)
        ny = _lattice_count(domain.h, spacing)
        xs = domain.x0 + spacing * np.arange(nx + 1)
        ys = domain.y0 + spacing * np.arange(ny + 1)
        X, Y = np.meshgrid(xs, ys)
        U, V = f(X, Y)
        vals = np.stack([np.broadcast_to(U, X.shape), np.broadcast_to(V, X.shape)], axis=-1)
        return cls(domain, spacing, vals, tag=tag)

    def with_values(self, values, mask=None, tag=None):
        return GridMap(self.domain, self.spacing, values, self.mask.copy() if mask is None else mask, tag)

    def evaluate(self, pts, clamp=0.0):
        """Bilinear interpolation at points of shape ``(..., 2)``.

        Points farther than ``clamp`` outside the domain give NaN; points within
        ``clamp`` are projected onto the domain first.
        """
        pts = np.asarray(pts, dtype=float)
        shape = pts.shape[:-1]
        p = pts.reshape(-1, 2)
        d = self.domain
        px, py = p[:, 0], p[:, 1]
        tol = clamp + 1e-12 * max(d.w, d.h)
        outside = (px < d.x0 - tol) | (px > d.x1 + tol) | (py < d.y0 - tol) | (py > d.y1 + tol)
        u = (np.clip(px, d.x0, d.x1) - d.x0) / self.spacing
        v = (np.clip(py, d.y0, d.y1) - d.y0) / self.spacing
        i = np.clip(np.floor(u).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor(v).astype(np.int64), 0, self.ny - 1)
        s = (u - i)[:, None]
        t = (v - j)[:, None]
        Y = self.values
        out = (
            (1 - s) * (1 - t) * Y[j, i]
            + s * (1 - t) * Y[j, i + 1]
            + (1 - s) * t * Y[j + 1, i]
            + s * t * Y[j + 1, i + 1]
        )
        out[outside] = np.nan
        return out.reshape(shape + (2,))

    def image_triangles(self):
        """Image triangles ``(ny, nx, 2, 3, 2)``; NaN where a node is undefined."""
        Y = self.values
        a, b, c, d = Y[:-1, :-1], Y[:-1, 1:], Y[1:, 1:], Y[1:, :-1]
        t0 = np.stack([a, b, c], axis=-2)
        t1 = np.stack([a, c, d], axis=-2)
        return np.stack([t0, t1], axis=2)

    def domain_triangles(self):
        X = self.nodes()
        a, b, c, d = X[:-1, :-1], X[:-1, 1:], X[1:, 1:], X[1:, :-1]
        return np.stack([np.stack([a, b, c], axis=-2), np.stack([a, c, d], axis=-2)], axis=2)

    def boundary_loop(self):
        """Node values along the domain boundary, counter-clockwise, closed."""
        Y = self.values
        loop = np.concatenate([Y[0, :], Y[1:, -1], Y[-1, -2::-1], Y[-2::-1, 0]])
        return loop

    def to_dict(self):
        vals = self.values.reshape(-1, 2)
        m = self.mask.reshape(-1)
        out = [[float(u), float(v)] if ok else None for (u, v), ok in zip(vals, m)]
        d = {"domain": self.domain.to_dict(), "spacing": float(self.spacing), "values": out}
        if self.tag:
            d["tag"] = self.tag
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            dom = d["domain"]
            domain = Rect(float(dom["x0"]), float(dom["y0"]), float(dom["w"]), float(dom["h"]))
            spacing = float(d["spacing"])
            nx = _lattice_count(domain.w, spacing)
            ny = _lattice_count(domain.h, spacing)
            raw = d["values"]
            if len(raw) != (nx + 1) * (ny + 1):
                raise SchemaError(f"expected {(nx + 1) * (ny + 1)} values, got {len(raw)}")
            mask = np.array([v is not None for v in raw], dtype=bool)
            vals = np.array([v if v is not None else [np.nan, np.nan] for v in raw], dtype=float)
            return cls(
                domain, spacing, vals.reshape(ny + 1, nx + 1, 2), mask.reshape(ny + 1, nx + 1), d.get("tag")
            )
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"invalid GridMap JSON: {exc}") from exc

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


@dataclass
class GradientField:
    matrices: np.ndarray  # (ny, nx, 2, 2)
    centers: np.ndarray  # (ny, nx, 2)
    valid: np.ndarray  # (ny, nx) bool

    @property
    def shape(self):
        return self.valid.shape


@dataclass
class DistortionReport:
    per_cell: np.ndarray  # NaN where det <= 0 or undefined
    det: np.ndarray
    sup: float
    fraction_nonpositive: float
    valid: np.ndarray = field(repr=False, default=None)

    def to_csv(self):
        rows = ["cell_i,cell_j,distortion,det"]
        ny, nx = self.det.shape
        for j in range(ny):
            for i in range(nx):
                if self.valid is not None and not self.valid[j, i]:
                    continue
                k = self.per_cell[j, i]
                rows.append(f"{i},{j},{'' if np.isnan(k) else repr(float(k))},{float(self.det[j, i])!r}")
        return "\r\n".join(rows) + "\r\n"


def gradient_field(m):
    """Cell-centred gradients; exact for affine maps, second order for smooth ones.

    Each cell uses the average of its two edge differences in each direction,
    i.e. the gradient of the bilinear interpolant at the cell centre.
    """
    Y = m.values
    h = m.spacing
    dx = 0.5 * ((Y[:-1, 1:] - Y[:-1, :-1]) + (Y[1:, 1:] - Y[1:, :-1])) / h
    dy = 0.5 * ((Y[1:, :-1] - Y[:-1, :-1]) + (Y[1:, 1:] - Y[:-1, 1:])) / h
    A = np.stack([dx, dy], axis=-1)
    valid = m.cell_mask()
    A = np.where(valid[..., None, None], A, np.nan)
    return GradientField(A, m.cell_centers(), valid)


def distortion(g):
    if isinstance(g, GridMap):
        g = gradient_field(g)
    dt = linalg.det(g.matrices)
    K = linalg.distortion(g.matrices)
    valid = g.valid
    n_valid = int(valid.sum())
    nonpos = valid & ~(dt > 0)
    pos = valid & (dt > 0)
    sup = float(np.max(K[pos])) if pos.any() else float("nan")
    frac = float(nonpos.sum() / n_valid) if n_valid else 0.0
    return DistortionReport(K, dt, sup, frac, valid)


def _flat_triangles(m):
    T = m.image_triangles().reshape(-1, 3, 2)
    D = m.domain_triangles().reshape(-1, 3, 2)
    ok = np.all(np.isfinite(T.reshape(len(T), -1)), axis=1)
    return T, D, ok


def invert(m, spacing=None):
    """Inverse map sampled on a lattice over the bounding box of the image.

    Nodes outside the image are marked undefined.  Raises :class:`NonInjective`
    when the image mesh folds or overlaps itself.
    """
    h = m.spacing if spacing is None else spacing
    T, D, ok = _flat_triangles(m)
    orient = geometry.orient(T[:, 0], T[:, 1], T[:, 2])
    if np.any(orient[ok] <= 0):
        raise NonInjective(f"{int(np.sum(orient[ok] <= 0))} image triangles are degenerate or reversed")
    pts = m.values[m.mask]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    nx = max(2, int(np.ceil((hi[0] - lo[0]) / h - 1e-9)))
    ny = max(2, int(np.ceil((hi[1] - lo[1]) / h - 1e-9)))
    dom = Rect(float(lo[0]), float(lo[1]), nx * h, ny * h)
    shift = geometry.generic_offset(h)
    tri, jj, ii, bary = lattice_hits(T, ok, dom.x0, dom.y0, h, nx, ny, shift)
    counts = np.zeros((ny + 1, nx + 1), dtype=np.int64)
    np.add.at(counts, (jj, ii), 1)
    if np.any(counts > 1):
        j, i = np.argwhere(counts > 1)[0]
        raise NonInjective(f"image overlaps itself near {(dom.x0 + i * h, dom.y0 + j * h)}")
    vals = np.full((ny + 1, nx + 1, 2), np.nan)
    vals[jj, ii] = np.einsum("kv,kvd->kd", bary, D[tri])
    mask = counts == 1
    return GridMap(dom, h, vals, mask, tag=f"inverse({m.tag})" if m.tag else None)


def lattice_hits(T, ok, x0, y0, step, nx, ny, shift):
    idx = np.nonzero(ok)[0]
    tri, jj, ii, bary = geometry.lattice_hits(T[idx], x0, y0, step, nx, ny, shift)
    return idx[tri], jj, ii, bary


def locate(m, pts):
    """Preimages of arbitrary image points under the piecewise-linear map.

    Returns an array like ``pts`` with NaN for points outside the image.
    """
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape
    p = pts.reshape(-1, 2)
    T, D, ok = _flat_triangles(m)
    out = np.full(p.shape, np.nan)
    idx = np.nonzero(ok)[0]
    Tk = T[idx]
    lo = Tk.min(axis=1)
    hi = Tk.max(axis=1)
    # bucket triangles on a coarse grid over the image bounding box
    gmin = lo.min(axis=0)
    gmax = hi.max(axis=0)
    nb = max(1, int(np.sqrt(len(idx)) / 2))
    cell = np.maximum((gmax - gmin) / nb, 1e-300)
    b0 = np.clip(((lo - gmin) / cell).astype(int), 0, nb - 1)
    b1 = np.clip(((hi - gmin) / cell).astype(int), 0, nb - 1)
    buckets = {}
    for k in range(len(idx)):
        for bx in range(b0[k, 0], b1[k, 0] + 1):
            for by in range(b0[k, 1], b1[k, 1] + 1):
                buckets.setdefault((bx, by), []).append(k)
    pb = np.floor((p - gmin) / cell).astype(int)
    for n in range(len(p)):
        if not np.all(np.isfinite(p[n])):
            continue
        key = (int(pb[n, 0]), int(pb[n, 1]))
        cand = buckets.get(key)
        if not cand:
            continue
        cand = np.array(cand)
        bary = geometry.barycentric(Tk[cand], np.repeat(p[n][None], len(cand), axis=0))
        inside = np.all(bary >= -1e-12, axis=1)
        if inside.any():
            k = np.argmax(inside)
            out[n] = bary[k] @ D[idx[cand[k]]]
    return out.reshape(shape)


def compose(outer, inner):
    """``outer o inner`` sampled on the lattice of ``inner``."""
    vals = inner.values
    d = outer.domain
    tol = outer.spacing
    v = vals[inner.mask]
    gap = np.maximum.reduce(
        [d.x0 - v[:, 0], v[:, 0] - d.x1, d.y0 - v[:, 1], v[:, 1] - d.y1, np.zeros(len(v))]
    )
    if np.any(gap > tol):
        raise DomainMismatch(f"inner image leaves outer domain by {gap.max():.3e} > {tol:.3e}")
    out = outer.evaluate(vals, clamp=tol)
    mask = inner.mask & np.all(np.isfinite(out), axis=-1)
    tag = f"{outer.tag}o{inner.tag}" if outer.tag and inner.tag else None
    return GridMap(inner.domain, inner.spacing, out, mask, tag)


def multiplicity(m, p, check_boundary=True):
    """Orientation-weighted count of image triangles containing ``p``."""
    p = np.asarray(p, dtype=float)
    if check_boundary:
        loop = m.boundary_loop()
        loop = loop[np.all(np.isfinite(loop), axis=1)]
        dist = geometry.point_polyline_distance(p[None], loop)[0]
        if dist < m.spacing:
            raise NearBoundary(f"point {tuple(p)} within {dist:.3e} of the boundary image")
    T, _, ok = _flat_triangles(m)
    T = T[ok]
    q = p + geometry.generic_offset(m.spacing)
    inside = geometry.points_in_triangles(T, q[None])[0]
    sign = np.sign(geometry.orient(T[:, 0], T[:, 1], T[:, 2]))
    return int(np.sum(sign[inside]))


def image_area(m, resolution=None):
    """Area of the union of image triangles, rasterized at ``resolution``."""
    step = m.spacing / 4 if resolution is None else resolution
    T, _, ok = _flat_triangles(m)
    pts = m.values[m.mask]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    nx = int(np.ceil((hi[0] - lo[0]) / step)) + 1
    ny = int(np.ceil((hi[1] - lo[1]) / step)) + 1
    shift = np.array([0.5 * step, 0.5 * step]) + geometry.generic_offset(step)
    tri, jj, ii, _ = lattice_hits(T, ok, lo[0], lo[1], step, nx, ny, shift)
    covered = np.zeros((ny + 1, nx + 1), dtype=bool)
    covered[jj, ii] = True
    return float(covered.sum()) * step * step


def ciarlet_necas(m, tol=None):
    """Compare the integral of det(grad m) with the (once-counted) image area."""
    g = gradient_field(m)
    dt = linalg.det(g.matrices)
    lhs = float(np.nansum(np.where(g.valid, dt, 0.0)) * m.spacing**2)
    rhs = image_area(m)
    tol = 5 * m.spacing if tol is None else tol
    ratio = lhs / rhs if rhs > 0 else float("inf")
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio, "tol": tol, "satisfied": bool(lhs <= rhs * (1 + tol))}


def _cell_mask_from(sub, shape):
    if isinstance(sub, np.ndarray) and sub.dtype == bool:
        if sub.shape != shape:
            raise ValueError(f"subdomain mask shape {sub.shape} != {shape}")
        return sub
    mask = np.zeros(shape, dtype=bool)
    for i, j in sub:
        mask[j, i] = True
    return mask


def node_sets(cells):
    """Nodes touched by ``cells`` and the subset on the boundary of their union."""
    ny, nx = cells.shape
    touched = np.zeros((ny + 1, nx + 1), dtype=bool)
    outside = np.zeros((ny + 1, nx + 1), dtype=bool)
    for dj in (0, 1):
        for di in (0, 1):
            touched[dj : dj + ny, di : di + nx] |= cells
            outside[dj : dj + ny, di : di + nx] |= ~cells
    outside[0, :] = outside[-1, :] = outside[:, 0] = outside[:, -1] = True
    return touched, touched & outside


def glue(base, pieces, tol=1e-9):
    """Replace ``base`` by each piece on the interior nodes of its subdomain.

    ``pieces`` is a list of ``(subdomain, GridMap)`` where the subdomain is a
    boolean cell mask or a list of ``(i, j)`` cell indices.
    """
    shape = (base.ny, base.nx)
    used = np.zeros(shape, dtype=bool)
    vals = base.values.copy()
    mask = base.mask.copy()
    for sub, piece in pieces:
        cells = _cell_mask_from(sub, shape)
        if np.any(used & cells):
            raise OverlappingSubdomains("subdomains share cells")
        used |= cells
        if piece.values.shape != base.values.shape:
            raise ValueError("piece must live on the base lattice")
        touched, bnd = node_sets(cells)
        gap = np.linalg.norm(piece.values - base.values, axis=-1)
        gap = np.where(bnd & base.mask, gap, 0.0)
        if np.any(~np.isfinite(gap)) or np.any(gap > tol):
            gap = np.where(np.isfinite(gap), gap, np.inf)
            j, i = np.unravel_index(np.argmax(gap), gap.shape)
            raise BoundaryMismatch((int(i), int(j)), float(gap[j, i]))
        inner = touched & ~bnd
        vals[inner] = piece.values[inner]
        mask[inner] = piece.mask[inner]
    return GridMap(base.domain, base.spacing, vals, mask)


def heatmap_svg(report, domain=None, title="distortion", vmax=None):
    """Self-contained SVG heatmap of per-cell distortion."""
    K = report.per_cell
    ny, nx = K.shape
    finite = K[np.isfinite(K)]
    lo = 1.0
    hi = float(vmax if vmax is not None else (finite.max() if finite.size else 1.0))
    hi = max(hi, lo + 1e-12)
    px = max(1, 512 // max(nx, ny))
    W, H = nx * px, ny * px
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H + 20}" '
        f'viewBox="0 0 {W} {H + 20}">',
        f'<text x="2" y="14" style="font-family:monospace;font-size:12px">{title} '
        f"[{lo:.3g}, {hi:.3g}]</text>",
    ]
    for j in range(ny):
        for i in range(nx):
            k = K[j, i]
            if np.isfinite(k):
                t = min(1.0, max(0.0, (k - lo) / (hi - lo)))
                r, g, b = int(255 * t), int(64 + 96 * (1 - t)), int(255 * (1 - t))
                color = f"rgb({r},{g},{b})"
            elif report.valid is not None and report.valid[j, i]:
                color = "rgb(0,0,0)"
            else:
                continue
            y = 20 + (ny - 1 - j) * px
            out.append(f'<rect x="{i * px}" y="{y}" width="{px}" height="{px}" style="fill:{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
