"""Low-level planar geometry: triangle point location, segment tests, polylines."""

import numpy as np

# Generic sub-resolution shift applied to lattice queries so that query points
# never sit exactly on a triangle edge or vertex.
_GENERIC = np.array([0.3183098861837907, 0.5772156649015329])


def generic_offset(scale):
    return _GENERIC * (1e-9 * scale)


def orient(a, b, c):
    """Twice the signed area of triangles ``(a, b, c)``; arrays of shape (..., 2)."""
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
        c[..., 0] - a[..., 0]
    )


def barycentric(tris, pts):
    """Barycentric coordinates of ``pts[k]`` in ``tris[k]``; shapes (m,3,2), (m,2)."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    area = orient(a, b, c)
    with np.errstate(divide="ignore", invalid="ignore"):
        l0 = orient(pts, b, c) / area
        l1 = orient(a, pts, c) / area
    l2 = 1.0 - l0 - l1
    return np.stack([l0, l1, l2], axis=-1)


def lattice_hits(tris, x0, y0, step, nx, ny, shift=(0.0, 0.0)):
    """Find all (triangle, lattice node) pairs with the node inside the triangle.

    The lattice nodes are ``(x0 + i*step + shift[0], y0 + j*step + shift[1])`` for
    ``0 <= i <= nx``, ``0 <= j <= ny``.  Returns ``(tri_idx, j, i, bary)``.
    """
    tris = np.asarray(tris, dtype=float)
    ok = np.all(np.isfinite(tris.reshape(len(tris), -1)), axis=1)
    idx_all = np.nonzero(ok)[0]
    t = tris[idx_all]
    sx, sy = x0 + shift[0], y0 + shift[1]
    lo = t.min(axis=1)
    hi = t.max(axis=1)
    i0 = np.clip(np.ceil((lo[:, 0] - sx) / step), 0, nx).astype(np.int64)
    i1 = np.clip(np.floor((hi[:, 0] - sx) / step), -1, nx).astype(np.int64)
    j0 = np.clip(np.ceil((lo[:, 1] - sy) / step), 0, ny).astype(np.int64)
    j1 = np.clip(np.floor((hi[:, 1] - sy) / step), -1, ny).astype(np.int64)
    ci = np.maximum(i1 - i0 + 1, 0)
    cj = np.maximum(j1 - j0 + 1, 0)
    cnt = ci * cj
    total = int(cnt.sum())
    empty = np.zeros(0, dtype=np.int64)
    if total == 0:
        return empty, empty, empty, np.zeros((0, 3))
    owner = np.repeat(np.arange(len(t)), cnt)
    start = np.cumsum(cnt) - cnt
    local = np.arange(total) - np.repeat(start, cnt)
    ii = i0[owner] + local % ci[owner]
    jj = j0[owner] + local // ci[owner]
    pts = np.stack([sx + ii * step, sy + jj * step], axis=-1)
    bary = barycentric(t[owner], pts)
    inside = np.all(bary >= 0.0, axis=1)
    return idx_all[owner[inside]], jj[inside], ii[inside], bary[inside]


def points_in_triangles(tris, pts):
    """Boolean matrix ``(n_pts, n_tris)`` of strict containment."""
    tris = np.asarray(tris, dtype=float)
    pts = np.asarray(pts, dtype=float)
    a, b, c = (tris[None, :, k] for k in range(3))
    p = pts[:, None, :]
    s = np.sign(orient(a, b, c))
    d0 = orient(p, b, c) * s
    d1 = orient(a, p, c) * s
    d2 = orient(a, b, p) * s
    return (d0 > 0) & (d1 > 0) & (d2 > 0) & (s != 0)


def point_polyline_distance(pts, poly):
    """Distance from each point to the polyline with vertices ``poly``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a = poly[:-1][None]
    b = poly[1:][None]
    p = pts[:, None]
    ab = b - a
    L2 = np.sum(ab * ab, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(np.sum((p - a) * ab, axis=-1) / L2, 0.0, 1.0)
    t = np.where(L2 > 0, t, 0.0)
    q = a + t[..., None] * ab
    return np.sqrt(np.min(np.sum((p - q) ** 2, axis=-1), axis=1))


def segment_intersections(P0, P1, Q0, Q1):
    """All proper or touching intersections between two segment families.

    Returns ``(ip, iq, tp, tq)``: indices into the P and Q families and the
    segment parameters of each intersection point.
    """
    P0, P1, Q0, Q1 = (np.asarray(v, dtype=float) for v in (P0, P1, Q0, Q1))
    r = (P1 - P0)[:, None, :]
    s = (Q1 - Q0)[None, :, :]
    qp = Q0[None, :, :] - P0[:, None, :]
    denom = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / denom
        tq = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
    hit = (denom != 0) & (tp >= 0) & (tp <= 1) & (tq >= 0) & (tq <= 1)
    ip, iq = np.nonzero(hit)
    return ip, iq, tp[ip, iq], tq[ip, iq]


def polylines_intersect(A, B, skip_pairs=None):
    ip, iq, _, _ = segment_intersections(A[:-1], A[1:], B[:-1], B[1:])
    if skip_pairs is not None and len(ip):
        keep = np.ones(len(ip), dtype=bool)
        for a, b in skip_pairs:
            keep &= ~((ip == a) & (iq == b))
        ip = ip[keep]
    return len(ip) > 0


def polyline_distance(A, B):
    """Minimum distance between two polylines (0 if they cross)."""
    if polylines_intersect(A, B):
        return 0.0
    return float(min(point_polyline_distance(A, B).min(), point_polyline_distance(B, A).min()))


def is_simple_closed(V):
    """True if the closed polygon with vertices ``V`` has no self-intersection."""
    V = np.asarray(V, dtype=float)
    n = len(V)
    P0, P1 = V, np.roll(V, -1, axis=0)
    ip, iq, _, _ = segment_intersections(P0, P1, P0, P1)
    d = (iq - ip) % n
    bad = (d != 0) & (d != 1) & (d != n - 1)
    return not np.any(bad)


def is_simple_open(V):
    V = np.asarray(V, dtype=float)
    ip, iq, _, _ = segment_intersections(V[:-1], V[1:], V[:-1], V[1:])
    return not np.any(np.abs(iq - ip) > 1)


def signed_area(V):
    V = np.asarray(V, dtype=float)
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_in_polygon(pts, V):
    """Even-odd rule containment for a closed polygon."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    V = np.asarray(V, dtype=float)
    x, y = pts[:, 0:1], pts[:, 1:2]
    x0, y0 = V[:, 0][None], V[:, 1][None]
    x1, y1 = np.roll(V[:, 0], -1)[None], np.roll(V[:, 1], -1)[None]
    cond = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    crossings = np.sum(cond & (x < xc), axis=1)
    return crossings % 2 == 1


def cumulative_length(V):
    seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])
