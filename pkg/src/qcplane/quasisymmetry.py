"""Quasisymmetric homeomorphisms of an interval.

Maps are piecewise linear through their breakpoints.  All scale-free
quantities (M, eta) are measured after normalizing to ``[0,1] -> [0,1]``.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NoValidD, NotIncreasing, SchemaError

DYADIC_D = [2.0**-k for k in range(2, 21)]
ETA_EXPONENTS = np.arange(-20, 21)


@dataclass
class Homeo1D:
    """Increasing piecewise-linear homeomorphism ``[0, a] -> [0, b]``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.breakpoints, dtype=float)
        s = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != s.shape or len(t) < 2:
            raise ValueError("breakpoints and values must be 1-D of equal length >= 2")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise ValueError("non-finite breakpoint or value")
        if t[0] != 0.0 or s[0] != 0.0:
            raise ValueError("homeomorphism must start at (0, 0)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(s) <= 0):
            k = int(np.argmax(np.diff(s) <= 0))
            raise NotIncreasing(f"values not strictly increasing at breakpoint {k + 1}")
        self.breakpoints = t
        self.values = s

    @property
    def a(self):
        return float(self.breakpoints[-1])

    @property
    def b(self):
        return float(self.values[-1])

    def __call__(self, t):
        return np.interp(t, self.breakpoints, self.values)

    def inverse(self):
        return Homeo1D(self.values.copy(), self.breakpoints.copy())

    def slopes(self):
        return np.diff(self.values) / np.diff(self.breakpoints)

    def normalized(self):
        t = self.breakpoints / self.a
        s = self.values / self.b
        t[-1] = 1.0
        s[-1] = 1.0
        return Homeo1D(t, s)

    @classmethod
    def from_function(cls, f, a=1.0, n=256):
        t = np.linspace(0.0, a, n + 1)
        s = np.asarray(f(t), dtype=float)
        s = s - s[0]
        t[0] = 0.0
        return cls(t, s)

    @classmethod
    def identity(cls, a=1.0, b=None):
        return cls(np.array([0.0, a]), np.array([0.0, a if b is None else b]))

    def to_dict(self):
        return {
            "a": self.a,
            "b": self.b,
            "breakpoints": [float(v) for v in self.breakpoints],
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            t = [float(v) for v in d["breakpoints"]]
            s = [float(v) for v in d["values"]]
            a, b = float(d.get("a", t[-1])), float(d.get("b", s[-1]))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SchemaError(f"invalid Homeo1D JSON: {exc}") from exc
        if abs(t[-1] - a) > 1e-12 * max(1.0, a) or abs(s[-1] - b) > 1e-12 * max(1.0, b):
            raise SchemaError("last breakpoint/value must equal a/b")
        try:
            return cls(np.array(t), np.array(s))
        except NotIncreasing:
            raise
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc

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
class QSReport:
    M: float
    eta_t: np.ndarray
    eta: np.ndarray
    witnesses: list = field(default_factory=list)  # (t-h, t, t+h, ratio), normalized

    def eta_at(self, t):
        """Nondecreasing step interpolation of the sampled eta (upper side)."""
        k = np.searchsorted(self.eta_t, t, side="left")
        k = np.clip(k, 0, len(self.eta_t) - 1)
        return self.eta[k]

    def to_csv(self):
        rows = ["t_minus,t,t_plus,ratio"]
        rows += [f"{a!r},{b!r},{c!r},{r!r}" for a, b, c, r in self.witnesses]
        return "\r\n".join(rows) + "\r\n"

    def to_dict(self):
        return {
            "M": self.M,
            "eta_table": [[float(t), float(e)] for t, e in zip(self.eta_t, self.eta)],
            "witnesses": [[float(v) for v in w] for w in self.witnesses],
        }


def _grid(n):
    return np.linspace(0.0, 1.0, n + 1)


def m_condition(s, grid_density=256, n_witnesses=5):
    """Symmetric-ratio constant M and a sampled modulus eta.

    M is scanned over all ``(t, h)`` on the uniform grid with ``grid_density``
    intervals.  eta(t) bounds ``|s(x+th)-s(x)| / |s(x+h)-s(x)|`` over x on the
    grid and the breakpoints, h at dyadic scales of either sign, and y on
    either side of x.
    """
    u = s.normalized()
    n = int(grid_density)
    g = _grid(n)
    v = u(g)
    # symmetric triples
    i = np.arange(n + 1)[:, None]
    k = np.arange(1, n // 2 + 1)[None, :]
    ok = (i - k >= 0) & (i + k <= n)
    ii, kk = np.broadcast_arrays(i, k)
    ii, kk = ii[ok], kk[ok]
    fwd = v[ii + kk] - v[ii]
    bwd = v[ii] - v[ii - kk]
    ratio = np.maximum(fwd / bwd, bwd / fwd)
    order = np.argsort(-ratio, kind="stable")[:n_witnesses]
    witnesses = [
        (float(g[ii[o] - kk[o]]), float(g[ii[o]]), float(g[ii[o] + kk[o]]), float(ratio[o])) for o in order
    ]
    M = float(ratio.max()) if len(ratio) else 1.0

    eta_t, eta = eta_table(u, n)
    return QSReport(max(M, 1.0), eta_t, eta, witnesses)


def eta_table(u, n):
    xs = np.unique(np.concatenate([_grid(n), u.breakpoints]))
    scales = 2.0 ** -np.arange(0, int(np.log2(max(n, 2))) + 1)
    hs = np.concatenate([scales, -scales])
    ts = 2.0**ETA_EXPONENTS
    X = xs[:, None]
    H = hs[None, :]
    base_ok = (X + H >= 0) & (X + H <= 1)
    den = np.abs(u(np.clip(X + H, 0, 1)) - u(X))
    out = np.zeros(len(ts))
    for m, t in enumerate(ts):
        # y on either side of x, z = x + h
        for sign in (1.0, -1.0):
            y = X + sign * t * H
            ok = base_ok & (y >= 0) & (y <= 1)
            if ok.any():
                num = np.abs(u(np.clip(y, 0, 1)) - u(X))
                out[m] = max(out[m], float(np.max(np.where(ok, num / np.where(ok, den, 1.0), 0.0))))
    return ts, np.maximum.accumulate(out)


def psi1(u):
    """Smooth step: 0 below 1/4, 1 above 3/4."""
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 0.75, 1.0, 0.0)
    mid = (u > 0.25) & (u < 0.75)
    with np.errstate(divide="ignore", over="ignore"):
        z = 1.0 / (0.75 - u[mid]) - 1.0 / (u[mid] - 0.25)
    out[mid] = expit(z)
    return out


def _simpson_psi1(x0, x1, a, nsub):
    """Cumulative integral of psi1(x/a) on ``nsub`` Simpson panels of [x0, x1]."""
    x = np.linspace(x0, x1, nsub + 1)
    mid = 0.5 * (x[:-1] + x[1:])
    dx = np.diff(x)
    panel = dx / 6.0 * (psi1(x[:-1] / a) + 4 * psi1(mid / a) + psi1(x[1:] / a))
    return x, np.concatenate([[0.0], np.cumsum(panel)])


def fit_1d(s, nsub=64):
    """Blend ``s`` into the affine slope ``b/a`` across ``[a/4, 3a/4]``.

    The result equals ``s`` on ``[0, a/4]``, has slope ``b/a`` on ``[3a/4, a]``
    and ends below ``3b/2``.
    """
    if not isinstance(s, Homeo1D):
        raise TypeError("fit_1d expects a Homeo1D")
    a, b = s.a, s.b
    lo, hi = 0.25 * a, 0.75 * a
    t = s.breakpoints
    slope = s.slopes()
    gap = 1e-9 * a
    inner = t[(t > lo + gap) & (t < hi - gap)]
    knots = np.concatenate([[lo], inner, [hi]])
    xs_mid = [np.array([lo])]
    corr_mid = [np.array([0.0])]
    acc = 0.0
    for x0, x1 in zip(knots[:-1], knots[1:]):
        seg = min(np.searchsorted(t, 0.5 * (x0 + x1)) - 1, len(slope) - 1)
        x, cum = _simpson_psi1(x0, x1, a, nsub)
        # d/dx correction = psi1 * (b/a - s')
        c = (b / a - slope[seg]) * cum
        xs_mid.append(x[1:])
        corr_mid.append(acc + c[1:])
        acc += c[-1]
    xs_mid = np.concatenate(xs_mid)
    corr = np.concatenate(corr_mid)
    vals_mid = s(xs_mid) + corr
    head = t[t < lo]
    head_v = s.values[t < lo]
    tail_v = vals_mid[-1] + (b / a) * (a - hi)
    bp = np.concatenate([head, xs_mid, [a]])
    vals = np.concatenate([head_v, vals_mid, [tail_v]])
    return Homeo1D(bp, vals)


def _clean(t, v):
    """Drop knots closer than ``1e-9 * a`` to their predecessor (ends are kept)."""
    a = t[-1]
    keep = np.concatenate([[True], np.diff(t) > 1e-9 * a])
    keep[-1] = True
    keep[:-1] &= t[:-1] < a - 1e-9 * a
    return Homeo1D(t[keep], v[keep])


def _reflect(s):
    """``t -> b - s(a - t)``."""
    a, b = s.a, s.b
    t = a - s.breakpoints[::-1]
    v = b - s.values[::-1]
    t[0], v[0] = 0.0, 0.0
    t[-1], v[-1] = a, b
    return _clean(t, v)


def _restrict(s, c):
    """``s`` on ``[0, c]`` as a Homeo1D onto ``[0, s(c)]``."""
    t = s.breakpoints
    keep = t < c - 1e-9 * c
    return Homeo1D(np.concatenate([t[keep], [c]]), np.concatenate([s.values[keep], [float(s(c))]]))


def choose_d(r, s, grid_density=256):
    """Largest dyadic d <= 1/4 with eta(d) <= 1/4 for both maps.

    Also requires ``r(d a) <= b/4`` and ``b - s(a - d a) <= b/4`` directly, since
    the sampled eta only approximates the true modulus.
    """
    a, b = r.a, r.b
    er = m_condition(r, grid_density)
    es = m_condition(s, grid_density)
    for d in DYADIC_D:
        eta_d = max(float(er.eta_at(d)), float(es.eta_at(d)))
        if eta_d > 0.25:
            continue
        if r(d * a) <= 0.25 * b and b - s(a - d * a) <= 0.25 * b:
            return d, max(er.M, es.M)
    raise NoValidD(f"no dyadic d in [2^-20, 1/4] with eta(d) <= 1/4 (M_r={er.M:.3g}, M_s={es.M:.3g})")


def reparam_join(r, s, grid_density=256, d=None, return_d=False):
    """Homeomorphism equal to ``r`` near 0, to ``s`` near ``a``, affine between.

    With ``return_d`` the dyadic fraction ``d`` used for the join is returned too.
    """
    a, b = r.a, r.b
    if abs(s.a - a) > 1e-12 * a or abs(s.b - b) > 1e-12 * b:
        raise ValueError("r and s must share domain [0,a] and range [0,b]")
    if d is None:
        d, _ = choose_d(r, s, grid_density)
    c = d * a
    left = fit_1d(_restrict(r, c))
    right = fit_1d(_restrict(_reflect(s), c))
    rt = a - right.breakpoints[::-1]
    rv = b - right.values[::-1]
    rt[-1], rv[-1] = a, b
    rt[0] = a - c
    bp = np.concatenate([left.breakpoints, rt])
    vals = np.concatenate([left.values, rv])
    out = _clean(bp, vals)
    return (out, d) if return_d else out


def bi_holder_check(s, grid_density=128):
    """Smallest kappa1 and largest kappa2 in the two-sided Hoelder bounds.

    ``8^-k1 |dt|^k1 <= |ds| <= 8^k1 |dt|^k2`` on the normalized map, over pairs
    drawn from the breakpoints and a uniform grid.
    """
    u = s.normalized()
    pts = np.unique(np.concatenate([u.breakpoints, _grid(grid_density)]))
    if len(pts) > 2048:
        pts = np.unique(np.concatenate([pts[:: max(1, len(pts) // 2048)], [1.0]]))
    v = u(pts)
    i, j = np.triu_indices(len(pts), k=1)
    dt = pts[j] - pts[i]
    ds = v[j] - v[i]
    ok = dt < 1.0
    ldt, lds = np.log(dt[ok]), np.log(ds[ok])
    log8 = np.log(8.0)
    k1 = max(1.0, float(np.max(lds / (ldt - log8))))
    k2 = min(1.0, float(np.min((lds - k1 * log8) / ldt)))
    return {"kappa1": k1, "kappa2": k2, "passes": bool(k1 < 20 and k2 > 0)}
