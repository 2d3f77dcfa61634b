"""Analytic maps with known gradients, distortion and inverses, for checks."""

import numpy as np


def identity(X, Y):
    return X, Y


def affine(A, b=(0.0, 0.0)):
    A = np.asarray(A, dtype=float)

    def f(X, Y):
        return A[0, 0] * X + A[0, 1] * Y + b[0], A[1, 0] * X + A[1, 1] * Y + b[1]

    return f


def radial(K):
    """``x |x|^(K-1)``: distortion exactly K away from the origin."""

    def f(X, Y):
        r = np.hypot(X, Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, r ** (K - 1), 0.0)
        return X * s, Y * s

    return f


def radial_gradient(K, X, Y):
    """Analytic gradient of :func:`radial` at points ``(X, Y)``."""
    r = np.hypot(X, Y)
    ex, ey = X / r, Y / r
    a = r ** (K - 1)
    # radial stretch K*a, tangential stretch a
    G = np.empty(np.shape(X) + (2, 2))
    G[..., 0, 0] = a * (1 + (K - 1) * ex * ex)
    G[..., 0, 1] = a * (K - 1) * ex * ey
    G[..., 1, 0] = a * (K - 1) * ex * ey
    G[..., 1, 1] = a * (1 + (K - 1) * ey * ey)
    return G


def square(X, Y):
    """``z -> z^2``."""
    return X * X - Y * Y, 2 * X * Y


def twist(center, radius, angle):
    """Rotation by ``angle * (1 - |x-c|/radius)`` inside the disc, identity outside."""
    cx, cy = center

    def f(X, Y):
        dx, dy = X - cx, Y - cy
        r = np.hypot(dx, dy)
        th = angle * np.clip(1 - r / radius, 0.0, 1.0)
        c, s = np.cos(th), np.sin(th)
        return cx + c * dx - s * dy, cy + s * dx + c * dy

    return f


def twist_distortion(radius, angle, r):
    """Exact distortion of :func:`twist` at distance ``r`` from the centre."""
    # shear of size t = r * dtheta/dr in polar coordinates
    t = np.abs(angle) * r / radius
    s = 0.5 * (t + np.sqrt(t * t + 4))
    return s * s


REGISTRY = {
    "identity": lambda **kw: identity,
    "affine": lambda A=((1, 0), (0, 1)), **kw: affine(A),
    "radial": lambda K=3.0, **kw: radial(K),
    "square": lambda **kw: square,
    "twist": lambda center=(0.5, 0.5), radius=0.25, angle=0.5, **kw: twist(center, radius, angle),
}


def smooth_warp(amp, seed, modes=3):
    """``x + amp * tau(x)`` with ``|tau| <= 1`` built from random low Fourier modes."""
    rng = np.random.default_rng(seed)
    kx = rng.integers(1, modes + 1, size=(2, modes))
    ky = rng.integers(0, modes + 1, size=(2, modes))
    ph = rng.uniform(0, 2 * np.pi, size=(2, modes))
    w = rng.uniform(-1, 1, size=(2, modes))
    w /= np.abs(w).sum(axis=1, keepdims=True)

    def tau(X, Y, c):
        out = 0.0
        for m in range(modes):
            out = out + w[c, m] * np.sin(kx[c, m] * X + ky[c, m] * Y + ph[c, m])
        return out

    def f(X, Y):
        return X + amp * tau(X, Y, 0), Y + amp * tau(X, Y, 1)

    return f


def compose_fn(outer, inner):
    def f(X, Y):
        return outer(*inner(X, Y))

    return f


CUTOFF_BASE = {
    "identity": (identity, 1.0),
    "affine": (affine([[1.2, 0.15], [-0.05, 0.9]]), 1.25),
    "radial": (compose_fn(radial(1.5), affine([[1, 0], [0, 1]], (1.0, 1.0))), 2.0),
    "wavy": (smooth_warp(0.05, 7), 1.3),
}


def cutoff_pair(base, seed, delta, frac=0.4):
    """``(y, yk)`` with ``yk = y o (I + tau)`` and ``|y - yk| <= frac * delta``.

    Returns the two callables; the second-named number in CUTOFF_BASE is a
    Lipschitz bound of ``y`` used to scale ``tau``.
    """
    y, lip = CUTOFF_BASE[base]
    warp = smooth_warp(frac * delta / lip, seed)
    return y, compose_fn(y, warp)


def extremal_radial(K):
    """``x |x|^(1/K - 1)``: distortion K with gradient blowing up at the origin."""
    return radial(1.0 / K)


def homeo_corpus():
    """Ten increasing piecewise-linear homeomorphisms ``[0, a] -> [0, b]``."""
    from .quasisymmetry import Homeo1D

    rng = np.random.default_rng(11)
    slopes = rng.uniform(0.3, 3.0, 24)
    stair_t = np.linspace(0.0, 1.5, 25)
    stair_v = np.concatenate([[0.0], np.cumsum(slopes * np.diff(stair_t))])
    H = Homeo1D.from_function
    return [
        ("identity", Homeo1D.identity(1.0)),
        ("square", H(lambda t: t**2 + 1e-3 * t, 1.0, 256)),
        ("power1.5", H(lambda t: 3.0 * (t / 2.0) ** 1.5, 2.0, 64)),
        ("kink", Homeo1D(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.5, 1.5]))),
        ("wiggle", H(lambda t: t + 0.12 * np.sin(2 * np.pi * t), 1.0, 128)),
        ("exp", H(lambda t: np.expm1(t), 2.0, 128)),
        ("stairs", Homeo1D(stair_t, stair_v)),
        ("cubic", H(lambda t: t**3 + 0.5 * t, 1.0, 200)),
        ("sqrt", H(lambda t: np.sqrt(t + 0.01), 1.0, 256)),
        ("logistic", H(lambda t: 1.0 / (1.0 + np.exp(-8.0 * (t - 0.5))), 1.0, 100)),
    ]
