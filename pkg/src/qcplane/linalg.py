"""Closed-form 2x2 matrix quantities, vectorized over leading axes.

Matrices are arrays of shape ``(..., 2, 2)`` with ``A[..., i, j]`` the
derivative of component ``i`` in direction ``j``.
"""

import numpy as np


def conformal_parts(A):
    """Return ``(Q, R)`` with A = Q * rotation + R * reflection.

    Singular values are ``Q + R`` and ``|Q - R|`` and ``det A = Q^2 - R^2``.
    """
    A = np.asarray(A, dtype=float)
    a, b = A[..., 0, 0], A[..., 0, 1]
    c, d = A[..., 1, 0], A[..., 1, 1]
    Q = 0.5 * np.hypot(a + d, c - b)
    R = 0.5 * np.hypot(a - d, c + b)
    return Q, R


def singular_values(A):
    Q, R = conformal_parts(A)
    return Q + R, np.abs(Q - R)


def spectral_norm(A):
    Q, R = conformal_parts(A)
    return Q + R


def det(A):
    A = np.asarray(A, dtype=float)
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def distortion(A):
    """``|A|^2 / det A`` with the spectral norm; NaN where ``det A <= 0``."""
    A = np.asarray(A, dtype=float)
    s = spectral_norm(A)
    dt = det(A)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = s * s / dt
    return np.where(dt > 0, out, np.nan)


def in_cone(A, K, rtol=1e-12):
    """Membership in the cone ``{A : |A|^2 <= K det A}``."""
    A = np.asarray(A, dtype=float)
    s = spectral_norm(A)
    return s * s <= K * det(A) * (1 + rtol) + 1e-300


def parse_matrix(text):
    """Parse ``"a,b,c,d"`` (row-major) into a 2x2 array."""
    vals = [float(v) for v in str(text).replace(";", ",").split(",")]
    if len(vals) != 4:
        raise ValueError(f"expected 4 comma-separated entries, got {text!r}")
    return np.array(vals, dtype=float).reshape(2, 2)
