import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qcplane import linalg

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@given(arrays(float, (2, 2), elements=finite))
def test_singular_values_match_svd(A):
    smax, smin = linalg.singular_values(A)
    ref = np.linalg.svd(A, compute_uv=False)
    scale = max(1.0, ref[0])
    assert abs(smax - ref[0]) <= 1e-9 * scale
    assert abs(smin - ref[1]) <= 1e-9 * scale


@given(arrays(float, (2, 2), elements=finite))
def test_det_is_product_of_conformal_parts(A):
    Q, R = linalg.conformal_parts(A)
    assert np.isclose(linalg.det(A), Q * Q - R * R, rtol=1e-9, atol=1e-6)


@given(arrays(float, (2, 2), elements=st.floats(-10, 10)))
def test_distortion_at_least_one_when_orientation_preserving(A):
    K = linalg.distortion(A)
    if linalg.det(A) > 0:
        assert K >= 1 - 1e-9
        assert linalg.in_cone(A, K * (1 + 1e-9))
    else:
        assert np.isnan(K)


@given(st.floats(1.0, 50.0))
def test_identity_in_every_cone(K):
    assert linalg.in_cone(np.eye(2), K)


def test_diag_distortion_exact():
    assert linalg.distortion(np.diag([2.0, 1.0])) == 2.0
    assert linalg.spectral_norm(np.diag([2.0, 1.0])) == 2.0


def test_conformal_matrices_have_distortion_one():
    a, b = 0.7, -1.3
    assert np.isclose(linalg.distortion(np.array([[a, -b], [b, a]])), 1.0)


def test_parse_matrix():
    assert np.array_equal(linalg.parse_matrix("1,2,3,4"), [[1, 2], [3, 4]])
