import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcplane import linalg
from qcplane.errors import DomainMismatch, NotRankOne, OutsideCone, SchemaError
from qcplane.planar_maps import Rect, distortion, gradient_field
from qcplane.variational import bump, det_density, dirichlet, neg_det
from qcplane.young_measures import (
    EmpiricalYoungMeasure,
    QCMatrixCone,
    affine_limit,
    empirical_measure,
    jensen_check,
    kp_report,
    laminate,
    laminate_sequence,
    moment_field,
    rank_one_split,
    support_check,
    weak_diagnostic,
)

I2 = np.eye(2)
B2 = np.diag([2.0, 1.0])
UNIT = Rect(0.0, 0.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def lam_measure():
    return empirical_measure(laminate_sequence(I2, B2, 0.5, 64), 4)


@pytest.fixture(scope="module")
def lam_limit():
    return affine_limit(I2, B2, 0.5, UNIT, 1 / 128)


def test_cone_membership():
    cone = QCMatrixCone(2.0)
    assert I2 in cone and B2 in cone
    assert np.diag([3.0, 1.0]) not in cone
    assert np.diag([1.0, -1.0]) not in cone
    with pytest.raises(ValueError):
        QCMatrixCone(0.5)


def test_rank_one_split():
    A = np.array([[1.0, 0.2], [0.1, 1.0]])
    a, n = rank_one_split(A, A + np.outer([0.3, -0.4], [0.6, 0.8]))
    assert np.allclose(np.outer(a, n), np.outer([0.3, -0.4], [0.6, 0.8]))
    assert np.linalg.norm(n) == pytest.approx(1.0)
    with pytest.raises(NotRankOne):
        rank_one_split(I2, 2 * I2)


def test_laminate_gradients():
    m = laminate(I2, B2, 0.5, 4)
    g = gradient_field(m).matrices.reshape(-1, 2, 2)
    is_a = np.all(np.isclose(g, I2, atol=1e-12), axis=(1, 2))
    is_b = np.all(np.isclose(g, B2, atol=1e-12), axis=(1, 2))
    assert np.all(is_a | is_b)
    assert is_a.mean() == pytest.approx(0.5)
    assert distortion(m).sup == pytest.approx(2.0)
    with pytest.raises(OutsideCone):
        laminate(I2, np.diag([-1.0, 1.0]), 0.5, 4)
    with pytest.raises(ValueError):
        laminate(I2, B2, 0.0, 4)


def test_laminate_sequence_counts():
    seq = laminate_sequence(I2, B2, 0.5, 12)
    assert [m.tag for m in seq] == [f"laminate k={k}" for k in (1, 2, 4, 8, 12)]


def test_laminate_measure(lam_measure, lam_limit):
    mats, w = lam_measure.atoms[(0, 0)]
    assert np.allclose(mats, [I2, B2]) and np.allclose(w, [0.5, 0.5])
    _, rep = moment_field(lam_measure, lam_limit)
    assert rep["sup_deviation"] <= 1e-12
    assert lam_measure.pair(lambda X, Y: 1.0, linalg.det) == pytest.approx(1.5)
    assert support_check(lam_measure, 2.0)["fraction_inside"] == 1.0
    assert support_check(lam_measure, 1.5)["fraction_inside"] == pytest.approx(0.5)


def test_moment_error_is_first_order():
    errs = []
    ks = (8, 16, 32, 64)
    for k in ks:
        h = 1 / (6 * k)
        m = empirical_measure([laminate(I2, B2, 0.5, k, spacing=h)], 2 * k)
        errs.append(moment_field(m, affine_limit(I2, B2, 0.5, UNIT, h))[1]["sup_deviation"])
    assert np.polyfit(np.log(ks), np.log(errs), 1)[0] == pytest.approx(-1.0, abs=0.05)


def test_empirical_measure_domain_check():
    with pytest.raises(DomainMismatch):
        empirical_measure([laminate(I2, B2, 0.5, 2), laminate(I2, B2, 0.5, 2, omega=Rect(0, 0, 2, 1))])


def test_jensen(lam_measure, lam_limit):
    r = jensen_check(lam_measure, dirichlet(), lam_limit)
    assert r["satisfied"] and r["min_margin"] == pytest.approx(0.25)
    r = jensen_check(lam_measure, det_density(), lam_limit)
    assert r["satisfied"] and r["equality"]
    r = jensen_check(lam_measure, neg_det(), lam_limit)
    # equality holds, but -det is negative and so outside the energy class
    assert r["violations"] == 0 and r["equality"] and not r["in_class"] and not r["satisfied"]
    r = jensen_check(lam_measure, bump(np.diag([1.5, 1.0])), lam_limit)
    assert r["violations"] == r["cells"] and not r["satisfied"]


def test_kp_report(lam_measure, lam_limit):
    rep = kp_report(lam_measure, lam_limit, [dirichlet(), det_density(), neg_det()])
    assert rep["ok"]
    assert rep["item3"]["second_moment"] == pytest.approx(0.5 * 1 + 0.5 * 4)
    bad = kp_report(lam_measure, lam_limit, [bump(np.diag([1.5, 1.0]))])
    assert not bad["item2"]["ok"]


def test_weak_but_not_strong_convergence():
    seq = laminate_sequence(I2, B2, 0.5, 16)
    rows = weak_diagnostic(seq, affine_limit(I2, B2, 0.5, UNIT, 1 / 64))
    errs = [r["pairing_error"] for r in rows]
    assert errs[-1] < errs[0] / 8
    assert all(r["grad_sup_distance"] == pytest.approx(0.5) for r in rows)


def test_json_round_trip(lam_measure):
    doc = json.loads(lam_measure.to_json())
    back = EmpiricalYoungMeasure.from_dict(doc)
    for key, (mats, w) in lam_measure.atoms.items():
        assert np.array_equal(back.atoms[key][0], mats) and np.array_equal(back.atoms[key][1], w)
    with pytest.raises(SchemaError):
        EmpiricalYoungMeasure.from_dict({"domain": doc["domain"]})


def test_weights_must_sum_to_one():
    rects = np.array([[[0.0, 0.0, 1.0, 1.0]]])
    with pytest.raises(ValueError):
        EmpiricalYoungMeasure(UNIT, rects, {(0, 0): (np.stack([I2, B2]), np.array([0.6, 0.6]))})


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.sampled_from([0.25, 0.5, 0.75, 1.0]), st.sampled_from([1, 2, 4]))
def test_weights_are_probabilities(k, lam, coarsening):
    m = empirical_measure([laminate(I2, np.array([[1.0, 0.5], [0.0, 1.0]]), lam, k, spacing=1 / 64)], coarsening)
    for _, _, (mats, w) in m.cells():
        assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-9
