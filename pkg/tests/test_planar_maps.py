import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import affine_map
from qcplane import linalg
from qcplane import testmaps as tm
from qcplane.errors import (
    BoundaryMismatch,
    DomainMismatch,
    NearBoundary,
    NonInjective,
    OverlappingSubdomains,
    SchemaError,
)
from qcplane.planar_maps import (
    GridMap,
    Rect,
    ciarlet_necas,
    compose,
    distortion,
    glue,
    gradient_field,
    heatmap_svg,
    image_area,
    invert,
    locate,
    multiplicity,
)

OFFSET = Rect(0.5, 0.5, 1.0, 1.0)


def radial_map(K, h=1 / 64, domain=OFFSET):
    return GridMap.from_function(tm.radial(K), domain, h, tag=f"radial{K}")


def test_lattice_validation():
    with pytest.raises(ValueError):
        GridMap.from_function(tm.identity, Rect(0, 0, 1, 1), 0.3)
    with pytest.raises(ValueError):
        GridMap.from_function(tm.identity, Rect(0, 0, 1, 1), 1.0)


def test_affine_distortion_exact():
    rep = distortion(affine_map(np.diag([2.0, 1.0])))
    assert rep.sup == 2.0
    assert np.all(rep.per_cell == 2.0)
    assert rep.fraction_nonpositive == 0.0


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-1.0, 1.0), st.floats(-np.pi, np.pi)
)
def test_affine_gradient_is_exact(s1, s2, shear, angle):
    c, s = np.cos(angle), np.sin(angle)
    A = np.array([[c, -s], [s, c]]) @ np.array([[s1, shear], [0.0, s2]])
    g = gradient_field(affine_map(A, spacing=1 / 8))
    assert np.allclose(g.matrices, A, atol=1e-12)
    assert np.allclose(distortion(g).per_cell, linalg.distortion(A), rtol=1e-9)


@pytest.mark.parametrize("K", [2.0, 3.0, 5.0])
def test_radial_distortion_within_one_percent(K):
    rep = distortion(radial_map(K))
    assert np.all(np.abs(rep.per_cell - K) <= 0.01 * K)


def test_radial_gradient_matches_analytic():
    m = radial_map(3.0)
    g = gradient_field(m)
    ref = tm.radial_gradient(3.0, g.centers[..., 0], g.centers[..., 1])
    err = linalg.spectral_norm(g.matrices - ref) / linalg.spectral_norm(ref)
    assert err.max() < 1e-3


def test_inverse_of_radial():
    K = 3.0
    m = radial_map(K)
    inv = invert(m)
    # true inverse is the radial map with exponent 1/K
    nodes = inv.nodes()[inv.mask]
    exact = np.stack(tm.radial(1 / K)(nodes[:, 0], nodes[:, 1]), axis=-1)
    assert np.max(np.linalg.norm(inv.values[inv.mask] - exact, axis=-1)) <= 2 * m.spacing
    assert distortion(inv).sup <= 1.1 * K


def test_round_trip_through_inverse():
    m = radial_map(2.0, h=1 / 32)
    inv = invert(m)
    back = compose(inv, m)
    ok = back.mask
    # bilinear lookup needs a full inverse cell, which fails only within h of the image boundary
    assert ok[2:-2, 2:-2].all()
    assert np.max(np.abs(back.values[ok] - m.nodes()[ok])) < 2 * m.spacing


def test_composition_distortion():
    inner = radial_map(2.0, h=1 / 32)
    outer = GridMap.from_function(tm.radial(2.0), Rect(0.0, 0.0, 5.0, 5.0), 1 / 32)
    comp = compose(outer, inner)
    assert distortion(comp).sup <= 4.0 * 1.1


def test_compose_domain_mismatch():
    inner = affine_map(np.eye(2) * 3)
    with pytest.raises(DomainMismatch):
        compose(affine_map(np.eye(2)), inner)


def test_folded_map_is_rejected():
    m = GridMap.from_function(tm.square, Rect(-0.5, -0.5, 1.0, 1.0), 1 / 16)
    with pytest.raises(NonInjective):
        invert(m)


def test_multiplicity_of_z_squared():
    m = GridMap.from_function(tm.square, Rect(-0.5, -0.5, 1.0, 1.0), 1 / 32)
    assert multiplicity(m, [0.1, 0.05]) == 2
    assert multiplicity(affine_map(np.eye(2)), [0.4, 0.6]) == 1
    assert multiplicity(affine_map(np.eye(2)), [3.0, 3.0]) == 0


def test_multiplicity_near_boundary():
    with pytest.raises(NearBoundary):
        multiplicity(affine_map(np.eye(2)), [0.5, 0.01])


def test_ciarlet_necas():
    ok = ciarlet_necas(radial_map(2.0, h=1 / 32))
    assert ok["satisfied"] and abs(ok["ratio"] - 1) <= ok["tol"]
    folded = ciarlet_necas(GridMap.from_function(tm.square, Rect(-0.5, -0.5, 1.0, 1.0), 1 / 32))
    assert not folded["satisfied"]
    assert folded["ratio"] >= 1.5


def test_image_area_of_affine_map():
    A = np.array([[2.0, 0.5], [0.0, 1.5]])
    assert image_area(affine_map(A, spacing=1 / 32)) == pytest.approx(linalg.det(A), rel=0.02)


def test_locate_inverts_affine_map():
    A = np.array([[1.5, 0.3], [-0.2, 1.0]])
    m = affine_map(A, spacing=1 / 8)
    pts = np.array([[0.3, 0.4], [0.77, 0.21]])
    images = pts @ A.T
    assert np.allclose(locate(m, images), pts, atol=1e-12)
    assert np.all(np.isnan(locate(m, np.array([[10.0, 10.0]]))))


def test_json_round_trip(tmp_path):
    m = radial_map(2.0, h=1 / 8)
    mask = m.mask.copy()
    mask[0, 0] = False
    m = m.with_values(m.values, mask)
    path = tmp_path / "m.json"
    m.save(path)
    raw = json.loads(path.read_text())
    assert raw["values"][0] is None
    back = GridMap.load(path)
    assert np.array_equal(back.mask, m.mask)
    assert np.array_equal(back.values[m.mask], m.values[m.mask])


@pytest.mark.parametrize(
    "doc",
    [
        {"spacing": 0.5, "values": []},
        {"domain": {"x0": 0, "y0": 0, "w": 1, "h": 1}, "spacing": 0.5, "values": [[0, 0]] * 4},
        {"domain": {"x0": 0, "y0": 0, "w": 1, "h": 1}, "spacing": 0.5, "values": [["a", 0]] * 9},
    ],
)
def test_schema_errors(doc):
    with pytest.raises(SchemaError):
        GridMap.from_dict(doc)


def test_glue_replaces_interior_and_checks_boundary():
    base = affine_map(np.eye(2), spacing=1 / 8)
    X = base.nodes()
    wave = np.sin(4 * np.pi * X[..., :1]) * np.sin(4 * np.pi * X[..., 1:])
    bump = base.with_values(base.values + 0.01 * wave)
    cells = [(i, j) for i in range(2, 6) for j in range(2, 6)]
    # boundary of the 4x4 block: sin(4 pi x) vanishes on the multiples of 1/4
    out = glue(base, [(cells, bump)])
    assert np.allclose(out.values[3, 3], bump.values[3, 3])
    assert np.allclose(out.values[0, 0], base.values[0, 0])
    shifted = base.with_values(base.values + 0.1)
    with pytest.raises(BoundaryMismatch):
        glue(base, [(cells, shifted)])
    with pytest.raises(OverlappingSubdomains):
        glue(base, [(cells, bump), (cells[:3], bump)])


def test_report_outputs():
    rep = distortion(affine_map(np.diag([2.0, 1.0]), spacing=1 / 4))
    csv = rep.to_csv()
    assert csv.startswith("cell_i,cell_j,distortion,det\r\n")
    assert csv.count("\r\n") == 1 + 16
    svg = heatmap_svg(rep)
    assert svg.startswith("<svg") and "style" in svg and "href" not in svg
