import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcplane.errors import NotIncreasing, NoValidD, SchemaError
from qcplane.quasisymmetry import (
    Homeo1D,
    bi_holder_check,
    fit_1d,
    m_condition,
    psi1,
    reparam_join,
)
from qcplane.testmaps import homeo_corpus

# Independent oracle: scipy.integrate.quad of psi1(x/a) (b/a - s'(x)) over each
# knot interval of the piecewise-linear s, added to s.
FIT_SQUARE_END = 0.7524580289588987  # t^2 on 256 intervals, value at a = 1
FIT_SQUARE_AT_06 = 0.352378909212608  # same map, value at 0.6
FIT_POWER_END = 2.5646387222848177  # 3 (t/2)^1.5 on [0, 2], 64 intervals


def pl_square(n=256):
    t = np.linspace(0.0, 1.0, n + 1)
    return Homeo1D(t, t**2)


@st.composite
def homeos(draw, max_knots=12):
    n = draw(st.integers(1, max_knots))
    dt = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    ds = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    a = draw(st.floats(0.5, 3.0))
    b = draw(st.floats(0.5, 3.0))
    t = np.concatenate([[0.0], np.cumsum(dt)])
    s = np.concatenate([[0.0], np.cumsum(ds)])
    t, s = t / t[-1] * a, s / s[-1] * b
    t[-1], s[-1] = a, b
    return Homeo1D(t, s)


def test_validation():
    with pytest.raises(NotIncreasing):
        Homeo1D(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.6, 0.6]))
    with pytest.raises(ValueError):
        Homeo1D(np.array([0.1, 1.0]), np.array([0.0, 1.0]))


def test_json_round_trip(tmp_path):
    s = pl_square(8)
    s.save(tmp_path / "s.json")
    back = Homeo1D.load(tmp_path / "s.json")
    assert np.array_equal(back.breakpoints, s.breakpoints)
    with pytest.raises(SchemaError):
        Homeo1D.from_dict({"breakpoints": [0, 1]})


def test_m_condition_values():
    assert m_condition(Homeo1D.identity(2.0, 5.0)).M == pytest.approx(1.0)
    # (4h^2 - h^2) / h^2 at the first symmetric triple
    assert m_condition(pl_square()).M == pytest.approx(3.0)
    kink = Homeo1D(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.5, 1.5]))
    assert m_condition(kink).M == pytest.approx(2.0)


def test_eta_table_is_monotone():
    rep = m_condition(pl_square())
    assert np.all(np.diff(rep.eta) >= 0)
    assert rep.eta_at(1.0) >= 1.0
    assert rep.to_csv().startswith("t_minus,t,t_plus,ratio\r\n")


def test_psi1_is_a_smooth_step():
    u = np.linspace(0, 1, 401)
    p = psi1(u)
    assert np.all(p[u <= 0.25] == 0) and np.all(p[u >= 0.75] == 1)
    assert np.all(np.diff(p) >= 0)
    assert psi1(np.array([0.5]))[0] == pytest.approx(0.5)


def test_fit_identity_is_identity():
    s = Homeo1D.identity(1.0)
    f = fit_1d(s)
    x = np.linspace(0, 1, 101)
    assert np.allclose(f(x), x, atol=1e-15)


def test_fit_matches_quadrature_oracle():
    f = fit_1d(pl_square())
    assert f.b == pytest.approx(FIT_SQUARE_END, abs=1e-9)
    assert f(0.6) == pytest.approx(FIT_SQUARE_AT_06, abs=1e-9)
    t = np.linspace(0.0, 2.0, 65)
    g = fit_1d(Homeo1D(t, 3.0 * (t / 2.0) ** 1.5))
    assert g.b == pytest.approx(FIT_POWER_END, abs=1e-9)


def check_fit_properties(s, f):
    a, b = s.a, s.b
    head = s.breakpoints[s.breakpoints <= a / 4]
    assert np.array_equal(f(head), s(head))
    tail = np.linspace(0.75 * a, a, 9)
    slope = np.diff(f(tail)) / np.diff(tail)
    assert np.max(np.abs(slope - b / a)) <= 1e-9 * max(1.0, b / a)
    assert f.b < 1.5 * b
    assert abs(f.a - a) == 0


@pytest.mark.parametrize("name,s", homeo_corpus(), ids=[n for n, _ in homeo_corpus()])
def test_fit_properties_on_corpus(name, s):
    check_fit_properties(s, fit_1d(s))


@settings(max_examples=60, deadline=None)
@given(homeos())
def test_fit_properties_random(s):
    check_fit_properties(s, fit_1d(s))


def test_fit_rescaling():
    s = pl_square()
    t = Homeo1D(s.breakpoints * 2.0, s.values * 3.0)
    assert fit_1d(t).b == pytest.approx(3.0 * fit_1d(s).b, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(homeos(6), homeos(6))
def test_reparam_join_agrees_near_ends(r, s):
    s = Homeo1D(s.breakpoints / s.a * r.a, s.values / s.b * r.b)
    s.breakpoints[-1], s.values[-1] = r.a, r.b
    out, d = reparam_join(r, s, grid_density=64, return_d=True)
    a, b, c = r.a, r.b, d * r.a
    x = np.linspace(0.0, c / 4, 7)
    assert np.allclose(out(x), r(x), atol=1e-12 * b)
    x = np.linspace(a - c / 4, a, 7)
    assert np.allclose(out(x), s(x), atol=1e-12 * b)
    mid = np.linspace(c, a - c, 7)
    slope = np.diff(out(mid)) / np.diff(mid)
    assert np.ptp(slope) <= 1e-8 * max(slope)
    assert m_condition(out, 64).M < np.inf


def test_reparam_join_rejects_near_singular_maps():
    t = np.array([0.0, 1e-6, 1.0])
    r = Homeo1D(t, np.array([0.0, 0.5, 1.0]))
    with pytest.raises(NoValidD):
        reparam_join(r, Homeo1D.identity(1.0))


def test_bi_holder():
    rep = bi_holder_check(Homeo1D.identity(1.0))
    assert rep["kappa1"] == pytest.approx(1.0) and rep["kappa2"] == pytest.approx(1.0)
    rep = bi_holder_check(pl_square())
    assert rep["passes"] and rep["kappa2"] <= 1.0
