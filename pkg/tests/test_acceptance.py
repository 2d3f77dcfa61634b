"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""

import os

import numpy as np

from conftest import ACCEPTANCE, CUTOFF_DOMAIN, build_cutoff_case
from qcplane import linalg
from qcplane import testmaps as tm
from qcplane.cli import main as cli_main
from qcplane.cutoff import map_eta, partition_domain
from qcplane.extension import BoundaryMap, PlanarCurve, beurling_ahlfors, quasicircle_constant
from qcplane.planar_maps import GridMap, Rect, ciarlet_necas, compose, distortion, gradient_field, invert, multiplicity
from qcplane.quasisymmetry import Homeo1D, fit_1d
from qcplane.variational import det_density, dirichlet, lsc_experiment, minimize_penalized, neg_det, penalized_energy
from qcplane.young_measures import (
    affine_limit,
    empirical_measure,
    jensen_check,
    laminate,
    laminate_sequence,
    moment_field,
    support_check,
)

OFFSET = Rect(0.5, 0.5, 1.0, 1.0)
UNIT = Rect(0.0, 0.0, 1.0, 1.0)


def record(name, ok, detail):
    ACCEPTANCE[name] = (bool(ok), detail)
    assert ok, f"{name}: {detail}"


# ---- planar maps ----------------------------------------------------------


def test_distortion_exactness():
    rep = distortion(GridMap.from_function(tm.affine([[2.0, 0.0], [0.0, 1.0]]), UNIT, 1 / 64))
    exact = bool(np.all(rep.per_cell == 2.0))
    worst = {}
    for K in (2.0, 3.0, 5.0):
        d = distortion(GridMap.from_function(tm.radial(K), OFFSET, 1 / 64)).per_cell
        worst[K] = float(np.max(np.abs(d - K) / K))
    ok = exact and all(w <= 0.01 for w in worst.values())
    record("distortion exactness", ok, f"affine exact={exact}; radial max rel err " +
           ", ".join(f"K={K:g}: {w:.2e}" for K, w in worst.items()))


def law_corpus():
    return [
        ("diag", tm.affine([[2.0, 0.0], [0.0, 1.0]])),
        ("shear", tm.affine([[1.0, 0.6], [0.0, 1.0]])),
        ("rotscale", tm.affine([[1.2, -0.5], [0.4, 0.9]])),
        ("radial2", tm.radial(2.0)),
        ("radial3", tm.radial(3.0)),
        ("radial5", tm.radial(5.0)),
        ("twist", tm.twist((1.0, 1.0), 0.4, 1.0)),
        ("warp", tm.smooth_warp(0.05, 3)),
        ("radial2-shear", tm.compose_fn(tm.radial(2.0), tm.affine([[1.0, 0.3], [0.0, 1.0]]))),
        ("twist-radial", tm.compose_fn(tm.twist((1.0, 1.0), 0.6, 0.8), tm.radial(1.5))),
    ]


def test_inverse_and_composition_laws():
    h = 1 / 64
    corpus = law_corpus()
    inv_ratio, comp_ratio = [], []
    for i, (name, f) in enumerate(corpus):
        m = GridMap.from_function(f, OFFSET, h)
        K = distortion(m).sup
        inv_ratio.append(distortion(invert(m)).sup / K)
        # outer factor sampled on a padded box around the image of the inner one
        _, g = corpus[(i + 1) % len(corpus)]
        v = m.values[m.mask]
        lo = v.min(axis=0) - 2 * h
        size = np.ceil((v.max(axis=0) + 2 * h - lo) / h) * h
        outer = GridMap.from_function(g, Rect(lo[0], lo[1], size[0], size[1]), h)
        K2 = distortion(outer).sup
        comp_ratio.append(distortion(compose(outer, m)).sup / (K * K2))
    ok = max(inv_ratio) <= 1.1 and max(comp_ratio) <= 1.1
    record("inverse/composition laws", ok,
           f"max K(inv)/K = {max(inv_ratio):.3f}, max K(comp)/(K1 K2) = {max(comp_ratio):.3f} (limit 1.1)")


def p_integral(m, p):
    g = gradient_field(m)
    return float(np.sum(linalg.spectral_norm(g.matrices[g.valid]) ** p) * m.spacing**2)


def test_integrability_threshold():
    # K = 3 map whose gradient blows up at the origin like |x|^(1/K - 1)
    f = tm.extremal_radial(3.0)
    hs = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    maps = [GridMap.from_function(f, Rect(-1.0, -1.0, 2.0, 2.0), h) for h in hs]
    low = [p_integral(m, 2.5) for m in maps]
    high = [p_integral(m, 3.5) for m in maps]
    inc = np.diff(low)
    bounded = bool(np.all(inc > 0) and np.all(inc[1:] < inc[:-1]))
    growth = high[-1] / high[0]
    divergent = bool(np.all(np.diff(high) > 0) and growth > 10)
    record("integrability threshold", bounded and divergent,
           f"p=2.5 {[round(v, 2) for v in low]} (increments shrinking: {bounded}); "
           f"p=3.5 {[round(v, 2) for v in high]} growth {growth:.2f}x (need > 10x)")


def test_ciarlet_necas():
    h = 1 / 32
    maps = [
        GridMap.from_function(tm.radial(2.0), OFFSET, h),
        GridMap.from_function(tm.twist((1.0, 1.0), 0.4, 1.0), OFFSET, h),
        GridMap.from_function(tm.affine([[1.0, 0.6], [0.0, 1.0]]), OFFSET, h),
        GridMap.from_function(tm.smooth_warp(0.05, 3), OFFSET, h),
        GridMap.from_function(tm.radial(3.0), Rect(0.25, -0.5, 1.0, 1.0), h),
    ]
    devs = [abs(ciarlet_necas(m)["ratio"] - 1) for m in maps]
    folded = ciarlet_necas(GridMap.from_function(tm.square, Rect(-0.5, -0.5, 1.0, 1.0), h))
    ok = max(devs) <= 5 * h and folded["ratio"] >= 1.5 and not folded["satisfied"]
    record("Ciarlet-Necas", ok, f"max |ratio-1| = {max(devs):.2e} (limit {5 * h:.3g}); z^2 ratio {folded['ratio']:.3f}")


# ---- quasisymmetry and extension ----------------------------------------


def test_fit_1d():
    x = np.linspace(0.0, 1.0, 257)
    ident_ok = bool(np.max(np.abs(fit_1d(Homeo1D.identity(1.0))(x) - x)) <= 1e-15)
    bad = []
    for name, s in tm.homeo_corpus():
        f = fit_1d(s)
        a, b = s.a, s.b
        head = s.breakpoints[s.breakpoints <= a / 4]
        tail = np.linspace(0.75 * a, a, 17)
        slope = np.diff(f(tail)) / np.diff(tail)
        if not (np.array_equal(f(head), s(head)) and np.max(np.abs(slope - b / a)) <= 1e-9 * max(1.0, b / a)
                and f(a) < 1.5 * b):
            bad.append(name)
    record("1-D fitting", ident_ok and not bad, f"identity ok={ident_ok}; failing corpus maps: {bad or 'none'}")


def cusp(n):
    t = np.linspace(0, 1, n + 1)
    up = np.stack([t, t**2], axis=1)
    lo = np.stack([t[::-1], -t[::-1] ** 2], axis=1)
    return PlanarCurve(np.vstack([up[:-1], lo[:-1]]))


def test_quasicircle_constants():
    th = np.linspace(0, 2 * np.pi, 257)[:-1]
    c_circ = quasicircle_constant(PlanarCurve(np.stack([np.cos(th), np.sin(th)], axis=1)))["c_best"]
    c_cusp = [quasicircle_constant(cusp(n))["c_best"] for n in (16, 32, 64)]
    ok = abs(c_circ - np.sqrt(2)) <= 0.02 and c_cusp[-1] > 3 * c_cusp[0]
    record("quasicircle constants", ok, f"circle {c_circ:.5f}; cusp {[round(c, 2) for c in c_cusp]}")


def test_beurling_ahlfors_identity_and_trace():
    g = beurling_ahlfors(Homeo1D.identity(1.0))
    X = g.nodes()
    err = float(np.max(np.abs(g.values - np.stack([X[..., 0], 0.5 * X[..., 1]], axis=-1))))
    bad = []
    for name, h in tm.homeo_corpus():
        m = beurling_ahlfors(h)
        x = m.nodes()[0, :, 0]
        if not (np.array_equal(m.values[0, :, 0], h(x)) and np.all(m.values[0, :, 1] == 0)):
            bad.append(name)
    record("BA identity law", err <= 1e-9 and not bad, f"identity err {err:.1e}; trace failures: {bad or 'none'}")


# ---- cut-off ----------------------------------------------------------------


def test_bridge_bounds(cutoff_corpus):
    n = 0
    worst_r = worst_mid = 0.0
    flags = True
    for case in cutoff_corpus:
        eps, delta = case["eps"], case["delta"]
        for b in case["bridges"]:
            n += 1
            d = np.asarray(b.Q) - np.asarray(b.P)
            mid = np.asarray(b.P) + 0.5 * d
            worst_r = max(worst_r, abs(b.r - eps / 2) / (delta / 2))
            dev = max(np.linalg.norm(b.x1 - mid), np.linalg.norm(b.x2 - mid))
            worst_mid = max(worst_mid, dev / np.sqrt(7 * eps * delta))
            flags &= bool(b.invariants["r_ok"] and b.invariants["mid_ok"])
    ok = worst_r < 1 and worst_mid < 1 and flags and len(cutoff_corpus) == 20
    record("bridge bounds", ok, f"{n} bridges over {len(cutoff_corpus)} pairs; max |r-eps/2|/(delta/2) = "
           f"{worst_r:.3f}, max midpoint dev / sqrt(7 eps delta) = {worst_mid:.3f}; library flags {flags}")


def test_cutoff_contract(cutoff_corpus):
    fails = []
    worst_sup = 0.0
    half_ratio = []
    for idx, case in enumerate(cutoff_corpus):
        y, yk, om, eps, delta = case["y"], case["yk"], case["omega"], case["eps"], case["delta"]
        part = case["part"]
        edge = np.zeros(y.values.shape[:2], dtype=bool)
        edge[[0, -1], :] = True
        edge[:, [0, -1]] = True
        trace = bool(np.array_equal(om.values[edge], y.values[edge]))
        sup = float(np.max(np.linalg.norm(om.values - y.values, axis=-1)))
        worst_sup = max(worst_sup, sup / (3 * eps + delta))
        close = sup <= 3 * eps + delta and case["report"]["sup_inverse_difference"] <= 3 * eps + delta
        diff = np.any(om.values != yk.values, axis=-1)
        cells = diff[:-1, :-1] | diff[:-1, 1:] | diff[1:, :-1] | diff[1:, 1:]
        modified = float(cells.sum()) * y.spacing**2
        shell = part.shell_measure()
        # the shell is a collar of width (2 gamma + 1) eps; its linear bound is perimeter * width
        perim = 2 * (CUTOFF_DOMAIN.w + CUTOFF_DOMAIN.h)
        lin = perim * (2 * part.gamma + 1) * eps
        half_maps = [GridMap.from_function(g, CUTOFF_DOMAIN, eps / 4) for g in (case["f"], case["fk"])]
        part_h = partition_domain(CUTOFF_DOMAIN, eps / 2, map_eta(half_maps, eps / 2))
        shell_h = part_h.shell_measure()
        half_ratio.append(shell_h / shell)
        measure = modified <= shell and shell <= lin and part_h.gamma == part.gamma and shell_h <= 0.5 * lin
        rng = np.random.default_rng(1000 + idx)
        counts = []
        while len(counts) < 30:
            x = rng.uniform(CUTOFF_DOMAIN.x0 + 0.1, CUTOFF_DOMAIN.x1 - 0.1, 2)
            counts.append(multiplicity(om, om.evaluate(x)))
        cn = ciarlet_necas(om)
        inj = all(c == 1 for c in counts) and cn["satisfied"] and distortion(om).fraction_nonpositive == 0
        lib = all(case["report"][k] for k in ("boundary_exact", "item1_ok", "item4_ok", "injective"))
        if not (trace and close and measure and inj and lib):
            fails.append((case["name"], trace, close, measure, inj, lib))
    # full assembly at eps/2 for the most irregular base
    for base in ("wavy",):
        c = build_cutoff_case(base, 1, eps=cutoff_corpus[0]["eps"] / 2)
        r = c["report"]
        if not (r["item4_ok"] and r["boundary_exact"] and r["item1_ok"] and r["injective"]):
            fails.append((f"{base}-1 at eps/2", r["item4_ok"], r["boundary_exact"], r["item1_ok"], r["injective"]))
    record("cut-off contract", not fails,
           f"{len(cutoff_corpus)} pairs; max sup|y-omega|/(3eps+delta) = {worst_sup:.3f}; "
           f"shell(eps/2)/shell(eps) in [{min(half_ratio):.3f}, {max(half_ratio):.3f}] "
           f"(<= half the linear collar bound); failures: {fails or 'none'}")


# ---- Young measures and variational ----------------------------------------

LAMINATES = [
    ("I|diag(2,1)", np.eye(2), np.diag([2.0, 1.0]), 0.5),
    ("I|shear", np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 0.25),
    ("diag(1,2)|I", np.diag([1.0, 2.0]), np.eye(2), 0.75),
]


def test_young_measure_laws():
    out = []
    ok = True
    for name, A, B, lam in LAMINATES:
        m = empirical_measure(laminate_sequence(A, B, lam, 64), 4)
        target = lam * A + (1 - lam) * B
        M = m.moments()
        dev = float(np.max(linalg.spectral_norm(M - target)))
        pair = float(np.max(np.abs(m.expect(linalg.det) - linalg.det(M))))
        ok &= dev <= 0.02 and pair <= 1e-3
        out.append(f"{name}: moment dev {dev:.1e}, <nu,det>-det(moment) {pair:.1e}")
    ks = (8, 16, 32, 64)
    A, B = np.eye(2), np.diag([2.0, 1.0])
    errs = []
    for k in ks:
        h = 1 / (6 * k)
        e = empirical_measure([laminate(A, B, 0.5, k, spacing=h)], 2 * k)
        errs.append(moment_field(e, affine_limit(A, B, 0.5, UNIT, h))[1]["sup_deviation"])
    slope = float(np.polyfit(np.log(ks), np.log(errs), 1)[0])
    frac = support_check(empirical_measure(laminate_sequence(A, B, 0.5, 64), 4), 2.0)["fraction_inside"]
    ok &= abs(slope + 1) <= 0.2 and frac == 1.0
    record("Young-measure laws", ok, "; ".join(out) + f"; O(1/k) slope {slope:.3f}; support fraction {frac}")


def test_jensen_and_lsc_direction():
    out = []
    ok = True
    for name, A, B, lam in LAMINATES:
        seq = laminate_sequence(A, B, lam, 64)
        m = empirical_measure(seq, 4)
        lim = affine_limit(A, B, lam, UNIT, seq[-1].spacing)
        jd = jensen_check(m, dirichlet(), lim)
        jdet = jensen_check(m, det_density(), lim)
        jneg = jensen_check(m, neg_det(), lim)
        ld = lsc_experiment(dirichlet(), seq, lim)
        ldet = lsc_experiment(det_density(), seq, lim)
        case = (jd["satisfied"] and jd["min_margin"] > 0 and ld["satisfied"] and ld["gap"] > 0
                and jdet["satisfied"] and jdet["equality"] and ldet["equality"]
                and not jneg["satisfied"])
        ok &= case
        out.append(f"{name}: |A|^2 gap {ld['gap']:.4f}, det eq {jdet['equality']}, -det flagged {not jneg['satisfied']}")
    record("Jensen/LSC direction", ok, "; ".join(out))


def perturbed_identity(seed, h=1 / 16, amp=0.05):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, (3, 3, 2)) / 3

    def f(X, Y):
        U, V = X.copy(), Y.copy()
        for a in range(3):
            for b in range(3):
                w = amp * np.sin((a + 1) * np.pi * X) * np.sin((b + 1) * np.pi * Y) / (a + b + 1)
                U = U + c[a, b, 0] * w
                V = V + c[a, b, 1] * w
        return U, V

    return GridMap.from_function(f, UNIT, h)


def tri_dets(V):
    a, b, c, d = V[:-1, :-1], V[:-1, 1:], V[1:, 1:], V[1:, :-1]

    def cross(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    return np.stack([cross(a, b, c), cross(a, c, d)])


def test_minimizer_monotonicity():
    bm = BoundaryMap.from_function(tm.identity, 16)
    rows = []
    ok = True
    for seed in range(10):
        init = perturbed_identity(seed)
        out, trace = minimize_penalized(dirichlet(), 0.05, init, boundary=bm, return_trace=True)
        J0 = penalized_energy(init, dirichlet(), 0.05)
        J1 = penalized_energy(out, dirichlet(), 0.05)
        steps = all(r["J"] < p["J"] for p, r in zip(trace, trace[1:]) if r["accepted"])
        dets = float(min(tri_dets(out.values).min(), linalg.det(gradient_field(out).matrices).min()))
        ok &= J1 < J0 and steps and dets > 0
        rows.append((round(J0, 4), round(J1, 4), dets > 0))
    record("minimizer monotonicity", ok, f"(J0, J_final, dets>0) per start: {rows}")


# ---- CLI --------------------------------------------------------------------


def snapshot(argv, out, capsys):
    code = cli_main(argv + ["--out", str(out)])
    text = capsys.readouterr().out
    files = {p: open(os.path.join(out, p), "rb").read() for p in sorted(os.listdir(out))}
    return code, text, files


def test_cli_determinism(tmp_path, capsys):
    y = tmp_path / "y.json"
    yk = tmp_path / "yk.json"
    dom = Rect(0.0, 0.0, 4.0, 4.0)
    GridMap.from_function(tm.identity, dom, 1 / 32).save(y)
    GridMap.from_function(tm.smooth_warp(0.004, 5), dom, 1 / 32).save(yk)
    commands = [
        ["check", "--map", str(y), "--K", "1"],
        ["extend", "--boundary", str(tmp_path / "b.json"), "--resolution", "16"],
        ["cutoff", "--y", str(y), "--yk", str(yk), "--eps", "0.125"],
        ["ym", "--k", "16"],
        ["lsc", "--k", "16"],
        ["minimize", "--density", "dirichlet", "--resolution", "8", "--sweeps", "3", "--seed", "4"],
        ["profile", "--k", "8", "--p", "2", "--q", "1"],
    ]
    BoundaryMap.from_function(tm.smooth_warp(0.03, 2), 32).save(tmp_path / "b.json")
    bad = []
    for argv in commands:
        out = tmp_path / argv[0]
        first = snapshot(argv, out, capsys)
        second = snapshot(argv, out, capsys)
        if first[0] != 0 or first != second:
            bad.append((argv[0], first[0]))
    record("determinism", not bad, f"{len(commands)} commands run twice; mismatches or errors: {bad or 'none'}")
