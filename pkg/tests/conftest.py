import numpy as np
import pytest

from qcplane.planar_maps import GridMap, Rect

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def unit():
    return Rect(0.0, 0.0, 1.0, 1.0)


@pytest.fixture
def identity_map(unit):
    return GridMap.from_function(lambda X, Y: (X, Y), unit, 1 / 16)


def affine_map(A, domain=Rect(0.0, 0.0, 1.0, 1.0), spacing=1 / 16, b=(0.0, 0.0)):
    A = np.asarray(A, dtype=float)
    return GridMap.from_function(
        lambda X, Y: (A[0, 0] * X + A[0, 1] * Y + b[0], A[1, 0] * X + A[1, 1] * Y + b[1]), domain, spacing
    )


CUTOFF_EPS = 1 / 16
CUTOFF_DOMAIN = Rect(0.0, 0.0, 2.0, 2.0)
CUTOFF_SEEDS = (1, 2, 3, 4, 5)


def build_cutoff_case(base, seed, eps=CUTOFF_EPS, domain=CUTOFF_DOMAIN):
    from qcplane import testmaps as tm
    from qcplane.cutoff import assemble_cutoff, choose_delta

    h = eps / 4
    f, _ = tm.CUTOFF_BASE[base]
    y = GridMap.from_function(f, domain, h, tag=base)
    delta = choose_delta(y, eps)
    _, fk = tm.cutoff_pair(base, seed, delta)
    yk = GridMap.from_function(fk, domain, h, tag=f"{base}/{seed}")
    omega, part, bridges, report = assemble_cutoff(y, yk, eps, delta=delta, seed=seed)
    return {
        "name": f"{base}-{seed}",
        "base": base,
        "seed": seed,
        "f": f,
        "fk": fk,
        "y": y,
        "yk": yk,
        "eps": eps,
        "delta": delta,
        "omega": omega,
        "part": part,
        "bridges": bridges,
        "report": report,
    }


@pytest.fixture(scope="session")
def cutoff_corpus():
    """Twenty (y, yk) pairs on [0, 2]^2 with eps = 1/16, assembled once per session."""
    from qcplane import testmaps as tm

    return [build_cutoff_case(base, seed) for base in tm.CUTOFF_BASE for seed in CUTOFF_SEEDS]
