import json

import numpy as np
import pytest

from qcplane import testmaps as tm
from qcplane.cli import main
from qcplane.planar_maps import GridMap, Rect
from qcplane.quasisymmetry import Homeo1D


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def stretch_json(tmp_path):
    path = tmp_path / "stretch.json"
    GridMap.from_function(lambda X, Y: (2 * X, Y), Rect(0, 0, 1, 1), 1 / 8).save(path)
    return str(path)


def test_check(tmp_path, stretch_json, capsys):
    out = tmp_path / "o"
    code, stdout, _ = run(["check", "--map", stretch_json, "--K", "2", "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert set(rep) == {"command", "config", "version", "tolerances", "results"}
    assert rep["command"] == "check" and rep["results"]["distortion_sup"] == 2.0 and rep["results"]["within_K"]
    assert (out / "distortion.csv").read_bytes().startswith(b"cell_i,cell_j,distortion,det\r\n")
    assert (out / "distortion.svg").exists()
    assert json.loads(stdout)["command"] == "check"


def test_outputs_are_deterministic(tmp_path, capsys):
    out = tmp_path / "ym"
    argv = ["ym", "--k", "8", "--out", str(out)]
    assert run(argv, capsys)[0] == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert run(argv, capsys)[0] == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first
    assert "measure.json" in first


def test_extend_from_homeo(tmp_path, capsys):
    h = tmp_path / "h.json"
    t = np.linspace(0, 4, 33)
    Homeo1D(t, t + 0.05 * np.sin(np.pi * t / 2)).save(h)
    code, _, err = run(["extend", "--homeo", str(h), "--resolution", "8", "--out", str(tmp_path / "e")], capsys)
    assert code == 0, err
    GridMap.load(tmp_path / "e" / "map.json")


def test_minimize_and_profile(tmp_path, capsys):
    code, _, _ = run(["minimize", "--density", "dirichlet", "--resolution", "8", "--sweeps", "2",
                      "--out", str(tmp_path / "m")], capsys)
    assert code == 0
    assert (tmp_path / "m" / "trace.csv").read_bytes().startswith(b"sweep,J,accepted\r\n")
    code, _, _ = run(["profile", "--k", "4", "--out", str(tmp_path / "p")], capsys)
    assert code == 0 and (tmp_path / "p" / "profile.csv").exists()


def test_schema_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"spacing": 1}))
    code, _, err = run(["check", "--map", str(bad), "--out", str(tmp_path)], capsys)
    assert code == 2 and "schema" in err


def test_missing_file_exit_code(tmp_path, capsys):
    code, _, _ = run(["check", "--map", str(tmp_path / "none.json"), "--out", str(tmp_path)], capsys)
    assert code == 2


def test_precondition_exit_code(tmp_path, capsys):
    code, _, err = run(["ym", "--A", "1,0,0,1", "--B", "2,0,0,2", "--out", str(tmp_path)], capsys)
    assert code == 3 and "[young_measures.NotRankOne]" in err


def test_cutoff_precondition(tmp_path, capsys):
    y = tmp_path / "y.json"
    GridMap.from_function(tm.identity, Rect(0, 0, 1, 1), 1 / 16).save(y)
    code, _, err = run(["cutoff", "--y", str(y), "--yk", str(y), "--eps", "0.125", "--out", str(tmp_path)], capsys)
    assert code == 3 and "[cutoff." in err


@pytest.mark.parametrize("argv", [["ym", "--lambda", "1.5"], ["check", "--map", "x", "--K", "0.5"],
                                  ["minimize", "--eps-pen", "-1"]])
def test_out_of_range_flags(argv, tmp_path):
    with pytest.raises(SystemExit) as e:
        main(argv + ["--out", str(tmp_path)])
    assert e.value.code == 2
