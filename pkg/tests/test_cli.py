import io
import json

import pytest

from halfheat.cli import PRESETS, load_preset, run
from halfheat.volterra import BoundaryTrace

ZERO = '{"N": 1, "kappa": 1.0, "atoms": [], "densities": []}'
ATOM = '{"N": 1, "kappa": 1.0, "atoms": [{"x": [0.0], "mass": 1.0}], "densities": []}'


def call(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def test_selftest():
    code, out, _ = call(["selftest"])
    assert code == 0 and "selftest ok" in out


def test_solve_zero(tmp_path):
    code, out, _ = call(["solve", "--measure", ZERO, "--p", "1.5", "--horizon", "2", "--out", str(tmp_path)])
    assert code == 0 and "reached_horizon" in out
    tr = BoundaryTrace.from_csv((tmp_path / "trace.csv").read_text())
    assert (tr.values == 0).all() and tr.times[-1] == 2.0
    doc = json.loads((tmp_path / "outcome.json").read_text())
    assert doc["status"] == "reached_horizon" and doc["controls"]["horizon"] == 2.0


def test_solve_blowup_outputs_17_digits(tmp_path):
    mpath = tmp_path / "m.json"
    mpath.write_text(ATOM)
    code, out, _ = call(["solve", "--measure", str(mpath), "--p", "1.5", "--horizon", "1", "--out", str(tmp_path)])
    assert code == 0
    line = [l for l in out.splitlines() if l.startswith("T_est")][0]
    val = line.split()[1]
    assert float(val) == json.loads((tmp_path / "outcome.json").read_text())["T_est"]
    header, first = (tmp_path / "trace.csv").read_text().splitlines()[:2]
    assert header == "t,sup_w,w"


def test_lifespan(tmp_path):
    code, out, _ = call(["lifespan", "--measure", ATOM, "--p", "1.5", "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "lifespan.json").read_text())
    assert doc["status"] == "finite" and 0.07 < doc["T_est"] < 0.08


def test_check_table(tmp_path):
    code, out, _ = call(["check", "--measure", ATOM, "--p", "1.5", "--T", "1", "--out", str(tmp_path)])
    assert code == 0
    assert "functional" in out and "necessary_thm11_subcritical" in out and "sufficient_thm13" in out
    rows = json.loads((tmp_path / "check.json").read_text())
    assert rows[0]["ratio"] == 1.0


def test_check_atoms_in_lower_strip_reported():
    code, out, _ = call(["check", "--measure", ATOM, "--p", "3", "--T", "1"])
    assert code == 0 and "not applicable" in out


def test_sweep_plan(tmp_path):
    plan = {
        "name": "mini",
        "measure": {"N": 1, "kappa": 1.0, "atoms": [], "densities": [{"kind": "constant_strip", "h": 0.1, "c": 1.0}]},
        "p": 1.5,
        "kappa_values": [100.0, 200.0, 400.0, 800.0],
        "profile": {"law": "power_law", "target": -1.0},
    }
    ppath = tmp_path / "plan.json"
    ppath.write_text(json.dumps(plan))
    code, out, _ = call(["sweep", "--plan", str(ppath), "--out", str(tmp_path), "--svg"])
    assert code == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["value"] == pytest.approx(-1.0, rel=0.1)
    assert (tmp_path / "sweep.svg").exists() and (tmp_path / "table.csv").exists()


def test_malformed_json_reports_position():
    code, _, err = call(["solve", "--measure", '{"N": 1,\n "kappa": }', "--p", "1.5"])
    assert code == 2 and "line 2" in err and "column" in err


def test_unknown_flag_and_command():
    assert call(["solve", "--bogus"])[0] == 2
    assert call(["fly"])[0] == 2
    assert call([])[0] == 2


def test_missing_arguments():
    assert call(["solve", "--p", "1.5"])[0] == 2
    assert call(["solve", "--measure", ZERO])[0] == 2
    assert call(["check", "--measure", ZERO, "--p", "1.5"])[0] == 2
    assert call(["sweep"])[0] == 2


def test_bad_values():
    assert call(["solve", "--measure", ZERO, "--p", "0.5"])[0] == 2
    assert call(["solve", "--measure", ZERO, "--p", "1.5", "--dt0", "-1"])[0] == 2
    assert call(["solve", "--measure", "/nonexistent/m.json", "--p", "1.5"])[0] == 2
    assert call(["solve", "--measure", '{"N": 1, "densities": [{"kind": "nope"}]}', "--p", "1.5"])[0] == 2


def test_solver_error_exit_code(monkeypatch):
    from halfheat import cli
    from halfheat.errors import SolverError

    def boom(*a, **k):
        raise SolverError("no convergence", state={})

    monkeypatch.setattr(cli, "solve", boom)
    assert call(["solve", "--measure", ZERO, "--p", "1.5"])[0] == 3


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse(name):
    doc = load_preset(name)
    assert doc["command"] in ("sweep", "lifespan", "selftest")
    assert json.loads(json.dumps(doc)) == doc


def test_selftest_preset():
    assert call(["selftest", "--preset", "kernel_selftest"])[0] == 0


def test_sweep_preset_quick(tmp_path):
    code, out, _ = call(["sweep", "--preset", "thm6_1", "--out", str(tmp_path)])
    assert code == 0
    assert json.loads((tmp_path / "fit.json").read_text())["rel_error"] < 0.1
