import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from halfheat.errors import ConfigurationError
from halfheat.lifespan import (
    FINITE,
    INFINITE,
    INSTANT_STATUS,
    SweepPlan,
    SweepRow,
    SweepTable,
    classify_trend,
    fit_for_plan,
    fit_gaussian_limit,
    fit_interior_delta_law,
    fit_power_law,
    lifespan,
    sweep,
    sweep_svg,
)
from halfheat.measure import ConstantStrip, MeasureSpec
from halfheat.volterra import SolverControls

STRIP = MeasureSpec.density(1, ConstantStrip(h=0.1, c=1.0))


def test_lifespan_zero():
    res = lifespan(MeasureSpec.zero(1), 1.5)
    assert res.status == INFINITE and res.T_est == math.inf


def test_lifespan_boundary_atom_instant():
    res = lifespan(MeasureSpec.atom((0.0,), 1.0), 2.5)
    assert res.status == INSTANT_STATUS and res.T_est == 0.0
    assert len(res.trend) == 3


def test_lifespan_boundary_atom_finite():
    res = lifespan(MeasureSpec.atom((0.0,), 1.0), 1.5)
    assert res.status == FINITE
    T, err = res
    assert 0.07 < T < 0.08 and err < 0.01 * T


def test_lifespan_global_small_data_hits_cap():
    # small strip data with p above the Fujita-type exponent: global solution
    res = lifespan(MeasureSpec.density(1, ConstantStrip(h=0.1, c=0.01)), 2.5, cap=50.0)
    assert res.status == INFINITE and res.T_est == 50.0


# ---- sweeps -------------------------------------------------------------------------------


def test_sweep_monotone_and_deterministic():
    plan = SweepPlan(STRIP, 1.5, [10.0, 30.0, 100.0])
    a = sweep(plan)
    b = sweep(plan)
    assert a.to_csv() == b.to_csv()
    Ts = [r.T_est for r in a.rows]
    assert all(x > y for x, y in zip(Ts, Ts[1:]))
    assert a.monotone_violations() == []


def test_sweep_workers_independent():
    plan = SweepPlan(STRIP, 1.5, [10.0, 100.0])
    assert sweep(plan, workers=2).to_csv() == sweep(plan, workers=1).to_csv()


def test_sweep_empty():
    plan = SweepPlan(STRIP, 1.5, [], profile={"law": "power_law"})
    table = sweep(plan)
    assert table.rows == [] and fit_for_plan(plan, table) is None


def test_plan_validation():
    with pytest.raises(ConfigurationError):
        SweepPlan(STRIP, 1.5, [10.0, 5.0])
    with pytest.raises(ConfigurationError):
        SweepPlan(STRIP, 1.5, [-1.0])
    with pytest.raises(ConfigurationError):
        SweepPlan.from_dict({"measure": STRIP.to_dict(), "p": 1.5, "kappa_values": [1.0], "mystery": 1})


def test_plan_roundtrip():
    plan = SweepPlan(STRIP, 1.5, [1.0, 10.0], SolverControls(dt0=2e-3), profile={"law": "power_law", "target": -1.0})
    again = SweepPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert again.to_dict() == plan.to_dict()


def test_plan_kappa_range():
    plan = SweepPlan.from_dict({"measure": STRIP.to_dict(), "p": 1.5, "kappa_range": [1e2, 1e4, 5]})
    assert plan.kappa_values == pytest.approx([1e2, 10**2.5, 1e3, 10**3.5, 1e4])


def test_table_csv_roundtrip():
    t = SweepTable("x", [SweepRow(1.0, 0.5, 1e-3, FINITE), SweepRow(2.0, math.inf, math.inf, INFINITE)])
    back = SweepTable.from_csv(t.to_csv(), "x")
    assert [(r.kappa, r.T_est, r.T_err, r.status) for r in back.rows] == [(r.kappa, r.T_est, r.T_err, r.status) for r in t.rows]


def test_usable_rule():
    assert SweepRow(1.0, 1.0, 0.19, FINITE).usable
    assert not SweepRow(1.0, 1.0, 0.2, FINITE).usable
    assert not SweepRow(1.0, 50.0, math.inf, INFINITE).usable


# ---- fits on synthetic tables ---------------------------------------------------------------------


@given(st.floats(-3.0, -0.2), st.floats(0.1, 10.0))
def test_power_law_recovery(slope, C):
    k = np.logspace(1, 4, 6)
    t = SweepTable.synthetic(k, lambda x: C * x**slope)
    fit = fit_power_law(t)
    assert fit.value == pytest.approx(slope, rel=1e-3)


def test_power_law_log_correction():
    A, B, p = 1.0, 2.0, 1.5
    e0 = 2 * (p - 1) / (A * (p - 1) + 1)
    k = np.logspace(2, 6, 6)
    t = SweepTable.synthetic(k, lambda x: (x * np.log(x) ** (-B)) ** (-e0))
    fit = fit_power_law(t, A=A, B=B, p=p)
    assert fit.value == pytest.approx(-e0, rel=1e-3)


@pytest.mark.parametrize("L", [1.0, 2.0])
def test_interior_law_recovery(L):
    k = np.logspace(2, 6, 5)
    t = SweepTable.synthetic(k, lambda x: (L * L / 4) / np.log(x))
    fit = fit_interior_delta_law(t, L)
    assert fit.value == pytest.approx(L * L / 4, rel=1e-9)
    assert fit.target == L * L / 4


def test_gaussian_limit_recovery():
    k = np.array([1e-4, 1e-3, 1e-2, 1e-1])
    t = SweepTable.synthetic(k, lambda x: 0.25 * (1 - x))
    fit = fit_gaussian_limit(t, 1.0)
    assert fit.value == pytest.approx(0.25, rel=1e-9)
    assert fit.extra["ceiling_ok"] and fit.extra["increasing_as_kappa_decreases"]


def test_fit_needs_rows():
    t = SweepTable.synthetic([1.0, 2.0], lambda x: 1 / x)
    with pytest.raises(ConfigurationError):
        fit_power_law(t)


def test_fit_excludes_noisy_rows():
    rows = [SweepRow(k, 1 / k, 1e-4 / k, FINITE) for k in (10.0, 100.0, 1000.0, 1e4)]
    rows.append(SweepRow(1e5, 123.0, 100.0, FINITE))
    fit = fit_power_law(SweepTable("t", rows))
    assert fit.rows_used == 4 and fit.value == pytest.approx(-1.0)


def test_fit_json():
    t = SweepTable.synthetic(np.logspace(1, 3, 4), lambda x: 1 / x)
    d = json.loads(fit_power_law(t, target=-1.0).to_json())
    assert d["fit_kind"] == "power_law" and d["target"] == -1.0


# ---- classification and output --------------------------------------------------------------


def test_classify_trend():
    assert classify_trend([1.0, 0.5, 0.25], [0.01] * 3) == "instant blow-up"
    assert classify_trend([1.0, 1.001, 1.0015], [0.01] * 3) == "solvable"
    assert classify_trend([1.0, 0.7, 0.5], [0.01] * 3) == "indeterminate"
    assert classify_trend([1.0, math.inf, 1.0], [0.01] * 3) == "indeterminate"


def test_svg():
    t = SweepTable.synthetic(np.logspace(1, 3, 4), lambda x: 1 / x)
    svg = sweep_svg(t, "demo")
    assert svg.startswith("<svg") and "polyline" in svg or "path" in svg
    assert "no finite rows" in sweep_svg(SweepTable("e", []))
