"""Acceptance gate: one test per criterion, each with its runtime budget.

A summary line per criterion is printed at the end of the pytest run.
"""
import json
import math
import time
from dataclasses import replace
from importlib import resources

import numpy as np
import pytest
from scipy.special import erfc

from halfheat.conditions import ConditionParams, necessary_thm11, sufficient, sufficient_passes
from halfheat.errors import MeasureTypeError
from halfheat.kernels import semigroup_selftest
from halfheat.lifespan import SweepPlan, dichotomy_boundary_delta, fit_for_plan, sweep
from halfheat.measure import ConstantStrip, MeasureSpec, parabolic_rescale
from halfheat.volterra import (
    BLOW_UP,
    INSTANT,
    REACHED,
    SolverControls,
    interp_trace,
    picard_minimal,
    solve,
    solve_forcing,
)


def preset(name):
    doc = json.loads(resources.files("halfheat").joinpath("presets", f"{name}.json").read_text())
    doc.pop("command", None)
    return doc


def run_preset(name):
    plan = SweepPlan.from_dict(preset(name))
    table = sweep(plan)
    return table, fit_for_plan(plan, table)


@pytest.mark.criterion(1, "kernel identities")
def test_criterion_01_kernels(record_property):
    t0 = time.perf_counter()
    rep = semigroup_selftest(seed=0, samples=100, dims=(1, 2, 3))
    el = time.perf_counter() - t0
    record_property(
        "detail",
        f"semigroup {rep['max_semigroup_rel_defect']:.2e}, mass {rep['max_mass_defect']:.2e}, bound violations {rep['bound_violations']}",
    )
    assert rep["max_semigroup_rel_defect"] < 1e-6
    assert rep["max_mass_defect"] < 1e-8
    assert rep["bound_violations"] == 0
    assert el < 10


def _abel_error(h):
    ctl = SolverControls(dt0=h, dt_min=h * 1e-6, horizon=1.0, dt_max=h, halving_check=False)
    out = solve_forcing(lambda t: 1.0, 1.0, ctl)
    return abs(float(interp_trace(out.trace, 1.0)) - math.e * erfc(-1.0))


@pytest.mark.criterion(2, "linear Abel oracle")
def test_criterion_02_abel(record_property):
    t0 = time.perf_counter()
    e_coarse, e_fine = _abel_error(2e-3), _abel_error(1e-3)
    order = math.log2(e_coarse / e_fine)
    el = time.perf_counter() - t0
    record_property("detail", f"error {e_fine:.2e} at h=1e-3, order {order:.2f}")
    assert e_fine < 1e-4
    assert order >= 1.0
    assert el < 5


@pytest.mark.criterion(3, "atom dichotomy")
def test_criterion_03_dichotomy(record_property):
    t0 = time.perf_counter()
    sub = dichotomy_boundary_delta([1.5])[0]
    sup = dichotomy_boundary_delta([2.5])[0]
    inner = dichotomy_boundary_delta([2.5], interior_L=1.0)[0]
    el = time.perf_counter() - t0

    def stable(r):
        T, E = r["T"], r["T_err"]
        return all(math.isfinite(t) for t in T) and all(abs(a - b) <= ea + eb for a, b, ea, eb in zip(T, T[1:], E, E[1:]))

    ratios = [a / b for a, b in zip(sup["T"], sup["T"][1:])]
    record_property(
        "detail",
        f"p=1.5 T={sub['T'][-1]:.5g}; p=2.5 halving ratios {', '.join(f'{r:.4g}' for r in ratios)}; interior T={inner['T'][-1]:.5g}",
    )
    assert stable(sub)
    assert all(r >= 2.0 for r in ratios)
    assert stable(inner)
    assert el < 120


@pytest.mark.criterion(4, "interior atom log law")
def test_criterion_04_interior_log_law(record_property):
    t0 = time.perf_counter()
    table, fit = run_preset("thm6_2")
    el = time.perf_counter() - t0
    prods = fit.extra["products"]
    record_property("detail", f"(log k) T = {', '.join(f'{v:.4f}' for v in prods)}; limit {fit.value:.4f}")
    assert len(prods) == 5
    assert all(a > b for a, b in zip(prods, prods[1:]))
    assert all(v > 0.25 * 0.8 for v in prods)
    assert abs(fit.value - 0.25) <= 0.2 * 0.25
    assert el < 300


@pytest.mark.criterion(5, "gaussian growth limit")
def test_criterion_05_gaussian_limit(record_property):
    t0 = time.perf_counter()
    table, fit = run_preset("thm6_8")
    el = time.perf_counter() - t0
    rows = sorted(table.rows, key=lambda r: r.kappa)
    Ts = [r.T_est for r in rows]
    record_property("detail", "T = " + ", ".join(f"{r.kappa:.0e}:{r.T_est:.5f}" for r in rows))
    assert [r.kappa for r in rows] == [1e-4, 1e-3, 1e-2, 1e-1]
    assert all(a > b for a, b in zip(Ts, Ts[1:]))
    assert max(Ts) <= 0.25 * 1.02
    assert abs(Ts[0] - 0.25) <= 0.1 * 0.25
    assert el < 180


@pytest.mark.criterion(6, "strip exponent")
def test_criterion_06_strip_exponent(record_property):
    t0 = time.perf_counter()
    table, fit = run_preset("thm6_1")
    el = time.perf_counter() - t0
    record_property("detail", f"slope {fit.value:.4f} vs -1 using {fit.rows_used} rows")
    assert fit.rows_used >= 4
    assert abs(fit.value + 1.0) <= 0.1
    assert el < 180


@pytest.mark.criterion(7, "power-log exponent")
def test_criterion_07_power_log(record_property):
    t0 = time.perf_counter()
    table, fit = run_preset("power_log")
    el = time.perf_counter() - t0
    record_property("detail", f"slope {fit.value:.4f} vs -2/3 using {fit.rows_used} rows")
    assert fit.rows_used >= 4
    assert abs(fit.value + 2 / 3) <= 0.1 * 2 / 3
    assert el < 180


@pytest.mark.criterion(8, "small-kappa exponent")
def test_criterion_08_small_kappa(record_property):
    t0 = time.perf_counter()
    table, fit = run_preset("bounded_decay")
    el = time.perf_counter() - t0
    record_property("detail", f"slope {fit.value:.4f} vs -4/3 using {fit.rows_used} rows")
    assert fit.rows_used >= 4
    assert abs(fit.value + 4 / 3) <= 0.15 * 4 / 3
    assert el < 180


@pytest.mark.criterion(9, "Picard vs marching")
def test_criterion_09_picard(record_property):
    t0 = time.perf_counter()
    mu = MeasureSpec.density(1, ConstantStrip(h=0.1, c=1.0))
    its = picard_minimal(mu, 1.5, 1.0, steps=400)
    pic = its[-1].trace
    march = solve(mu, 1.5, SolverControls(horizon=1.0))
    el = time.perf_counter() - t0
    assert march.status == REACHED
    t = pic.times[pic.times >= march.trace.times[0]]
    a = np.interp(t, pic.times, pic.values)
    b = interp_trace(march.trace, t)
    rel = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    record_property("detail", f"relative sup difference {rel:.2e}")
    assert rel <= 0.01
    assert el < 60


def _strip(h, k):
    return MeasureSpec.density(1, ConstantStrip(h=h, c=1.0), kappa=k)


SUITE = [
    ("boundary atom, large mass, p=1.5", MeasureSpec.atom((0.0,), 50.0), 1.5, 1.0),
    ("boundary atom, small mass, p=1.5", MeasureSpec.atom((0.0,), 0.01), 1.5, 1.0),
    ("boundary atom, short horizon, p=1.5", MeasureSpec.atom((0.0,), 1.0), 1.5, 1e-3),
    ("boundary atom, p=2.5", MeasureSpec.atom((0.0,), 1.0), 2.5, 1.0),
    ("strip h=0.1, k=100, p=1.5", _strip(0.1, 100.0), 1.5, 1.0),
    ("strip h=1, k=0.01, p=1.5", _strip(1.0, 0.01), 1.5, 10.0),
    ("strip h=0.1, k=0.05, p=2.5", _strip(0.1, 0.05), 2.5, 1.0),
    ("strip h=1, k=100, p=2.5", _strip(1.0, 100.0), 2.5, 1.0),
    ("strip h=0.1, k=0.1, p=2", _strip(0.1, 0.1), 2.0, 1.0),
    ("strip h=1, k=30, p=2", _strip(1.0, 30.0), 2.0, 1.0),
    ("strip h=1, k=0.01, p=3", _strip(1.0, 0.01), 3.0, 100.0),
    ("strip h=1, k=20, p=1.2", _strip(1.0, 20.0), 1.2, 1.0),
]


@pytest.mark.criterion(10, "condition/solver ordering")
def test_criterion_10_ordering(record_property):
    t0 = time.perf_counter()
    n_suff = n_nec = 0
    violations = []
    for name, mu, p, T in SUITE:
        prm = ConditionParams(p=p, T=T, N=1, delta=0.5)
        nec_fail = necessary_thm11(mu, prm).verdict_hint == "fail"
        try:
            suff = sufficient_passes(sufficient(mu, prm))
        except MeasureTypeError:
            suff = False
        out = solve(mu, p, SolverControls(horizon=T, dt0=min(2e-3, T / 100), dt_min=1e-12))
        blew = out.status in (BLOW_UP, INSTANT) and out.T_est < T
        n_suff += suff
        n_nec += nec_fail
        if suff and out.status != REACHED:
            violations.append(f"{name}: sufficient pass but {out.status}")
        if nec_fail and not blew:
            violations.append(f"{name}: necessary fail but {out.status}")
    el = time.perf_counter() - t0
    record_property("detail", f"{n_suff} sufficient-pass, {n_nec} necessary-fail, {len(violations)} violations")
    assert len(SUITE) == 12
    assert n_suff > 0 and n_nec > 0
    assert violations == []
    assert el < 300


@pytest.mark.criterion(11, "scale covariance")
def test_criterion_11_scale_covariance(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(5):
        p = float(rng.uniform(1.2, 1.9))
        h = float(rng.uniform(0.1, 1.0))
        k = float(rng.uniform(2.0, 10.0))
        theta = float(np.exp(rng.uniform(-1.5, 1.5)))
        mu = _strip(h, k)
        a = solve(mu, p, SolverControls(dt0=1e-3, dt_min=1e-12, horizon=50.0, halving_check=False))
        ctl = SolverControls(dt0=1e-3 / theta, dt_min=1e-12 / theta, horizon=50.0 / theta, halving_check=False)
        b = solve(parabolic_rescale(mu, theta, p), p, ctl)
        assert a.status == BLOW_UP and b.status == BLOW_UP
        worst = max(worst, abs(theta * b.T_est - a.T_est) / a.T_est)
        # trace identity v(t) = theta^{1/(2(p-1))} w(theta t) on the mapped mesh;
        # Newton tolerances are amplified in the last steps before blow-up
        lam = theta ** (1 / (2 * (p - 1)))
        n = min(len(a.trace), len(b.trace))
        assert np.allclose(b.trace.values[:n], lam * a.trace.values[:n], rtol=1e-4)
        assert np.allclose(theta * b.trace.times[:n], a.trace.times[:n], rtol=1e-12)
    el = time.perf_counter() - t0
    record_property("detail", f"worst relative T mismatch {worst:.1e}")
    assert worst <= 1e-6
    assert el < 60
