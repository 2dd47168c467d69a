"""Life-span estimates, kappa sweeps and asymptotic-law fits."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, HalfheatError
from .measure import Atom, MeasureSpec, p_star
from .volterra import BLOW_UP, INSTANT, SolveOutcome, SolverControls, solve

FINITE = "finite"
INFINITE = "infinite"
INSTANT_STATUS = "instant"
FAILED = "failed"


@dataclass
class LifespanResult:
    T_est: float
    T_err: float
    status: str
    trend: list = field(default_factory=list)
    outcome: Optional[SolveOutcome] = None
    forcing_ceiling: bool = False

    def __iter__(self):
        yield self.T_est
        yield self.T_err


def lifespan(
    mu: MeasureSpec,
    p: float,
    controls: Optional[SolverControls] = None,
    cap: float = 1e4,
    points: int = 300,
) -> LifespanResult:
    """Life span of the minimal solution.

    A pilot run doubles the horizon until blow-up (or ``cap``), then the mesh
    is rescaled to about ``points`` base steps before the pilot time and the
    run is repeated with the mesh-halving error check.
    """
    base = controls or SolverControls()
    if mu.is_zero():
        return LifespanResult(math.inf, math.inf, INFINITE)
    ratio = base.dt_min / base.dt0
    H = min(base.horizon, cap)

    def ctl(H, dt0, check):
        return replace(base, horizon=H, dt0=dt0, dt_min=dt0 * ratio, halving_check=check)

    while True:
        dt0 = min(base.dt0, H / points)
        pilot = solve(mu, p, ctl(H, dt0, False))
        if pilot.status == INSTANT:
            return LifespanResult(0.0, float(pilot.T_est), INSTANT_STATUS, list(pilot.diagnostics.get("refinement_T", [])), pilot)
        if pilot.blew_up:
            break
        if H >= cap:
            return LifespanResult(cap, math.inf, INFINITE, outcome=pilot)
        H = min(2.0 * H, cap)
    Tp = float(pilot.T_est)
    H = min(max(2.0 * Tp, 4.0 * dt0), cap)
    while True:
        out = solve(mu, p, ctl(H, min(dt0, Tp / points), True))
        if out.blew_up or H >= cap:
            break
        H = min(2.0 * H, cap)
    if out.status == INSTANT:
        return LifespanResult(0.0, float(out.T_est), INSTANT_STATUS, list(out.diagnostics.get("refinement_T", [])), out)
    if not out.blew_up:
        return LifespanResult(cap, math.inf, INFINITE, outcome=out)
    return LifespanResult(
        float(out.T_est),
        float(out.T_err),
        FINITE,
        outcome=out,
        forcing_ceiling=out.diagnostics.get("stop_reason") == "forcing_divergence",
    )


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepPlan:
    base_measure: MeasureSpec
    p: float
    kappa_values: Sequence[float]
    controls: SolverControls = field(default_factory=SolverControls)
    cap: float = 1e4
    points: int = 300
    name: str = "sweep"
    profile: dict = field(default_factory=dict)  # e.g. {"A": 1, "B": 0} or {"L": 1} or {"lam": 1}

    def __post_init__(self):
        k = [float(v) for v in self.kappa_values]
        if any(v <= 0 for v in k):
            raise ConfigurationError("kappa values must be positive")
        if any(b <= a for a, b in zip(k, k[1:])):
            raise ConfigurationError("kappa values must be strictly increasing")
        self.kappa_values = k
        if not self.p > 1:
            raise ConfigurationError("p must exceed 1")

    @property
    def N(self):
        return self.base_measure.N

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measure": self.base_measure.to_dict(),
            "p": self.p,
            "kappa_values": list(self.kappa_values),
            "controls": self.controls.to_dict(),
            "cap": self.cap,
            "points": self.points,
            "profile": dict(self.profile),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepPlan":
        known = {"name", "measure", "p", "kappa_values", "kappa_range", "controls", "cap", "points", "profile"}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown plan fields: {sorted(extra)}")
        if "kappa_values" in d:
            kv = d["kappa_values"]
        elif "kappa_range" in d:
            lo, hi, n = d["kappa_range"]
            kv = np.logspace(math.log10(lo), math.log10(hi), int(n)).tolist()
        else:
            raise ConfigurationError("plan needs kappa_values or kappa_range")
        ctl = controls_from_dict(d.get("controls", {}))
        return cls(
            base_measure=MeasureSpec.from_dict(d["measure"]),
            p=float(d["p"]),
            kappa_values=kv,
            controls=ctl,
            cap=float(d.get("cap", 1e4)),
            points=int(d.get("points", 300)),
            name=str(d.get("name", "sweep")),
            profile=dict(d.get("profile", {})),
        )


def controls_from_dict(d: dict) -> SolverControls:
    fields = set(SolverControls.__dataclass_fields__)
    extra = set(d) - fields
    if extra:
        raise ConfigurationError(f"unknown control fields: {sorted(extra)}")
    vals = {k: (math.inf if (k == "dt_max" and v is None) else v) for k, v in d.items()}
    return SolverControls(**vals)


@dataclass
class SweepRow:
    kappa: float
    T_est: float
    T_err: float
    status: str
    note: str = ""

    @property
    def usable(self) -> bool:
        return (
            self.status == FINITE
            and math.isfinite(self.T_est)
            and self.T_est > 0
            and math.isfinite(self.T_err)
            and self.T_err / self.T_est < 0.2
        )


@dataclass
class SweepTable:
    plan_name: str
    rows: list

    def kappas(self):
        return np.array([r.kappa for r in self.rows])

    def usable(self):
        return [r for r in self.rows if r.usable]

    def monotone_violations(self) -> list:
        """Adjacent finite rows where T increases with kappa beyond the error bars."""
        bad = []
        fin = [r for r in self.rows if r.status == FINITE]
        for a, b in zip(fin, fin[1:]):
            if b.T_est > a.T_est + a.T_err + b.T_err:
                bad.append((a.kappa, b.kappa))
        return bad

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["kappa", "T_est", "T_err", "status"])
        for r in self.rows:
            wr.writerow([f"{r.kappa:.17g}", f"{r.T_est:.17g}", f"{r.T_err:.17g}", r.status])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, name: str = "sweep") -> "SweepTable":
        rd = csv.DictReader(io.StringIO(text))
        rows = [SweepRow(float(r["kappa"]), float(r["T_est"]), float(r["T_err"]), r["status"]) for r in rd]
        return cls(name, rows)

    @classmethod
    def synthetic(cls, kappas, T_fn, rel_err: float = 1e-3) -> "SweepTable":
        rows = [SweepRow(float(k), float(T_fn(k)), rel_err * float(T_fn(k)), FINITE) for k in kappas]
        return cls("synthetic", rows)


def _row(args) -> SweepRow:
    mu, p, kappa, controls, cap, points = args
    try:
        res = lifespan(replace(mu, kappa=kappa), p, controls, cap=cap, points=points)
    except HalfheatError as exc:
        return SweepRow(kappa, math.nan, math.nan, FAILED, f"{type(exc).__name__}: {exc}")
    note = "forcing_ceiling" if res.forcing_ceiling else ""
    return SweepRow(kappa, res.T_est, res.T_err, res.status, note)


def sweep(plan: SweepPlan, workers: int = 1) -> SweepTable:
    """Run one life-span estimate per kappa; rows come back ordered by kappa."""
    jobs = [(plan.base_measure, plan.p, k, plan.controls, plan.cap, plan.points) for k in plan.kappa_values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_row, jobs))
    else:
        rows = [_row(j) for j in jobs]
    return SweepTable(plan.name, rows)


# --------------------------------------------------------------------------
# fits


@dataclass
class LifespanFit:
    fit_kind: str
    value: float
    intercept: float
    residual: float
    rows_used: int
    target: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def rel_error(self) -> Optional[float]:
        if self.target is None or self.target == 0:
            return None
        return abs(self.value - self.target) / abs(self.target)

    def to_dict(self) -> dict:
        d = {
            "fit_kind": self.fit_kind,
            "value": self.value,
            "intercept": self.intercept,
            "residual": self.residual,
            "rows_used": self.rows_used,
            "target": self.target,
            "rel_error": self.rel_error,
        }
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _linfit(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.vstack([x, np.ones_like(x)]).T
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((y - A @ np.array([a, b])) ** 2)))
    return float(a), float(b), resid


def _need(rows, k=4):
    if len(rows) < k:
        raise ConfigurationError(f"fit needs at least {k} usable rows, got {len(rows)}")


def fit_power_law(
    table: SweepTable, A: Optional[float] = None, B: Optional[float] = None, p: Optional[float] = None, target=None
) -> LifespanFit:
    """Slope of log T against log kappa.

    With profile exponents (A, B) and p, the logarithmic factor
    (log kappa)^{B e0}, e0 = 2(p-1)/(A(p-1)+1), carried by
    T ~ [kappa (log kappa)^{-B}]^{-e0} is divided out of T first.
    """
    rows = table.usable()
    _need(rows)
    k = np.array([r.kappa for r in rows])
    T = np.array([r.T_est for r in rows])
    if B and A is not None and p is not None:
        e0 = 2.0 * (p - 1.0) / (A * (p - 1.0) + 1.0)
        T = T / np.log(k) ** (B * e0)
    slope, icpt, res = _linfit(np.log(k), np.log(T))
    return LifespanFit("power_law", slope, icpt, res, len(rows), target)


def fit_interior_delta_law(table: SweepTable, L: float) -> LifespanFit:
    """Extrapolate (log kappa) T to kappa -> infinity, linear in 1/log kappa."""
    rows = [r for r in table.usable() if r.kappa > 1.0]
    _need(rows)
    lk = np.log([r.kappa for r in rows])
    y = lk * np.array([r.T_est for r in rows])
    slope, limit, res = _linfit(1.0 / lk, y)
    decreasing = bool(np.all(np.diff(y) < 0))
    return LifespanFit(
        "log_product", limit, slope, res, len(rows), L * L / 4.0, {"products": y.tolist(), "decreasing": decreasing}
    )


def fit_gaussian_limit(table: SweepTable, lam: float, tol: float = 0.02) -> LifespanFit:
    """Extrapolate T to kappa -> 0 (linear in kappa) and check the 1/(4 lam) ceiling."""
    ceiling = 1.0 / (4.0 * lam)
    rows = [r for r in table.rows if r.status == FINITE and math.isfinite(r.T_est)]
    _need(rows, 2)
    k = np.array([r.kappa for r in rows])
    T = np.array([r.T_est for r in rows])
    order = np.argsort(k)
    k, T = k[order], T[order]
    use = slice(0, min(len(k), 3))
    slope, limit, res = _linfit(k[use], T[use])
    return LifespanFit(
        "constant_limit",
        limit,
        slope,
        res,
        len(rows),
        ceiling,
        {
            "ceiling_ok": bool(np.all(T <= ceiling * (1 + tol))),
            "increasing_as_kappa_decreases": bool(np.all(np.diff(T) < 0)),
            "ceiling_rows": [r.kappa for r in rows if r.note == "forcing_ceiling"],
        },
    )


def fit_for_plan(plan: SweepPlan, table: SweepTable) -> Optional[LifespanFit]:
    """Apply the fit named by ``plan.profile["law"]`` (None when no law is given)."""
    prof = dict(plan.profile)
    law = prof.get("law")
    if law is None or not table.rows:
        return None
    if law == "interior_delta":
        return fit_interior_delta_law(table, float(prof.get("L", 1.0)))
    if law == "gaussian_limit":
        return fit_gaussian_limit(table, float(prof.get("lam", 1.0)))
    if law == "power_law":
        return fit_power_law(table, prof.get("A"), prof.get("B"), plan.p, prof.get("target"))
    raise ConfigurationError(f"unknown fit law {law!r}")


# --------------------------------------------------------------------------
# dichotomy for boundary atoms


def dichotomy_boundary_delta(
    p_values: Sequence[float],
    N: int = 1,
    controls: Optional[SolverControls] = None,
    kappa: float = 1.0,
    interior_L: Optional[float] = None,
) -> list:
    """Classify atom data as solvable or instantly blowing up for each p.

    Three runs per p on meshes halved twice.  "solvable" when consecutive
    estimates agree within their error bars; "instant blow-up" when every
    halving cuts the estimate by at least 1.9.
    """
    if N != 1:
        raise ConfigurationError("dichotomy study is implemented for N = 1")
    base = controls or SolverControls(dt0=2e-3, dt_min=2e-9, horizon=100.0)
    x = (interior_L if interior_L is not None else 0.0,)
    mu = MeasureSpec(N=1, kappa=kappa, atoms=(Atom(x, 1.0),))
    out = []
    for p in p_values:
        Ts, errs = [], []
        for f in (1.0, 0.5, 0.25):
            o = solve(mu, p, replace(base.refined(f), halving_check=True), refine_check=False)
            Ts.append(o.T_est if o.blew_up else math.inf)
            errs.append(o.T_err if o.blew_up else math.inf)
        verdict = classify_trend(Ts, errs)
        out.append({"p": p, "T": Ts, "T_err": errs, "verdict": verdict, "p_star": p_star(N)})
    return out


def classify_trend(Ts, errs, ratio: float = 1.9) -> str:
    if all(math.isfinite(t) for t in Ts):
        if all(a / b >= ratio for a, b in zip(Ts, Ts[1:])):
            return "instant blow-up"
        if all(abs(a - b) <= ea + eb for a, b, ea, eb in zip(Ts, Ts[1:], errs, errs[1:])):
            return "solvable"
    return "indeterminate"


# --------------------------------------------------------------------------
# output


def sweep_svg(table: SweepTable, title: str = "", width: int = 480, height: int = 360) -> str:
    """Single-series log-log plot of T_est against kappa."""
    pts = [(r.kappa, r.T_est) for r in table.rows if r.status == FINITE and r.T_est > 0 and math.isfinite(r.T_est)]
    pad = 50
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
    if not pts:
        return head + f'<text x="{pad}" y="{pad}">no finite rows</text></svg>\n'
    lx = np.log10([a for a, _ in pts])
    ly = np.log10([b for _, b in pts])

    def span(v):
        lo, hi = float(v.min()), float(v.max())
        return (lo - 0.5, hi + 0.5) if hi - lo < 1e-12 else (lo, hi)

    (x0, x1), (y0, y1) = span(lx), span(ly)
    X = lambda v: pad + (v - x0) / (x1 - x0) * (width - 2 * pad)
    Y = lambda v: height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)
    path = " ".join(f"{'M' if i == 0 else 'L'}{X(a):.2f},{Y(b):.2f}" for i, (a, b) in enumerate(zip(lx, ly)))
    parts = [
        head,
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>',
        f'<path d="{path}" fill="none" stroke="steelblue" stroke-width="2"/>',
    ]
    parts += [f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="steelblue"/>' for a, b in zip(lx, ly)]
    parts += [
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">log10 kappa [{x0:.2f}, {x1:.2f}]</text>',
        f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" text-anchor="middle">log10 T [{y0:.2f}, {y1:.2f}]</text>',
        f'<text x="{width / 2}" y="24" text-anchor="middle">{title}</text>',
        "</svg>\n",
    ]
    return "\n".join(parts)
