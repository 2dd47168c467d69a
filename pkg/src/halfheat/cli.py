"""Command-line driver: ``halfheat {selftest,solve,lifespan,sweep,check}``.

Exit codes: 0 success, 2 configuration or usage error, 3 solver error.
"""
from __future__ import annotations

import argparse
import json
import math
import pathlib
import sys
from dataclasses import replace
from importlib import resources
from typing import Optional, Sequence

from .conditions import ConditionParams, necessary_smoothing, necessary_thm11, sufficient
from .errors import (
    AccuracyError,
    ConfigurationError,
    ConsistencyError,
    DivergenceError,
    HalfheatError,
    MeasureTypeError,
    NotBlownUpError,
    SolverError,
)
from .kernels import semigroup_selftest
from .lifespan import SweepPlan, controls_from_dict, dichotomy_boundary_delta, fit_for_plan, lifespan, sweep, sweep_svg
from .measure import MeasureSpec
from .volterra import SolverControls, solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
SOLVER_ERRORS = (SolverError, AccuracyError, DivergenceError, ConsistencyError, NotBlownUpError)
PRESETS = ("thm6_2", "thm6_8", "thm6_1", "cor1_1", "kernel_selftest", "power_log", "bounded_decay")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def fmt(v) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def load_json(source: str, what: str = "document"):
    """Parse JSON from a path or an inline string; report line and column on failure."""
    text = source
    if not source.lstrip().startswith(("{", "[")):
        path = pathlib.Path(source)
        if not path.exists():
            raise ConfigurationError(f"{what} file not found: {source}")
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {what} at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("halfheat").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def _controls(args, base: Optional[SolverControls] = None) -> SolverControls:
    base = base or SolverControls()
    kw = {}
    for flag, key in (("horizon", "horizon"), ("dt0", "dt0"), ("dt_min", "dt_min"), ("w_max", "w_max")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    if "dt0" in kw and "dt_min" not in kw:
        kw["dt_min"] = min(base.dt_min, kw["dt0"] * 1e-6)
    return replace(base, **kw)


def _measure(args) -> MeasureSpec:
    if args.measure is None:
        raise ConfigurationError("--measure is required")
    mu = MeasureSpec.from_dict(load_json(args.measure, "measure"))
    if args.N is not None and args.N != mu.N:
        raise ConfigurationError(f"--N {args.N} disagrees with the measure dimension {mu.N}")
    return mu


def _need_p(args) -> float:
    if args.p is None:
        raise ConfigurationError("--p is required")
    return args.p


def _out_dir(args) -> Optional[pathlib.Path]:
    if args.out is None:
        return None
    d = pathlib.Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False, default=_default)


def _default(o):
    try:
        return float(o)
    except (TypeError, ValueError):
        return str(o)


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else None


# --------------------------------------------------------------------------
# commands


def cmd_selftest(args, out) -> int:
    cfg = load_preset(args.preset) if args.preset else {}
    rep = semigroup_selftest(seed=int(cfg.get("seed", args.seed)), samples=int(cfg.get("samples", 100)))
    for N, row in rep["dims"].items():
        out.write(
            f"N={N} semigroup_rel_defect={fmt(row['semigroup_rel_defect'])} mass_defect={fmt(row['mass_defect'])} "
            f"bound_violations={row['bound_violations']}\n"
        )
    ok = rep["max_semigroup_rel_defect"] < 1e-6 and rep["max_mass_defect"] < 1e-8 and rep["bound_violations"] == 0
    out.write(f"selftest {'ok' if ok else 'FAILED'}\n")
    d = _out_dir(args)
    if d:
        (d / "selftest.json").write_text(_emit(rep) + "\n")
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_solve(args, out) -> int:
    mu = _measure(args)
    p = _need_p(args)
    res = solve(mu, p, _controls(args))
    d = _out_dir(args) or pathlib.Path(".")
    (d / "trace.csv").write_text(res.trace.to_csv())
    (d / "outcome.json").write_text(res.to_json() + "\n")
    out.write(f"status {res.status}\n")
    if res.blew_up:
        out.write(f"T_est {fmt(float(res.T_est))}\nT_err {fmt(float(res.T_err))}\n")
    out.write(f"wrote {d / 'trace.csv'} and {d / 'outcome.json'}\n")
    return EXIT_OK


def cmd_lifespan(args, out) -> int:
    if args.preset:
        return _dichotomy_preset(load_preset(args.preset), args, out)
    mu = _measure(args)
    p = _need_p(args)
    ctl = _controls(args)
    res = lifespan(mu, p, ctl, cap=ctl.horizon if args.horizon is not None else 1e4)
    doc = {"T_est": _finite(res.T_est), "T_err": _finite(res.T_err), "status": res.status, "forcing_ceiling": res.forcing_ceiling}
    out.write(f"T_est {fmt(float(res.T_est))}\nT_err {fmt(float(res.T_err))}\nstatus {res.status}\n")
    d = _out_dir(args)
    if d:
        (d / "lifespan.json").write_text(_emit(doc) + "\n")
    return EXIT_OK


def _dichotomy_preset(cfg: dict, args, out) -> int:
    if cfg.get("command") != "lifespan":
        raise ConfigurationError("preset is not a lifespan preset")
    ctl = controls_from_dict(cfg.get("controls", {}))
    rows = []
    for case in cfg["cases"]:
        r = dichotomy_boundary_delta([case["p"]], N=1, controls=ctl, kappa=case.get("kappa", 1.0), interior_L=case.get("L"))[0]
        r["case"] = case["name"]
        r["expected"] = case["expected"]
        rows.append(r)
        Ts = " ".join(fmt(float(t)) for t in r["T"])
        out.write(f"{case['name']}: p={fmt(float(case['p']))} T={Ts} verdict={r['verdict']} expected={case['expected']}\n")
    d = _out_dir(args)
    if d:
        clean = [{k: ([_finite(x) for x in v] if isinstance(v, list) else v) for k, v in r.items()} for r in rows]
        (d / "dichotomy.json").write_text(_emit(clean) + "\n")
    return EXIT_OK if all(r["verdict"] == r["expected"] for r in rows) else EXIT_SOLVER


def cmd_sweep(args, out) -> int:
    if args.preset:
        doc = load_preset(args.preset)
        if doc.pop("command", "sweep") != "sweep":
            raise ConfigurationError("preset is not a sweep preset")
    elif args.plan:
        doc = load_json(args.plan, "plan")
    else:
        raise ConfigurationError("sweep needs --plan or --preset")
    plan = SweepPlan.from_dict(doc)
    table = sweep(plan, workers=args.workers)
    fit = fit_for_plan(plan, table)
    d = _out_dir(args) or pathlib.Path(".")
    (d / "table.csv").write_text(table.to_csv())
    out.write(table.to_csv())
    if fit is not None:
        (d / "fit.json").write_text(fit.to_json() + "\n")
        out.write(fit.to_json() + "\n")
    if args.svg:
        (d / "sweep.svg").write_text(sweep_svg(table, plan.name))
    return EXIT_OK


def cmd_check(args, out) -> int:
    mu = _measure(args)
    p = _need_p(args)
    if args.T is None:
        raise ConfigurationError("--T is required")
    prm = ConditionParams(p=p, T=args.T, N=mu.N, delta=args.delta, alpha=args.alpha, beta=args.beta)
    reports = [necessary_thm11(mu, prm), necessary_smoothing(mu, prm)]
    rows = [r.to_dict() for r in reports]
    try:
        suff = sufficient(mu, prm)
        rows += [r.to_dict() for r in suff]
    except MeasureTypeError as exc:
        rows.append({"functional_name": "sufficient", "ratio": None, "threshold": None, "verdict_hint": f"not applicable ({exc})"})
    out.write(f"{'functional':<32} {'ratio':>24} {'threshold':>24}  verdict\n")
    for r in rows:
        out.write(f"{r['functional_name']:<32} {_cell(r.get('ratio')):>24} {_cell(r.get('threshold')):>24}  {r['verdict_hint']}\n")
    d = _out_dir(args)
    if d:
        (d / "check.json").write_text(_emit(rows) + "\n")
    return EXIT_OK


def _cell(v):
    if v is None:
        return "-"
    return fmt(float(v)) if not isinstance(v, str) else v


COMMANDS = {"selftest": cmd_selftest, "solve": cmd_solve, "lifespan": cmd_lifespan, "sweep": cmd_sweep, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="halfheat", description="Boundary blow-up solver for the half-space heat equation with nonlinear Neumann data.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--measure", help="measure JSON file or inline JSON")
        sp.add_argument("--p", type=float)
        sp.add_argument("--N", type=int)
        sp.add_argument("--T", type=float)
        sp.add_argument("--delta", type=float, default=0.5)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float, default=1.0)
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--dt0", type=float)
        sp.add_argument("--dt-min", dest="dt_min", type=float)
        sp.add_argument("--w-max", dest="w_max", type=float)
        sp.add_argument("--plan")
        sp.add_argument("--preset", choices=PRESETS)
        sp.add_argument("--out")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--svg", action="store_true")
    return ap


def run(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        err.write(f"halfheat: error: {exc}\n")
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.workers < 1:
        err.write("halfheat: error: --workers must be at least 1\n")
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, out)
    except SOLVER_ERRORS as exc:
        err.write(f"halfheat: solver error: {type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER
    except HalfheatError as exc:
        err.write(f"halfheat: configuration error: {type(exc).__name__}: {exc}\n")
        return EXIT_CONFIG
    except (KeyError, TypeError, ValueError) as exc:
        err.write(f"halfheat: configuration error: {type(exc).__name__}: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        err.write(f"halfheat: error: {exc}\n")
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
