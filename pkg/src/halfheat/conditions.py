"""Necessary and sufficient solvability functionals.

Every functional is reported as a scale-free ratio ``sup_value / rhs_shape``.
The constants the ratios are compared against have no closed form; the
package ships constants calibrated against the boundary solver (see
``calibration.json``) and every verdict is labelled accordingly.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, DomainError, MeasureTypeError, RegimeError
from .kernels import semigroup_apply
from .measure import (
    BallQuery,
    MeasureSpec,
    ball_mass,
    orlicz_ball_average,
    p_star,
    phi_beta,
    phi_beta_inv,
    power_ball_average,
    seed_points,
    split_strip,
    support_box,
    weighted_ball_average,
)

__all__ = [
    "ConditionParams",
    "ConditionReport",
    "phi_beta",
    "phi_beta_inv",
    "rho",
    "necessary_thm11",
    "necessary_smoothing",
    "sufficient_thm13",
    "sufficient_thm14",
    "sufficient_thm15",
    "lifespan_bracket",
    "load_calibration",
]

P_TOL = 1e-12
SIGMA_POINTS = 40
SIGMA_SPAN = 1e-4


def rho(s, N: int):
    """Critical profile s^{-N} [log(e + 1/s)]^{-N}."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("rho needs s > 0")
    out = s ** (-N) * np.log(math.e + 1.0 / s) ** (-N)
    return float(out) if out.ndim == 0 else out


def regime(p: float, N: int) -> str:
    ps = p_star(N)
    if abs(p - ps) <= P_TOL * ps:
        return "critical"
    return "subcritical" if p < ps else "supercritical"


@dataclass(frozen=True)
class ConditionParams:
    p: float
    T: float
    N: int = 1
    delta: float = 0.5
    alpha: Optional[float] = None
    beta: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise ConfigurationError("p must exceed 1")
        if not self.T > 0:
            raise ConfigurationError("T must be positive")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.alpha is not None and not 1 < self.alpha < self.p:
            raise ConfigurationError("alpha must lie in (1, p)")
        if not self.beta > 0:
            raise ConfigurationError("beta must be positive")
        if self.N not in (1, 2, 3):
            raise ConfigurationError("N must be 1, 2 or 3")

    @property
    def lam(self) -> float:
        return (1.0 - self.delta) / (4.0 * self.T)

    @property
    def alpha_or_default(self) -> float:
        return self.alpha if self.alpha is not None else 0.5 * (1.0 + self.p)

    @property
    def gamma_exp(self) -> float:
        return 1.0 / (2.0 * (self.p - 1.0))

    def sigma_grid(self) -> np.ndarray:
        r = math.sqrt(self.T)
        return np.logspace(math.log10(SIGMA_SPAN * r), math.log10(r), SIGMA_POINTS)


@dataclass
class ConditionReport:
    functional_name: str
    sup_value: float
    arg_sup: tuple
    rhs_shape: float
    ratio: float
    verdict_hint: str
    threshold: Optional[float] = None
    label: str = "calibrated"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "functional_name": self.functional_name,
            "sup_value": _num(self.sup_value),
            "arg_sup": [float(v) for v in self.arg_sup] if self.arg_sup is not None else None,
            "rhs_shape": _num(self.rhs_shape),
            "ratio": _num(self.ratio),
            "threshold": _num(self.threshold),
            "verdict_hint": self.verdict_hint,
            "label": self.label,
        }
        d.update({k: _num(v) if isinstance(v, float) else v for k, v in self.extra.items()})
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


# --------------------------------------------------------------------------
# calibration


_CAL_CACHE: dict = {}


def load_calibration(path: Optional[str] = None) -> dict:
    """Calibrated constants; the packaged file unless ``path`` is given."""
    key = path or "<package>"
    if key not in _CAL_CACHE:
        if path is None:
            text = resources.files("halfheat").joinpath("calibration.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        _CAL_CACHE[key] = json.loads(text)
    return _CAL_CACHE[key]


def _gamma(name: str, params: ConditionParams, cal: Optional[dict]) -> Optional[float]:
    cal = cal if cal is not None else load_calibration()
    if abs(params.delta - cal.get("delta", 0.5)) > 1e-12:
        return None
    v = cal.get("constants", {}).get(name)
    return None if v is None else float(v)


def _necessary_verdict(ratio, gamma):
    if gamma is None or math.isnan(ratio):
        return "indeterminate"
    return "fail" if ratio > gamma else "pass"


def _sufficient_verdict(ratio, gamma):
    if gamma is None or math.isnan(ratio):
        return "indeterminate"
    return "pass" if ratio <= gamma else "fail"


# --------------------------------------------------------------------------
# sup over centers


def _coarse_count(N: int) -> int:
    return {1: 41, 2: 13, 3: 7}[N]


def sup_search(
    f: Callable[[tuple], float],
    lo: np.ndarray,
    hi: np.ndarray,
    seeds: Sequence[tuple] = (),
    n: Optional[int] = None,
    rounds: int = 3,
    factor: int = 4,
) -> tuple[float, tuple]:
    """Deterministic sup of ``f`` over the box [lo, hi].

    Coarse axis-aligned grid plus seed points, then ``rounds`` rounds of local
    grids around the incumbent with spacing divided by ``factor``.  Ties go
    to the lexicographically smallest point.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    N = len(lo)
    n = n or _coarse_count(N)
    axes = [np.linspace(a, b, n) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    cand = [tuple(float(v) for v in c) for c in itertools.product(*axes)]
    for s in seeds:
        s = np.asarray(s, dtype=float)
        if np.all(s >= lo - 1e-15) and np.all(s <= hi + 1e-15):
            cand.append(tuple(float(v) for v in np.clip(s, lo, hi)))
    best_v, best_x = -math.inf, None
    seen: dict = {}

    def consider(x):
        nonlocal best_v, best_x
        if x in seen:
            return
        v = f(x)
        seen[x] = v
        if v > best_v or (v == best_v and best_x is not None and x < best_x):
            best_v, best_x = v, x

    for c in sorted(set(cand)):
        consider(c)
    cell = np.array([(b - a) / (n - 1) if b > a else 0.0 for a, b in zip(lo, hi)])
    for _ in range(rounds):
        cell = cell / factor
        center = np.asarray(best_x)
        offs = [np.arange(-2, 3) * c if c > 0 else np.array([0.0]) for c in cell]
        local = []
        for o in itertools.product(*offs):
            x = np.clip(center + np.asarray(o), lo, hi)
            local.append(tuple(float(v) for v in x))
        for c in sorted(set(local)):
            consider(c)
    return best_v, best_x


def _box(mu: MeasureSpec, pad: float, zmin: float = 0.0, zmax: float = math.inf):
    lo, hi = support_box(mu)
    lo = lo - pad
    hi = hi + pad
    lo[-1] = max(lo[-1], zmin, 0.0)
    hi[-1] = min(hi[-1], zmax)
    hi[-1] = max(hi[-1], lo[-1])
    return lo, hi


# --------------------------------------------------------------------------
# necessary conditions


def necessary_thm11(mu: MeasureSpec, params: ConditionParams, cal: Optional[dict] = None) -> ConditionReport:
    """Ratio of the weighted ball mass to its admissible size at time T."""
    N = mu.N
    reg = regime(params.p, N)
    gamma = _gamma(f"gamma1_{reg}", params, cal)
    name = f"necessary_thm11_{reg}"
    if mu.is_zero():
        return ConditionReport(name, 0.0, tuple([0.0] * N), 1.0, 0.0, _necessary_verdict(0.0, gamma), gamma)
    seeds = seed_points(mu)
    d1 = 1.0 + params.delta

    def weighted_mass(sigma):
        def f(x):
            return math.exp(-d1 * x[-1] ** 2 / (4.0 * sigma**2)) * ball_mass(mu, BallQuery(x, sigma))

        return f

    if reg == "subcritical":
        sigma = math.sqrt(params.T)
        rhs = params.T ** (N / 2.0 - params.gamma_exp)
        sv, arg = sup_search(weighted_mass(sigma), *_box(mu, 3 * sigma), seeds)
        return ConditionReport(name, sv, arg, rhs, sv / rhs, _necessary_verdict(sv / rhs, gamma), gamma, extra={"sigma": sigma})
    best = (-math.inf, None, None, None, None)
    for sigma in params.sigma_grid():
        if reg == "critical":
            rhs = math.log(math.e + math.sqrt(params.T) / sigma) ** (-N)
        else:
            rhs = sigma ** (N - 1.0 / (params.p - 1.0))
        sv, arg = sup_search(weighted_mass(sigma), *_box(mu, 3 * sigma), seeds, rounds=2)
        r = sv / rhs
        if r > best[0]:
            best = (r, sv, arg, rhs, sigma)
    r, sv, arg, rhs, sigma = best
    return ConditionReport(name, sv, arg, rhs, r, _necessary_verdict(r, gamma), gamma, extra={"sigma": sigma})


def necessary_smoothing(
    mu: MeasureSpec, params: ConditionParams, t_grid: Optional[Sequence[float]] = None, cal: Optional[dict] = None
) -> ConditionReport:
    """sup over t < T and boundary points of t^{1/(2(p-1))} [S(t) mu](x', 0)."""
    N = mu.N
    hyp = (not mu.has_atoms()) and all(d.nonincreasing_in_normal() is True for d in mu.live_densities())
    gamma = _gamma("gamma_smoothing", params, cal)
    name = "necessary_smoothing"
    if t_grid is None:
        t_grid = params.T * np.logspace(-6, 0, 41)[:-1]
    if mu.is_zero():
        return ConditionReport(name, 0.0, tuple([0.0] * N), 1.0, 0.0, _necessary_verdict(0.0, gamma), gamma, extra={"hypothesis_verified": hyp})
    g = params.gamma_exp
    best_v, best_x, best_t = -math.inf, None, None
    lo, hi = support_box(mu)
    for t in t_grid:
        if N == 1:
            pts = [(0.0,)]
        else:
            pad = 3.0 * math.sqrt(t)
            axes = [np.linspace(lo[i] - pad, hi[i] + pad, 9) for i in range(N - 1)]
            pts = [tuple(c) + (0.0,) for c in itertools.product(*axes)]
            pts += [tuple(s[:-1]) + (0.0,) for s in seed_points(mu)]
        for x in sorted(set(pts)):
            try:
                v = t**g * float(semigroup_apply(mu, np.asarray(x), float(t)))
            except DivergenceError:
                v = math.inf
            if v > best_v or (v == best_v and best_x is not None and x < best_x):
                best_v, best_x, best_t = v, x, float(t)
    return ConditionReport(
        name,
        best_v,
        best_x,
        1.0,
        best_v,
        _necessary_verdict(best_v, gamma),
        gamma,
        label="calibrated" if hyp else "calibrated (hypothesis unverified)",
        extra={"t_arg": best_t, "hypothesis_verified": hyp},
    )


# --------------------------------------------------------------------------
# sufficient conditions


def _weighted_average_ratio(mu, params, zmin=0.0):
    sigma = math.sqrt(params.T)
    lam = params.lam
    rhs = params.T ** (-params.gamma_exp)
    if mu.is_zero():
        return 0.0, tuple([0.0] * (mu.N - 1) + [max(zmin, 0.0)]), rhs
    f = lambda x: weighted_ball_average(mu, BallQuery(x, sigma, lam))
    sv, arg = sup_search(f, *_box(mu, 3 * sigma, zmin=zmin), seed_points(mu))
    return sv, arg, rhs


def sufficient_thm13(mu: MeasureSpec, params: ConditionParams, cal: Optional[dict] = None) -> ConditionReport:
    if regime(params.p, mu.N) != "subcritical":
        raise RegimeError("this sufficient condition needs 1 < p < 1 + 1/N")
    gamma = _gamma("gamma2", params, cal)
    sv, arg, rhs = _weighted_average_ratio(mu, params)
    r = sv / rhs
    return ConditionReport("sufficient_thm13", sv, arg, rhs, r, _sufficient_verdict(r, gamma), gamma)


def _strip_sigma_sup(mu2: MeasureSpec, params: ConditionParams, value: Callable, rhs_fn: Callable):
    """sup over the sigma grid and centers in the lower strip of value(x, sigma) / rhs(sigma)."""
    if mu2.has_atoms() and mu2.kappa > 0:
        raise MeasureTypeError("the lower-strip part must be a function (atoms present)")
    zmax = math.sqrt(params.T) * (1.0 - 1e-12)
    N = mu2.N
    if mu2.is_zero():
        return 0.0, 0.0, tuple([0.0] * N), 1.0, None
    best = (-math.inf, None, None, None, None)
    for sigma in params.sigma_grid():
        rhs = rhs_fn(sigma)
        f = lambda x, s=sigma: value(x, s)
        sv, arg = sup_search(f, *_box(mu2, 2 * sigma, zmax=zmax), seed_points(mu2), rounds=2)
        r = sv / rhs
        if r > best[0]:
            best = (r, sv, arg, rhs, sigma)
    return best


def sufficient_thm14(mu: MeasureSpec, params: ConditionParams, cal: Optional[dict] = None):
    """(report for the upper part, report for the lower part) after splitting at sqrt(T)."""
    alpha = params.alpha_or_default
    if not 1 < alpha < params.p:
        raise ConfigurationError("alpha must lie in (1, p)")
    gamma = _gamma("gamma3", params, cal)
    mu1, mu2 = split_strip(mu, params.T)
    sv1, arg1, rhs1 = _weighted_average_ratio(mu1, params, zmin=math.sqrt(params.T))
    r1 = sv1 / rhs1
    rep1 = ConditionReport("sufficient_thm14_upper", sv1, arg1, rhs1, r1, _sufficient_verdict(r1, gamma), gamma)
    r2, sv2, arg2, rhs2, sigma = _strip_sigma_sup(
        mu2,
        params,
        lambda x, s: power_ball_average(mu2, x, s, alpha),
        lambda s: s ** (-1.0 / (params.p - 1.0)),
    )
    rep2 = ConditionReport(
        "sufficient_thm14_lower", sv2, arg2, rhs2, r2, _sufficient_verdict(r2, gamma), gamma, extra={"sigma": sigma, "alpha": alpha}
    )
    return rep1, rep2


def sufficient_thm15(mu: MeasureSpec, params: ConditionParams, cal: Optional[dict] = None):
    if regime(params.p, mu.N) != "critical":
        raise RegimeError("this sufficient condition needs p = 1 + 1/N")
    gamma = _gamma("gamma4", params, cal)
    mu1, mu2 = split_strip(mu, params.T)
    sv1, arg1, rhs1 = _weighted_average_ratio(mu1, params, zmin=math.sqrt(params.T))
    r1 = sv1 / rhs1
    rep1 = ConditionReport("sufficient_thm15_upper", sv1, arg1, rhs1, r1, _sufficient_verdict(r1, gamma), gamma)
    sqT = math.sqrt(params.T)
    r2, sv2, arg2, rhs2, sigma = _strip_sigma_sup(
        mu2,
        params,
        lambda x, s: orlicz_ball_average(mu2, x, s, params.beta, params.T, params.p),
        lambda s: rho(s / sqT, mu2.N),
    )
    rep2 = ConditionReport(
        "sufficient_thm15_lower", sv2, arg2, rhs2, r2, _sufficient_verdict(r2, gamma), gamma, extra={"sigma": sigma, "beta": params.beta}
    )
    return rep1, rep2


def sufficient(mu: MeasureSpec, params: ConditionParams, cal: Optional[dict] = None) -> list:
    """The sufficient condition applicable in the regime of p (a list of reports)."""
    reg = regime(params.p, mu.N)
    if reg == "subcritical":
        return [sufficient_thm13(mu, params, cal)]
    if reg == "critical":
        return list(sufficient_thm15(mu, params, cal))
    return list(sufficient_thm14(mu, params, cal))


def sufficient_passes(reports) -> bool:
    return all(r.verdict_hint == "pass" for r in reports)


# --------------------------------------------------------------------------
# bracket


@dataclass
class LifespanBracket:
    T_lower: float
    T_upper: float
    indeterminate: bool
    grid: list = field(default_factory=list)

    def __iter__(self):
        yield self.T_lower
        yield self.T_upper


def lifespan_bracket(
    mu: MeasureSpec,
    p: float,
    N: Optional[int] = None,
    T_grid: Optional[Sequence[float]] = None,
    horizon: float = 1e4,
    delta: float = 0.5,
    cal: Optional[dict] = None,
) -> LifespanBracket:
    """Certified lower and upper life-span bounds from the calibrated conditions.

    ``T_lower`` is the largest grid time passing the applicable sufficient
    condition, ``T_upper`` the smallest grid time failing the necessary one.
    """
    N = N or mu.N
    if N != mu.N:
        raise ConfigurationError("dimension mismatch")
    if mu.is_zero():
        return LifespanBracket(horizon, math.inf, False)
    if T_grid is None:
        T_grid = np.logspace(-6, math.log10(horizon), 41)
    T_grid = sorted(float(t) for t in T_grid)
    lower, upper = 0.0, math.inf
    rows = []
    for T in T_grid:
        params = ConditionParams(p=p, T=T, N=N, delta=delta)
        try:
            suff = sufficient_passes(sufficient(mu, params, cal))
        except MeasureTypeError:
            suff = False
        nec = necessary_thm11(mu, params, cal).verdict_hint
        rows.append({"T": T, "sufficient_pass": suff, "necessary": nec})
        if suff:
            lower = T
        if nec == "fail" and math.isinf(upper):
            upper = T
    return LifespanBracket(lower, upper, not lower <= upper, rows)
