"""Boundary Volterra equation for the half-space problem.

Restricted to the boundary, the mild formulation reads

    w(x', t) = g(x', t) + pi^{-1/2} int_0^t (t - s)^{-1/2} [Gamma_{N-1}(t - s) * w(., s)^p](x') ds

with ``g = S(t) mu`` on the boundary.  The solver marches in time with
product integration: the Abel kernel is integrated exactly against a
piecewise-linear reconstruction of ``w^p`` and the node touching ``s = t`` is
implicit.  For N >= 2 the lateral Gaussian convolution is applied as a Fourier
multiplier on a periodic box.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import (
    ConfigurationError,
    ConsistencyError,
    DivergenceError,
    DomainError,
    NotBlownUpError,
    SolverError,
)
from .kernels import TRUNC, green_neumann, semigroup_apply
from .measure import MeasureSpec, support_box

SQRT_PI = math.sqrt(math.pi)
Q_MIN = -4.0  # startup exponents below this only model negligible contributions
Q_DIV = 1.0 - 1e-3  # startup exponents at or above this are treated as non-integrable

REACHED = "reached_horizon"
BLOW_UP = "blow_up"
INSTANT = "instant_blow_up_evidence"


@dataclass(frozen=True)
class SolverControls:
    dt0: float = 1e-3
    dt_min: float = 1e-9
    w_max: float = 1e8
    horizon: float = 1.0
    tol_newton: float = 1e-12
    refine_factor: float = 0.5
    growth_tol: float = 0.1
    grow_factor: float = 1.25
    rel_step: float = 0.02
    dt_max: float = math.inf
    startup_nodes: int = 8
    startup_ratio: float = 0.05
    startup_floor: float = 1e-6
    halving_check: bool = True
    w_floor: float = 1e-9
    max_steps: int = 100_000
    # lateral grid (N >= 2)
    R: Optional[float] = None
    nodes: int = 64

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt0):
            raise ConfigurationError("need 0 < dt_min <= dt0")
        if not self.w_max > 1:
            raise ConfigurationError("need w_max > 1")
        if not self.horizon > 0:
            raise ConfigurationError("need horizon > 0")
        if not (0 < self.refine_factor < 1):
            raise ConfigurationError("refine_factor must lie in (0, 1)")
        if not (0 < self.startup_ratio <= 1 and 0 < self.startup_floor <= 1):
            raise ConfigurationError("startup_ratio and startup_floor must lie in (0, 1]")
        if self.startup_nodes < 1 or self.nodes < 4:
            raise ConfigurationError("startup_nodes >= 1 and nodes >= 4 required")

    def refined(self, factor: float = 0.5) -> "SolverControls":
        """Same run with every mesh length multiplied by ``factor``."""
        return replace(
            self,
            dt0=self.dt0 * factor,
            dt_min=self.dt_min * factor,
            dt_max=self.dt_max * factor,
            rel_step=self.rel_step * factor,
            growth_tol=self.growth_tol * factor,
            startup_ratio=self.startup_ratio * factor,
        )

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in asdict(self).items()}


@dataclass
class BoundaryTrace:
    """Boundary values w(., t) at the accepted time nodes.

    ``values`` has shape (n,) for N = 1 and (n, M) for a lateral grid with M
    nodes (flattened).  ``meta`` records what is needed to evaluate the
    solution off the boundary (exponent, startup model, lateral grid).
    """

    times: np.ndarray
    values: np.ndarray
    sup_values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.sup_values = np.asarray(self.sup_values, dtype=float)

    def __len__(self):
        return len(self.times)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        scalar = self.values.ndim == 1
        wr.writerow(["t", "sup_w", "w"] if scalar else ["t", "sup_w"])
        for i, t in enumerate(self.times):
            row = [f"{t:.17g}", f"{self.sup_values[i]:.17g}"]
            if scalar:
                row.append(f"{self.values[i]:.17g}")
            wr.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BoundaryTrace":
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(v) for v in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, 3))
        vals = data[:, 2] if "w" in rows[0] else data[:, 1]
        return cls(times=data[:, 0], values=vals, sup_values=data[:, 1])


@dataclass
class SolveOutcome:
    status: str
    trace: BoundaryTrace
    T_est: Optional[float] = None
    T_err: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)
    controls: Optional[SolverControls] = None

    @property
    def blew_up(self) -> bool:
        return self.status in (BLOW_UP, INSTANT)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "T_est": self.T_est,
            "T_err": self.T_err,
            "controls": self.controls.to_dict() if self.controls else None,
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# --------------------------------------------------------------------------
# product-integration weights


def abel_panel_weights(tau: float, left: np.ndarray, right: np.ndarray):
    """Weights (wa, wb) with int_left^right (tau - s)^{-1/2} f(s) ds ~ wa f(left) + wb f(right).

    Exact for f linear on the panel.  Written in a cancellation-free form.
    """
    ua = tau - left
    ub = np.maximum(tau - right, 0.0)
    h = right - left
    ra = np.sqrt(ua)
    S = ra + np.sqrt(ub)
    frac = ra / S
    wb = (2.0 / 3.0) * h * (1.0 + frac) / S
    wa = (h / S) * (4.0 / 3.0 - (2.0 / 3.0) * frac)
    return wa, wb


def startup_moment(tau, t1: float, q):
    """int_0^t1 (tau - s)^{-1/2} (s / t1)^{-q} ds for tau >= t1 and q < 1."""
    q = np.asarray(q, dtype=float)
    a = 1.0 - q
    x = min(t1 / tau, 1.0)
    return math.sqrt(tau) * (tau / t1) ** (-q) * special.beta(a, 0.5) * special.betainc(a, 0.5, x)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _power_moments(tau, a, b, qw):
    """int_a^b (tau - s)^{-1/2} s^{k - qw} ds for k = 0, 1 (qw < 1)."""
    h = b - a
    smooth = (tau - b >= 4.0 * h) & (a >= 2.0 * h)
    if np.all(smooth):
        # both factors smooth on the panel: Gauss-Legendre is accurate to rounding
        s = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * _GL_X
        base = (tau - s) ** -0.5 * s ** (-qw) * (0.5 * h[:, None] * _GL_W)
        return [base.sum(axis=1), (base * s).sum(axis=1)]
    if np.any(smooth):
        m_s = _power_moments(tau, a[smooth], b[smooth], qw)
        m_r = _power_moments(tau, a[~smooth], b[~smooth], qw)
        out = [np.empty_like(a), np.empty_like(a)]
        for k in (0, 1):
            out[k][smooth] = m_s[k]
            out[k][~smooth] = m_r[k]
        return out
    xa, xb = a / tau, np.minimum(b / tau, 1.0)
    out = []
    for k in (0, 1):
        alpha = 1.0 + k - qw
        upper = xa > 0.5
        diff = np.where(
            upper,
            special.betaincc(alpha, 0.5, xa) - special.betaincc(alpha, 0.5, xb),
            special.betainc(alpha, 0.5, xb) - special.betainc(alpha, 0.5, xa),
        )
        out.append(tau ** (0.5 + k - qw) * special.beta(alpha, 0.5) * diff)
    return out


def node_weights(tau: float, times: np.ndarray, qw: float = 0.0, near: float = 256.0):
    """Abel node weights for the panels between consecutive ``times`` (all <= tau).

    Returns an array ``omega`` with ``sum_i omega_i f_i`` approximating
    int_{times[0]}^{tau} (tau - s)^{-1/2} f(s) ds when ``times[-1] == tau``.
    With ``qw > 0`` the panels close to the origin (left end within ``near``
    panel widths of 0) interpolate s^qw f linearly instead of f, which
    resolves data behaving like s^{-qw} at small times.
    """
    times = np.asarray(times, dtype=float)
    n = len(times)
    omega = np.zeros(n)
    if n > 1:
        left, right = times[:-1], times[1:]
        wa, wb = abel_panel_weights(tau, left, right)
        if qw > 0:
            h = right - left
            sel = np.nonzero(left <= near * h)[0]
            if len(sel):
                a, b, hh = left[sel], right[sel], h[sel]
                M0, M1 = _power_moments(tau, a, b, qw)
                wa[sel] = a**qw * (b * M0 - M1) / hh
                wb[sel] = b**qw * (M1 - a * M0) / hh
        omega[:-1] += wa
        omega[1:] += wb
    return omega


def weight_exponent(q) -> float:
    """Panel weight exponent used near the origin, from the startup exponent(s)."""
    return float(np.clip(np.max(q), 0.0, 0.9))  # keeps the moments well conditioned


# --------------------------------------------------------------------------
# forcing


class Forcing:
    """Boundary forcing g(t) sampled at a fixed set of lateral nodes."""

    size = 1

    def __call__(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def startup_exponent(self, t1: float, p: float) -> np.ndarray:
        """Exponent q with g(s)^p ~ s^{-q} just below t1, per node."""
        g1 = self(t1)
        g0 = self(t1 / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where((g1 > 0) & (g0 > 0), np.log(g0 / np.where(g1 > 0, g1, 1.0)) / math.log(2.0), -np.inf)
        return np.maximum(p * a, Q_MIN)


class FunctionForcing(Forcing):
    """Wrap a callable ``g(t) -> float or array``."""

    def __init__(self, fn: Callable[[float], float], size: int = 1):
        self.fn = fn
        self.size = size

    def __call__(self, t):
        return np.broadcast_to(np.asarray(self.fn(t), dtype=float), (self.size,)).copy()


class MeasureForcing(Forcing):
    """[S(t) mu](x', 0) at lateral nodes ``xprime`` of shape (M, N-1)."""

    def __init__(self, mu: MeasureSpec, xprime: Optional[np.ndarray] = None, rtol: float = 1e-9):
        self.mu = mu
        self.rtol = rtol
        N = mu.N
        if N == 1:
            self.points = np.zeros((1, 1))
        else:
            xp = np.asarray(xprime, dtype=float).reshape(-1, N - 1)
            self.points = np.hstack([xp, np.zeros((len(xp), 1))])
        self.size = len(self.points)
        self._uniform = N > 1 and not mu.has_atoms() and all(d.lateral_uniform for d in mu.live_densities())
        self._cache: dict = {}

    def __call__(self, t):
        if t in self._cache:
            return self._cache[t].copy()
        if self.mu.is_zero():
            out = np.zeros(self.size)
        elif self._uniform:
            v = semigroup_apply(self.mu, np.zeros(self.mu.N), t, rtol=self.rtol)
            out = np.full(self.size, v)
        else:
            out = np.asarray(semigroup_apply(self.mu, self.points, t, rtol=self.rtol), dtype=float).reshape(-1)
        if len(self._cache) > 4096:
            self._cache.clear()
        self._cache[t] = out
        return out.copy()


# --------------------------------------------------------------------------
# lateral grid


@dataclass(frozen=True)
class LateralGrid:
    """Periodic box [-R, R)^(N-1) with M nodes per axis."""

    N: int
    R: float
    M: int

    @property
    def h(self):
        return 2.0 * self.R / self.M

    @property
    def axis(self):
        return -self.R + self.h * np.arange(self.M)

    @property
    def shape(self):
        return (self.M,) * (self.N - 1)

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * (self.N - 1)), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def k2(self) -> np.ndarray:
        """|k|^2 on the rfftn layout."""
        k = 2.0 * math.pi * np.fft.fftfreq(self.M, d=self.h)
        kr = 2.0 * math.pi * np.fft.rfftfreq(self.M, d=self.h)
        axes = [k] * (self.N - 2) + [kr]
        mesh = np.meshgrid(*axes, indexing="ij")
        return sum(m * m for m in mesh)

    def rfft(self, f):
        return np.fft.rfftn(f.reshape(self.shape))

    def irfft(self, F):
        return np.fft.irfftn(F, s=self.shape, axes=tuple(range(len(self.shape)))).reshape(-1)

    def eval_series(self, F_full: np.ndarray, xprime) -> float:
        """Trigonometric interpolation of a field given by its full fftn at x'."""
        xp = np.asarray(xprime, dtype=float) + self.R
        k = 2.0 * math.pi * np.fft.fftfreq(self.M, d=self.h)
        phase = 1.0
        for ax in range(self.N - 1):
            e = np.exp(1j * k * xp[ax])
            shape = [1] * (self.N - 1)
            shape[ax] = self.M
            phase = phase * e.reshape(shape)
        return float(np.real(np.sum(F_full * phase)) / F_full.size)


def default_grid(mu: MeasureSpec, controls: SolverControls) -> LateralGrid:
    lo, hi = support_box(mu)
    extent = float(np.max(np.abs(np.concatenate([lo[:-1], hi[:-1]])))) if mu.N > 1 else 0.0
    need = extent + 10.0 * math.sqrt(controls.horizon)
    R = controls.R if controls.R is not None else need
    if R < need - 1e-12:
        raise ConfigurationError(
            f"lateral box half-width R={R:.4g} smaller than support extent + 10 sqrt(horizon) = {need:.4g}"
        )
    return LateralGrid(mu.N, R, controls.nodes)


# --------------------------------------------------------------------------
# implicit node equation  w = c + W w^p


def solve_node(c: np.ndarray, W: float, p: float, tol: float):
    """Minimal root of w = c + W w^p per entry, or None where no root exists."""
    c = np.asarray(c, dtype=float)
    if W == 0.0:
        return c.copy()
    if p == 1.0:
        return c / (1.0 - W) if W < 1.0 else None
    lw = -math.log(p * W) / (p - 1.0)
    wstar = math.exp(lw) if lw < 700.0 else math.inf
    if np.any(c > wstar * (1.0 - 1.0 / p)):
        return None
    w = c.copy()
    for _ in range(60):
        F = w - c - W * w**p
        dF = 1.0 - p * W * w ** (p - 1.0)
        step = np.where(dF > 0, -F / np.where(dF > 0, dF, 1.0), 0.0)
        w_new = np.minimum(w + step, wstar)
        if np.all(np.abs(w_new - w) <= tol * np.maximum(np.abs(w_new), 1e-300)):
            return w_new
        w = w_new
    # bisection fallback on [c, wstar]
    lo, hi = c.copy(), np.full_like(c, wstar)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        F = mid - c - W * mid**p
        lo = np.where(F < 0, mid, lo)
        hi = np.where(F < 0, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(hi, 1e-300)):
            return hi
    return None


# --------------------------------------------------------------------------
# marching engine


class _History:
    """Accepted nodes and w^p values; evaluates the discrete Volterra history."""

    def __init__(self, p, t1, q, grid: Optional[LateralGrid]):
        self.p = p
        self.t1 = t1
        self.q = np.asarray(q, dtype=float)
        self.startup_on = self.q < Q_DIV
        self.qw = weight_exponent(self.q)
        self.grid = grid
        self.k2 = grid.k2() if grid is not None else None
        self.times: list = []
        self.f: list = []
        self.F: list = []

    def append(self, t, w):
        self.times.append(t)
        fw = w**self.p
        self.f.append(fw)
        if self.grid is not None:
            self.F.append(self.grid.rfft(fw))

    def startup(self, tau):
        if not np.any(self.startup_on):
            return 0.0
        m = np.where(self.startup_on, startup_moment(tau, self.t1, np.where(self.startup_on, self.q, 0.0)), 0.0)
        return m

    def explicit_part(self, tau):
        """History integral at tau excluding the unknown node; returns (value, W_new)."""
        times = np.asarray(self.times + [tau])
        omega = node_weights(tau, times, self.qw)
        W_new = omega[-1] / SQRT_PI
        coef = omega[:-1] / SQRT_PI
        s0 = self.startup(tau) / SQRT_PI
        if len(self.times) == 1 and tau == self.times[0]:
            return None  # first node handled separately
        if self.grid is None:
            f = np.asarray(self.f)
            val = coef @ f
            val = val + s0 * f[0]
            return val, W_new
        # lateral convolution with Gamma_{N-1}(tau - t_i) in Fourier space
        lag = tau - np.asarray(self.times)
        damp = np.exp(-np.multiply.outer(lag, self.k2))
        Fst = np.asarray(self.F)
        H = np.tensordot(coef, damp * Fst, axes=1)
        val = self.grid.irfft(H)
        if np.any(s0 != 0):
            val = val + self.grid.irfft(np.exp(-lag[0] * self.k2) * self.grid.rfft(s0 * self.f[0]))
        return val, W_new


def _first_node(g1, hist: _History, controls, p):
    W = np.where(hist.startup_on, hist.startup(hist.t1) / SQRT_PI, 0.0)
    W = np.broadcast_to(W, g1.shape)
    out = np.empty_like(g1)
    for i in range(len(g1)):
        r = solve_node(g1[i : i + 1], float(W[i]), p, controls.tol_newton)
        if r is None:
            return None
        out[i] = r[0]
    return out


def _march(
    forcing: Forcing, p: float, controls: SolverControls, grid: Optional[LateralGrid] = None, linear_ok: bool = False
) -> SolveOutcome:
    if not (p > 1 or (linear_ok and p == 1)):
        raise DomainError("exponent p must be > 1")
    m = controls.startup_nodes
    dt0 = controls.dt0
    diag = {"rejected": 0, "accepted": 0, "refinements": [], "stop_reason": None, "dt0_used": dt0}
    while True:
        t1 = dt0 / m**2
        try:
            q = forcing.startup_exponent(t1, p)
            # singular forcing: geometric ramp h = startup_ratio * t from a tiny first node
            ramp = bool(np.max(q) > 0)
            if ramp:
                t1 = dt0 * controls.startup_floor
                q = forcing.startup_exponent(t1, p)
            g1 = forcing(t1)
        except DivergenceError:
            raise SolverError("forcing diverges at the first node; reduce dt0")
        hist = _History(p, t1, q, grid)
        w1 = _first_node(g1, hist, controls, p)
        if w1 is not None:
            break
        # data too large for the first panel: shrink the whole startup
        dt0 *= 0.25
        diag["dt0_used"] = dt0
        if dt0 < controls.dt_min:
            raise SolverError("no solution of the first implicit node down to dt_min")
    diag["startup_exponent"] = float(np.max(q))
    diag["startup_divergent"] = bool(np.any(q >= Q_DIV))
    hist.append(t1, w1)
    sups = [float(np.max(w1))]
    vals = [w1]
    t = t1
    graded = [] if ramp else [dt0 * (i / m) ** 2 for i in range(2, m + 1)]
    ramp_end = dt0 / controls.startup_ratio
    dt = controls.startup_ratio * t1 if ramp else (graded[0] - t1 if graded else dt0)
    diverged_at = None
    status = REACHED
    last_dt = None

    while True:
        if t >= controls.horizon * (1 - 1e-14):
            diag["stop_reason"] = "horizon"
            break
        if diag["accepted"] >= controls.max_steps:
            raise SolverError("step budget exhausted", state=_trace(hist, vals, sups, p, grid, q))
        if graded:
            dt = min(dt, graded[0] - t) if graded[0] > t else dt
        rem = controls.horizon - t
        if dt >= rem or rem - dt < 0.25 * dt:
            dt = rem
        tau = controls.horizon if dt == rem else t + dt
        if dt < controls.dt_min * min(1.0, t / dt0) or tau <= t:
            diag["stop_reason"] = "forcing_divergence" if diverged_at is not None else "step_collapse"
            status = BLOW_UP
            break
        try:
            g = forcing(tau)
        except DivergenceError:
            diverged_at = tau
            dt *= controls.refine_factor
            diag["rejected"] += 1
            continue
        val, W_new = hist.explicit_part(tau)
        c = g + val
        w = solve_node(c, W_new, p, controls.tol_newton)
        prev = vals[-1]
        if w is None or not np.all(np.isfinite(w)):
            dt *= controls.refine_factor
            diag["rejected"] += 1
            diag["refinements"].append(float(t))
            continue
        growth = float(np.max((w - prev) / (prev + controls.w_floor)))
        if growth > controls.growth_tol:
            dt *= controls.refine_factor
            diag["rejected"] += 1
            diag["refinements"].append(float(t))
            continue
        hist.append(tau, w)
        vals.append(w)
        sups.append(float(np.max(w)))
        diag["accepted"] += 1
        last_dt = dt
        t = tau
        if graded and abs(t - graded[0]) <= 1e-15 * max(t, 1.0):
            graded.pop(0)
            dt = (graded[0] - t) if graded else dt0
        elif not graded:
            if growth < controls.growth_tol / 4:
                dt *= controls.grow_factor
            cap = controls.startup_ratio * t if (ramp and t < ramp_end) else max(dt0, controls.rel_step * t)
            dt = min(dt, cap, controls.dt_max)
        if sups[-1] > controls.w_max and dt < controls.dt_min * min(1.0, t / dt0):
            diag["stop_reason"] = "threshold"
            status = BLOW_UP
            break
        if not math.isfinite(sups[-1]) or sups[-1] > controls.w_max * 1e8:
            diag["stop_reason"] = "overflow_guard"
            status = BLOW_UP
            break

    trace = _trace(hist, vals, sups, p, grid, q)
    out = SolveOutcome(status=status, trace=trace, diagnostics=diag, controls=controls)
    if status == BLOW_UP:
        bracket = dt / controls.refine_factor if diverged_at is not None else (last_dt or dt)
        if diag["stop_reason"] == "forcing_divergence":
            out.T_est = t + 0.5 * bracket
            out.T_err = 0.5 * bracket
        else:
            try:
                out.T_est, out.T_err = estimate_blowup_time(trace, p)
            except NotBlownUpError:
                out.T_est, out.T_err = t + 0.5 * bracket, 0.5 * bracket
                diag["fit"] = "bracket"
    return out


def _trace(hist, vals, sups, p, grid, q):
    meta = {"p": p, "t1": hist.t1, "q": np.asarray(q).tolist()}
    if grid is not None:
        meta["grid"] = {"N": grid.N, "R": grid.R, "M": grid.M}
    return BoundaryTrace(
        times=np.asarray(hist.times),
        values=np.asarray(vals)[:, 0] if grid is None else np.asarray(vals),
        sup_values=np.asarray(sups),
        meta=meta,
    )


# --------------------------------------------------------------------------
# public solvers


def boundary_forcing(mu: MeasureSpec, t: float, xprime=None) -> float:
    """[S(t) mu](x', 0)."""
    x = np.zeros(mu.N) if xprime is None else np.append(np.asarray(xprime, dtype=float), 0.0)
    return float(semigroup_apply(mu, x, t))


def solve_forcing(g, p: float, controls: SolverControls = SolverControls()) -> SolveOutcome:
    """Scalar solve for an arbitrary forcing ``g(t)`` (callable or :class:`Forcing`).

    ``p = 1`` is accepted here so the linear Abel equation can serve as a check.
    """
    forcing = g if isinstance(g, Forcing) else FunctionForcing(g)
    return _march(forcing, p, controls, linear_ok=True)


def solve_scalar(
    mu: MeasureSpec, p: float, controls: SolverControls = SolverControls(), refine_check: bool = True
) -> SolveOutcome:
    """Solve the N = 1 boundary equation for initial data ``mu``.

    When the startup integral diverges (forcing too singular at t = 0) and
    ``refine_check`` is set, the run is repeated on two halved meshes; blow-up
    times collapsing towards 0 are reported as instant blow-up evidence.
    """
    if mu.N != 1:
        raise ConfigurationError("solve_scalar needs N = 1; use solve_grid")
    if mu.is_zero():
        return _zero_outcome(controls, None)
    run = lambda c: _march(MeasureForcing(mu), p, c)
    out = run(controls)
    if refine_check and out.diagnostics.get("startup_divergent"):
        return _refinement_study(run, out, controls)
    return _halving(run, out, controls)


def _halving(run, out: SolveOutcome, controls: SolverControls) -> SolveOutcome:
    """Widen T_err by the change of T_est on the halved mesh (safety factor 2)."""
    if not (controls.halving_check and out.status == BLOW_UP):
        return out
    half = run(replace(controls.refined(0.5), halving_check=False))
    fit_err = out.T_err
    if half.status == BLOW_UP:
        dT = abs(half.T_est - out.T_est)
        out.T_err = fit_err + 2.0 * dT + half.T_err
    else:
        dT = math.inf
        out.T_err = controls.horizon
    out.diagnostics["T_half"] = half.T_est
    out.diagnostics["fit_err"] = fit_err
    out.diagnostics["halving_dT"] = dT
    return out


def _refinement_study(run, base: SolveOutcome, controls: SolverControls) -> SolveOutcome:
    outs = [base] + [run(replace(controls.refined(f), halving_check=False)) for f in (0.5, 0.25)]
    Ts = [o.T_est if o.blew_up else math.inf for o in outs]
    finest = outs[-1]
    finest.diagnostics["refinement_T"] = Ts
    if all(math.isfinite(T) for T in Ts) and Ts[0] / Ts[1] >= 1.9 and Ts[1] / Ts[2] >= 1.9:
        finest.status = INSTANT
    return finest


def _zero_outcome(controls, grid):
    times = np.array([controls.horizon])
    M = 1 if grid is None else grid.M ** (grid.N - 1)
    vals = np.zeros(1) if grid is None else np.zeros((1, M))
    meta = {"p": None, "t1": controls.horizon, "q": [Q_MIN], "zero": True}
    if grid is not None:
        meta["grid"] = {"N": grid.N, "R": grid.R, "M": grid.M}
    trace = BoundaryTrace(times=np.array([0.0, controls.horizon]), values=np.zeros((2,) + vals.shape[1:]), sup_values=np.zeros(2), meta=meta)
    return SolveOutcome(status=REACHED, trace=trace, diagnostics={"stop_reason": "zero_data"}, controls=controls)


def solve_grid(mu: MeasureSpec, p: float, controls: SolverControls = SolverControls(), refine_check: bool = False) -> SolveOutcome:
    """Solve on a periodic lateral grid for N in {2, 3}."""
    if mu.N not in (2, 3):
        raise ConfigurationError("solve_grid needs N = 2 or 3")
    grid = default_grid(mu, controls)
    if mu.is_zero():
        return _zero_outcome(controls, grid)
    forcing = MeasureForcing(mu, grid.points())
    run = lambda c: _march(forcing, p, c, grid)
    out = run(controls)
    if refine_check and out.diagnostics.get("startup_divergent"):
        return _refinement_study(run, out, controls)
    return _halving(run, out, controls)


def solve(mu: MeasureSpec, p: float, controls: SolverControls = SolverControls(), refine_check: bool = True) -> SolveOutcome:
    if not p > 1:
        raise DomainError("exponent p must be > 1")
    if mu.N == 1:
        return solve_scalar(mu, p, controls, refine_check)
    return solve_grid(mu, p, controls, refine_check)


# --------------------------------------------------------------------------
# blow-up time


def estimate_blowup_time(trace: BoundaryTrace, p: float) -> tuple[float, float]:
    """Extrapolate the blow-up time from the last decade of growth.

    Fits sup_w^{-2(p-1)} linearly in t; the zero crossing is the estimate.  The
    error combines the intercept standard error, the misfit of the model and
    the last step size.
    """
    sup = np.asarray(trace.sup_values, dtype=float)
    t = np.asarray(trace.times, dtype=float)
    if len(sup) < 4 or not np.all(np.isfinite(sup)) or sup[-1] < 10.0 * np.median(sup) or sup[-1] <= 0:
        raise NotBlownUpError("trace does not exhibit blow-up growth")
    sel = np.nonzero(sup >= sup[-1] / 10.0)[0]
    if len(sel) < 4:
        sel = np.arange(len(sup) - 4, len(sup))
    x = t[sel]
    y = sup[sel] ** (-2.0 * (p - 1.0))
    x0 = x[-1]
    A = np.vstack([x - x0, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, icpt = coef
    last_step = float(t[-1] - t[-2])
    if not slope < 0:
        return float(t[-1] + 0.5 * last_step), 0.5 * last_step + float(t[-1] - x[0])
    T = x0 - icpt / slope
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    # delta method for T = x0 - icpt / slope
    grad = np.array([icpt / slope**2, -1.0 / slope])
    se = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    # model misfit: compare against the extrapolation from the last two points only
    y2 = y[-2:]
    x2 = x[-2:]
    s_loc = (y2[1] - y2[0]) / (x2[1] - x2[0]) if x2[1] > x2[0] else slope
    T_loc = x2[1] - y2[1] / s_loc if s_loc < 0 else T
    T = max(T, float(t[-1]))
    err = se + abs(T - T_loc) + last_step
    return float(T), float(err)


# --------------------------------------------------------------------------
# interior values


def interior_eval(outcome: SolveOutcome, mu: MeasureSpec, x, t: float) -> float:
    """u(x, t) from the boundary trace through the representation formula."""
    trace = outcome.trace
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x[-1] < 0:
        raise DomainError("x must lie in D")
    if trace.meta.get("zero"):
        return 0.0
    times = trace.times
    if not (0 < t <= times[-1] * (1 + 1e-14)):
        raise DomainError(f"t={t} outside the computed trace (0, {times[-1]}]")
    if t < times[0]:
        raise DomainError("t precedes the first computed node")
    p = trace.meta["p"]
    q = np.asarray(trace.meta["q"], dtype=float)
    t1 = trace.meta["t1"]
    f = trace.values**p
    k = int(np.searchsorted(times, t, side="right"))
    nodes = times[:k]
    fk = f[:k]
    if nodes[-1] < t:
        lam = (t - nodes[-1]) / (times[k] - nodes[-1])
        fk = np.concatenate([fk, (1 - lam) * f[k - 1 : k] + lam * f[k : k + 1]])
        nodes = np.append(nodes, t)
    omega = node_weights(t, nodes, weight_exponent(q)) / SQRT_PI
    on = q < Q_DIV
    s0 = np.where(on, startup_moment(t, t1, np.where(on, q, 0.0)), 0.0) / SQRT_PI
    lag = t - nodes
    xn = x[-1]
    with np.errstate(divide="ignore", over="ignore"):
        normal = np.where(lag > 0, np.exp(-xn * xn / (4.0 * np.where(lag > 0, lag, 1.0))), 1.0 if xn == 0 else 0.0)
    val = float(semigroup_apply(mu, x, t))
    gridm = trace.meta.get("grid")
    if gridm is None:
        val += float(np.sum(omega * normal * fk)) + float(np.sum(s0)) * float(normal[0]) * float(np.ravel(fk[0])[0])
        return val
    grid = LateralGrid(gridm["N"], gridm["R"], gridm["M"])
    kf = 2.0 * math.pi * np.fft.fftfreq(grid.M, d=grid.h)
    k2 = sum(m * m for m in np.meshgrid(*([kf] * (grid.N - 1)), indexing="ij"))
    acc = np.zeros(grid.shape, dtype=complex)
    for i in range(len(nodes)):
        coef = omega[i] * normal[i]
        if i == 0:
            coef = coef + s0 * normal[0] if np.ndim(s0) == 0 else coef
        if np.all(coef == 0):
            continue
        fi = fk[i] if np.ndim(coef) == 0 else fk[i] * (coef if i else 1.0)
        Fi = np.fft.fftn(np.asarray(fi).reshape(grid.shape))
        acc += (coef if np.ndim(coef) == 0 else 1.0) * np.exp(-k2 * lag[i]) * Fi
    if np.ndim(s0) != 0 and np.any(s0 != 0):
        Fi = np.fft.fftn((s0 * fk[0]).reshape(grid.shape))
        acc += normal[0] * np.exp(-k2 * lag[0]) * Fi
    return val + grid.eval_series(acc, x[:-1])


# --------------------------------------------------------------------------
# monotone Picard iteration


@dataclass
class PicardIterate:
    n_cap: float
    k: int
    trace: BoundaryTrace


def _discrete_operator(times, q, t1, p, grid=None):
    """Dense lower-triangular matrix of the discretized integral operator (scalar)."""
    n = len(times)
    Wm = np.zeros((n, n))
    on = q < Q_DIV
    for j in range(n):
        omega = node_weights(times[j], times[: j + 1], weight_exponent(q)) / SQRT_PI
        Wm[j, : j + 1] = omega
        if on:
            Wm[j, 0] += startup_moment(times[j], t1, q) / SQRT_PI
    return Wm


def picard_minimal(
    mu: MeasureSpec,
    p: float,
    horizon: float,
    n_caps=(1.0, 2.0, 4.0, 8.0, 1e6),
    k_max: int = 200,
    controls: Optional[SolverControls] = None,
    steps: int = 400,
    tol: float = 1e-13,
) -> list:
    """Capped monotone iteration u_{n,k} = S(t)mu + I[min(u_{n,k-1}, n)^p] on a fixed mesh.

    The mesh is graded over the first panel and uniform afterwards with
    ``steps`` panels; it is independent of the adaptive marching mesh.  Every
    iterate is recorded.  Raises :class:`ConsistencyError` if an iterate fails
    to be monotone in k or in n.
    """
    if mu.N != 1:
        raise ConfigurationError("picard_minimal is implemented for N = 1")
    ctl = controls or SolverControls()
    m = ctl.startup_nodes
    h = horizon / steps
    forcing = MeasureForcing(mu)
    q = float(forcing.startup_exponent(h / m**2, p)[0]) if not mu.is_zero() else Q_MIN
    if q > 0:
        ramp = [h * ctl.startup_floor]
        while ramp[-1] * ctl.startup_ratio < h:
            ramp.append(ramp[-1] * (1.0 + ctl.startup_ratio))
        head = np.array(ramp)
        times = np.concatenate([head, head[-1] + h * np.arange(1, int(np.ceil((horizon - head[-1]) / h)) + 1)])
        times[-1] = horizon
        q = float(forcing.startup_exponent(times[0], p)[0])
    else:
        times = np.concatenate([h * (np.arange(1, m + 1) / m) ** 2, h * np.arange(2, steps + 1)])
    t1 = times[0]
    g = np.array([float(forcing(t)[0]) for t in times])
    Wm = _discrete_operator(times, q, t1, p)
    meta = {"p": p, "t1": t1, "q": [q]}
    mk = lambda u: BoundaryTrace(times=times, values=u.copy(), sup_values=u.copy(), meta=dict(meta))
    out = []
    prev_cap_final = None
    slack = 1e-12
    for n_cap in sorted(n_caps):
        u = g.copy()
        out.append(PicardIterate(n_cap, 1, mk(u)))
        finals = [u]
        for k in range(2, k_max + 1):
            u_new = g + Wm @ np.minimum(u, n_cap) ** p
            if np.any(u_new < u - slack * (1.0 + np.abs(u))):
                raise ConsistencyError(f"iterate (n={n_cap}, k={k}) decreased")
            out.append(PicardIterate(n_cap, k, mk(u_new)))
            done = np.max(np.abs(u_new - u)) <= tol * max(np.max(np.abs(u_new)), 1e-300)
            u = u_new
            finals.append(u)
            if done:
                break
        if prev_cap_final is not None:
            for k, uk in enumerate(finals):
                ref = prev_cap_final[min(k, len(prev_cap_final) - 1)]
                if np.any(uk < ref - slack * (1.0 + np.abs(ref))):
                    raise ConsistencyError(f"iterates not monotone in the cap at n={n_cap}, k={k + 1}")
        prev_cap_final = finals
    return out


def interp_trace(trace: BoundaryTrace, t) -> np.ndarray:
    """Linear interpolation of a scalar trace."""
    return np.interp(t, trace.times, trace.values)
