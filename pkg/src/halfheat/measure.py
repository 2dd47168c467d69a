"""Structured initial data on the closed half-space D = {x_N >= 0}.

A :class:`MeasureSpec` is ``kappa * (sum of atoms + sum of densities)``.  The
density kinds are the parametric profiles used in the life-span experiments
plus a tabulated grid.  Every density may be restricted to a horizontal slab
through the levels ``above_L`` (keep ``y_N >= sqrt(above_L)``) and ``below_L``
(keep ``y_N < sqrt(below_L)``), which is how strip decompositions are encoded.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigurationError, DomainError, MeasureTypeError

INF = float("inf")


def ball_volume(N: int, sigma: float) -> float:
    """Lebesgue measure of the full N-ball of radius sigma."""
    unit = _UNIT_BALL.get(N)
    if unit is None:
        unit = math.pi ** (N / 2) / math.gamma(N / 2 + 1)
    return unit * sigma**N


_UNIT_BALL = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


def p_star(N: int) -> float:
    """Critical exponent 1 + 1/N separating the three solvability regimes."""
    return 1.0 + 1.0 / N


# --------------------------------------------------------------------------
# density components


@dataclass(frozen=True, kw_only=True)
class DensityComponent:
    """Base class; subclasses define ``kind``, ``profile`` and ``native_window``."""

    coef: float = 1.0
    above_L: float = 0.0
    below_L: Optional[float] = None

    kind = "abstract"
    lateral_uniform = False  # depends on y_N only
    radial = False  # depends on |y| only

    def native_window(self) -> tuple[float, float]:
        return 0.0, INF

    def window(self) -> tuple[float, float]:
        lo, hi = self.native_window()
        lo = max(lo, math.sqrt(self.above_L))
        if self.below_L is not None:
            hi = min(hi, math.sqrt(self.below_L))
        return lo, hi

    def is_empty(self) -> bool:
        lo, hi = self.window()
        return hi <= lo or self.coef == 0.0

    def profile(self, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, Y) -> np.ndarray:
        """Density at points ``Y`` of shape (..., N), zero off the support window."""
        Y = np.asarray(Y, dtype=float)
        z = Y[..., -1]
        lo, hi = self.window()
        inside = (z >= lo) & (z < hi)
        out = np.zeros(z.shape)
        if np.any(inside):
            out[inside] = self.coef * self.profile(Y[inside])
        return out

    def _scalar_profile(self, z: float) -> float:
        return float(self.profile(np.array([[z]]))[0])

    def normal_scalar(self) -> Callable[[float], float]:
        """Fast float -> float density along the normal axis (lateral coordinates zero)."""
        lo, hi = self.window()
        coef, prof = self.coef, self._scalar_profile

        def f(z: float) -> float:
            return coef * prof(z) if lo <= z < hi else 0.0

        return f

    def singular_points(self) -> list[float]:
        """Normal coordinates where the profile is non-smooth (quadrature breakpoints)."""
        lo, hi = self.window()
        return [v for v in (lo, hi) if math.isfinite(v)]

    def nonincreasing_in_normal(self) -> Optional[bool]:
        """Whether d/dy_N of the density is <= 0 everywhere, None if undecidable."""
        return None

    def _params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update(self._params())
        if self.coef != 1.0:
            d["coef"] = self.coef
        support = []
        if self.above_L > 0.0:
            support.append({"set": "D_L", "L": self.above_L})
        if self.below_L is not None:
            support.append({"set": "D_L'", "L": self.below_L})
        if support:
            d["support"] = support
        return d

    def check(self, N: int) -> None:
        if not (self.coef >= 0.0 and math.isfinite(self.coef)):
            raise ConfigurationError(f"{self.kind}: coef must be finite and >= 0")
        if self.above_L < 0.0 or (self.below_L is not None and self.below_L < 0.0):
            raise ConfigurationError(f"{self.kind}: strip levels must be >= 0")


@dataclass(frozen=True)
class PowerLog(DensityComponent):
    """|y|^A [log(e + 1/|y|)]^(-B) on the half ball B_+(0, r0)."""

    A: float = 0.0
    B: float = 0.0
    r0: float = 1.0

    kind = "power_log"
    radial = True

    def native_window(self):
        return 0.0, self.r0

    def profile(self, Y):
        r = np.linalg.norm(Y, axis=-1)
        out = np.zeros(r.shape)
        m = (r > 0) & (r < self.r0)
        rm = r[m]
        out[m] = rm**self.A * np.log(math.e + 1.0 / rm) ** (-self.B)
        if self.A < 0 or (self.A == 0 and self.B < 0):
            out[r == 0] = INF
        elif self.A == 0:
            out[r == 0] = 1.0 if self.B == 0 else 0.0
        return out

    def _scalar_profile(self, z):
        r = abs(z)
        if 0.0 < r < self.r0:
            lr = math.log(r)
            return math.exp(self.A * lr - self.B * math.log(math.log1p(math.e * r) - lr))
        return float(self.profile(np.array([[z]]))[0])

    def singular_points(self):
        return sorted(set([0.0] + super().singular_points()))

    def _params(self):
        return {"A": self.A, "B": self.B, "r0": self.r0}

    def check(self, N):
        super().check(N)
        if not (0.0 < self.r0 <= 1.0):
            raise ConfigurationError("power_log: cutoff radius r0 must lie in (0, 1]")
        if not (self.A > -N or (self.A == -N and self.B > 1)):
            raise ConfigurationError(
                f"power_log: A={self.A}, B={self.B} is not locally integrable in N={N}"
            )


@dataclass(frozen=True)
class GaussianGrowth(DensityComponent):
    """exp(lam * y_N^2), laterally uniform."""

    lam: float = 1.0

    kind = "gaussian_growth"
    lateral_uniform = True

    def profile(self, Y):
        return np.exp(self.lam * Y[..., -1] ** 2)

    def _scalar_profile(self, z):
        return math.exp(self.lam * z * z)

    def nonincreasing_in_normal(self):
        return False

    def _params(self):
        return {"lam": self.lam}

    def check(self, N):
        super().check(N)
        if not self.lam > 0:
            raise ConfigurationError("gaussian_growth: lam must be > 0")


@dataclass(frozen=True)
class BoundedDecay(DensityComponent):
    """(1 + |y|)^(-A)."""

    A: float = 1.0

    kind = "bounded_decay"
    radial = True

    def profile(self, Y):
        return (1.0 + np.linalg.norm(Y, axis=-1)) ** (-self.A)

    def _scalar_profile(self, z):
        return (1.0 + abs(z)) ** (-self.A)

    def nonincreasing_in_normal(self):
        return True

    def _params(self):
        return {"A": self.A}

    def check(self, N):
        super().check(N)
        if not self.A > 0:
            raise ConfigurationError("bounded_decay: A must be > 0")


@dataclass(frozen=True)
class ConstantStrip(DensityComponent):
    """Value c on the strip 0 <= y_N < h."""

    h: float = 1.0
    c: float = 1.0

    kind = "constant_strip"
    lateral_uniform = True

    def native_window(self):
        return 0.0, self.h

    def profile(self, Y):
        return np.full(Y.shape[:-1], self.c)

    def _scalar_profile(self, z):
        return self.c

    def nonincreasing_in_normal(self):
        return True

    def _params(self):
        return {"h": self.h, "c": self.c}

    def check(self, N):
        super().check(N)
        if not (self.h > 0 and self.c >= 0):
            raise ConfigurationError("constant_strip: need h > 0 and c >= 0")


@dataclass(frozen=True, eq=False)
class TabulatedGrid(DensityComponent):
    """Multilinear interpolation of nonnegative samples on an axis-aligned grid."""

    axes: tuple = ()
    values: tuple = ()

    kind = "tabulated_grid"

    def __post_init__(self):
        axes = tuple(tuple(float(v) for v in ax) for ax in self.axes)
        object.__setattr__(self, "axes", axes)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "_array", vals)

    def __eq__(self, other):
        return (
            isinstance(other, TabulatedGrid)
            and self.axes == other.axes
            and np.array_equal(self._array, other._array)
            and (self.coef, self.above_L, self.below_L)
            == (other.coef, other.above_L, other.below_L)
        )

    def __hash__(self):
        return hash((self.axes, self._array.tobytes(), self.coef))

    def native_window(self):
        return self.axes[-1][0], self.axes[-1][-1]

    def profile(self, Y):
        interp = RegularGridInterpolator(
            [np.asarray(a) for a in self.axes], self._array, bounds_error=False, fill_value=0.0
        )
        return np.maximum(interp(Y.reshape(-1, Y.shape[-1])).reshape(Y.shape[:-1]), 0.0)

    def singular_points(self):
        return sorted(set(self.axes[-1]) | set(super().singular_points()))

    def _params(self):
        return {"axes": [list(a) for a in self.axes], "values": self._array.tolist()}

    def check(self, N):
        super().check(N)
        if len(self.axes) != N:
            raise ConfigurationError("tabulated_grid: need one axis per dimension")
        shape = tuple(len(a) for a in self.axes)
        if self._array.shape != shape:
            raise ConfigurationError(f"tabulated_grid: values shape {self._array.shape} != {shape}")
        for a in self.axes:
            if len(a) < 2 or np.any(np.diff(a) <= 0):
                raise ConfigurationError("tabulated_grid: axes must be strictly increasing")
        if self.axes[-1][0] < 0:
            raise ConfigurationError("tabulated_grid: normal axis must lie in y_N >= 0")
        if np.any(self._array < 0) or not np.all(np.isfinite(self._array)):
            raise ConfigurationError("tabulated_grid: samples must be finite and >= 0")


DENSITY_KINDS = {
    cls.kind: cls for cls in (PowerLog, GaussianGrowth, BoundedDecay, ConstantStrip, TabulatedGrid)
}


# --------------------------------------------------------------------------
# measure


@dataclass(frozen=True)
class Atom:
    x: tuple
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "mass", float(self.mass))


@dataclass(frozen=True)
class MeasureSpec:
    N: int
    kappa: float = 1.0
    atoms: tuple = ()
    densities: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "densities", tuple(self.densities))
        if self.N not in (1, 2, 3):
            raise ConfigurationError(f"dimension N={self.N} not supported (1, 2 or 3)")
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise DomainError("kappa must be finite and >= 0")
        for a in self.atoms:
            if len(a.x) != self.N:
                raise ConfigurationError(f"atom {a.x} does not have {self.N} coordinates")
            if a.x[-1] < 0:
                raise ConfigurationError(f"atom {a.x} lies outside the half-space")
            if not (a.mass >= 0 and math.isfinite(a.mass)):
                raise ConfigurationError("atom masses must be finite and >= 0")
        for d in self.densities:
            if not isinstance(d, DensityComponent):
                raise ConfigurationError(f"unknown density component {d!r}")
            d.check(self.N)

    # -- convenience -------------------------------------------------------
    @classmethod
    def zero(cls, N: int) -> "MeasureSpec":
        return cls(N=N, kappa=0.0)

    @classmethod
    def atom(cls, x: Sequence[float], mass: float = 1.0, kappa: float = 1.0) -> "MeasureSpec":
        x = tuple(np.atleast_1d(np.asarray(x, dtype=float)))
        return cls(N=len(x), kappa=kappa, atoms=(Atom(x, mass),))

    @classmethod
    def density(cls, N: int, component: DensityComponent, kappa: float = 1.0) -> "MeasureSpec":
        return cls(N=N, kappa=kappa, densities=(component,))

    def is_zero(self) -> bool:
        return self.kappa == 0.0 or (
            all(a.mass == 0 for a in self.atoms) and all(d.is_empty() for d in self.densities)
        )

    def has_atoms(self) -> bool:
        return any(a.mass > 0 for a in self.atoms)

    def live_atoms(self):
        return [a for a in self.atoms if a.mass > 0]

    def live_densities(self):
        return [d for d in self.densities if not d.is_empty()]

    def density_value(self, Y) -> np.ndarray:
        """kappa * (sum of density components) at points Y of shape (..., N)."""
        Y = np.asarray(Y, dtype=float)
        out = np.zeros(Y.shape[:-1])
        for d in self.live_densities():
            out = out + d.value(Y)
        return self.kappa * out

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "N": self.N,
            "atoms": [{"x": list(a.x), "mass": a.mass} for a in self.atoms],
            "densities": [d.to_dict() for d in self.densities],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "MeasureSpec":
        if not isinstance(doc, dict):
            raise ConfigurationError("measure document must be a JSON object")
        try:
            N = int(doc["N"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError("measure document needs an integer 'N'") from exc
        unknown = set(doc) - {"kappa", "N", "atoms", "densities"}
        if unknown:
            raise ConfigurationError(f"unknown measure fields {sorted(unknown)}")
        atoms = []
        for a in doc.get("atoms", []):
            try:
                atoms.append(Atom(a["x"], a["mass"]))
            except (KeyError, TypeError) as exc:
                raise ConfigurationError(f"malformed atom {a!r}") from exc
        dens = [density_from_dict(d) for d in doc.get("densities", [])]
        return cls(N=N, kappa=float(doc.get("kappa", 1.0)), atoms=tuple(atoms), densities=tuple(dens))

    @classmethod
    def from_json(cls, text: str) -> "MeasureSpec":
        return cls.from_dict(json.loads(text))


def density_from_dict(doc: dict) -> DensityComponent:
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in DENSITY_KINDS:
        raise ConfigurationError(f"unknown density kind {kind!r}")
    kw = {}
    for s in doc.pop("support", []):
        if s.get("set") == "D_L":
            kw["above_L"] = max(kw.get("above_L", 0.0), float(s["L"]))
        elif s.get("set") == "D_L'":
            kw["below_L"] = min(kw.get("below_L", INF), float(s["L"]))
        else:
            raise ConfigurationError(f"unknown support restriction {s!r}")
    if "coef" in doc:
        kw["coef"] = float(doc.pop("coef"))
    cls = DENSITY_KINDS[kind]
    names = {f for f in cls.__dataclass_fields__} - {"coef", "above_L", "below_L"}
    extra = set(doc) - names
    if extra:
        raise ConfigurationError(f"{kind}: unknown fields {sorted(extra)}")
    if kind == "tabulated_grid":
        return cls(axes=tuple(tuple(a) for a in doc["axes"]), values=doc["values"], **kw)
    return cls(**{k: float(v) for k, v in doc.items()}, **kw)


# --------------------------------------------------------------------------
# algebra


def scale(mu: MeasureSpec, factor: float) -> MeasureSpec:
    if not factor >= 0:
        raise DomainError(f"scale factor must be >= 0, got {factor}")
    return replace(mu, kappa=mu.kappa * factor)


def split_strip(mu: MeasureSpec, T: float) -> tuple[MeasureSpec, MeasureSpec]:
    """Split into the parts on D_T = {y_N >= sqrt(T)} and D_T' = {y_N < sqrt(T)}.

    Atoms on the interface go to the upper part.
    """
    if not T > 0:
        raise DomainError("split level T must be > 0")
    level = math.sqrt(T)
    upper_atoms = tuple(a for a in mu.atoms if a.x[-1] >= level)
    lower_atoms = tuple(a for a in mu.atoms if a.x[-1] < level)
    upper, lower = [], []
    for d in mu.densities:
        du = replace(d, above_L=max(d.above_L, T))
        dl = replace(d, below_L=T if d.below_L is None else min(d.below_L, T))
        if not du.is_empty():
            upper.append(du)
        if not dl.is_empty():
            lower.append(dl)
    return (
        replace(mu, atoms=upper_atoms, densities=tuple(upper)),
        replace(mu, atoms=lower_atoms, densities=tuple(lower)),
    )


def parabolic_rescale(mu: MeasureSpec, theta: float, p: float) -> MeasureSpec:
    """Data whose solution is theta^(1/(2(p-1))) u(sqrt(theta) x, theta t).

    The life span of the result is T(mu) / theta.  Supported for atoms,
    constant strips, gaussian_growth, tabulated grids and power_log with B = 0.
    """
    if not theta > 0:
        raise DomainError("theta must be > 0")
    g = 1.0 / (2.0 * (p - 1.0))
    s = math.sqrt(theta)
    amp = theta**g
    atoms = tuple(Atom(tuple(v / s for v in a.x), a.mass * theta ** (g - mu.N / 2)) for a in mu.atoms)
    dens = []
    for d in mu.densities:
        levels = dict(above_L=d.above_L / theta, below_L=None if d.below_L is None else d.below_L / theta)
        if isinstance(d, ConstantStrip):
            dens.append(ConstantStrip(h=d.h / s, c=d.c, coef=d.coef * amp, **levels))
        elif isinstance(d, GaussianGrowth):
            dens.append(GaussianGrowth(lam=d.lam * theta, coef=d.coef * amp, **levels))
        elif isinstance(d, TabulatedGrid):
            axes = tuple(tuple(v / s for v in ax) for ax in d.axes)
            dens.append(TabulatedGrid(axes=axes, values=d._array, coef=d.coef * amp, **levels))
        elif isinstance(d, PowerLog) and d.B == 0 and d.r0 / s <= 1.0:
            dens.append(PowerLog(A=d.A, B=0.0, r0=d.r0 / s, coef=d.coef * amp * s**d.A, **levels))
        else:
            raise ConfigurationError(f"parabolic rescaling not closed for {d.kind}")
    return replace(mu, atoms=atoms, densities=tuple(dens))


# --------------------------------------------------------------------------
# ball queries


@dataclass(frozen=True)
class BallQuery:
    center: tuple
    sigma: float
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(np.atleast_1d(np.asarray(self.center, dtype=float))))
        if not self.sigma > 0:
            raise DomainError("ball radius must be > 0")
        if self.lam < 0:
            raise DomainError("weight lam must be >= 0")


_QUAD_KW = dict(epsabs=1e-14, epsrel=1e-10, limit=200)


def _erf_diff(lo, hi):
    """erf(hi) - erf(lo) without cancellation in the tails."""
    if lo >= 0:
        return special.erfc(lo) - special.erfc(hi)
    if hi <= 0:
        return special.erfc(-hi) - special.erfc(-lo)
    return special.erf(hi) - special.erf(lo)


def _lateral_section(N: int, r2: float) -> float:
    """(N-1)-volume of the lateral section of a ball at squared half-chord r2."""
    if r2 <= 0:
        return 0.0
    if N == 1:
        return 1.0
    if N == 2:
        return 2.0 * math.sqrt(r2)
    return math.pi * r2


def _normal_range(center, sigma, window):
    lo = max(window[0], center[-1] - sigma, 0.0)
    hi = min(window[1], center[-1] + sigma)
    return lo, hi


def _quad(f, a, b, points=(), sing=()):
    """Piecewise quad; panels ending at a point of ``sing`` use z = end +- L e^{-u}."""
    pts = sorted(v for v in set(points) | set(sing) if a < v < b)
    sing = set(sing)
    total = 0.0
    edges = [a] + pts + [b]
    for lo, hi in zip(edges[:-1], edges[1:]):
        L = hi - lo
        if lo in sing:
            g = lambda u, lo=lo, L=L: _tail(f, lo, L, u)
        elif hi in sing:
            g = lambda u, hi=hi, L=L: _tail(f, hi, -L, u)
        else:
            val, _ = integrate.quad(f, lo, hi, **_QUAD_KW)
            total += val
            continue
        val, _ = integrate.quad(g, 0.0, _U_MAX, **_QUAD_KW)
        total += val + _power_tail(g, _U_MAX)
    return total


def _power_tail(g, U):
    """int_U^inf g for g ~ c u^{-s} (s from g(0.9 U), g(U)); inf when s <= 1."""
    g1, g2 = g(0.9 * U), g(U)
    if g2 <= 0.0 or g1 <= 0.0:
        return 0.0
    s = math.log(g1 / g2) / -math.log(0.9)
    return g2 * U / (s - 1.0) if s > 1.0 else math.inf


_U_MAX = 700.0  # z - end >= L e^{-700}; keeps powers of z finite


def _tail(f, end, L, u):
    e = L * math.exp(-u)
    z = end + e
    return 0.0 if z == end else f(z) * abs(e)


def _component_ball_integral(d: DensityComponent, N, center, sigma, lam) -> float:
    """Integral of d(y) exp(-lam y_N^2) over B(center, sigma) intersected with D."""
    lo, hi = _normal_range(center, sigma, d.window())
    if hi <= lo:
        return 0.0
    cN = center[-1]
    weight = (lambda z: math.exp(-lam * z * z)) if lam > 0 else (lambda z: 1.0)
    if N == 1 and isinstance(d, ConstantStrip):
        if lam == 0:
            return d.coef * d.c * (hi - lo)
        r = math.sqrt(lam)
        return d.coef * d.c * 0.5 * math.sqrt(math.pi / lam) * _erf_diff(r * lo, r * hi)
    if d.lateral_uniform or N == 1:
        pad = [0.0] * (N - 1)

        def f(z):
            v = float(d.value(np.array([pad + [z]]))[0]) * weight(z)
            return v * _lateral_section(N, sigma**2 - (z - cN) ** 2)

        return _quad(f, lo, hi, points=d.singular_points() + [cN])
    # radial or tabulated component in N >= 2: nested quadrature over the ball
    cl = center[:-1]

    def section(z):
        r2 = sigma**2 - (z - cN) ** 2
        if r2 <= 0:
            return 0.0
        rr = math.sqrt(r2)
        if N == 2:
            g = lambda y1: float(d.value(np.array([[y1, z]]))[0])
            pts = [0.0] if d.radial else list(d.axes[0]) if isinstance(d, TabulatedGrid) else []
            return _quad(g, cl[0] - rr, cl[0] + rr, points=pts)
        # N == 3: polar coordinates around the lateral center
        def ring(rho):
            th = np.linspace(0.0, 2 * math.pi, 129)[:-1]
            pts = np.stack([cl[0] + rho * np.cos(th), cl[1] + rho * np.sin(th), np.full_like(th, z)], -1)
            return rho * float(np.mean(d.value(pts))) * 2 * math.pi

        return _quad(ring, 0.0, rr, points=[math.hypot(*cl)])

    f = lambda z: section(z) * weight(z)
    return _quad(f, lo, hi, points=d.singular_points() + [cN])


def _atoms_in_ball(mu: MeasureSpec, q: BallQuery) -> float:
    c = np.asarray(q.center)
    total = 0.0
    for a in mu.live_atoms():
        y = np.asarray(a.x)
        if np.linalg.norm(y - c) < q.sigma:
            total += a.mass * math.exp(-q.lam * y[-1] ** 2)
    return total


def weighted_ball_integral(mu: MeasureSpec, q: BallQuery) -> float:
    """Integral of exp(-lam y_N^2) d mu over B(center, sigma) (mu lives on D)."""
    if len(q.center) != mu.N:
        raise DomainError("ball center dimension mismatch")
    if mu.kappa == 0.0:
        return 0.0
    total = _atoms_in_ball(mu, q)
    for d in mu.live_densities():
        total += _component_ball_integral(d, mu.N, q.center, q.sigma, q.lam)
    return mu.kappa * total


def ball_mass(mu: MeasureSpec, q: BallQuery) -> float:
    """mu(B(center, sigma)); the query weight is ignored."""
    return weighted_ball_integral(mu, BallQuery(q.center, q.sigma, 0.0))


def weighted_ball_average(mu: MeasureSpec, q: BallQuery) -> float:
    """Weighted integral divided by the volume of the full N-ball."""
    return weighted_ball_integral(mu, q) / ball_volume(mu.N, q.sigma)


def ball_integral_of(mu: MeasureSpec, center, sigma: float, transform: Callable[[np.ndarray], np.ndarray]) -> float:
    """Integral of transform(density(y)) over B(center, sigma) intersected with D.

    ``transform`` must map 0 to 0; the measure must be atom-free.
    """
    if mu.has_atoms() and mu.kappa > 0:
        raise MeasureTypeError("operation needs function-type data; measure carries atoms")
    center = tuple(np.atleast_1d(np.asarray(center, dtype=float)))
    N = mu.N
    dens = mu.live_densities()
    if not dens or mu.kappa == 0:
        return 0.0
    lo = min(d.window()[0] for d in dens)
    hi = max(d.window()[1] for d in dens)
    lo, hi = _normal_range(center, sigma, (lo, hi))
    if hi <= lo:
        return 0.0
    sing = sorted({v for d in dens for v in d.singular_points()})
    pts = sorted(set(sing) | {center[-1]})
    val = lambda Y: float(transform(mu.density_value(np.asarray(Y, dtype=float)[None, :]))[0])
    cN = center[-1]
    if N == 1:
        parts = [d.normal_scalar() for d in dens]
        k = mu.kappa
        fz = lambda z: float(transform(k * sum(g(z) for g in parts)))
        return _quad(fz, lo, hi, points=pts, sing=[v for v in sing if _is_singular(dens, v)])
    if all(d.lateral_uniform for d in dens):
        f = lambda z: val([0.0] * (N - 1) + [z]) * _lateral_section(N, sigma**2 - (z - cN) ** 2)
        return _quad(f, lo, hi, points=pts)
    cl = center[:-1]

    def section(z):
        r2 = sigma**2 - (z - cN) ** 2
        if r2 <= 0:
            return 0.0
        rr = math.sqrt(r2)
        if N == 2:
            return _quad(lambda y1: val([y1, z]), cl[0] - rr, cl[0] + rr, points=[0.0])

        def ring(rho):
            th = np.linspace(0.0, 2 * math.pi, 129)[:-1]
            P = np.stack([cl[0] + rho * np.cos(th), cl[1] + rho * np.sin(th), np.full_like(th, z)], -1)
            return rho * float(np.mean(transform(mu.density_value(P)))) * 2 * math.pi

        return _quad(ring, 0.0, rr, points=[math.hypot(*cl)])

    return _quad(section, lo, hi, points=pts)


def _is_singular(dens, z) -> bool:
    """True when some component is unbounded at normal coordinate z."""
    for d in dens:
        if isinstance(d, PowerLog) and z == 0.0 and (d.A < 0 or (d.A == 0 and d.B < 0)):
            return True
    return False


def phi_beta(s, beta: float):
    """Orlicz gauge s [log(e + s)]^beta."""
    s = np.asarray(s, dtype=float)
    return s * np.log(math.e + s) ** beta


def phi_beta_inv(y, beta: float):
    """Inverse of :func:`phi_beta` by safeguarded Newton iteration (1e-12 relative)."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty_like(y_arr)
    for i, yi in enumerate(y_arr):
        out[i] = _phi_inv_scalar(float(yi), beta)
    return out if np.ndim(y) else float(out[0])


def _phi_inv_scalar(y: float, beta: float) -> float:
    if y < 0:
        raise DomainError("phi_beta_inv needs y >= 0")
    if y == 0:
        return 0.0
    if math.isinf(y):
        return INF
    lo, hi = 0.0, max(y, 1.0)
    while float(phi_beta(hi, beta)) < y:
        hi *= 2.0
    s = y / math.log(math.e + y) ** beta  # good first guess for large y
    s = min(max(s, lo), hi)
    for _ in range(200):
        L = math.log(math.e + s)
        f = s * L**beta - y
        if f > 0:
            hi = s
        else:
            lo = s
        df = L**beta + beta * s * L ** (beta - 1) / (math.e + s)
        s_new = s - f / df
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) <= 1e-15 * max(s_new, 1e-300):
            return s_new
        s = s_new
        if hi - lo <= 1e-15 * hi:
            break
    return s


def orlicz_ball_average(mu2: MeasureSpec, center, sigma: float, beta: float, T: float, p: Optional[float] = None) -> float:
    """Phi_beta^{-1} of the ball average of Phi_beta(T^(1/(2(p-1))) mu2(y)).

    ``p`` defaults to the critical exponent 1 + 1/N.
    """
    if mu2.has_atoms() and mu2.kappa > 0:
        raise MeasureTypeError("Orlicz average requires a density (atoms present)")
    if not (sigma > 0 and T > 0 and beta > 0):
        raise DomainError("need sigma > 0, T > 0 and beta > 0")
    p = p_star(mu2.N) if p is None else p
    amp = T ** (1.0 / (2.0 * (p - 1.0)))
    integral = ball_integral_of(mu2, center, sigma, lambda v: phi_beta(amp * v, beta))
    return phi_beta_inv(integral / ball_volume(mu2.N, sigma), beta)


def power_ball_average(mu2: MeasureSpec, center, sigma: float, alpha: float) -> float:
    """[ball average of mu2(y)^alpha]^(1/alpha)."""
    integral = ball_integral_of(mu2, center, sigma, lambda v: np.asarray(v) ** alpha)
    return (integral / ball_volume(mu2.N, sigma)) ** (1.0 / alpha)


def support_box(mu: MeasureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box of the essential support (infinite sides clipped to +-1)."""
    N = mu.N
    lo = np.full(N, INF)
    hi = np.full(N, -INF)
    for a in mu.live_atoms():
        lo = np.minimum(lo, a.x)
        hi = np.maximum(hi, a.x)
    for d in mu.live_densities():
        zl, zh = d.window()
        if isinstance(d, TabulatedGrid):
            dl = np.array([ax[0] for ax in d.axes])
            dh = np.array([ax[-1] for ax in d.axes])
        elif isinstance(d, PowerLog):
            dl = np.array([-d.r0] * (N - 1) + [zl])
            dh = np.array([d.r0] * (N - 1) + [min(zh, d.r0)])
        else:
            dl = np.array([-1.0] * (N - 1) + [zl])
            dh = np.array([1.0] * (N - 1) + [zh if math.isfinite(zh) else max(zl, 0.0) + 1.0])
        lo = np.minimum(lo, dl)
        hi = np.maximum(hi, dh)
    if not np.all(np.isfinite(lo)):
        lo = np.zeros(N)
        hi = np.zeros(N)
    lo[-1] = max(lo[-1], 0.0)
    return lo, hi


def seed_points(mu: MeasureSpec) -> list[tuple]:
    """Atom locations and density singular points used to seed sup searches."""
    pts = [a.x for a in mu.live_atoms()]
    for d in mu.live_densities():
        for z in d.singular_points():
            pts.append(tuple([0.0] * (mu.N - 1) + [z]))
    return pts
