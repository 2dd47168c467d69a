"""Gauss kernel, half-space Neumann Green function and the heat semigroup.

``G(x, y, t) = Gamma_N(x - y, t) + Gamma_N(x - y*, t)`` with ``y* = (y', -y_N)``.
On the boundary it factorizes as ``2 (4 pi t)^{-1/2} exp(-x_N^2/4t) Gamma_{N-1}``,
which is what the boundary integral equation uses.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, DivergenceError, DomainError
from .measure import (
    INF,
    BoundedDecay,
    ConstantStrip,
    DensityComponent,
    GaussianGrowth,
    MeasureSpec,
    TabulatedGrid,
    _erf_diff,
)

# kernel mass outside |z| > 12 sqrt(t) is below exp(-36)
TRUNC = 12.0


def _check_t(t):
    if not np.all(np.asarray(t) > 0):
        raise DomainError(f"time must be > 0, got {t}")


def gauss_kernel(x, t):
    """(4 pi t)^{-N/2} exp(-|x|^2 / 4t); the last axis of ``x`` holds coordinates.

    A scalar ``x`` is treated as a point of R^1.
    """
    _check_t(t)
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    N = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    out = (4.0 * math.pi * t) ** (-N / 2.0) * np.exp(-r2 / (4.0 * t))
    return float(out) if out.ndim == 0 else out


def gauss_1d(z, t):
    return np.exp(-np.square(z) / (4.0 * t)) / np.sqrt(4.0 * math.pi * t)


def reflect(y):
    y = np.array(y, dtype=float, copy=True)
    y[..., -1] = -y[..., -1]
    return y


def green_neumann(x, y, t):
    """Neumann heat kernel of the half-space (image method)."""
    _check_t(t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(x[..., -1] < 0) or np.any(y[..., -1] < 0):
        raise DomainError("points must lie in the closed half-space x_N >= 0")
    return gauss_kernel(x - y, t) + gauss_kernel(x - reflect(y), t)


def green_boundary(x, yprime, t):
    """G(x, (y', 0), t) in factored form; for N = 1 ``yprime`` is empty."""
    _check_t(t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    N = x.shape[-1]
    normal = 2.0 * (4.0 * math.pi * t) ** -0.5 * np.exp(-x[..., -1] ** 2 / (4.0 * t))
    if N == 1:
        return float(normal) if np.ndim(normal) == 0 else normal
    yprime = np.asarray(yprime, dtype=float)
    return normal * gauss_kernel(x[..., :-1] - yprime, t)


# --------------------------------------------------------------------------
# semigroup on structured measures


def _gaussian_window(xn, t, lam, a, b):
    """int_a^b [Gamma_1(xn - z) + Gamma_1(xn + z)] exp(lam z^2) dz, closed form."""
    one = 1.0 - 4.0 * lam * t
    if one <= 0:
        raise DivergenceError(f"S(t) of exp({lam} y_N^2) diverges for 4 lam t = {4 * lam * t:.6g} >= 1")
    c = one / (4.0 * t)
    rc = math.sqrt(c)
    total = 0.0
    for s in (xn, -xn):
        m = s / one
        lo = rc * (a - m)
        hi = rc * (b - m) if math.isfinite(b) else INF
        # prefactor exp(lam s^2 / one) may be huge; combine in log space with erfc tails
        logpre = lam * s * s / one - 0.5 * math.log(one)
        diff = _erf_diff(lo, hi)
        if diff > 0:
            total += 0.5 * math.exp(logpre + math.log(diff)) if logpre < 700 else INF
    return total


def _normal_kernel(xn, z, t):
    return gauss_1d(xn - z, t) + gauss_1d(xn + z, t)


def _quad_pieces(f, a, b, points, rtol):
    pts = sorted(v for v in set(points) if a < v < b)
    edges = [a] + pts + [b]
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=rtol, limit=400)
            total += val
            err += e
    return total, err


def _lateral_smooth(d: DensityComponent, xl, z, t, rtol):
    """int_{R^{N-1}} Gamma_{N-1}(x' - y', t) d(y', z) dy' for N >= 2."""
    w = TRUNC * math.sqrt(t)
    if len(xl) == 1:
        f = lambda y1: gauss_1d(xl[0] - y1, t) * float(d.value(np.array([[y1, z]]))[0])
        pts = [0.0, xl[0]]
        if isinstance(d, TabulatedGrid):
            pts += list(d.axes[0])
        val, _ = _quad_pieces(f, xl[0] - w, xl[0] + w, pts, rtol)
        return val
    # N == 3: integrate over the lateral plane, inner variable y2
    def inner(y1):
        f = lambda y2: gauss_1d(xl[1] - y2, t) * float(d.value(np.array([[y1, y2, z]]))[0])
        val, _ = _quad_pieces(f, xl[1] - w, xl[1] + w, [0.0, xl[1]], rtol)
        return gauss_1d(xl[0] - y1, t) * val

    val, _ = _quad_pieces(inner, xl[0] - w, xl[0] + w, [0.0, xl[0]], rtol)
    return val


def spherical_mean(R, r, t, N):
    """int over the full unit sphere of Gamma_N(x - r w, t) dw, with |x| = R."""
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    if N == 1:
        return gauss_1d(R - r, t) + gauss_1d(R + r, t)
    base = np.exp(-np.square(R - r) / (4.0 * t))
    if N == 2:
        return base * special.i0e(R * r / (2.0 * t)) / (2.0 * t)
    Rr = R * r
    with np.errstate(divide="ignore", invalid="ignore"):
        shape = np.where(Rr > 1e-300, -np.expm1(-Rr / t) * t / np.where(Rr > 0, Rr, 1.0), 1.0)
    return (4.0 * math.pi * t) ** -1.5 * 4.0 * math.pi * base * shape


def component_semigroup(d: DensityComponent, x, t, rtol=1e-9, method="auto") -> float:
    """[S(t) d](x) for one density component (coefficient included, kappa not)."""
    x = np.asarray(x, dtype=float)
    N = x.shape[-1]
    xn = float(x[-1])
    lo, hi = d.window()
    if hi <= lo or d.coef == 0.0:
        return 0.0
    if isinstance(d, GaussianGrowth) and 4.0 * d.lam * t >= 1.0:
        raise DivergenceError(
            f"S(t) of exp({d.lam} y_N^2) diverges for 4 lam t = {4 * d.lam * t:.6g} >= 1"
        )
    if method == "auto":
        if isinstance(d, GaussianGrowth):
            return d.coef * _gaussian_window(xn, t, d.lam, lo, hi)
        if isinstance(d, ConstantStrip):
            return d.coef * d.c * _gaussian_window(xn, t, 0.0, lo, hi)
    w = TRUNC * math.sqrt(t)
    a = max(lo, xn - w, 0.0)
    b = min(hi, xn + w)
    if isinstance(d, GaussianGrowth):
        # kernel times exp(lam z^2) decays like exp(-(1 - 4 lam t) z^2 / 4t)
        b = min(hi, xn + w / math.sqrt(1.0 - 4.0 * d.lam * t))
    if b <= a:
        return 0.0
    unrestricted = d.above_L == 0.0 and d.below_L is None
    if d.radial and N >= 2 and unrestricted:
        # fold the image term: half-sphere of G equals full-sphere of Gamma_N
        R = float(np.linalg.norm(x))
        a = max(0.0, R - w)
        b = min(hi, R + w)
        if b <= a:
            return 0.0
        dens = d.normal_scalar()  # radial: the normal axis carries the radius
        f = lambda r: dens(r) * r ** (N - 1) * float(spherical_mean(R, r, t, N))
        val, err = _quad_pieces(f, a, b, [0.0, R, hi], rtol)
        _check_err(d, val, err, rtol)
        return val
    pts = list(d.singular_points()) + [xn]
    if N == 1 or d.lateral_uniform:
        dens = d.normal_scalar()
        c4, norm = 4.0 * t, 1.0 / math.sqrt(4.0 * math.pi * t)
        f = lambda z: norm * (math.exp(-((xn - z) ** 2) / c4) + math.exp(-((xn + z) ** 2) / c4)) * dens(z)
    else:
        xl = x[:-1]
        f = lambda z: _normal_kernel(xn, z, t) * _lateral_smooth(d, xl, z, t, rtol)
    val, err = _quad_pieces(f, a, b, pts, rtol)
    _check_err(d, val, err, rtol)
    return val


def _check_err(d, val, err, rtol):
    if err > max(100.0 * rtol * abs(val), 1e-300) and err > 1e-12 * max(abs(val), 1.0):
        raise AccuracyError(f"quadrature for {d.kind} reached only {err:.3g} (value {val:.6g})", err)


def semigroup_apply(mu: MeasureSpec, x, t, rtol: float = 1e-9, method: str = "auto"):
    """[S(t) mu](x) = int_D G(x, y, t) d mu(y).

    ``x`` is one point (length N) or an array of points (..., N).  Closed forms
    are used for atoms, gaussian_growth and constant_strip; other components go
    through adaptive quadrature.  ``method="quadrature"`` forces quadrature for
    every density component.  Raises :class:`DivergenceError` when the value is
    infinite.
    """
    _check_t(t)
    X = np.asarray(x, dtype=float)
    if X.ndim == 0:
        X = X[None]
    if X.shape[-1] != mu.N:
        raise DomainError(f"point dimension {X.shape[-1]} != measure dimension {mu.N}")
    if np.any(X[..., -1] < 0):
        raise DomainError("evaluation points must lie in D")
    flat = X.reshape(-1, mu.N)
    out = np.zeros(flat.shape[0])
    if mu.kappa != 0.0:
        for a in mu.live_atoms():
            out += a.mass * green_neumann(flat, np.asarray(a.x), t)
        for d in mu.live_densities():
            out += np.array([component_semigroup(d, xi, t, rtol, method) for xi in flat])
        out *= mu.kappa
    out = out.reshape(X.shape[:-1])
    return float(out) if out.ndim == 0 else out


def boundary_profile_exponent(mu: MeasureSpec, t: float, xprime=None) -> float:
    """Local exponent a with [S(s) mu](x', 0) ~ s^{-a} near s = t (finite differences in log s)."""
    N = mu.N
    xp = np.zeros(N) if xprime is None else np.append(np.asarray(xprime, float), 0.0)
    g1 = semigroup_apply(mu, xp, t)
    g0 = semigroup_apply(mu, xp, t / 2.0)
    if g1 <= 0 or g0 <= 0:
        return -INF
    return math.log(g0 / g1) / math.log(2.0)


# --------------------------------------------------------------------------
# self test


def _q(f, a, b, pts=()):
    val, _ = _quad_pieces(f, a, b, pts, 1e-13)
    return val


def _semigroup_defect(x, z, t, s):
    """Quadrature of int_D G(x,y,t) G(y,z,s) dy versus G(x,z,t+s), axis by axis."""
    N = len(x)
    w = TRUNC * math.sqrt(max(t, s))
    prod = 1.0
    for i in range(N - 1):
        f = lambda y: gauss_1d(x[i] - y, t) * gauss_1d(y - z[i], s)
        prod *= _q(f, min(x[i], z[i]) - w, max(x[i], z[i]) + w, [x[i], z[i]])
    f = lambda y: _normal_kernel(x[-1], y, t) * _normal_kernel(y, z[-1], s)
    prod *= _q(f, 0.0, max(x[-1], z[-1]) + w, [x[-1], z[-1]])
    exact = float(green_neumann(np.asarray(x), np.asarray(z), t + s))
    return abs(prod - exact) / exact


def _mass_defect(x, t):
    N = len(x)
    w = TRUNC * math.sqrt(t)
    prod = 1.0
    for i in range(N - 1):
        prod *= _q(lambda y: gauss_1d(x[i] - y, t), x[i] - w, x[i] + w, [x[i]])
    prod *= _q(lambda y: _normal_kernel(x[-1], y, t), 0.0, x[-1] + w, [x[-1]])
    return abs(prod - 1.0)


def semigroup_selftest(seed: int = 0, samples: int = 100, dims=(1, 2, 3)) -> dict:
    """Check the semigroup identity, kernel bounds and mass conservation on random samples.

    Returns a JSON-serializable report with the maximal defects per dimension.
    """
    rng = np.random.default_rng(seed)
    report = {"seed": seed, "samples": samples, "dims": {}}
    for N in dims:
        sg, mass, bound_viol, tail_viol = 0.0, 0.0, 0, 0
        for _ in range(samples):
            x = np.append(rng.uniform(-1, 1, N - 1), rng.uniform(0, 1.5))
            z = np.append(rng.uniform(-1, 1, N - 1), rng.uniform(0, 1.5))
            t, s = rng.uniform(0.05, 1.0, 2)
            sg = max(sg, _semigroup_defect(x, z, t, s))
            mass = max(mass, _mass_defect(x, t))
            g = float(green_neumann(x, z, t))
            gam = float(gauss_kernel(x - z, t))
            if not (gam <= g <= 2.0 * gam):
                bound_viol += 1
            # beyond the peak time |x-z|^2/(2N) the kernel decays monotonically
            t0 = max(float(np.sum((x - z) ** 2)) / (2 * N), 1e-3) * 2.0
            tail = green_neumann(x, z, t0 * np.array([1.0, 2.0, 4.0, 8.0]))
            if not np.all(np.diff(tail) < 0):
                tail_viol += 1
        report["dims"][str(N)] = {
            "semigroup_rel_defect": sg,
            "mass_defect": mass,
            "bound_violations": bound_viol,
            "tail_monotone_violations": tail_viol,
        }
    report["max_semigroup_rel_defect"] = max(v["semigroup_rel_defect"] for v in report["dims"].values())
    report["max_mass_defect"] = max(v["mass_defect"] for v in report["dims"].values())
    report["bound_violations"] = sum(v["bound_violations"] for v in report["dims"].values())
    return report
