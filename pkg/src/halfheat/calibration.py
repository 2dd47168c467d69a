"""Empirical calibration of the solvability constants against the solver.

For each member of a family of N = 1 data the life span T* is computed and
the functionals are evaluated at T*.  Necessary constants take twice the
largest observed ratio, sufficient constants half the smallest, so that a
verdict at any T is sound on the family with a factor-2 margin.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .conditions import (
    ConditionParams,
    necessary_smoothing,
    necessary_thm11,
    sufficient_thm13,
    sufficient_thm14,
    sufficient_thm15,
)
from .lifespan import lifespan
from .measure import ConstantStrip, MeasureSpec

VERSION = 1
DELTA = 0.5


@dataclass(frozen=True)
class Member:
    label: str
    mu: MeasureSpec
    p: float


def family() -> list:
    atoms = [Member(f"boundary_atom_p{p}", MeasureSpec.atom((0.0,), 1.0), p) for p in (1.2, 1.5, 1.8)]
    strips = []
    for p in (1.2, 1.5, 1.8, 2.0, 2.5):
        for h in (0.1, 1.0):
            for k in (1.0, 10.0):
                strips.append(Member(f"strip_h{h}_k{k}_p{p}", MeasureSpec.density(1, ConstantStrip(h=h, c=1.0), kappa=k), p))
    return atoms + strips


def calibrate(log=print) -> dict:
    ratios = {k: [] for k in ("gamma1_subcritical", "gamma1_critical", "gamma1_supercritical", "gamma2", "gamma3", "gamma4", "gamma_smoothing")}
    rows = []
    for m in family():
        res = lifespan(m.mu, m.p)
        if res.status != "finite":
            log(f"{m.label}: no finite life span ({res.status}); skipped")
            continue
        T = res.T_est
        prm = ConditionParams(p=m.p, T=T, N=1, delta=DELTA)
        row = {"member": m.label, "p": m.p, "T_star": T}
        nec = necessary_thm11(m.mu, prm, cal={})
        reg = nec.functional_name.rsplit("_", 1)[-1]
        ratios[f"gamma1_{reg}"].append(nec.ratio)
        row["thm11"] = nec.ratio
        is_strip = not m.mu.has_atoms()
        if reg == "subcritical":
            r13 = sufficient_thm13(m.mu, prm, cal={}).ratio
            ratios["gamma2"].append(r13)
            row["thm13"] = r13
        if is_strip and reg != "critical":
            a, b = sufficient_thm14(m.mu, prm, cal={})
            ratios["gamma3"].append(max(a.ratio, b.ratio))
            row["thm14"] = max(a.ratio, b.ratio)
        if is_strip and reg == "critical":
            a, b = sufficient_thm15(m.mu, prm, cal={})
            ratios["gamma4"].append(max(a.ratio, b.ratio))
            row["thm15"] = max(a.ratio, b.ratio)
        if is_strip:
            sm = necessary_smoothing(m.mu, prm, cal={}).ratio
            ratios["gamma_smoothing"].append(sm)
            row["smoothing"] = sm
        log(json.dumps(row))
        rows.append(row)
    constants = {}
    for k, v in ratios.items():
        if not v:
            continue
        constants[k] = 2.0 * max(v) if k.startswith("gamma1") or k == "gamma_smoothing" else 0.5 * min(v)
    return {
        "version": VERSION,
        "delta": DELTA,
        "method": "necessary: 2 x max ratio at the computed life span; sufficient: 0.5 x min ratio",
        "constants": constants,
        "family": rows,
    }
