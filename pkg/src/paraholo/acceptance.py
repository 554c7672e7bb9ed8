"""Acceptance criteria as callables returning a pass/fail record.

Each ``criterion_N`` runs one reproducibility check at its stated tolerance
and runtime budget.  ``tests/test_acceptance.py`` and ``paraholo repro-all``
both call into this module, so the two cannot drift apart.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coeffs import model_family, model_n0
from .discretize import assemble_a0, assemble_perturbation, build_mesh
from .dtn2d import check_sign_properties, dtn_symbol, wronskian_defect
from .holomorphy import (
    cauchy_residual,
    region_radius_part1,
    resolvent_apply,
    sample_polydisc,
    verify_factor_two,
)
from .opnorm import NormKind, k_sweep, norm_relation_check, solution_operator_norm
from .poles import (
    ASYMPTOTIC_K_ABS_Y,
    model_operator,
    pencil_poles,
    resonance_residual,
    sequence_k,
    solve_resonance,
)

__all__ = ["CriterionResult", "CRITERIA", "run_all", "model_setup"]

SEED = 42


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    seconds: float
    budget: float
    details: dict = field(default_factory=dict)

    @property
    def within_budget(self) -> bool:
        return self.seconds <= self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        note = "" if self.within_budget else f" (over budget {self.budget:g}s)"
        return f"[{tag}] criterion {self.number}: {self.title} ({self.seconds:.2f}s){note}"

    def to_dict(self) -> dict:
        return {
            "criterion": self.number,
            "title": self.title,
            "passed": self.passed,
            "ok": self.ok,
            "seconds": self.seconds,
            "budget": self.budget,
            "details": self.details,
        }


def model_setup(k: float, ppw: float = 20.0, pollution_exp: float = 1.5):
    """Operator, perturbation list and family for the model problem at ``k``."""
    fam = model_family()
    mesh = build_mesh(k, ppw, pollution_exp, fam.base.breakpoints)
    op = assemble_a0(mesh, fam.base)
    perts = [assemble_perturbation(mesh, p, j) for j, p in enumerate(fam.modes)]
    return op, perts, fam


def _timed(number: int, title: str, budget: float, body: Callable[[], tuple[bool, dict]]) -> CriterionResult:
    t0 = time.perf_counter()
    passed, details = body()
    return CriterionResult(number, title, bool(passed), time.perf_counter() - t0, budget, details)


def criterion_1() -> CriterionResult:
    def body():
        ks = np.geomspace(10.0, 200.0, 40)
        table = k_sweep(model_n0(), ks, (NormKind.L2, NormKind.L2), workers=1)
        ok = table.complete and 0.85 <= table.slope <= 1.15 and table.min_ratio > 0
        return ok, {"slope": table.slope, "min_norm_over_k": table.min_ratio, "error": table.error}

    return _timed(1, "L2 solution-operator norm grows like k", 120.0, body)


def criterion_2() -> CriterionResult:
    def body():
        rows = []
        for m in range(5, 41):
            k = sequence_k(m)
            pe = solve_resonance(k)
            rows.append((m, k * abs(pe.y), resonance_residual(k, pe.y)))
        kay = np.array([r[1] for r in rows])
        res = np.array([r[2] for r in rows])
        last = kay[-1]
        ok = bool(np.all((kay >= 1.0) & (kay <= 1.5)) and np.all(res <= 1e-10) and abs(last - 1.24645) <= 0.01)
        return ok, {
            "min_k_abs_y": float(kay.min()),
            "max_k_abs_y": float(kay.max()),
            "k_abs_y_m40": float(last),
            "asymptote": ASYMPTOTIC_K_ABS_Y,
            "max_residual": float(res.max()),
        }

    return _timed(2, "sequence poles satisfy 1 <= k|y| <= 1.5", 1.0, body)


def criterion_3() -> CriterionResult:
    def body():
        errs, orders = {}, {}
        for m in range(5, 21):
            k = sequence_k(m)
            y_ref = solve_resonance(k).y
            e = []
            for ppw in (40.0, 80.0):
                op, pert = model_operator(k, ppw, 1.5)
                found = pencil_poles(op, pert, 1)
                e.append(abs(found[0] - y_ref) / abs(y_ref) if found else math.inf)
            errs[m] = e[0]
            orders[m] = math.log2(e[0] / e[1]) if e[1] > 0 else math.inf
        err = np.array(list(errs.values()))
        order = np.array(list(orders.values()))
        ok = bool(np.all(err <= 1e-3) and np.all(np.abs(order - 2.0) <= 0.5))
        return ok, {
            "max_rel_error_ppw40": float(err.max()),
            "min_rel_error_ppw40": float(err.min()),
            "order_range": [float(order.min()), float(order.max())],
        }

    return _timed(3, "pencil and transcendental poles agree to 1e-3", 120.0, body)


def criterion_4() -> CriterionResult:
    def body():
        details = {}
        ok = True
        for k in (20.0, 40.0, 80.0):
            op, perts, fam = model_setup(k)
            opn = solution_operator_norm(op, NormKind.L2, NormKind.H1K)
            region = region_radius_part1(opn, fam)
            points = sample_polydisc(region.per_mode_radii, 200, SEED)
            rep = verify_factor_two(op, perts, region, points=points)
            f = model_n0()
            gap = 0.0
            for y in points:
                d = resolvent_apply(op, perts, y, f, "direct")
                n = resolvent_apply(op, perts, y, f, "neumann", tol=1e-14)
                gap = max(gap, np.linalg.norm(d.u - n.u) / np.linalg.norm(d.u))
            ok = ok and rep.ok and gap <= 1e-8
            details[f"k={k:g}"] = {"radius": float(region.per_mode_radii[0]), "max_ratio": rep.max_ratio,
                                   "violations": rep.violations, "neumann_direct_gap": float(gap)}
        return ok, details

    return _timed(4, "solution-operator norm at most doubles on the region", 180.0, body)


def criterion_5() -> CriterionResult:
    def body():
        rk, pk = [], []
        for m in (5, 10, 20, 40):
            k = sequence_k(m)
            op, perts, fam = model_setup(k)
            region = region_radius_part1(solution_operator_norm(op, NormKind.L2, NormKind.H1K), fam)
            rk.append(region.per_mode_radii[0] * k)
            pk.append(abs(solve_resonance(k).y) * k)
        rk, pk = np.array(rk), np.array(pk)
        spread = lambda a: float((a.max() - a.min()) / a.min())  # noqa: E731
        ok = bool(np.all(rk < pk) and spread(rk) < 0.2 and spread(pk) < 0.2)
        return ok, {"r1_times_k": rk.tolist(), "pole_times_k": pk.tolist(),
                    "spread_r1": spread(rk), "spread_pole": spread(pk)}

    return _timed(5, "guaranteed radius below the pole, both scale like 1/k", 60.0, body)


def criterion_6() -> CriterionResult:
    def body():
        k = sequence_k(10)
        op, perts, fam = model_setup(k)
        region = region_radius_part1(solution_operator_norm(op, NormKind.L2, NormKind.H1K), fam)
        r = float(region.per_mode_radii[0])
        inside = [
            cauchy_residual(op, perts, [0.0], 0.9 * r, region=region),
            cauchy_residual(op, perts, [0.4 * r * (1 + 1j) / math.sqrt(2)], 0.5 * r, region=region),
        ]
        found = pencil_poles(op, perts[0], 1)
        y_pole = found[0] if found else solve_resonance(k).y
        outside = cauchy_residual(op, perts, [0.0], 1.5 * abs(y_pole))
        ok = max(inside) <= 1e-8 and outside >= 1e-2
        return ok, {"inside": inside, "enclosing_pole": outside, "radius": r, "pole": [y_pole.real, y_pole.imag]}

    return _timed(6, "Cauchy formula holds inside the region and fails around a pole", 30.0, body)


def criterion_7() -> CriterionResult:
    def body():
        zs = (1.0, 10.0, 100.0)
        rep = check_sign_properties(50, zs)
        wr = max(wronskian_defect(n, z) for z in zs for n in range(0, 51))
        far = abs(dtn_symbol(0, 1e3).value - 1j)
        ok = rep.ok and wr <= 1e-10 and far <= 1e-3
        return ok, {"signs_ok": rep.ok, "max_real": rep.max_real, "max_wronskian_defect": wr, "far_field_gap": far}

    return _timed(7, "DtN symbol has Im > 0 and Re <= 0", 1.0, body)


def criterion_8() -> CriterionResult:
    def body():
        details, ok = {}, True
        for k in (20.0, 80.0):
            op, _, _ = model_setup(k)
            rep = norm_relation_check(op)
            ok = ok and rep.ok
            details[f"k={k:g}"] = {"lhs1": rep.lhs1, "rhs1": rep.rhs1, "lhs2": rep.lhs2, "rhs2": rep.rhs2}
        return ok, details

    return _timed(8, "dual and L2 norm relations hold", 30.0, body)


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
}


def run_all(numbers=None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    out = []
    for n in numbers or sorted(CRITERIA):
        res = CRITERIA[n]()
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
