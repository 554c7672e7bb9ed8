"""Guaranteed holomorphy polydiscs in the parameter y and numerical checks of them.

The Neumann-series argument: if ``||A_p(y) A0^-1|| <= 1/2`` then
``A(y)^-1 = A0^-1 (I + A_p(y) A0^-1)^-1`` exists, depends holomorphically on
``y`` and is at most twice as large as ``A0^-1``.  The operator norm of
``A_p(y) A0^-1`` is bounded by ``max(||A_p(y)||_inf, ||n_p(y)||_inf) ||A0^-1||``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coeffs import AffineFamily, ParamPoint, PiecewiseCoefficient, sup_norm, w1inf_norm
from .discretize import (
    BandedLU,
    DiscreteOperator,
    NearPoleError,
    PerturbationMatrix,
    load_vector,
    system_matrix,
)
from .opnorm import DEFAULT_SEED, NormKind, OperatorNormEstimate, solution_operator_norm, weighted_norm

__all__ = [
    "ConditionKind",
    "HolomorphyRegion",
    "ResolventSample",
    "FactorTwoReport",
    "RegionError",
    "NeumannDivergence",
    "region_radius_part1",
    "region_radius_part2",
    "resolvent_apply",
    "verify_factor_two",
    "cauchy_residual",
    "default_probes",
    "sample_polydisc",
]


class ConditionKind(enum.Enum):
    PART1 = "Part1"
    PART2 = "Part2"


class RegionError(ValueError):
    pass


class NeumannDivergence(ArithmeticError):
    def __init__(self, msg, terms):
        super().__init__(msg)
        self.terms = terms


@dataclass
class HolomorphyRegion:
    k: float
    per_mode_radii: np.ndarray
    condition_kind: ConditionKind
    opnorm_used: OperatorNormEstimate
    mode_norms: np.ndarray = field(repr=False, default=None)

    def condition_lhs(self, y) -> float:
        """Left-hand side of the sufficient condition at ``y`` (<= 1/2 inside)."""
        y = y.y if isinstance(y, ParamPoint) else np.atleast_1d(y)
        finite = np.isfinite(self.per_mode_radii)
        return float(self.opnorm_used.value * np.sum(np.abs(y[finite]) * self.mode_norms[finite]))

    def contains(self, y, slack: float = 0.0) -> bool:
        y = y.y if isinstance(y, ParamPoint) else np.atleast_1d(y)
        return bool(np.all(np.abs(y) <= self.per_mode_radii * (1 + slack)))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "condition": self.condition_kind.value,
            "radii": [r if np.isfinite(r) else "inf" for r in map(float, self.per_mode_radii)],
            "opnorm": self.opnorm_used.value,
            "opnorm_pair": [p.value for p in self.opnorm_used.pair],
        }


def _allocate(budget: float, mode_norms: np.ndarray, allocation) -> np.ndarray:
    """Split ``sum_j r_j s_j <= budget`` into per-mode radii.

    ``"equal_budget"``: every live mode gets budget/N'; ``"equal_radius"``:
    one common radius; an array: budget shares proportional to it.
    """
    s = np.asarray(mode_norms, dtype=float)
    live = s > 0
    radii = np.full(s.shape, np.inf)
    if not np.any(live):
        return radii
    if isinstance(allocation, str):
        if allocation == "equal_budget":
            radii[live] = budget / (np.count_nonzero(live) * s[live])
        elif allocation == "equal_radius":
            radii[live] = budget / np.sum(s[live])
        else:
            raise ValueError(f"unknown allocation rule {allocation!r}")
    else:
        w = np.asarray(allocation, dtype=float)
        if w.shape != s.shape or np.any(w[live] <= 0):
            raise ValueError("allocation weights must be positive, one per mode")
        share = w[live] / np.sum(w[live])
        radii[live] = budget * share / s[live]
    return radii


def region_radius_part1(opn: OperatorNormEstimate, family: AffineFamily, weights="equal_budget") -> HolomorphyRegion:
    """Polydisc on which ``||A0^-1|| sum_j |y_j| max(||a_j||_inf, ||psi_j||_inf) <= 1/2``."""
    s = np.array([sup_norm(p) for p in family.modes])
    if family.diffusion_modes is not None:
        s = np.maximum(s, [sup_norm(a) for a in family.diffusion_modes])
    radii = _allocate(1.0 / (2.0 * opn.value), s, weights)
    return HolomorphyRegion(opn.k, radii, ConditionKind.PART1, opn, s)


def region_radius_part2(
    opn_h2: OperatorNormEstimate,
    family: AffineFamily,
    C_elliptic: float = 1.0,
    weights="equal_budget",
) -> HolomorphyRegion:
    """Polydisc from the H2k condition: ``||A0^-1||_{L2->H2k} max(C ||A_p||_{W1inf}, ||n_p||_inf) <= 1/2``.

    ``C_elliptic`` is not certified; radii from this routine are relative.
    """
    if opn_h2.pair[1] is not NormKind.H2K:
        raise RegionError("H2k-condition radii need an L2 -> H2k norm estimate")
    s = np.array([sup_norm(p) for p in family.modes])
    if family.diffusion_modes is not None:
        for j, a in enumerate(family.diffusion_modes):
            if a.support() is not None and not a.is_continuous():
                raise RegionError(f"diffusion mode {j} is discontinuous, hence not W^1,inf")
        s = np.maximum(s, [C_elliptic * w1inf_norm(a) for a in family.diffusion_modes])
    radii = _allocate(1.0 / (2.0 * opn_h2.value), s, weights)
    return HolomorphyRegion(opn_h2.k, radii, ConditionKind.PART2, opn_h2, s)


@dataclass
class ResolventSample:
    y: ParamPoint
    solve_norm: float
    target: NormKind
    method: str
    condition_estimate: float
    u: np.ndarray = field(repr=False, default=None)
    near_pole: bool = False
    terms: int = 0


def _probe_load(op: DiscreteOperator, f) -> np.ndarray:
    if isinstance(f, np.ndarray):
        if f.size != op.n_dofs:
            raise ValueError("nodal probe must live on the free dofs")
        return op.mass @ f, f
    b = load_vector(op.mesh, f)
    return b, op.mass_solve(b)


def _as_perts(perts: Sequence[PerturbationMatrix], y) -> list[tuple[PerturbationMatrix, complex]]:
    y = y.y if isinstance(y, ParamPoint) else np.atleast_1d(np.asarray(y, dtype=complex))
    if len(perts) != y.size:
        raise ValueError(f"{len(perts)} perturbation matrices but y has length {y.size}")
    return list(zip(perts, y))


def resolvent_apply(
    op: DiscreteOperator,
    perts: Sequence[PerturbationMatrix],
    y,
    f,
    method: str = "direct",
    target: NormKind = NormKind.L2,
    tol: float = 1e-10,
    max_terms: int = 5000,
) -> ResolventSample:
    """Apply ``A(k, y)^-1`` to a probe by direct factorization or by Neumann series.

    ``f`` is a coefficient/callable (load assembled by quadrature) or a nodal
    vector on the free dofs (load ``M f``).  The Neumann partial sums are
    ``sum_t A0^-1 (-A_p A0^-1)^t b``; summation stops once the increment is
    below ``tol`` relative to the sum.
    """
    pairs = _as_perts(perts, y)
    yp = ParamPoint(np.array([c for _, c in pairs]))
    b, fnodal = _probe_load(op, f)
    fnorm = math.sqrt(np.vdot(fnodal, op.mass @ fnodal).real)
    if method == "direct":
        A = system_matrix(op, pairs)
        lu = op.lu if A is op.system else BandedLU(A)
        cond = lu.condition_1norm()
        if not np.isfinite(cond) or cond > 1e14:
            return ResolventSample(yp, np.inf, target, method, cond, None, True)
        u = lu.solve(b)
        terms = 0
    elif method == "neumann":
        cond = op.lu.condition_1norm()
        live = [(P, c) for P, c in pairs if c != 0]
        term = op.lu.solve(b)
        u = term.copy()
        terms = 1
        growth = 0
        prev = np.inf
        while live:
            v = sum(c * (P.matrix @ term) for P, c in live)
            term = -op.lu.solve(v)
            u += term
            terms += 1
            inc = np.linalg.norm(term)
            if inc <= tol * np.linalg.norm(u):
                break
            growth = growth + 1 if inc > prev else 0
            if growth >= 5:
                raise NeumannDivergence("Neumann increments grew over 5 consecutive terms: y is outside the region", terms)
            prev = inc
            if terms >= max_terms:
                raise NeumannDivergence(f"no convergence within {max_terms} terms", terms)
    else:
        raise ValueError(f"unknown method {method!r}")
    if target is NormKind.H2K:
        raise ValueError("H2k probe norms are computed by solution_operator_norm")
    un = weighted_norm(u, target, op.mesh)
    return ResolventSample(yp, un / fnorm if fnorm > 0 else 0.0, target, method, cond, u, False, terms)


@dataclass
class FactorTwoReport:
    k: float
    base_norm: float
    ratios: np.ndarray
    samples: list[np.ndarray] = field(repr=False)
    bound: float = 2.0
    slack: float = 1e-6

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios)) if self.ratios.size else float("nan")

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.ratios > self.bound * (1 + self.slack)))

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "base_norm": self.base_norm,
            "samples": int(self.ratios.size),
            "max_ratio": self.max_ratio,
            "violations": self.violations,
        }


def sample_polydisc(radii: np.ndarray, samples: int, seed: int = DEFAULT_SEED, boundary_fraction: float = 0.5) -> list[np.ndarray]:
    """Random points of the closed polydisc, a fraction on its distinguished boundary."""
    rng = np.random.default_rng(seed)
    radii = np.asarray(radii, dtype=float)
    out = []
    n_bnd = int(round(boundary_fraction * samples))
    for i in range(samples):
        theta = rng.uniform(0, 2 * np.pi, radii.size)
        rho = np.ones(radii.size) if i < n_bnd else np.sqrt(rng.uniform(0, 1, radii.size))
        out.append(radii * rho * np.exp(1j * theta))
    return out


def verify_factor_two(
    op: DiscreteOperator,
    perts: Sequence[PerturbationMatrix],
    region: HolomorphyRegion,
    samples: int = 200,
    seed: int = DEFAULT_SEED,
    points: Sequence[np.ndarray] | None = None,
) -> FactorTwoReport:
    """Measure ``||A(k,y)^-1||_{L2->H1k} / ||A0^-1||_{L2->H1k}`` over the polydisc."""
    if not np.all(np.isfinite(region.per_mode_radii)):
        raise RegionError("cannot sample an unbounded polydisc")
    pair = (NormKind.L2, NormKind.H1K)
    base = solution_operator_norm(op, *pair)
    if points is None:
        points = sample_polydisc(region.per_mode_radii, samples, seed)
    ratios = []
    for y in points:
        est = solution_operator_norm(op, *pair, perturbations=_as_perts(perts, y))
        ratios.append(est.value / base.value)
    return FactorTwoReport(op.k, base.value, np.array(ratios), list(points))


def default_probes(op: DiscreteOperator):
    """Load 1_[0,R] and the point functional u -> u(0.5)."""
    from .coeffs import constant

    f = constant(1.0, op.mesh.R)
    x = op.mesh.nodes
    g = np.zeros(op.n_dofs)
    i = int(np.searchsorted(x, 0.5))
    if x[i] == 0.5:
        g[i - 1] = 1.0
    else:
        t = (0.5 - x[i - 1]) / (x[i] - x[i - 1])
        if i - 1 >= 1:
            g[i - 2] = 1 - t
        g[i - 1] = t
    return f, g


def cauchy_residual(
    op: DiscreteOperator,
    perts: Sequence[PerturbationMatrix],
    center,
    radius: float,
    j: int = 0,
    nodes: int = 64,
    f=None,
    g: np.ndarray | None = None,
    region: HolomorphyRegion | None = None,
) -> float:
    """Relative defect of Cauchy's formula for ``F(y) = g^H u(y)`` on a circle in ``y_j``.

    With ``y_j = c_j + r e^{i theta}`` the contour integral
    ``(1/2 pi i) oint F(y) / (y - c) dy`` is the mean of ``F`` over the circle,
    evaluated with the trapezoid rule on ``nodes`` points.
    """
    c = center.y.copy() if isinstance(center, ParamPoint) else np.atleast_1d(np.asarray(center, dtype=complex)).copy()
    if region is not None:
        reach = np.abs(c)
        reach[j] += radius
        if np.any(reach > region.per_mode_radii * (1 + 1e-12)):
            raise RegionError("circle leaves the guaranteed region")
    f0, g0 = default_probes(op)
    f = f0 if f is None else f
    g = g0 if g is None else g
    b = load_vector(op.mesh, f) if not isinstance(f, np.ndarray) else op.mass @ f

    def F(y):
        A = system_matrix(op, _as_perts(perts, y))
        lu = op.lu if A is op.system else BandedLU(A)
        if lu.singular:
            raise NearPoleError("contour passes through a pole")
        return np.vdot(g, lu.solve(b))

    Fc = F(c)
    theta = 2 * np.pi * np.arange(nodes) / nodes
    total = 0.0
    for t in theta:
        y = c.copy()
        y[j] = c[j] + radius * np.exp(1j * t)
        total += F(y)
    mean = total / nodes
    return float(abs(mean - Fc) / abs(Fc))
