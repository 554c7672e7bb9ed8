"""Weighted norms and solution-operator norm estimates.

All operator norms are measured between the continuous norms of P1
functions (mass/stiffness weighted), never Euclidean vector norms.  The
estimator is power iteration on the self-adjoint composition
``G_s^{-1} T^H G_t T`` whose largest eigenvalue is ``||T||^2``.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .coeffs import PiecewiseCoefficient
from .discretize import (
    DiscreteOperator,
    PerturbationMatrix,
    BandedLU,
    assemble_a0,
    build_mesh,
    coefficient_mass,
    perturbed_coefficient,
    system_matrix,
)

__all__ = [
    "NormKind",
    "ConvergenceError",
    "OperatorNormEstimate",
    "SweepTable",
    "NormRelationReport",
    "weighted_norm",
    "power_norm",
    "solution_operator_norm",
    "k_sweep",
    "norm_relation_check",
    "DEFAULT_SEED",
]

DEFAULT_SEED = 42


class NormKind(enum.Enum):
    L2 = "L2"
    H1K = "H1k"
    H2K = "H2k"
    # discrete dual of H1k; only meaningful as a source norm
    DUAL = "H*"


class ConvergenceError(RuntimeError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


@dataclass
class OperatorNormEstimate:
    value: float
    pair: tuple[NormKind, NormKind]
    k: float
    iterations: int
    rel_change: float
    history: list[float] = field(default_factory=list, repr=False)


def weighted_norm(v: np.ndarray, kind: NormKind, mesh, *, n: PiecewiseCoefficient | None = None, f=None) -> float:
    """L2 / H1k / H2k norm of a P1 function.

    ``v`` may hold all nodal values (length M+1) or only the free dofs
    (length M, Dirichlet value 0 implied).  H2k needs the coefficient ``n``
    and source ``f`` of the equation ``v`` solves.
    """
    v = np.asarray(v)
    if v.size == mesh.nodes.size:
        M, K, full = mesh.full_mass, mesh.full_stiffness, v
    elif v.size == mesh.n_dofs:
        M, K, full = mesh.mass, mesh.stiffness, mesh.with_dirichlet(v)
    else:
        raise ValueError(f"vector of length {v.size} does not fit a mesh with {mesh.nodes.size} nodes")
    sq = np.vdot(v, M @ v).real
    if kind in (NormKind.H1K, NormKind.H2K):
        sq += np.vdot(v, K @ v).real / mesh.k**2
    if kind is NormKind.H2K:
        if n is None or f is None:
            raise ValueError("H2k norm needs the coefficient n and the source f")
        from .discretize import Solution, h2k_seminorm_via_pde

        sol = Solution(full, mesh, "", 0.0)
        sq += h2k_seminorm_via_pde(sol, n, f, mesh.k) ** 2
    elif kind is NormKind.DUAL:
        raise ValueError("H* is a dual norm on load vectors, not a function norm")
    return float(math.sqrt(max(sq, 0.0)))


def power_norm(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_adjoint: Callable[[np.ndarray], np.ndarray],
    source_gram: Callable[[np.ndarray], np.ndarray],
    source_gram_solve: Callable[[np.ndarray], np.ndarray],
    target_gram: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float = 1e-8,
    maxiter: int = 500,
    seed: int = DEFAULT_SEED,
    raise_on_failure: bool = True,
):
    """``sup ||T x||_t / ||x||_s`` by power iteration.

    The norms are ``||x||_s^2 = x^H G_s x`` and ``||z||_t^2 = z^H G_t z``;
    ``apply_adjoint`` is the Euclidean adjoint of ``apply``.  Returns
    ``(value, iterations, rel_change, history)``.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= math.sqrt(np.vdot(x, source_gram(x)).real)
    lam_old = 0.0
    history = []
    rel = np.inf
    for it in range(1, maxiter + 1):
        Tx = apply(x)
        GTx = target_gram(Tx)
        lam = np.vdot(Tx, GTx).real  # Rayleigh quotient, ||x||_s = 1
        history.append(math.sqrt(max(lam, 0.0)))
        rel = abs(lam - lam_old) / lam if lam > 0 else np.inf
        if rel <= tol:
            return history[-1], it, rel, history
        lam_old = lam
        z = source_gram_solve(apply_adjoint(GTx))
        nz = math.sqrt(np.vdot(z, source_gram(z)).real)
        if nz == 0:
            return 0.0, it, 0.0, history
        x = z / nz
    if raise_on_failure:
        raise ConvergenceError(f"power iteration did not reach rel_change {tol} in {maxiter} iterations", history[-1])
    return history[-1], maxiter, rel, history


def _gram_h1k(op: DiscreteOperator):
    return (op.stiffness / op.k**2 + op.mass).tocsr()


def _banded_spd_solver(G: sp.spmatrix):
    import scipy.linalg as la

    ab = np.zeros((2, G.shape[0]))
    ab[0, 1:] = G.diagonal(1)
    ab[1, :] = G.diagonal(0)
    c = la.cholesky_banded(ab)
    return lambda b: la.cho_solve_banded((c, False), b)


def solution_operator_norm(
    op: DiscreteOperator,
    source: NormKind = NormKind.L2,
    target: NormKind = NormKind.L2,
    perturbations: Sequence[tuple[PerturbationMatrix, complex]] = (),
    tol: float = 1e-8,
    maxiter: int = 500,
    seed: int = DEFAULT_SEED,
    lu: BandedLU | None = None,
) -> OperatorNormEstimate:
    """Norm of the discrete solve map.

    For an L2 source the map is ``f -> u`` with ``A u = M f`` (``f`` a P1
    function).  For the H* source the map is ``F -> u`` with ``A u = F`` and
    ``||F||_* = sqrt(F^H G^{-1} F)``, ``G`` the H1k Gram matrix.
    """
    A = system_matrix(op, perturbations)
    if lu is None:
        lu = op.lu if A is op.system else BandedLU(A)
    M = op.mass
    G = _gram_h1k(op)
    n = op.n_dofs

    if source is NormKind.L2:
        load, load_adj = (lambda f: M @ f), (lambda g: M @ g)
        s_gram, s_solve = (lambda x: M @ x), op.mass_solve
    elif source is NormKind.DUAL:
        g_solve = _banded_spd_solver(G)
        load, load_adj = (lambda F: F), (lambda g: g)
        s_gram, s_solve = g_solve, (lambda x: G @ x)
    else:
        raise ValueError(f"unsupported source norm {source}")

    if target in (NormKind.L2, NormKind.H1K):
        Gt = M if target is NormKind.L2 else G
        apply = lambda x: lu.solve(load(x))
        apply_adj = lambda z: load_adj(lu.solve(z, trans=2))
        t_gram = lambda z: Gt @ z
    elif target is NormKind.H2K:
        if source is not NormKind.L2:
            raise ValueError("H2k target is only available for L2 sources")
        # ||u||_{H2k}^2 = ||u||_{H1k}^2 + ||f + n u||^2 on the stacked vector (u, f)
        ncoef = perturbed_coefficient(op, perturbations)
        Mn = coefficient_mass(op.mesh, ncoef)
        Mnbar = coefficient_mass(op.mesh, _conj(ncoef))
        Mabs = coefficient_mass(op.mesh, _abs2(ncoef))
        Guu = (G + Mabs).tocsr()

        def apply(x):
            return np.concatenate([lu.solve(M @ x), x])

        def apply_adj(z):
            a, b = z[:n], z[n:]
            return M @ lu.solve(a, trans=2) + b

        def t_gram(z):
            u, f = z[:n], z[n:]
            return np.concatenate([Guu @ u + Mnbar @ f, Mn @ u + M @ f])
    else:
        raise ValueError(f"unsupported target norm {target}")

    value, it, rel, hist = power_norm(apply, apply_adj, s_gram, s_solve, t_gram, n, tol, maxiter, seed)
    return OperatorNormEstimate(value, (source, target), op.k, it, rel, hist)


def _conj(c: PiecewiseCoefficient) -> PiecewiseCoefficient:
    return PiecewiseCoefficient(c.breakpoints, tuple(np.conj(p) for p in c.pieces))


def _abs2(c: PiecewiseCoefficient) -> PiecewiseCoefficient:
    from numpy.polynomial import polynomial as P

    return PiecewiseCoefficient(c.breakpoints, tuple(P.polymul(p, np.conj(p)) for p in c.pieces))


@dataclass
class SweepTable:
    ks: np.ndarray
    estimates: list[OperatorNormEstimate]
    slope: float
    intercept: float
    residual: float
    fit_ks: np.ndarray
    complete: bool = True
    error: str | None = None

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])

    @property
    def min_ratio(self) -> float:
        """min over the sweep of estimate / k."""
        return float(np.min(self.values / self.ks[: len(self.estimates)]))

    def to_csv(self) -> str:
        lines = ["k,norm,iterations"]
        for k, e in zip(self.ks, self.estimates):
            lines.append(f"{k:.12g},{e.value:.12g},{e.iterations}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual}


def _sweep_point(args):
    n0_dict, k, pair, ppw, pexp, R = args
    n0 = PiecewiseCoefficient.from_dict(n0_dict)
    mesh = build_mesh(k, ppw, pexp, n0.breakpoints, R)
    op = assemble_a0(mesh, n0)
    return solution_operator_norm(op, pair[0], pair[1])


def fit_loglog(ks: np.ndarray, values: np.ndarray) -> tuple[float, float, float]:
    """OLS fit of log(values) = slope log(k) + intercept; returns rms residual too."""
    X = np.log(ks)
    Y = np.log(values)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = float(np.sqrt(np.mean((Y - (slope * X + intercept)) ** 2)))
    return float(slope), float(intercept), resid


def k_sweep(
    family_n0: PiecewiseCoefficient,
    ks: Sequence[float],
    pair: tuple[NormKind, NormKind] = (NormKind.L2, NormKind.L2),
    ppw: float = 20.0,
    pollution_exp: float = 1.5,
    workers: int | None = 1,
) -> SweepTable:
    """Norm estimates over ``ks`` and a log-log slope fitted on the upper half of the range."""
    ks = np.asarray(ks, dtype=float)
    if np.any(np.diff(ks) <= 0):
        raise ValueError("ks must be strictly increasing")
    if ks.min() < 5 or ks.max() > 500:
        raise ValueError("ks must lie in [5, 500]")
    tasks = [(family_n0.to_dict(), float(k), pair, ppw, pollution_exp, family_n0.R) for k in ks]
    estimates: list[OperatorNormEstimate] = []
    error = None
    workers = workers or int(os.environ.get("PARAHOLO_WORKERS", os.cpu_count() or 1))
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                for est in ex.map(_sweep_point, tasks):
                    estimates.append(est)
        else:
            for t in tasks:
                estimates.append(_sweep_point(t))
    except Exception as exc:  # partial table is kept
        error = f"{type(exc).__name__}: {exc}"
    done = ks[: len(estimates)]
    fit_ks = done[len(done) // 2:]
    if fit_ks.size >= 2:
        vals = np.array([e.value for e in estimates])[len(done) // 2:]
        slope, intercept, resid = fit_loglog(fit_ks, vals)
    else:
        slope = intercept = resid = float("nan")
    return SweepTable(ks, estimates, slope, intercept, resid, fit_ks, error is None, error)


@dataclass
class NormRelationReport:
    k: float
    n_min: float
    n_max: float
    a_min: float
    dual_to_h: float
    l2_to_h: float
    l2_to_l2: float
    lhs1: float
    rhs1: float
    lhs2: float
    rhs2: float
    small_term2: float

    @property
    def holds1(self) -> bool:
        return self.lhs1 <= self.rhs1

    @property
    def holds2(self) -> bool:
        return self.lhs2 <= self.rhs2

    @property
    def ok(self) -> bool:
        return self.holds1 and self.holds2

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d.update(holds1=self.holds1, holds2=self.holds2)
        return d


def norm_relation_check(op: DiscreteOperator, a_min: float = 1.0) -> NormRelationReport:
    """Evaluate both sides of the dual/L2 solution-operator norm inequalities.

    (1) ||A0^-1||_{H*->H} <= (1 + 2 n_max ||A0^-1||_{L2->H}) / min(A_min, n_min)
    (2) ||A0^-1||_{L2->H} <= sqrt(3 n_max / (2 A_min) + 1) ||A0^-1||_{L2->L2} + 1 / (2 n_min k^2)
    """
    n_min, n_max = op.n0.real_bounds()
    dual_h = solution_operator_norm(op, NormKind.DUAL, NormKind.H1K).value
    l2_h = solution_operator_norm(op, NormKind.L2, NormKind.H1K).value
    l2_l2 = solution_operator_norm(op, NormKind.L2, NormKind.L2).value
    rhs1 = (1 + 2 * n_max * l2_h) / min(a_min, n_min)
    small = 1.0 / (2 * n_min * op.k**2)
    rhs2 = math.sqrt(3 * n_max / (2 * a_min) + 1) * l2_l2 + small
    return NormRelationReport(op.k, n_min, n_max, a_min, dual_h, l2_h, l2_l2, dual_h, rhs1, l2_h, rhs2, small)
