"""P1 finite elements for the truncated 1-d Helmholtz problem on (0, R).

Weak form (Dirichlet at x = 0, outgoing impedance at x = R)::

    a(u, v) = int (k^-2 u' conj(v)' - n u conj(v)) dx - i k^-1 u(R) conj(v)(R)

The degree of freedom at x = 0 is eliminated, so every system matrix acts on
the nodal values at x_1, ..., x_M.  Element integrals of piece polynomials
times products of hat functions use Gauss-Legendre rules of sufficient degree
and are therefore exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.linalg import LinearOperator, onenormest

from .coeffs import PiecewiseCoefficient, combine

__all__ = [
    "DiscretizationError",
    "NearPoleError",
    "Mesh",
    "build_mesh",
    "BandedLU",
    "DiscreteOperator",
    "PerturbationMatrix",
    "Solution",
    "assemble_a0",
    "assemble_perturbation",
    "coefficient_mass",
    "load_vector",
    "system_matrix",
    "solve",
    "solve_load",
    "h2k_seminorm_via_pde",
    "l2_error",
    "perturbed_coefficient",
    "NEAR_POLE_CONDITION",
]

NEAR_POLE_CONDITION = 1e14
RESIDUAL_TOL = 1e-10

Source = Union[PiecewiseCoefficient, Callable[[np.ndarray], np.ndarray]]


class DiscretizationError(ValueError):
    pass


class NearPoleError(ArithmeticError):
    """The perturbed system is singular or numerically singular (at or near a pole)."""

    def __init__(self, msg, condition=np.inf):
        super().__init__(msg)
        self.condition = condition


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    k: float
    ppw: float
    pollution_exp: float
    h_target: float

    @property
    def R(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def n_dofs(self) -> int:
        return self.nodes.size - 1

    @cached_property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_max(self) -> float:
        return float(self.h.max())

    def contains(self, x: float) -> bool:
        i = np.searchsorted(self.nodes, x)
        return i < self.nodes.size and self.nodes[i] == x

    @cached_property
    def full_mass(self) -> sp.csr_matrix:
        return coefficient_mass(self, None, full=True).real.tocsr()

    @cached_property
    def full_stiffness(self) -> sp.csr_matrix:
        inv_h = 1.0 / self.h
        main = np.zeros(self.nodes.size)
        main[:-1] += inv_h
        main[1:] += inv_h
        return sp.diags([-inv_h, main, -inv_h], [-1, 0, 1], format="csr")

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return self.full_mass[1:, 1:].tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return self.full_stiffness[1:, 1:].tocsr()

    def with_dirichlet(self, values: np.ndarray) -> np.ndarray:
        """Prepend the eliminated x = 0 value to a dof vector."""
        return np.concatenate([[0.0], values])


def build_mesh(
    k: float,
    ppw: float = 20.0,
    pollution_exp: float = 1.5,
    coeff_breakpoints: Sequence[float] = (),
    R: float = 2.0,
) -> Mesh:
    """Mesh of (0, R), uniform on each breakpoint interval.

    The target element size is ``min(2 pi / (k ppw), c k^-pollution_exp)``
    with ``c`` fixed so that both rules agree at ``k = 10``.
    """
    if not k > 0:
        raise DiscretizationError(f"wavenumber must be positive, got {k}")
    if not R > 0:
        raise DiscretizationError("empty domain")
    if ppw < 10:
        raise DiscretizationError(f"ppw must be at least 10, got {ppw}")
    c = 2 * math.pi / (10.0 * ppw) * 10.0**pollution_exp
    h_target = min(2 * math.pi / (k * ppw), c * k ** (-pollution_exp))
    cuts = {0.0, float(R)}
    for b in coeff_breakpoints:
        b = float(b)
        if b < 0 or b > R:
            raise DiscretizationError(f"breakpoint {b} outside [0, {R}]")
        cuts.add(b)
    cuts = sorted(cuts)
    parts = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, math.ceil((b - a) / h_target - 1e-9))
        seg = np.linspace(a, b, n + 1)
        seg[-1] = b
        parts.append(seg if not parts else seg[1:])
    return Mesh(np.concatenate(parts), float(k), float(ppw), float(pollution_exp), h_target)


def _gauss(npts: int):
    return np.polynomial.legendre.leggauss(npts)


def _element_points(mesh: Mesh, npts: int):
    t, w = _gauss(npts)
    a, h = mesh.nodes[:-1, None], mesh.h[:, None]
    x = a + 0.5 * h * (t[None, :] + 1.0)
    wx = 0.5 * h * w[None, :]
    phi_r = (x - a) / h
    return x, wx, 1.0 - phi_r, phi_r


def _tridiag_from_elements(m00, m01, m11, full: bool) -> sp.csr_matrix:
    main = np.zeros(m00.size + 1, dtype=np.result_type(m00, m11))
    main[:-1] += m00
    main[1:] += m11
    A = sp.diags([m01, main, m01], [-1, 0, 1], format="csr")
    return A if full else A[1:, 1:].tocsr()


def coefficient_mass(mesh: Mesh, coeff: PiecewiseCoefficient | None, full: bool = False) -> sp.csr_matrix:
    """Matrix of ``int coeff phi_b conj(phi_a)`` (exact quadrature)."""
    deg = 0 if coeff is None else coeff.degree
    x, wx, p0, p1 = _element_points(mesh, deg // 2 + 2)
    c = np.ones_like(x, dtype=complex) if coeff is None else _coeff_on_elements(mesh, coeff, x)
    m00 = np.sum(wx * c * p0 * p0, axis=1)
    m01 = np.sum(wx * c * p0 * p1, axis=1)
    m11 = np.sum(wx * c * p1 * p1, axis=1)
    return _tridiag_from_elements(m00, m01, m11, full)


def _coeff_on_elements(mesh: Mesh, coeff: PiecewiseCoefficient, x: np.ndarray) -> np.ndarray:
    if abs(coeff.R - mesh.R) > 1e-14:
        raise DiscretizationError("coefficient and mesh live on different domains")
    for b in coeff.breakpoints:
        if not mesh.contains(b):
            raise DiscretizationError(f"coefficient breakpoint {b} is not a mesh node")
    # evaluate each element on its own piece (element midpoints are unambiguous)
    mids = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
    idx = coeff.piece_index(mids)
    out = np.empty(x.shape, dtype=complex)
    for i in np.unique(idx):
        sel = idx == i
        out[sel] = np.polynomial.polynomial.polyval(x[sel], coeff.pieces[i])
    return out


class BandedLU:
    """LU factorization with partial pivoting of a banded matrix (LAPACK gbtrf)."""

    def __init__(self, A: sp.spmatrix):
        A = sp.csr_matrix(A, dtype=complex)
        n = A.shape[0]
        coo = A.tocoo()
        off = coo.col - coo.row
        kl = int(max(0, -off.min())) if off.size else 0
        ku = int(max(0, off.max())) if off.size else 0
        ab = np.zeros((2 * kl + ku + 1, n), dtype=complex)
        for d in range(-kl, ku + 1):
            diag = A.diagonal(d)
            if d >= 0:
                ab[kl + ku - d, d:] = diag
            else:
                ab[kl + ku - d, : n + d] = diag
        lu, piv, info = lapack.zgbtrf(ab, kl, ku)
        if info < 0:
            raise DiscretizationError(f"zgbtrf: illegal argument {-info}")
        self.n, self.kl, self.ku = n, kl, ku
        self.singular = info > 0
        self._lu, self._piv = lu, piv
        self.norm1 = float(abs(A).sum(axis=0).max()) if n else 0.0

    def solve(self, b: np.ndarray, trans: int = 0) -> np.ndarray:
        """trans: 0 solves A x = b, 1 solves A^T x = b, 2 solves A^H x = b."""
        if self.singular:
            raise NearPoleError("matrix is exactly singular", np.inf)
        x, info = lapack.zgbtrs(self._lu, self.kl, self.ku, np.asarray(b, dtype=complex), self._piv, trans=trans)
        if info != 0:
            raise DiscretizationError(f"zgbtrs failed with info={info}")
        return x

    def condition_1norm(self) -> float:
        """Estimate of ``||A||_1 ||A^{-1}||_1`` (Higham's block 1-norm estimator)."""
        if self.singular:
            return np.inf
        inv = LinearOperator(
            (self.n, self.n),
            matvec=lambda v: self.solve(v),
            rmatvec=lambda v: self.solve(v, trans=2),
            dtype=complex,
        )
        with np.errstate(all="ignore"):
            est = onenormest(inv)
        return float(self.norm1 * est) if np.isfinite(est) else np.inf


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Galerkin matrices of ``a0`` on a mesh (x = 0 dof eliminated)."""

    mesh: Mesh
    n0: PiecewiseCoefficient
    system: sp.csr_matrix
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    n0_mass: sp.csr_matrix
    boundary_term: sp.csr_matrix

    @property
    def k(self) -> float:
        return self.mesh.k

    @property
    def n_dofs(self) -> int:
        return self.system.shape[0]

    @cached_property
    def lu(self) -> BandedLU:
        return BandedLU(self.system)

    @cached_property
    def mass_cholesky(self) -> np.ndarray:
        M = self.mass
        ab = np.zeros((2, M.shape[0]))
        ab[0, 1:] = M.diagonal(1)
        ab[1, :] = M.diagonal(0)
        return la.cholesky_banded(ab)

    def mass_solve(self, b: np.ndarray) -> np.ndarray:
        return la.cho_solve_banded((self.mass_cholesky, False), b)


@dataclass(frozen=True, eq=False)
class PerturbationMatrix:
    """``(P_j)_{ab} = -int psi_j phi_b conj(phi_a)``; a_p(y) contributes sum_j y_j P_j."""

    matrix: sp.csr_matrix
    mode_index: int
    psi: PiecewiseCoefficient


@dataclass(eq=False)
class Solution:
    values: np.ndarray
    mesh: Mesh
    rhs: str
    residual: float
    condition: float = field(default=np.nan)

    @property
    def dofs(self) -> np.ndarray:
        return self.values[1:]


def assemble_a0(mesh: Mesh, n0: PiecewiseCoefficient) -> DiscreteOperator:
    k = mesh.k
    M = mesh.mass
    K = mesh.stiffness
    Mn = coefficient_mass(mesh, n0)
    n = M.shape[0]
    B = sp.csr_matrix(([-1j / k], ([n - 1], [n - 1])), shape=(n, n))
    S = (K.astype(complex) / k**2 - Mn + B).tocsr()
    return DiscreteOperator(mesh, n0, S, M, K, Mn, B)


def assemble_perturbation(mesh: Mesh, psi: PiecewiseCoefficient, j: int = 0) -> PerturbationMatrix:
    supp = psi.support()
    if supp is not None and supp[1] >= mesh.R:
        raise DiscretizationError("perturbation support touches x = R")
    return PerturbationMatrix(-coefficient_mass(mesh, psi), j, psi)


def system_matrix(op: DiscreteOperator, perturbations: Sequence[tuple[PerturbationMatrix, complex]] = ()) -> sp.csr_matrix:
    live = [(P, complex(y)) for P, y in perturbations if y != 0]
    if not live:
        return op.system
    A = op.system.copy()
    for P, y in live:
        A = A + y * P.matrix
    return A.tocsr()


def perturbed_coefficient(op: DiscreteOperator, perturbations) -> PiecewiseCoefficient:
    """n0 + sum_j y_j psi_j for the given perturbation list."""
    live = [(P.psi, complex(y)) for P, y in perturbations if y != 0]
    if not live:
        return op.n0
    return combine((op.n0, *(c for c, _ in live)), (1, *(y for _, y in live)))


def load_vector(mesh: Mesh, f: Source, npts: int | None = None) -> np.ndarray:
    """``F_a = int f conj(phi_a)`` on the free dofs."""
    if isinstance(f, PiecewiseCoefficient):
        x, wx, p0, p1 = _element_points(mesh, f.degree // 2 + 2 if npts is None else npts)
        fx = _coeff_on_elements(mesh, f, x)
    else:
        x, wx, p0, p1 = _element_points(mesh, 8 if npts is None else npts)
        fx = np.asarray(f(x), dtype=complex)
    b = np.zeros(mesh.nodes.size, dtype=complex)
    b[:-1] += np.sum(wx * fx * p0, axis=1)
    b[1:] += np.sum(wx * fx * p1, axis=1)
    return b[1:]


def _relative_residual(A, u, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ u - b)
    return float(r / nb) if nb > 0 else float(r)


def solve_load(
    op: DiscreteOperator,
    perturbations: Sequence[tuple[PerturbationMatrix, complex]],
    b: np.ndarray,
    rhs: str = "load vector",
    check_condition: bool = True,
) -> Solution:
    A = system_matrix(op, perturbations)
    lu = op.lu if A is op.system else BandedLU(A)
    if lu.singular:
        raise NearPoleError("system matrix is exactly singular: at or near pole")
    cond = lu.condition_1norm() if check_condition else np.nan
    if check_condition and cond > NEAR_POLE_CONDITION:
        raise NearPoleError(f"condition estimate {cond:.3e} exceeds {NEAR_POLE_CONDITION:.0e}: at or near pole", cond)
    b = np.asarray(b, dtype=complex)
    u = lu.solve(b)
    res = _relative_residual(A, u, b)
    if res > RESIDUAL_TOL:
        u = u + lu.solve(b - A @ u)
        res = _relative_residual(A, u, b)
        if res > RESIDUAL_TOL:
            raise NearPoleError(f"relative residual {res:.2e} above {RESIDUAL_TOL:.0e}", cond)
    return Solution(op.mesh.with_dirichlet(u), op.mesh, rhs, res, cond)


def solve(
    op: DiscreteOperator,
    perturbations: Sequence[tuple[PerturbationMatrix, complex]],
    f: Source,
) -> Solution:
    desc = f.to_json() if isinstance(f, PiecewiseCoefficient) else getattr(f, "__name__", "callable")
    return solve_load(op, perturbations, load_vector(op.mesh, f), rhs=desc)


def _p1_on_elements(mesh: Mesh, values: np.ndarray, p0, p1) -> np.ndarray:
    return values[:-1, None] * p0 + values[1:, None] * p1


def h2k_seminorm_via_pde(sol: Solution, n: PiecewiseCoefficient, f: Source, k: float, npts: int = 8) -> float:
    """``k^-2 ||u''||_L2`` evaluated as ``||f + n u||_L2`` from the strong equation."""
    mesh = sol.mesh
    if abs(mesh.k - k) > 1e-12 * k:
        raise DiscretizationError(f"solution was computed at k = {mesh.k}, not {k}")
    x, wx, p0, p1 = _element_points(mesh, npts)
    u = _p1_on_elements(mesh, sol.values, p0, p1)
    nx = _coeff_on_elements(mesh, n, x)
    fx = _coeff_on_elements(mesh, f, x) if isinstance(f, PiecewiseCoefficient) else np.asarray(f(x), dtype=complex)
    return float(np.sqrt(np.sum(wx * np.abs(fx + nx * u) ** 2)))


def l2_error(sol: Solution, exact: Callable[[np.ndarray], np.ndarray], npts: int = 8) -> float:
    x, wx, p0, p1 = _element_points(sol.mesh, npts)
    u = _p1_on_elements(sol.mesh, sol.values, p0, p1)
    return float(np.sqrt(np.sum(wx * np.abs(u - exact(x)) ** 2)))
