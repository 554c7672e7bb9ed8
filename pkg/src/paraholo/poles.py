"""Poles in y of the 1-d model solution operator.

Model: ``k^-2 u'' + (1/2 - y) u = 0`` on (0, 1], ``k^-2 u'' + u = 0`` for
x > 1, ``u(0) = 0`` and outgoing.  Matching ``A sin(k s x)`` to ``B e^{ikx}``
at x = 1 with ``s = sqrt(1/2 - y)`` gives the resonance condition

    tan(k s) = -i s.

Writing ``s = 1/sqrt(2) - omega/k`` and ``phi = k/sqrt(2) mod pi`` turns it
into ``tan(omega - phi) = i (1/sqrt(2) - omega/k)``; on the sequence
``k = 2 pi m sqrt(2)`` one has ``phi = 0``.  Back in y,
``y = sqrt(2) omega / k - omega^2 / k^2``.

The second route is discrete: poles are the ``y`` with ``A0 + y P1``
singular, i.e. ``y = 1/mu`` for eigenvalues ``mu`` of ``A0^-1 (-P1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .coeffs import model_family
from .discretize import (
    BandedLU,
    DiscreteOperator,
    Mesh,
    PerturbationMatrix,
    assemble_a0,
    assemble_perturbation,
    build_mesh,
)

__all__ = [
    "PoleEstimate",
    "SequenceRow",
    "SequenceReport",
    "ResonanceError",
    "omega_star",
    "sequence_k",
    "solve_resonance",
    "resonance_residual",
    "model_operator",
    "pencil_poles",
    "k_sequence_experiment",
    "kernel_function",
    "kernel_residual",
    "pole_map",
    "OMEGA_STAR_ABS",
    "ASYMPTOTIC_K_ABS_Y",
]

SQRT2 = math.sqrt(2.0)
INV_SQRT2 = 1.0 / SQRT2
OMEGA_STAR_ABS = math.atanh(INV_SQRT2)
ASYMPTOTIC_K_ABS_Y = SQRT2 * OMEGA_STAR_ABS
C1, C2 = 1.0, 1.5


class ResonanceError(ArithmeticError):
    pass


@dataclass
class PoleEstimate:
    k: float
    y: complex
    omega: complex
    newton_iters: int
    residual: float
    source: str

    @property
    def k_abs_y(self) -> float:
        return self.k * abs(self.y)


def sequence_k(m: int) -> float:
    return 2 * math.pi * m * SQRT2


def _newton(F, dF, z0: complex, tol: float, maxiter: int):
    z = complex(z0)
    for it in range(1, maxiter + 1):
        dz = F(z) / dF(z)
        z -= dz
        if abs(dz) <= tol * max(1.0, abs(z)):
            return z, it
    raise ResonanceError(f"Newton did not converge in {maxiter} iterations (last step {abs(dz):.2e})")


def omega_star(tol: float = 1e-15, maxiter: int = 50) -> complex:
    """Root of ``tan(omega) = i / sqrt(2)`` reached by Newton from 0.9i."""
    w, _ = _newton(
        lambda w: np.tan(w) - 1j * INV_SQRT2,
        lambda w: 1.0 / np.cos(w) ** 2,
        0.9j,
        tol,
        maxiter,
    )
    return w


def resonance_residual(k: float, y: complex) -> float:
    s = np.sqrt(complex(0.5 - y))
    return float(abs(np.tan(k * s) + 1j * s))


def _phase(k: float) -> float:
    # k/sqrt(2) reduced mod pi into [-pi/2, pi/2]
    return math.remainder(k * INV_SQRT2, math.pi)


def solve_resonance(k: float, m0: int = 5, tol: float = 1e-13, maxiter: int = 50) -> PoleEstimate:
    """Pole near ``sqrt(2) omega* / k`` from Newton on the omega-equation."""
    if k < sequence_k(m0) * (1 - 1e-12):
        raise ResonanceError(f"k = {k} is below 2 pi m0 sqrt(2) with m0 = {m0}")
    phi = _phase(k)
    ws = omega_star()
    w, it = _newton(
        lambda w: np.tan(w - phi) - 1j * (INV_SQRT2 - w / k),
        lambda w: 1.0 / np.cos(w - phi) ** 2 + 1j / k,
        ws + phi,
        tol,
        maxiter,
    )
    if abs(w - (ws + phi)) > 1.0:
        raise ResonanceError(f"root omega = {w} escaped the unit neighbourhood of omega*")
    y = SQRT2 * w / k - w**2 / k**2
    return PoleEstimate(float(k), complex(y), complex(w), it, resonance_residual(k, y), "transcendental")


def model_operator(k: float, ppw: float = 40.0, pollution_exp: float = 1.5) -> tuple[DiscreteOperator, PerturbationMatrix]:
    """A0 and the single perturbation matrix of the model family at wavenumber k."""
    fam = model_family()
    mesh = build_mesh(k, ppw, pollution_exp, fam.base.breakpoints)
    return assemble_a0(mesh, fam.base), assemble_perturbation(mesh, fam.modes[0], 0)


def _verify_pole(op: DiscreteOperator, pert: PerturbationMatrix, y: complex, v: np.ndarray, tol: float) -> tuple[bool, float]:
    """Certify ``sigma_min(A0 + y P) <= tol ||A0 + y P||_1`` via ``||A v|| / ||v||``.

    Two inverse-iteration steps sharpen the eigenvector first; the ratio is
    an upper bound on the smallest singular value.
    """
    A = (op.system + y * pert.matrix).tocsr()
    lu = BandedLU(A)
    if lu.singular:
        return True, 0.0
    for _ in range(2):
        v = lu.solve(v)
        v /= np.linalg.norm(v)
    ratio = float(np.linalg.norm(A @ v) / lu.norm1)
    return ratio <= tol, ratio


def pencil_poles(
    op: DiscreteOperator,
    pert: PerturbationMatrix,
    count: int = 1,
    dense_max: int = 2000,
    verify_tol: float = 1e-8,
) -> list[complex]:
    """The ``count`` poles nearest the origin of ``y -> (A0 + y P)^-1``.

    Eigenvalues of ``A0^-1 (-P)`` come from a dense solver up to
    ``dense_max`` unknowns, from shift-free ARPACK on the factorized
    operator above that.
    """
    n = op.n_dofs
    if n <= dense_max:
        Ad = op.system.toarray()
        Pd = pert.matrix.toarray()
        mu, V = la.eig(la.solve(Ad, -Pd))
    else:
        lu = op.lu
        Aop = spla.LinearOperator((n, n), matvec=lambda v: lu.solve(-(pert.matrix @ v)), dtype=complex)
        nev = min(n - 2, max(2 * count + 2, 6))
        mu, V = spla.eigs(Aop, k=nev, which="LM", tol=1e-14)
    keep = np.abs(mu) > 1e-8 * np.max(np.abs(mu))
    mu, V = mu[keep], V[:, keep]
    order = np.argsort(-np.abs(mu))
    poles = []
    for i in order:
        y = 1.0 / mu[i]
        ok, ratio = _verify_pole(op, pert, y, V[:, i].copy(), verify_tol)
        if not ok:
            warnings.warn(f"pencil candidate y = {y:.6g} failed verification (ratio {ratio:.2e}); dropped")
            continue
        poles.append(complex(y))
        if len(poles) == count:
            break
    return poles


@dataclass
class SequenceRow:
    m: int
    k: float
    y_transcendental: complex
    residual: float
    y_pencil: complex | None = None
    agreement: float | None = None

    @property
    def k_abs_y(self) -> float:
        return self.k * abs(self.y_transcendental)


@dataclass
class SequenceReport:
    rows: list[SequenceRow]
    agreement_tol: float = 1e-3
    bracket: tuple[float, float] = (C1, C2)
    errors: list[str] = field(default_factory=list)

    @property
    def k_abs_y(self) -> np.ndarray:
        return np.array([r.k_abs_y for r in self.rows])

    @property
    def min_k_abs_y(self) -> float:
        return float(self.k_abs_y.min())

    @property
    def max_k_abs_y(self) -> float:
        return float(self.k_abs_y.max())

    @property
    def bracket_ok(self) -> bool:
        lo, hi = self.bracket
        return bool(np.all((self.k_abs_y >= lo) & (self.k_abs_y <= hi)))

    @property
    def agreement_ok(self) -> bool:
        return all(r.agreement <= self.agreement_tol for r in self.rows if r.agreement is not None)

    @property
    def ok(self) -> bool:
        return self.bracket_ok and self.agreement_ok and not self.errors

    def to_csv(self) -> str:
        lines = ["m,k,re_y,im_y,k_abs_y,source,agreement"]
        for r in self.rows:
            agree = "" if r.agreement is None else f"{r.agreement:.6e}"
            y = r.y_transcendental
            lines.append(f"{r.m},{r.k:.15g},{y.real:.15e},{y.imag:.15e},{r.k * abs(y):.12f},transcendental,{agree}")
            if r.y_pencil is not None:
                y = r.y_pencil
                lines.append(f"{r.m},{r.k:.15g},{y.real:.15e},{y.imag:.15e},{r.k * abs(y):.12f},pencil,{agree}")
        return "\n".join(lines) + "\n"


def k_sequence_experiment(
    m_range: tuple[int, int],
    pencil_upto: int | None = 20,
    ppw: float = 40.0,
    pollution_exp: float = 1.5,
    agreement_tol: float = 1e-3,
) -> SequenceReport:
    m_lo, m_hi = m_range
    if m_lo < 5:
        raise ValueError("m_lo must be at least 5")
    rows, errors = [], []
    for m in range(m_lo, m_hi + 1):
        k = sequence_k(m)
        pe = solve_resonance(k)
        row = SequenceRow(m, k, pe.y, pe.residual)
        if pencil_upto is not None and m <= pencil_upto:
            op, pert = model_operator(k, ppw, pollution_exp)
            found = pencil_poles(op, pert, 1)
            if found:
                row.y_pencil = found[0]
                row.agreement = abs(found[0] - pe.y) / abs(pe.y)
            else:
                errors.append(f"m={m}: no verified pencil pole")
        rows.append(row)
    return SequenceReport(rows, agreement_tol, (C1, C2), errors)


def kernel_function(k: float, y: complex):
    """Explicit candidate kernel: ``sin(k s x)`` on [0, 1], ``B e^{ikx}`` beyond, C^1 at x = 1."""
    s = np.sqrt(complex(0.5 - y))
    B = np.sin(k * s) * np.exp(-1j * k)

    def u(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 1.0, np.sin(k * s * x), B * np.exp(1j * k * x))

    return u


def kernel_residual(k: float, y: complex, mesh: Mesh) -> float:
    """``||(A0 + y P1) I_h u||_* / ||I_h u||_L2`` for the interpolated explicit kernel.

    The numerator is the L2 norm of the discrete Riesz representer of the
    residual functional, i.e. ``sqrt(r^H M^-1 r)``.
    """
    fam = model_family(mesh.R)
    op = assemble_a0(mesh, fam.base)
    P = assemble_perturbation(mesh, fam.modes[0])
    u = kernel_function(k, y)(mesh.nodes[1:])
    r = (op.system + y * P.matrix) @ u
    num = math.sqrt(np.vdot(r, op.mass_solve(r)).real)
    den = math.sqrt(np.vdot(u, op.mass @ u).real)
    return num / den


def pole_map(
    k: float,
    re_range: tuple[float, float],
    im_range: tuple[float, float],
    grid: int = 200,
    ppw: float = 20.0,
    pollution_exp: float = 1.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """log10 of the 1-norm condition estimate of ``A0 + y P1`` on a grid in complex y."""
    op, pert = model_operator(k, ppw, pollution_exp)
    re = np.linspace(*re_range, grid)
    im = np.linspace(*im_range, grid)
    out = np.empty((grid, grid))
    for a, yi in enumerate(im):
        for b, yr in enumerate(re):
            lu = BandedLU((op.system + complex(yr, yi) * pert.matrix).tocsr())
            c = lu.condition_1norm()
            out[a, b] = np.log10(c) if np.isfinite(c) else np.inf
    return re, im, out
