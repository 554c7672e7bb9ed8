"""Piecewise-polynomial coefficients on [0, R] and affine parametric families.

A coefficient is stored as a list of breakpoints ``0 = b_0 < ... < b_P = R``
and one polynomial per interval, with complex coefficients in ascending
powers of the global coordinate ``x``.  Values at an interior breakpoint are
taken from the piece on the right; the value at ``x = R`` comes from the last
piece.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

__all__ = [
    "CoefficientDomainError",
    "PiecewiseCoefficient",
    "AffineFamily",
    "ParamPoint",
    "constant",
    "indicator",
    "instantiate",
    "sup_norm",
    "w1inf_norm",
    "scale",
    "model_n0",
    "model_family",
    "combine",
]


class CoefficientDomainError(ValueError):
    """Raised for evaluation outside [0, R] or inconsistent coefficient data."""


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    if c.size == 0:
        return np.zeros(1, dtype=complex)
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return np.zeros(1, dtype=complex)
    return c[: nz[-1] + 1]


@dataclass(frozen=True, eq=False)
class PiecewiseCoefficient:
    """Right-continuous piecewise polynomial on ``[breakpoints[0], breakpoints[-1]]``.

    ``pieces[i]`` holds ascending power coefficients (in global ``x``) valid on
    ``[breakpoints[i], breakpoints[i+1])``.  ``kinds`` only records whether a
    piece was declared constant, so that JSON descriptors round-trip.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[np.ndarray, ...]
    kinds: tuple[str, ...] = field(default=())

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if len(bp) < 2:
            raise CoefficientDomainError("need at least two breakpoints")
        if bp[0] != 0.0:
            raise CoefficientDomainError("first breakpoint must be 0")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise CoefficientDomainError("breakpoints must be strictly increasing")
        if len(self.pieces) != len(bp) - 1:
            raise CoefficientDomainError(
                f"{len(bp) - 1} intervals but {len(self.pieces)} pieces"
            )
        pieces = tuple(_trim(np.atleast_1d(p)) for p in self.pieces)
        kinds = self.kinds or tuple("const" if p.size == 1 else "poly" for p in pieces)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "kinds", tuple(kinds))

    @property
    def R(self) -> float:
        return self.breakpoints[-1]

    @property
    def degree(self) -> int:
        return max(p.size - 1 for p in self.pieces)

    @property
    def is_real(self) -> bool:
        return all(np.all(p.imag == 0) for p in self.pieces)

    def piece_index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > self.R)) or np.any(np.isnan(x)):
            raise CoefficientDomainError(f"x outside [0, {self.R}]")
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.minimum(idx, len(self.pieces) - 1)

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        idx = self.piece_index(x_arr)
        out = np.empty(x_arr.shape, dtype=complex)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = P.polyval(x_arr[sel], self.pieces[i])
        return out if out.ndim else complex(out)

    def derivative(self) -> "PiecewiseCoefficient":
        return PiecewiseCoefficient(
            self.breakpoints, tuple(P.polyder(p) if p.size > 1 else np.zeros(1) for p in self.pieces)
        )

    def is_continuous(self, atol: float = 0.0) -> bool:
        for i, b in enumerate(self.breakpoints[1:-1]):
            left = P.polyval(b, self.pieces[i])
            right = P.polyval(b, self.pieces[i + 1])
            if abs(left - right) > atol:
                return False
        return True

    def support(self) -> tuple[float, float] | None:
        """Closed hull of the pieces that are not identically zero."""
        live = [i for i, p in enumerate(self.pieces) if np.any(p != 0)]
        if not live:
            return None
        return self.breakpoints[live[0]], self.breakpoints[live[-1] + 1]

    def real_bounds(self) -> tuple[float, float]:
        """(ess inf, ess sup) of a real-valued coefficient."""
        if not self.is_real:
            raise CoefficientDomainError("bounds only defined for real coefficients")
        lo, hi = np.inf, -np.inf
        for (a, b), p in zip(self._intervals(), self.pieces):
            pts = _candidate_points(p.real, a, b)
            vals = P.polyval(pts, p.real)
            lo, hi = min(lo, vals.min()), max(hi, vals.max())
        return float(lo), float(hi)

    def _intervals(self):
        return zip(self.breakpoints[:-1], self.breakpoints[1:])

    def to_dict(self) -> dict:
        pieces = []
        for kind, p in zip(self.kinds, self.pieces):
            if kind == "const" and p.size == 1:
                pieces.append({"kind": "const", "re": float(p[0].real), "im": float(p[0].imag)})
            else:
                pieces.append({"kind": "poly", "coeffs": [[float(c.real), float(c.imag)] for c in p]})
        return {"breakpoints": list(self.breakpoints), "pieces": pieces}

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseCoefficient":
        pieces, kinds = [], []
        for item in d["pieces"]:
            kind = item.get("kind")
            if kind == "const":
                pieces.append(np.array([complex(item.get("re", 0.0), item.get("im", 0.0))]))
            elif kind == "poly":
                pieces.append(np.array([complex(re, im) for re, im in item["coeffs"]]))
            else:
                raise CoefficientDomainError(f"unknown piece kind {kind!r}")
            kinds.append(kind)
        return cls(tuple(d["breakpoints"]), tuple(pieces), tuple(kinds))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseCoefficient":
        return cls.from_dict(json.loads(text))


def constant(value: complex, R: float = 2.0) -> PiecewiseCoefficient:
    return PiecewiseCoefficient((0.0, R), (np.array([value]),))


def indicator(a: float, b: float, R: float = 2.0, value: complex = 1.0) -> PiecewiseCoefficient:
    """``value`` on ``[a, b)`` and zero elsewhere in ``[0, R]``."""
    bps = sorted({0.0, float(a), float(b), float(R)})
    pieces = []
    for lo in bps[:-1]:
        pieces.append(np.array([value if a <= lo < b else 0.0]))
    return PiecewiseCoefficient(tuple(bps), tuple(pieces), ("const",) * len(pieces))


def model_n0(R: float = 2.0) -> PiecewiseCoefficient:
    """Background coefficient of the 1-d model: 1/2 on [0, 1), 1 on [1, R]."""
    return PiecewiseCoefficient((0.0, 1.0, R), (np.array([0.5]), np.array([1.0])))


def model_family(R: float = 2.0) -> "AffineFamily":
    """n(x, y) = n0(x) - y 1_[0,1)(x), i.e. interior coefficient 1/2 - y."""
    return AffineFamily(model_n0(R), (indicator(0.0, 1.0, R, value=-1.0),))


@dataclass(frozen=True)
class ParamPoint:
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=complex)))

    def __len__(self) -> int:
        return self.y.size


@dataclass(frozen=True, eq=False)
class AffineFamily:
    """``n(x, y) = base(x) + sum_j y_j modes[j](x)``.

    ``diffusion_modes`` optionally carries scalar diffusion perturbations
    (A_p = sum_j y_j a_j); they only enter the holomorphy radius formulas.
    """

    base: PiecewiseCoefficient
    modes: tuple[PiecewiseCoefficient, ...]
    diffusion_modes: tuple[PiecewiseCoefficient, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(self.modes) < 1:
            raise CoefficientDomainError("family needs at least one mode")
        R = self.base.R
        for j, psi in enumerate(self.modes):
            if psi.R != R:
                raise CoefficientDomainError(f"mode {j} lives on [0, {psi.R}], base on [0, {R}]")
            supp = psi.support()
            if supp is not None and supp[1] >= R:
                raise CoefficientDomainError(f"mode {j} support reaches x = R")
        if self.diffusion_modes is not None:
            dm = tuple(self.diffusion_modes)
            if len(dm) != len(self.modes):
                raise CoefficientDomainError("diffusion_modes must match modes in length")
            object.__setattr__(self, "diffusion_modes", dm)

    @property
    def N(self) -> int:
        return len(self.modes)

    def to_dict(self) -> dict:
        d = {"base": self.base.to_dict(), "modes": [m.to_dict() for m in self.modes]}
        if self.diffusion_modes is not None:
            d["diffusion_modes"] = [m.to_dict() for m in self.diffusion_modes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AffineFamily":
        dm = d.get("diffusion_modes")
        return cls(
            PiecewiseCoefficient.from_dict(d["base"]),
            tuple(PiecewiseCoefficient.from_dict(m) for m in d["modes"]),
            None if dm is None else tuple(PiecewiseCoefficient.from_dict(m) for m in dm),
        )


def combine(coeffs: Sequence[PiecewiseCoefficient], weights: Sequence[complex]) -> PiecewiseCoefficient:
    R = coeffs[0].R
    if any(c.R != R for c in coeffs):
        raise CoefficientDomainError("coefficients live on different domains")
    bps = sorted(set().union(*(c.breakpoints for c in coeffs)))
    pieces = []
    for a, b in zip(bps[:-1], bps[1:]):
        mid = 0.5 * (a + b)
        acc = np.zeros(1, dtype=complex)
        for c, w in zip(coeffs, weights):
            p = c.pieces[int(c.piece_index(mid))]
            acc = P.polyadd(acc, w * p)
        pieces.append(acc)
    return PiecewiseCoefficient(tuple(bps), tuple(pieces))


def instantiate(family: AffineFamily, y) -> PiecewiseCoefficient:
    """Merged coefficient ``base + sum_j y_j psi_j`` on the union of breakpoints."""
    y = y.y if isinstance(y, ParamPoint) else np.atleast_1d(np.asarray(y, dtype=complex))
    if y.size != family.N:
        raise CoefficientDomainError(f"parameter has length {y.size}, family has N = {family.N}")
    return combine((family.base, *family.modes), (1, *y))


def scale(c: complex, coeff: PiecewiseCoefficient) -> PiecewiseCoefficient:
    return PiecewiseCoefficient(coeff.breakpoints, tuple(c * p for p in coeff.pieces), coeff.kinds)


def _candidate_points(p: np.ndarray, a: float, b: float) -> np.ndarray:
    """Endpoints plus real critical points in (a, b) of a real polynomial ``p``."""
    pts = [a, b]
    if p.size > 2:
        for r in P.polyroots(P.polyder(p)):
            if abs(r.imag) < 1e-12 * max(1.0, abs(r.real)) and a < r.real < b:
                pts.append(r.real)
    return np.array(pts)


def _sup_abs(p: np.ndarray, a: float, b: float) -> float:
    if p.size == 1:
        return float(abs(p[0]))
    # |p|^2 = p * conj(p) is a real polynomial; its maximum sits at an endpoint
    # or at a real critical point.
    sq = P.polymul(p, np.conj(p)).real
    pts = _candidate_points(sq, a, b)
    return float(np.max(np.abs(P.polyval(pts, p))))


def sup_norm(coeff: PiecewiseCoefficient) -> float:
    return max(_sup_abs(p, a, b) for (a, b), p in zip(coeff._intervals(), coeff.pieces))


def w1inf_norm(coeff: PiecewiseCoefficient) -> float:
    """sup|c| + sup|c'| with the derivative taken inside each piece (jumps ignored)."""
    return sup_norm(coeff) + sup_norm(coeff.derivative())
