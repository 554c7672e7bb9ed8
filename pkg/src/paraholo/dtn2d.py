"""Mode-wise symbol of the 2-d exterior Dirichlet-to-Neumann map.

For mode ``n`` on a circle of radius R the outgoing DtN multiplier is
``H_n'(kR) / H_n(kR)`` with ``H_n = J_n + i Y_n``.  Bessel functions are
computed here rather than imported:

* ``J_n`` by Miller's backward recurrence normalized with
  ``J_0 + 2 sum_k J_2k = 1``;
* ``Y_0, Y_1`` for ``z <= 12`` from Neumann series in the ``J_n`` and for
  ``z > 12`` from the Hankel asymptotic expansion;
* ``Y_n`` by forward recurrence (stable in n), rescaled to keep track of
  magnitudes beyond double range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BesselRangeError",
    "DtNSymbol",
    "SignReport",
    "bessel_jy",
    "hankel_h1",
    "dtn_symbol",
    "check_sign_properties",
    "wronskian_defect",
]

EULER_GAMMA = 0.57721566490153286061
SWITCH_Z = 12.0
N_MAX = 200
Z_MIN, Z_MAX = 1e-3, 1e4
_BIG = 1e200


class BesselRangeError(ValueError):
    pass


def _check_range(n: int, z: float):
    if not (0 <= n <= N_MAX):
        raise BesselRangeError(f"order n = {n} outside [0, {N_MAX}]")
    if not (Z_MIN <= z <= Z_MAX):
        raise BesselRangeError(f"argument z = {z} outside [{Z_MIN}, {Z_MAX}]")


def _bessel_j_all(nmax: int, z: float) -> np.ndarray:
    """J_0..J_L(z) with L >= nmax + 1, by Miller's algorithm."""
    top = max(nmax + 1, int(z))
    N = top + 20 + int(math.sqrt(40.0 * (top + 1)))
    N += N % 2
    j = np.zeros(N + 2)
    j[N] = 1e-300
    for m in range(N, 0, -1):
        j[m - 1] = (2.0 * m / z) * j[m] - j[m + 1]
        if abs(j[m - 1]) > _BIG:
            j[m - 1 :] /= _BIG
    norm = j[0] + 2.0 * np.sum(j[2 : N + 1 : 2])
    return j[: N + 1] / norm


def _hankel_asymptotic(nu: int, z: float) -> complex:
    """H^(1)_nu(z) from the large-argument expansion, truncated at its smallest term."""
    mu = 4.0 * nu * nu
    term = 1.0 + 0j
    total = term
    prev = abs(term)
    for k in range(1, 200):
        term = term * 1j * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        if abs(term) >= prev:
            break
        total += term
        prev = abs(term)
        if prev < 1e-17 * abs(total):
            break
    phase = z - (0.5 * nu + 0.25) * math.pi
    return math.sqrt(2.0 / (math.pi * z)) * np.exp(1j * phase) * total


def _y01(z: float, j: np.ndarray) -> tuple[float, float]:
    if z > SWITCH_Z:
        return _hankel_asymptotic(0, z).imag, _hankel_asymptotic(1, z).imag
    lg = math.log(z / 2.0) + EULER_GAMMA
    K = (j.size - 2) // 2
    ks = np.arange(1, K + 1)
    sgn = np.where(ks % 2 == 0, 1.0, -1.0)
    y0 = (2 / math.pi) * lg * j[0] - (4 / math.pi) * np.sum(sgn * j[2 * ks] / ks)
    y1 = (
        (2 / math.pi) * lg * j[1]
        - (2 / math.pi) * j[0] / z
        + (2 / math.pi) * np.sum(sgn * (j[2 * ks - 1] - j[2 * ks + 1]) / ks)
    )
    return float(y0), float(y1)


def bessel_jy(nmax: int, z: float):
    """``(J, y, log_scale)`` for orders 0..nmax.

    ``Y_n = y[n] * exp(log_scale[n])``; ``log_scale`` is zero until the
    forward recurrence has to be rescaled.
    """
    _check_range(nmax, z)
    jall = _bessel_j_all(nmax, z)
    y0, y1 = _y01(z, jall)
    size = max(nmax, 1) + 1
    y = np.empty(size)
    scale = np.zeros(size)
    y[0], y[1] = y0, y1
    s = 0.0
    for m in range(1, size - 1):
        y[m + 1] = (2.0 * m / z) * y[m] - y[m - 1]
        if abs(y[m + 1]) > _BIG:
            y[m] /= _BIG
            y[m + 1] /= _BIG
            s += math.log(_BIG)
            scale[m] = s
        scale[m + 1] = s
    return jall[: nmax + 1], y[: nmax + 1], scale[: nmax + 1]


def _jy_unscaled(nmax: int, z: float):
    J, y, scale = bessel_jy(nmax, z)
    with np.errstate(over="ignore"):
        Y = y * np.exp(scale)
    return J, Y


def hankel_h1(n: int, z: float) -> complex:
    """``H^(1)_n(z) = J_n(z) + i Y_n(z)``; raises if ``Y_n`` overflows double precision."""
    _check_range(n, z)
    J, Y = _jy_unscaled(n, z)
    if not np.isfinite(Y[n]):
        raise BesselRangeError(f"|Y_{n}({z})| overflows double precision; use dtn_symbol")
    return complex(J[n], Y[n])


def wronskian_defect(n: int, z: float) -> float:
    """Relative defect of ``J_n Y_n' - J_n' Y_n = 2 / (pi z)``."""
    m = max(n, 1)
    J, Y = _jy_unscaled(m, z)
    if n == 0:
        Jp, Yp = -J[1], -Y[1]
    else:
        Jp = J[n - 1] - n / z * J[n]
        Yp = Y[n - 1] - n / z * Y[n]
    W = J[n] * Yp - Jp * Y[n]
    return float(abs(W * math.pi * z / 2.0 - 1.0))


@dataclass
class DtNSymbol:
    n: int
    z: float
    value: complex
    log_imag: float = field(default=float("nan"))

    @property
    def imag_positive(self) -> bool:
        return self.value.imag > 0 or np.isfinite(self.log_imag)


def _evanescent(n: int, z: float) -> bool:
    return n > 1.2 * z + 20


def dtn_symbol(n: int, z: float) -> DtNSymbol:
    """``H_n'(z) / H_n(z)``; even in ``n``.

    In the evanescent regime the real part comes from the scale-free ratio
    ``Y_{n-1}/Y_n`` and the imaginary part from the Wronskian,
    ``Im = 2 / (pi z |H_n|^2)``, carried as a logarithm when it underflows.
    """
    n = abs(int(n))
    _check_range(n, z)
    J, y, sc = bessel_jy(max(n, 1), z)
    if not _evanescent(n, z):
        H = J + 1j * y * np.exp(sc)
        val = -H[1] / H[0] if n == 0 else H[n - 1] / H[n] - n / z
        log_im = math.log(val.imag) if val.imag > 0 else float("-inf")
        return DtNSymbol(n, z, complex(val), log_im)
    # work relative to Y_n so that nothing overflows
    ratio = y[n - 1] / y[n] * math.exp(sc[n - 1] - sc[n])
    inv = math.exp(-sc[n]) / y[n]
    jn = J[n] * inv
    jm = J[n - 1] * inv
    re = ((jm - n / z * jn) * jn + ratio - n / z) / (1.0 + jn * jn)
    log_abs_h2 = 2.0 * (sc[n] + math.log(abs(y[n]))) + math.log1p(jn * jn)
    log_im = math.log(2.0 / (math.pi * z)) - log_abs_h2
    im = math.exp(log_im)
    return DtNSymbol(n, z, complex(re, im), log_im)


@dataclass
class SignReport:
    n_max: int
    z_list: list[float]
    min_imag: float
    min_log_imag: float
    max_real: float
    imag_violations: list[tuple[int, float]]
    real_violations: list[tuple[int, float]]

    @property
    def ok(self) -> bool:
        return not self.imag_violations and not self.real_violations

    def to_dict(self) -> dict:
        return {
            "n_max": self.n_max,
            "z": self.z_list,
            "min_imag": self.min_imag,
            "min_log_imag": self.min_log_imag,
            "max_real": self.max_real,
            "imag_violations": self.imag_violations,
            "real_violations": self.real_violations,
            "ok": self.ok,
        }


def check_sign_properties(n_max: int, z_list) -> SignReport:
    """Check Im(symbol) > 0 and Re(symbol) <= 0 for all |n| <= n_max, z in z_list."""
    min_im, min_log_im, max_re = np.inf, np.inf, -np.inf
    bad_im, bad_re = [], []
    for z in z_list:
        for n in range(-n_max, n_max + 1):
            s = dtn_symbol(n, float(z))
            if not s.imag_positive:
                bad_im.append((n, float(z)))
            if s.value.real > 0:
                bad_re.append((n, float(z)))
            min_im = min(min_im, s.value.imag)
            min_log_im = min(min_log_im, s.log_imag)
            max_re = max(max_re, s.value.real)
    return SignReport(n_max, [float(z) for z in z_list], float(min_im), float(min_log_im), float(max_re), bad_im, bad_re)
