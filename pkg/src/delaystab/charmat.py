"""Characteristic matrix of the delay measure and its determinant.

For the IDE, ``Delta(z) = I + mu_hat(z) = Delta0(z) + R(z)`` with

    Delta0(z) = I + sum_k A_k exp(-tau_k z),
    R(z)      = int_0^tau* N(s) exp(-s z) ds,

and for the DDE ``Delta(z) = z I + mu_hat(z)``.  The kernel transform is
evaluated in closed form per polynomial piece; near ``z = 0`` a Taylor
expansion of the exponential is integrated instead because the closed form
divides by powers of ``z``.

All ``*_batch`` helpers accept arrays of ``z`` and return stacks of
``(n, n)`` matrices so that contour and grid evaluations stay vectorized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Kind, SystemSpec, matnorm

__all__ = [
    "CharValue",
    "Z_SWITCH",
    "eval_delta0",
    "eval_R",
    "eval_char",
    "delta_batch",
    "det_batch",
    "char_det",
    "kernel_moment_transform",
]

#: below ``|z| * tau_star < Z_SWITCH`` the kernel transform uses the series branch
Z_SWITCH = 1e-2
# higher-degree pieces lose ~(d+1)!·eps/(|z|τ)^d digits in the closed form,
# so the series branch is kept on a wider disc for them
_DEGREE_SWITCH = {0: Z_SWITCH, 1: Z_SWITCH, 2: 0.1, 3: 0.3, 4: 0.6, 5: 0.8}
_SERIES_MIN_TERMS = 12
_SERIES_MAX_TERMS = 60
FD_STEP = 1e-6
_SINGULAR_RCOND = 1e-12


@dataclass(frozen=True)
class CharValue:
    z: complex
    delta: np.ndarray
    det: complex
    det_derivative: complex


def _monomial_closed(m: int, a: float, b: float, z: np.ndarray) -> list[np.ndarray]:
    """``[int_a^b s^k exp(-z s) ds for k = 0..m]`` by the antiderivative recurrence."""
    ea = np.exp(-z * a)
    eb = np.exp(-z * b)
    # k = 0 written with expm1 so that small |z (b - a)| keeps relative accuracy
    I0 = ea * (-np.expm1(-z * (b - a))) / z
    out = [I0]
    pa, pb = 1.0, 1.0
    for k in range(1, m + 1):
        pa *= a
        pb *= b
        out.append((k * out[-1] - (pb * eb - pa * ea)) / z)
    return out


def _monomial_series(m: int, a: float, b: float, z: np.ndarray) -> list[np.ndarray]:
    """Same integrals from the Taylor series of ``exp(-z s)`` integrated termwise."""
    z = np.asarray(z, dtype=complex)
    zmax = float(np.max(np.abs(z))) * max(abs(a), abs(b)) if z.size else 0.0
    out = []
    for k in range(m + 1):
        total = np.zeros_like(z)
        term_coef = np.ones_like(z)  # (-z)^j / j!
        for j in range(_SERIES_MAX_TERMS):
            p = k + j + 1
            total = total + term_coef * (b**p - a**p) / p
            if j + 1 >= _SERIES_MIN_TERMS and zmax ** (j + 1) / math.factorial(j + 1) < 1e-18:
                break
            term_coef = term_coef * (-z) / (j + 1)
        out.append(total)
    return out


def kernel_moment_transform(spec: SystemSpec, z, extra_power: int = 0, branch: str = "auto") -> np.ndarray:
    """``int_0^tau* s^extra_power N(s) exp(-z s) ds`` for an array of ``z``.

    ``branch`` forces ``"closed"`` or ``"series"`` (used to cross-check the
    two branches); ``"auto"`` picks per piece and per point.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    n = spec.dimension
    out = np.zeros(z.shape + (n, n), dtype=complex)
    if spec.kernel.empty:
        return out
    for p in spec.kernel.pieces:
        m = p.degree + extra_power
        if branch == "series":
            small = np.ones(z.shape, dtype=bool)
        elif branch == "closed":
            small = np.zeros(z.shape, dtype=bool)
        else:
            thr = max(_DEGREE_SWITCH.get(m, 1.0), Z_SWITCH)
            small = np.abs(z) * spec.tau_star < thr
        ints = [np.zeros(z.shape, dtype=complex) for _ in range(m + 1)]
        if np.any(small):
            zs = z[small]
            for k, v in enumerate(_monomial_series(m, p.a, p.b, zs)):
                ints[k][small] = v
        if np.any(~small):
            zc = z[~small]
            for k, v in enumerate(_monomial_closed(m, p.a, p.b, zc)):
                ints[k][~small] = v
        for d in range(p.degree + 1):
            out += ints[d + extra_power][..., None, None] * p.coeffs[d]
    return out


def _atom_sum(spec: SystemSpec, z: np.ndarray, weight_by_tau: bool = False) -> np.ndarray:
    n = spec.dimension
    out = np.zeros(z.shape + (n, n), dtype=complex)
    for tau, A in zip(spec.delays, spec.matrices):
        e = np.exp(-tau * z)
        if weight_by_tau:
            e = tau * e
        out += e[..., None, None] * A
    return out


def delta_batch(spec: SystemSpec, z) -> np.ndarray:
    """Stack of characteristic matrices ``Delta(z)`` for an array of ``z``."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    n = spec.dimension
    eye = np.eye(n)
    mu_hat = _atom_sum(spec, z) + kernel_moment_transform(spec, z)
    if spec.kind is Kind.IDE:
        return eye + mu_hat
    return z[..., None, None] * eye + mu_hat


def delta_prime_batch(spec: SystemSpec, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    d = -_atom_sum(spec, z, weight_by_tau=True) - kernel_moment_transform(spec, z, extra_power=1)
    if spec.kind is Kind.DDE:
        d = d + np.eye(spec.dimension)
    return d


def det_batch(spec: SystemSpec, z) -> np.ndarray:
    """``det Delta(z)`` for an array of ``z`` (same shape as ``z``)."""
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    D = delta_batch(spec, z.ravel())
    if spec.dimension == 1:
        return D[:, 0, 0].reshape(shape)
    return np.linalg.det(D).reshape(shape)


def char_det(spec: SystemSpec, z: complex) -> complex:
    return complex(det_batch(spec, np.array([z]))[0])


def eval_delta0(spec: SystemSpec, z: complex) -> np.ndarray:
    """``I + sum_k A_k exp(-tau_k z)``."""
    z = np.array([z], dtype=complex)
    return (np.eye(spec.dimension) + _atom_sum(spec, z))[0]


def eval_R(spec: SystemSpec, z: complex) -> np.ndarray:
    """Laplace transform of the kernel, ``int_0^tau* N(s) exp(-s z) ds``."""
    return kernel_moment_transform(spec, np.array([z], dtype=complex))[0]


def eval_char(spec: SystemSpec, z: complex) -> CharValue:
    """Characteristic matrix, determinant and ``d/dz det Delta`` at ``z``.

    The derivative uses Jacobi's formula with the termwise analytic
    ``Delta'(z)``; when ``Delta(z)`` is numerically singular it falls back to
    a central difference of the determinant.
    """
    z = complex(z)
    D = delta_batch(spec, np.array([z]))[0]
    det = complex(np.linalg.det(D)) if spec.dimension > 1 else complex(D[0, 0])
    Dp = delta_prime_batch(spec, np.array([z]))[0]
    if spec.dimension == 1:
        ddet = complex(Dp[0, 0])
    else:
        try:
            rc = 1.0 / np.linalg.cond(D)
        except np.linalg.LinAlgError:
            rc = 0.0
        if rc > _SINGULAR_RCOND:
            ddet = det * complex(np.trace(np.linalg.solve(D, Dp)))
        else:
            step = FD_STEP * max(1.0, abs(z))
            dp, dm = det_batch(spec, np.array([z + step, z - step]))
            ddet = complex((dp - dm) / (2 * step))
    return CharValue(z, D, det, ddet)


def residual_scale(spec: SystemSpec, z: complex) -> float:
    """``max(1, ||Delta(z)||)``, the normalization used for root residuals."""
    return max(1.0, matnorm(delta_batch(spec, np.array([z]))[0]))
