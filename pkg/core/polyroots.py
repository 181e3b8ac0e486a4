"""
Polynomial roots
================
Canonical source for: every polynomial solve in the project (TTC included).

Coefficients are ascending: c[0] + c[1]*t + ... + c[k]*t**k.
Degrees up to two use closed forms; higher degrees use the eigenvalues of
the companion matrix.
"""
import math
from typing import Optional, Sequence

import numpy as np

IMAG_TOL = 1e-9


class DegeneratePolynomial(ValueError):
    """All coefficients vanish, so every t is a root."""


def trim_coefficients(coeffs: Sequence[float], tol: float = 0.0) -> np.ndarray:
    """Drop vanishing leading coefficients (|c| <= tol)."""
    c = np.asarray(coeffs, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError(f"non-finite polynomial coefficients: {c}")
    nz = np.flatnonzero(np.abs(c) > tol)
    if nz.size == 0:
        return c[:0]
    return c[:nz[-1] + 1]


def is_identically_zero(coeffs: Sequence[float], tol: float = 0.0) -> bool:
    return trim_coefficients(coeffs, tol).size == 0


def _quadratic(c0: float, c1: float, c2: float) -> np.ndarray:
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < 0.0:
        re = -c1 / (2.0 * c2)
        im = math.sqrt(-disc) / (2.0 * c2)
        return np.array([re + 1j * im, re - 1j * im])
    # 稳定形式，避免相消
    q = -0.5 * (c1 + math.copysign(math.sqrt(disc), c1))
    if q == 0.0:
        return np.array([0.0, 0.0], dtype=complex)
    return np.array([q / c2, c0 / q], dtype=complex)


def polynomial_roots(coeffs: Sequence[float]) -> np.ndarray:
    """All complex roots of the polynomial, with multiplicity.

    Raises:
        DegeneratePolynomial: every coefficient is zero.
    """
    c = trim_coefficients(coeffs)
    if c.size == 0:
        raise DegeneratePolynomial("all polynomial coefficients are zero")
    degree = c.size - 1
    if degree == 0:
        return np.empty(0, dtype=complex)
    if degree == 1:
        return np.array([-c[0] / c[1]], dtype=complex)
    if degree == 2:
        return _quadratic(c[0], c[1], c[2])

    monic = c[:-1] / c[-1]
    companion = np.zeros((degree, degree))
    companion[1:, :-1] = np.eye(degree - 1)
    companion[:, -1] = -monic
    return np.linalg.eigvals(companion).astype(complex)


def real_roots(roots: np.ndarray, imag_tol: float = IMAG_TOL) -> np.ndarray:
    """Sorted real parts of the roots whose imaginary part is within tolerance."""
    roots = np.asarray(roots, dtype=complex)
    keep = np.abs(roots.imag) <= imag_tol
    return np.sort(roots.real[keep])


def min_positive_root(coeffs: Sequence[float], imag_tol: float = IMAG_TOL) -> Optional[float]:
    """Smallest strictly positive real root, or None."""
    real = real_roots(polynomial_roots(coeffs), imag_tol)
    positive = real[real > 0.0]
    return float(positive[0]) if positive.size else None


def all_roots_positive_real(roots: np.ndarray, imag_tol: float = IMAG_TOL) -> bool:
    """True iff every root is real and strictly positive (vacuously false when empty)."""
    roots = np.asarray(roots, dtype=complex)
    if roots.size == 0:
        return False
    return bool(np.all(np.abs(roots.imag) <= imag_tol) and np.all(roots.real > 0.0))


def taylor_coefficients(offset: float, derivatives: Sequence[float]) -> np.ndarray:
    """Coefficients of offset + sum_n d_n t^n / n! for derivatives d_1..d_k."""
    c = [float(offset)]
    for n, d in enumerate(derivatives, start=1):
        c.append(float(d) / math.factorial(n))
    return np.asarray(c)
