"""Numerical checks of the resolvent identities and Gaussian tools.

The algebraic checks return residuals that should sit at roundoff level; the
Monte-Carlo ones return sampling statistics.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import ConfigurationError, HalfPlaneError
from .matrices import ResolventMatrix, SymmetricMatrix
from .rng import as_generator


def check_ward(g: ResolventMatrix) -> float:
    """max_i | sum_j |G_ij|^2 - Im G_ii / eta |"""
    row = np.sum(np.abs(g.entries) ** 2, axis=1)
    return float(np.max(np.abs(row - np.diag(g.entries).imag / g.eta)))


def _shifted_inverse(m: SymmetricMatrix, z):
    if not complex(z).imag > 0:
        raise HalfPlaneError(f"need Im z > 0, got z={z}")
    a = m.shifted(z)
    return a, np.linalg.inv(a)


def check_resolvent_identity(a: SymmetricMatrix, b: SymmetricMatrix, z) -> float:
    """Residual of A^-1 - B^-1 = A^-1 (B - A) B^-1 = B^-1 (B - A) A^-1 for A=a-z, B=b-z."""
    if a.n != b.n:
        raise ConfigurationError("matrices must have the same size")
    za, ia = _shifted_inverse(a, z)
    zb, ib = _shifted_inverse(b, z)
    lhs = ia - ib
    r1 = np.max(np.abs(lhs - ia @ (zb - za) @ ib))
    r2 = np.max(np.abs(lhs - ib @ (zb - za) @ ia))
    return float(max(r1, r2))


def trace_difference_sides(a: SymmetricMatrix, k: int, z):
    """Both sides of the minor trace formula for A = a - z, with k 1-based."""
    n = a.n
    if n < 2:
        raise ConfigurationError("trace difference needs n >= 2")
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must be in 1..{n}, got {k}")
    shifted, inv = _shifted_inverse(a, z)
    i = k - 1
    keep = np.r_[0:i, i + 1:n]
    minor = shifted[np.ix_(keep, keep)]
    minor_inv = np.linalg.inv(minor)
    alpha = shifted[keep, i]
    lhs = np.trace(inv) - np.trace(minor_inv)
    num = 1.0 + alpha.conj() @ minor_inv @ minor_inv @ alpha
    den = shifted[i, i] - alpha.conj() @ minor_inv @ alpha
    return complex(lhs), complex(num / den)


def check_trace_difference(a: SymmetricMatrix, k: int, z) -> float:
    lhs, rhs = trace_difference_sides(a, k, z)
    return abs(lhs - rhs)


def quadratic_form_concentration_test(n, trials, rng, matrices=None) -> float:
    """Worst ratio of E|X^T A X - tr A|^2 to 2 tr(A A^T) over test matrices.

    With real standard Gaussian X the numerator equals tr(A(A + A^T)), so the
    ratio is 1 for symmetric A and at most 1 otherwise.  Default test set:
    identity, zero, a random symmetric and a random non-symmetric matrix.
    """
    if n < 2:
        raise ConfigurationError("n must be >= 2")
    if trials < 1000:
        raise ConfigurationError(f"need at least 1000 trials, got {trials}")
    gen = as_generator(rng)
    if matrices is None:
        g = gen.standard_normal((n, n))
        matrices = [np.eye(n), np.zeros((n, n)), (g + g.T) / 2, gen.standard_normal((n, n))]
    x = gen.standard_normal((trials, n))
    worst = 0.0
    for a in matrices:
        a = np.asarray(a, dtype=np.float64)
        denom = 2.0 * np.trace(a @ a.T)
        if denom == 0.0:
            continue
        q = np.einsum("ti,ij,tj->t", x, a, x) - np.trace(a)
        worst = max(worst, float(np.mean(q ** 2) / denom))
    return worst


class IbpCheck(NamedTuple):
    residual: float
    stderr: float


def gaussian_ibp_test(poly_degree, sigma, trials, rng, coeffs=None) -> IbpCheck:
    """Compare E[xi f(xi)] with sigma^2 E[f'(xi)] for xi ~ N(0, sigma^2).

    ``f`` defaults to the monomial x**poly_degree; pass ``coeffs`` (lowest
    order first) for a general polynomial.  Both expectations use the same
    draws, so the residual's standard error is that of the paired difference.
    """
    if trials < 10_000:
        raise ConfigurationError(f"need at least 10^4 trials, got {trials}")
    if coeffs is None:
        coeffs = np.zeros(poly_degree + 1)
        coeffs[poly_degree] = 1.0
    f = np.polynomial.Polynomial(coeffs)
    xi = sigma * as_generator(rng).standard_normal(trials)
    d = xi * f(xi) - sigma ** 2 * f.deriv()(xi)
    return IbpCheck(abs(float(np.mean(d))), float(np.std(d, ddof=1) / np.sqrt(trials)))
