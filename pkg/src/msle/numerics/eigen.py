"""Dense symmetric / Hermitian eigensolver.

Two backends share one contract (ascending ``Spectrum``):

* ``"householder"``: Householder reduction to a real tridiagonal matrix
  followed by implicit-shift QL, written here.  Hermitian input goes through
  the real 2n x 2n embedding ``[[Re H, -Im H], [Im H, Re H]]``, whose spectrum
  is that of ``H`` with every eigenvalue doubled.
* ``"lapack"``: ``numpy.linalg.eigvalsh`` / ``eigh``.  Used by the samplers
  because the QL sweep runs in interpreted Python.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigurationError, ConvergenceError
from .matrices import Spectrum, SymmetricMatrix

EPS = np.finfo(np.float64).eps
SWEEPS_PER_DIM = 30


def householder_tridiagonal(a, want_q=False):
    """Reduce a real symmetric matrix to tridiagonal form T = Q^T A Q.

    Returns ``(diag, offdiag, Q)``; ``offdiag[i]`` couples rows i and i+1 and
    ``Q`` is None unless requested.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    q = np.eye(n) if want_q else None
    for k in range(n - 2):
        x = a[k + 1:, k]
        sigma = np.linalg.norm(x)
        if sigma == 0.0:
            continue
        alpha = -math.copysign(sigma, x[0])
        v = x.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        sub = a[k + 1:, k + 1:]
        p = sub @ v
        w = p - (v @ p) * v
        sub -= 2.0 * (np.outer(v, w) + np.outer(w, v))
        a[k + 1:, k] = 0.0
        a[k, k + 1:] = 0.0
        a[k + 1, k] = a[k, k + 1] = alpha
        if q is not None:
            qs = q[:, k + 1:]
            qs -= 2.0 * np.outer(qs @ v, v)
    d = np.diag(a).copy()
    e = np.append(np.diag(a, 1), 0.0) if n > 1 else np.zeros(1)
    return d, e[: max(n - 1, 0)], q


def tridiagonal_ql(d, e, z=None, max_iter=None):
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    ``d`` is the diagonal, ``e`` the n-1 off-diagonal.  If ``z`` is given its
    columns are rotated along (pass Q from the reduction to get eigenvectors
    of the original matrix).  Returns ``(eigenvalues, z)`` unsorted.
    """
    d = [float(x) for x in d]
    n = len(d)
    e = [float(x) for x in e] + [0.0]
    if max_iter is None:
        max_iter = SWEEPS_PER_DIM * max(n, 1)
    total = 0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= EPS * dd:
                    break
                m += 1
            if m == l:
                break
            total += 1
            if total > max_iter:
                raise ConvergenceError(
                    f"QL did not converge within {max_iter} iterations",
                    {"n": n, "row": l, "offdiag_max": max(abs(x) for x in e),
                     "diag_range": (min(d), max(d))})
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if z is not None:
                    zi = z[:, i].copy()
                    z[:, i] = c * zi - s * z[:, i + 1]
                    z[:, i + 1] = s * zi + c * z[:, i + 1]
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return np.array(d), z


def _embed(h):
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def _householder_eig(m: SymmetricMatrix, vectors: bool):
    a = m.entries if m.beta == 1 else _embed(m.entries)
    d, e, q = householder_tridiagonal(a, want_q=vectors)
    vals, z = tridiagonal_ql(d, e, q)
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    z = z[:, order] if z is not None else None
    if m.beta == 2:
        n = m.n
        vals = 0.5 * (vals[0::2] + vals[1::2])
        if z is not None:
            c = z[:n, 0::2] + 1j * z[n:, 0::2]
            z = c / np.linalg.norm(c, axis=0)
    return vals, z


def eigenvalues_sym(m: SymmetricMatrix, vectors=False, method="lapack") -> Spectrum:
    """Ascending eigenvalues (and optionally eigenvectors as columns)."""
    if method == "householder":
        vals, vecs = _householder_eig(m, vectors)
    elif method == "lapack":
        if vectors:
            vals, vecs = np.linalg.eigh(m.entries)
        else:
            vals, vecs = np.linalg.eigvalsh(m.entries), None
    else:
        raise ConfigurationError(f"unknown eigensolver method {method!r}")
    vals = np.sort(vals)
    return Spectrum(vals, vecs)
