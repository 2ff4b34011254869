"""Hermitian matrix containers, Gaussian ensembles and resolvents."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, ConvergenceError, HalfPlaneError, InvalidDimensionError
from .rng import as_generator

RESOLVENT_TOL = 1e-10


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SymmetricMatrix:
    """Real symmetric (beta=1) or complex Hermitian (beta=2) matrix."""

    entries: np.ndarray
    beta: int = 1

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidDimensionError(f"need a non-empty square matrix, got shape {a.shape}")
        if self.beta not in (1, 2):
            raise ConfigurationError(f"beta must be 1 or 2, got {self.beta}")
        if self.beta == 1 and np.iscomplexobj(a) and np.any(np.imag(a)):
            raise ConfigurationError("complex entries need beta=2")
        a = np.array(np.real(a) if self.beta == 1 else a, dtype=np.float64 if self.beta == 1 else np.complex128)
        if not np.array_equal(a, a.conj().T):
            raise ConfigurationError("matrix is not exactly Hermitian-symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def shifted(self, z) -> np.ndarray:
        return self.entries - z * np.eye(self.n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2))

    def conjugate_by(self, u: np.ndarray) -> "SymmetricMatrix":
        """U* H U, re-symmetrised so the result is exactly Hermitian."""
        b = u.conj().T @ self.entries @ u
        b = (b + b.conj().T) / 2
        return SymmetricMatrix(b, self.beta)


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if np.any(np.diff(v) < 0):
            raise ValueError("spectrum values must be ascending")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return self.values.size


def _check_n(n):
    if int(n) != n or n < 1:
        raise InvalidDimensionError(f"matrix dimension must be >= 1, got {n}")
    return int(n)


def sample_goe(n, rng) -> SymmetricMatrix:
    """GOE draw: off-diagonal variance 1/n, diagonal variance 2/n."""
    n = _check_n(n)
    g = as_generator(rng).standard_normal((n, n))
    return SymmetricMatrix((g + g.T) / np.sqrt(2 * n), beta=1)


def sample_gue(n, rng) -> SymmetricMatrix:
    """GUE draw: E|A_ij|^2 = 1/n off the diagonal, real diagonal of variance 1/n."""
    n = _check_n(n)
    gen = as_generator(rng)
    g = (gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))) / np.sqrt(2)
    return SymmetricMatrix((g + g.conj().T) / np.sqrt(2 * n), beta=2)


def sample_ensemble(n, beta, rng) -> SymmetricMatrix:
    if beta == 1:
        return sample_goe(n, rng)
    if beta == 2:
        return sample_gue(n, rng)
    raise ConfigurationError(f"beta must be 1 or 2, got {beta}")


@dataclass(frozen=True)
class ResolventMatrix:
    base: SymmetricMatrix
    z: complex
    entries: np.ndarray

    @property
    def eta(self) -> float:
        return self.z.imag

    def residual(self) -> float:
        """Max-entry norm of (H - z) G - I."""
        h = self.base.shifted(self.z)
        return float(np.max(np.abs(h @ self.entries - np.eye(self.base.n))))


def resolvent(m: SymmetricMatrix, z) -> ResolventMatrix:
    """G(z) = (H - z)^-1 for Im z > 0."""
    z = complex(z)
    if not z.imag > 0:
        raise HalfPlaneError(f"resolvent needs Im z > 0, got z={z}")
    g = np.linalg.solve(m.shifted(z), np.eye(m.n, dtype=np.complex128))
    out = ResolventMatrix(m, z, _frozen(g))
    res = out.residual()
    if res > RESOLVENT_TOL:
        raise ConvergenceError(
            f"resolvent residual {res:.3e} exceeds {RESOLVENT_TOL:g} (z={z}, |H|={m.norm():.3g})")
    return out
