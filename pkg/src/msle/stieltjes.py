"""Stieltjes transforms of the driver measure and of its hydrodynamic limit.

Conventions: M(z) = int 2 dmu(x) / (z - x) maps the upper half-plane to the
lower one; s(z) = int dmu(x) / (x - z) = -M/2 maps it to itself.  For drivers
started at the origin the limit M_t solves M (z - 2 t M) = 2.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dbm import ParticleConfig
from .errors import BranchSelectionError, ConfigurationError, HalfPlaneError
from .numerics.rng import as_generator

PICARD_DAMPING = 0.5
NEWTON_SWITCH = 0.9
MAX_ITER = 500


def _check_upper(z):
    z = np.asarray(z, dtype=np.complex128)
    if np.any(~(z.imag > 0)):
        raise HalfPlaneError("evaluation point must satisfy Im z > 0")
    return z


def _check_lower(m, what):
    if np.any(~(np.imag(m) < 0)):
        raise HalfPlaneError(f"{what} left the lower half-plane")
    return m


def _out(m):
    return complex(m) if np.ndim(m) == 0 else m


@dataclass(frozen=True)
class GridG:
    """Rectangular lattice [re_min, re_max] x [im_min, im_max] in the upper half-plane."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    n_re: int
    n_im: int

    def __post_init__(self):
        if not self.im_min > 0:
            raise ConfigurationError("grid must lie strictly above the real axis")
        if self.n_re < 1 or self.n_im < 1:
            raise ConfigurationError("grid counts must be >= 1")
        if self.re_max < self.re_min or self.im_max < self.im_min:
            raise ConfigurationError("grid bounds are reversed")
        if (self.n_re > 1 and self.re_max == self.re_min) or (self.n_im > 1 and self.im_max == self.im_min):
            raise ConfigurationError("grid points would coincide")

    @property
    def points(self) -> np.ndarray:
        re = np.linspace(self.re_min, self.re_max, self.n_re)
        im = np.linspace(self.im_min, self.im_max, self.n_im)
        return (re[None, :] + 1j * im[:, None]).ravel()

    @property
    def size(self) -> int:
        return self.n_re * self.n_im


STANDARD_GRID = GridG(-2.0, 2.0, 1.0, 2.0, 21, 11)


@dataclass(frozen=True)
class InitialMeasure:
    """Finite atomic probability measure; ``dirac()`` is the point mass at 0."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.atoms, dtype=np.float64))
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if x.shape != w.shape or x.size == 0:
            raise ConfigurationError("atoms and weights must be non-empty and the same length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError("weights must be positive and sum to 1")
        if not np.all(np.isfinite(x)):
            raise ConfigurationError("atoms must be finite")
        object.__setattr__(self, "atoms", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, x0=0.0):
        return cls(np.array([x0]), np.array([1.0]))

    @classmethod
    def empirical(cls, positions):
        p = np.asarray(positions, dtype=np.float64)
        return cls(p, np.full(p.size, 1.0 / p.size))

    @property
    def is_dirac_at_zero(self) -> bool:
        return self.atoms.size == 1 and self.atoms[0] == 0.0

    def s0(self, w):
        """int dmu / (x - w)"""
        w = np.asarray(w, dtype=np.complex128)
        return np.sum(self.weights / (self.atoms - w[..., None]), axis=-1)

    def s0_prime(self, w):
        w = np.asarray(w, dtype=np.complex128)
        return np.sum(self.weights / (self.atoms - w[..., None]) ** 2, axis=-1)


def m_n(config, z):
    """Empirical transform (1/N) sum_j 2 / (z - lam_j)."""
    lam = config.positions if isinstance(config, ParticleConfig) else np.asarray(config, dtype=np.float64)
    z = _check_upper(z)
    m = np.mean(2.0 / (z[..., None] - lam), axis=-1)
    return _out(_check_lower(m, "M^N"))


def _m_delta0_raw(z, t):
    r = np.sqrt(z * z - 16.0 * t)
    plus, minus = z + r, z - r
    denom = np.where(plus.imag > 0, plus, minus)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t == 0, 2.0 / z, 4.0 / denom)


def m_infty_delta0(z, t):
    """Limit transform for drivers started at 0: the root of M (z - 2tM) = 2 with Im M < 0.

    The two roots are 4 / (z + r) and 4 / (z - r) with r^2 = z^2 - 16t; their
    product 1/t is real and positive, so exactly one has negative imaginary
    part, namely the one whose denominator lies in the upper half-plane.
    Both forms avoid the cancellation in (z - r) / 4t as t -> 0.
    """
    z = _check_upper(z)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ConfigurationError("t must be >= 0")
    return _out(_check_lower(_m_delta0_raw(z, t), "M_t"))


def fixed_point_residual(m, z, t):
    """|M (z - 2tM) - 2|"""
    return np.abs(m * (z - 2.0 * t * m) - 2.0)


def solve_self_consistent(z, t, mu0: InitialMeasure, tol=1e-13, perturbation=0.0):
    """Solve s = s0(z + 4ts) + perturbation for s in the upper half-plane.

    Damped Picard iteration, switching to Newton while |4t s0'(w)| < 0.9.
    Every iterate keeps Im(z + 4ts) > 0.
    """
    z = complex(z)
    if not z.imag > 0:
        raise HalfPlaneError(f"need Im z > 0, got {z}")
    s = complex(mu0.s0(z)) + perturbation
    if t == 0:
        return s
    if s.imag <= 0:
        s = complex(s.real, 1e-12)
    history = []
    for it in range(MAX_ITER):
        w = z + 4.0 * t * s
        f = complex(mu0.s0(w)) + perturbation
        res = s - f
        history.append(abs(res))
        if abs(res) <= tol:
            return s
        d = complex(mu0.s0_prime(w))
        if abs(4.0 * t * d) < NEWTON_SWITCH:
            new = s - res / (1.0 - 4.0 * t * d)
        else:
            new = (1.0 - PICARD_DAMPING) * s + PICARD_DAMPING * f
        step = new - s
        while (z + 4.0 * t * (s + step)).imag <= 0 and abs(step) > 1e-300:
            step *= 0.5
        s = s + step
    raise BranchSelectionError(
        f"self-consistent solve did not converge in {MAX_ITER} iterations",
        {"z": z, "t": t, "last_residual": history[-1], "residual_tail": history[-5:]})


def m_infty_general(z, t, mu0: InitialMeasure, tol=1e-13):
    """Limit transform for a general atomic initial measure: M = -2 s_t."""
    zs = _check_upper(z)
    if t < 0:
        raise ConfigurationError("t must be >= 0")
    flat = zs.ravel()
    out = np.empty(flat.shape, dtype=np.complex128)
    for k, zk in enumerate(flat):
        if t == 0:
            out[k] = -2.0 * mu0.s0(zk)
        else:
            out[k] = -2.0 * solve_self_consistent(zk, t, mu0, tol)
    return _out(_check_lower(out.reshape(zs.shape), "M_t"))


def burgers_residual(t, z, h_z=1e-5, h_t=1e-5) -> float:
    """|dM/dt + 2 M dM/dz| for the closed-form limit, by central differences."""
    z = complex(z)
    if not (z.imag > h_z and t > h_t and h_z > 0 and h_t > 0):
        raise ConfigurationError("step sizes must be positive and smaller than Im z and t")
    m = m_infty_delta0(z, t)
    dt = (m_infty_delta0(z, t + h_t) - m_infty_delta0(z, t - h_t)) / (2 * h_t)
    dz = (m_infty_delta0(z + h_z, t) - m_infty_delta0(z - h_z, t)) / (2 * h_z)
    return abs(dt + 2.0 * m * dz)


def self_consistent_residual(config, z, t):
    """|M - 2 / (z - 2tM)| with M the empirical transform of ``config``."""
    z = np.asarray(z, dtype=np.complex128)
    m = np.asarray(m_n(config, z))
    r = np.abs(m - 2.0 / (z - 2.0 * t * m))
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class StabilityResult:
    exponent: float
    eps: np.ndarray
    differences: np.ndarray


def stability_differences(t, eta, eps_list, rng, mu0=None, re_z=0.0, tol=1e-15):
    """|s_t - s~_t| where s~ solves the fixed point with an additive eps e^{i theta} term."""
    mu0 = InitialMeasure.dirac() if mu0 is None else mu0
    z = complex(re_z, eta)
    gen = as_generator(rng)
    s = solve_self_consistent(z, t, mu0, tol)
    eps = np.asarray(eps_list, dtype=np.float64)
    diffs = np.empty(eps.size)
    for k, e in enumerate(eps):
        theta = gen.uniform(0.0, 2 * math.pi)
        if e == 0:
            diffs[k] = 0.0
            continue
        st = solve_self_consistent(z, t, mu0, tol, perturbation=e * complex(math.cos(theta), math.sin(theta)))
        diffs[k] = abs(s - st)
    return eps, diffs


def stability_experiment(t, eta, eps_list, rng, mu0=None, re_z=0.0) -> float:
    """Fitted exponent of |s - s~| against eps (log-log least squares)."""
    if t <= 0 or eta <= 0:
        raise ConfigurationError("need t > 0 and eta > 0")
    eps = np.asarray(eps_list, dtype=np.float64)
    pos = eps[eps > 0]
    if pos.size < 2 or math.log10(pos.max() / pos.min()) < 3:
        raise ConfigurationError("eps_list must span at least 3 decades")
    eps, diffs = stability_differences(t, eta, eps, rng, mu0, re_z)
    keep = eps > 0
    return float(np.polyfit(np.log(eps[keep]), np.log(diffs[keep]), 1)[0])


def grid_csv(path_or_file, z, t, m):
    """Rows ``re_z,im_z,t,re_m,im_m``."""
    z = np.ravel(z)
    m = np.ravel(m)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), z.shape)
    rows = [(f"{a.real:.17g}", f"{a.imag:.17g}", f"{tt:.17g}", f"{b.real:.17g}", f"{b.imag:.17g}")
            for a, tt, b in zip(z, t, m)]
    header = ("re_z", "im_z", "t", "re_m", "im_m")
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    else:
        with open(path_or_file, "w", newline="") as fh:
            grid_csv(fh, z, t, m)
