"""Dyson Brownian motion drivers for beta = 1, 2, started from the origin.

Two independent samplers:

* the matrix model: positions at time t are the eigenvalues of D - 2 H(t)
  where H is a symmetric (beta=1) or Hermitian (beta=2) matrix Brownian
  motion normalised so that H(t) has the law of sqrt(t) * GOE/GUE;
* the interacting-particle SDE

      d lam_i = 2 sqrt(2 / (beta N)) dB_i + (4 / N) sum_{j != i} dt / (lam_i - lam_j),

  whose constants are the ones that make it agree with the matrix model.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .errors import CollisionError, ConfigurationError
from .numerics.eigen import eigenvalues_sym
from .numerics.matrices import SymmetricMatrix, sample_ensemble
from .numerics.rng import as_generator

COLLISION_GAP = 1e-12
REFINE_LEVELS = 20


def check_beta(beta) -> int:
    if beta not in (1, 2):
        raise ConfigurationError(f"beta must be 1 or 2, got {beta!r}")
    return int(beta)


def noise_scale(n, beta) -> float:
    return 2.0 * math.sqrt(2.0 / (beta * n))


def semicircle_cdf(x, radius):
    """CDF of the semicircle law on [-radius, radius]."""
    u = np.clip(np.asarray(x, dtype=np.float64) / radius, -1.0, 1.0)
    return 0.5 + (u * np.sqrt(1.0 - u * u) + np.arcsin(u)) / np.pi


def ks_to_semicircle(values, radius) -> float:
    return float(stats.kstest(np.ravel(values), lambda x: semicircle_cdf(x, radius)).statistic)


def ks_two_sample(a, b) -> float:
    return float(stats.ks_2samp(np.ravel(a), np.ravel(b), method="asymp").statistic)


@dataclass(frozen=True)
class ParticleConfig:
    time: float
    positions: np.ndarray

    def __post_init__(self):
        p = np.array(self.positions, dtype=np.float64, copy=True).ravel()
        if self.time < 0:
            raise ConfigurationError("time must be >= 0")
        if np.any(np.diff(p) < 0):
            raise ConfigurationError("particle positions must be sorted")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def n(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class DbmPath:
    """Driver paths on a time grid; ``positions[k]`` is the config at ``times[k]``."""

    times: np.ndarray
    positions: np.ndarray
    beta: int = 1
    origin_start: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64).ravel()
        p = np.array(self.positions, dtype=np.float64)
        if p.ndim == 1:
            p = p[:, None]
        if t.size == 0 or p.shape[0] != t.size:
            raise ConfigurationError("need one configuration per time")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("times must be strictly increasing")
        if np.any(np.diff(p, axis=1) < 0):
            raise ConfigurationError("each configuration must be sorted")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def configs(self) -> list[ParticleConfig]:
        return [ParticleConfig(t, p) for t, p in zip(self.times, self.positions)]

    def config(self, k) -> ParticleConfig:
        return ParticleConfig(self.times[k], self.positions[k])

    def positions_at(self, t):
        """Linear interpolation between knots; shape ``t.shape + (n,)``.

        Times outside the grid are clamped to the end configurations.
        """
        t = np.asarray(t, dtype=np.float64)
        times = self.times
        if times.size == 1:
            return np.broadcast_to(self.positions[0], t.shape + (self.n,)).copy()
        k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
        w = np.clip((t - times[k]) / (times[k + 1] - times[k]), 0.0, 1.0)[..., None]
        return (1.0 - w) * self.positions[k] + w * self.positions[k + 1]

    def restrict(self, T) -> "DbmPath":
        keep = self.times <= T + 1e-12
        return DbmPath(self.times[keep], self.positions[keep], self.beta, self.origin_start, self.meta)

    def to_csv(self, path_or_file):
        rows = ((f"{t:.17g}", str(i), f"{lam:.17g}")
                for t, conf in zip(self.times, self.positions) for i, lam in enumerate(conf))
        _write_csv(path_or_file, ("t", "i", "lambda"), rows)

    @classmethod
    def from_csv(cls, path, beta=1):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        times = np.unique(data[:, 0])
        n = int(data[:, 1].max()) + 1
        pos = np.empty((times.size, n))
        k = np.searchsorted(times, data[:, 0])
        pos[k, data[:, 1].astype(int)] = data[:, 2]
        return cls(times, pos, beta, bool(np.all(pos[0] == 0)))


def _write_csv(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="") as fh:
        _write_csv(fh, header, rows)


def _check_times(times):
    times = np.asarray(times, dtype=np.float64).ravel()
    if times.size == 0:
        raise ConfigurationError("empty time grid")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ConfigurationError("times must be non-negative and strictly increasing")
    return times


def _spectrum(h: SymmetricMatrix, method):
    return eigenvalues_sym(h, method=method).values


def sample_spectrum_matrix(n, t, beta, rng, diag=None, method="lapack") -> ParticleConfig:
    """Eigenvalues of D - 2 sqrt(t) A with A from GOE (beta=1) or GUE (beta=2)."""
    beta = check_beta(beta)
    if t < 0:
        raise ConfigurationError("t must be >= 0")
    d = np.zeros(n) if diag is None else np.asarray(diag, dtype=np.float64)
    if t == 0:
        return ParticleConfig(0.0, np.sort(d))
    h = sample_ensemble(n, beta, rng).entries * (-2.0 * math.sqrt(t))
    if diag is not None:
        h[np.diag_indices(n)] += d
    return ParticleConfig(float(t), _spectrum(SymmetricMatrix(h, beta), method))


def simulate_path_matrix(n, times, beta, rng, diag=None, method="lapack") -> DbmPath:
    """Eigenvalue path of D - 2 H(t) for a matrix Brownian motion H.

    Entry increments are accumulated between requested times, so one
    eigendecomposition is paid per requested time.
    """
    beta = check_beta(beta)
    times = _check_times(times)
    d = np.zeros(n) if diag is None else np.asarray(diag, dtype=np.float64)
    h = np.zeros((n, n), dtype=np.float64 if beta == 1 else np.complex128)
    out = np.empty((times.size, n))
    prev = 0.0
    for k, t in enumerate(times):
        if t > prev:
            h = h + math.sqrt(t - prev) * sample_ensemble(n, beta, rng).entries
            prev = t
        if t == 0:
            out[k] = np.sort(d)
        else:
            out[k] = _spectrum(SymmetricMatrix(np.diag(d) - 2.0 * h, beta), method)
    return DbmPath(times, out, beta, bool(np.all(d == 0)), {"route": "matrix"})


@numba.njit(cache=True, fastmath=True)
def _drift(x, out):
    n = x.size
    for i in range(n):
        xi = x[i]
        s = 0.0
        for j in range(i):
            s += 1.0 / (xi - x[j])
        for j in range(i + 1, n):
            s += 1.0 / (xi - x[j])
        out[i] = s


@numba.njit(cache=True)
def _min_gap(x):
    g = np.inf
    for i in range(x.size - 1):
        d = x[i + 1] - x[i]
        if d < g:
            g = d
    return g


@numba.njit(cache=True)
def _ordered(y):
    for i in range(y.size - 1):
        if not (y[i + 1] - y[i] >= COLLISION_GAP):
            return i
    return -1


@numba.njit(cache=True, fastmath=True)
def _grad(y, b, ch, grad, diag, off):
    """Gradient of 0.5|y-b|^2 - ch sum_{i<j} log(y_j-y_i), Hessian diagonal and
    nearest-neighbour Hessian entries."""
    # row-wise sums without scatter so the inner loops vectorise
    n = y.size
    for i in range(n):
        yi = y[i]
        s = 0.0
        w = 0.0
        for j in range(i):
            v = 1.0 / (yi - y[j])
            s += v
            w += v * v
        for j in range(i + 1, n):
            v = 1.0 / (yi - y[j])
            s += v
            w += v * v
        grad[i] = y[i] - b[i] - ch * s
        diag[i] = 1.0 + ch * w
    for i in range(n - 1):
        d = y[i + 1] - y[i]
        off[i] = -ch / (d * d)


@numba.njit(cache=True)
def _thomas(diag, off, rhs, out):
    n = diag.size
    c = np.empty(n)
    d = np.empty(n)
    c[0] = off[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - off[i - 1] * c[i - 1]
        c[i] = off[i] / m if i < n - 1 else 0.0
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m
    out[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = d[i] - c[i] * out[i + 1]


@numba.njit(cache=True)
def _implicit_step(x, b, ch, out):
    """Drift-implicit Euler: solve y = b + ch * drift(y) with y ordered.

    y is the minimiser of 0.5 |y - b|^2 - ch sum_{i<j} log(y_j - y_i), which
    is strictly convex on the ordered cone.  Newton directions come from the
    Hessian with only nearest-neighbour couplings kept (still SPD and
    diagonally dominant); a trial point is accepted once it is ordered and
    the directional derivative there is non-positive, which by convexity
    guarantees descent.  Returns True on convergence.
    """
    n = x.size
    # explicit Euler predictor as the starting point when it is ordered
    y = np.empty(n)
    _drift(x, y)
    for i in range(n):
        y[i] = b[i] + ch * y[i]
    if _ordered(y) >= 0:
        y[:] = x
    grad = np.empty(n)
    diag = np.empty(n)
    off = np.empty(max(n - 1, 1))
    step = np.empty(n)
    trial = np.empty(n)
    tgrad = np.empty(n)
    tdiag = np.empty(n)
    toff = np.empty(max(n - 1, 1))
    tol = 1e-11 * (1.0 + np.max(np.abs(b)))
    _grad(y, b, ch, grad, diag, off)
    for _ in range(200):
        _thomas(diag, off, grad, step)
        lam = 1.0
        accepted = False
        for _ in range(60):
            for i in range(n):
                trial[i] = y[i] - lam * step[i]
            if _ordered(trial) < 0:
                _grad(trial, b, ch, tgrad, tdiag, toff)
                slope = 0.0
                for i in range(n):
                    slope += tgrad[i] * step[i]
                if slope >= 0.0 or lam < 1e-3:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            return False
        moved = lam * np.max(np.abs(step))
        for i in range(n):
            y[i] = trial[i]
            grad[i] = tgrad[i]
            diag[i] = tdiag[i]
        for i in range(n - 1):
            off[i] = toff[i]
        if moved <= tol:
            for i in range(n):
                out[i] = y[i]
            return True
    return False


@numba.njit(cache=True)
def _sde_advance(x, t, target, dt_max, floor, growth, sigma, coupling, normals, pos):
    """Advance x in place from t to target with drift-implicit Euler substeps.

    Substeps are min(dt_max, growth * t); a substep whose implicit solve fails
    is split in two with a Brownian bridge, down to ``floor``.  Returns
    (status, t, pos, substeps, splits, pair).  status 0: reached target;
    1: normal buffer exhausted, x/t restored to the start of the interrupted
    substep and pos rewound; 2: collision at ``pair``.
    """
    n = x.size
    nbuf = normals.size
    trial = np.empty(n)
    base = np.empty(n)
    x0 = np.empty(n)
    depth = REFINE_LEVELS + 2
    stack_dw = np.empty((depth, n))
    stack_h = np.empty(depth)
    substeps = 0
    splits = 0
    while t < target:
        h = min(dt_max, target - t)
        if t > 0.0:
            h = min(h, growth * t)
        if target - t - h < 1e-15 * max(1.0, target):
            h = target - t
        start = pos
        t0 = t
        for i in range(n):
            x0[i] = x[i]
        if pos + n > nbuf:
            return 1, t, start, substeps, splits, -1
        sq = math.sqrt(h)
        for i in range(n):
            stack_dw[0, i] = sq * normals[pos + i]
        pos += n
        stack_h[0] = h
        top = 1
        while top > 0:
            top -= 1
            hh = stack_h[top]
            for i in range(n):
                base[i] = x[i] + sigma * stack_dw[top, i]
            ok = True
            if n > 1:
                ok = _implicit_step(x, base, coupling * hh, trial)
            else:
                trial[0] = base[0]
            bad = _ordered(trial) if ok else 0
            if ok and bad < 0:
                for i in range(n):
                    x[i] = trial[i]
                t += hh
                substeps += 1
                continue
            half = 0.5 * hh
            if half < floor or top + 2 > depth:
                return 2, t, pos, substeps, splits, max(bad, 0)
            if pos + n > nbuf:
                for i in range(n):
                    x[i] = x0[i]
                return 1, t0, start, substeps, splits, -1
            # Brownian bridge split: first half pushed last so it runs first.
            q = math.sqrt(hh / 4.0)
            for i in range(n):
                w1 = 0.5 * stack_dw[top, i] + q * normals[pos + i]
                stack_dw[top + 1, i] = w1
                stack_dw[top, i] = stack_dw[top, i] - w1
            pos += n
            stack_h[top] = half
            stack_h[top + 1] = half
            top += 2
            splits += 1
    return 0, t, pos, substeps, splits, -1


def simulate_path_sde(n, times, beta, rng, dt_max=1e-3, initial=None, growth=0.1,
                      buffer_steps=4096) -> DbmPath:
    """Drift-implicit Euler-Maruyama for the calibrated DBM.

    Substeps are at most ``dt_max`` and at most ``growth * t``, so the
    self-similar start near t = 0 is resolved.  The implicit drift keeps the
    particles ordered; if the implicit solve fails the substep is split with
    a Brownian bridge, down to ``dt_max * 2**-20``, after which a
    CollisionError is raised.  From the all-zero configuration the first
    substep (to time min(dt_max, first requested time)) is drawn exactly
    from the matrix model.
    """
    beta = check_beta(beta)
    times = _check_times(times)
    if dt_max <= 0:
        raise ConfigurationError("dt_max must be > 0")
    gen = as_generator(rng)
    x = np.zeros(n) if initial is None else np.array(initial, dtype=np.float64)
    if x.size != n:
        raise ConfigurationError("initial configuration has the wrong size")
    x.sort()
    sigma = noise_scale(n, beta)
    coupling = 4.0 / n
    floor = dt_max * 2.0 ** -REFINE_LEVELS
    t = float(times[0])
    out = np.empty((times.size, n))
    out[0] = x
    origin = bool(np.all(x == x[0]))
    normals = np.empty(0)
    pos = 0
    total_substeps = 0
    total_splits = 0
    for k in range(1, times.size):
        target = float(times[k])
        if origin and n > 1 and np.all(x == x[0]):
            h0 = min(dt_max, target - t)
            x = x[0] + sample_spectrum_matrix(n, h0, beta, gen).positions.copy()
            t += h0
            total_substeps += 1
        while True:
            status, t, pos, steps, splits, pair = _sde_advance(
                x, t, target, dt_max, floor, growth, sigma, coupling, normals, pos)
            total_substeps += steps
            total_splits += splits
            if status == 0:
                break
            if status == 2:
                raise CollisionError(
                    f"particles {pair} and {pair + 1} collided near t={t:.6g} "
                    f"(substep {total_substeps}, refinement floor {floor:.3g})",
                    step=total_substeps, pair=(int(pair), int(pair) + 1))
            normals = gen.standard_normal(n * buffer_steps)
            pos = 0
        out[k] = x
    return DbmPath(times, out, beta, origin,
                   {"route": "sde", "substeps": total_substeps, "splits": total_splits})


@dataclass(frozen=True)
class ExtremeStat:
    lambda_star: np.ndarray
    sup_over_time: float


def extreme_particle_stat(path: DbmPath, C, x):
    """lam*(t) = max_i |lam_i(t)| and whether lam*(t) <= lam*(0) + sqrt(t) (C + x) for all t."""
    lam = np.max(np.abs(path.positions), axis=1)
    stat = ExtremeStat(lam, float(lam.max()))
    bound = lam[0] + np.sqrt(path.times - path.times[0]) * (C + x)
    return stat, bool(np.all(lam <= bound))


def continuity_violation_fraction(path: DbmPath) -> float:
    """Fraction of steps whose max increment exceeds 10 sqrt(dt) (1 + log N)."""
    if path.times.size < 2:
        return 0.0
    dt = np.diff(path.times)
    inc = np.max(np.abs(np.diff(path.positions, axis=0)), axis=1)
    return float(np.mean(inc > 10.0 * np.sqrt(dt) * (1.0 + math.log(path.n))))


def holder_estimate(path: DbmPath) -> float:
    """Slope of log(max increment) against log(lag) over dyadic lags.

    Returns nan when the path is constant (the exponent is undefined).
    """
    t = path.times
    if t.size < 32:
        raise ConfigurationError(f"need at least 32 time points, got {t.size}")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ConfigurationError("holder_estimate needs a uniform (dyadic) grid")
    lags, incs = [], []
    lag = 1
    while lag <= (t.size - 1) // 2:
        d = np.abs(path.positions[lag:] - path.positions[:-lag]).max()
        lags.append(lag * dt[0])
        incs.append(d)
        lag *= 2
    incs = np.array(incs)
    if np.any(incs <= 0):
        return math.nan
    return float(np.polyfit(np.log(lags), np.log(incs), 1)[0])
