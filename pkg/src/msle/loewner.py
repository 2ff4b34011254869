"""Multi-slit Loewner flows and the hull-exclusion geometry.

    d/dt g_t(z) = (1/N) sum_i 2 / (g_t(z) - lam_i(t))     (N drivers)
    d/dt g_t(z) = M_t(g_t(z))                              (hydrodynamic limit)

Each grid point is integrated independently with an embedded Dormand-Prince
5(4) pair and its own step size; the computation is vectorised across points.
Points whose step size underflows are marked swallowed and carry NaN from
then on.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dbm import DbmPath
from .errors import ConfigurationError, IntegrationError
from .stieltjes import GridG, _m_delta0_raw

H_MIN = 1e-12
IM_BOUND_SLACK = 1e-6

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True)
class FlowState:
    t: float
    z0: np.ndarray
    values: np.ndarray
    alive: np.ndarray


@dataclass(frozen=True)
class FlowTrajectory:
    """``values[k, p]`` is g at ``times[k]`` for seed point ``z0[p]`` (NaN once swallowed)."""

    times: np.ndarray
    z0: np.ndarray
    values: np.ndarray
    alive: np.ndarray
    swallow_time: np.ndarray

    def state(self, k) -> FlowState:
        return FlowState(float(self.times[k]), self.z0, self.values[k], self.alive[k])

    @property
    def final(self) -> FlowState:
        return self.state(-1)

    def to_csv(self, path_or_file):
        header = ("t", "re_z0", "im_z0", "re_g", "im_g", "alive")
        rows = [(f"{t:.17g}", f"{z.real:.17g}", f"{z.imag:.17g}", f"{g.real:.17g}", f"{g.imag:.17g}",
                 str(int(a)))
                for t, vals, al in zip(self.times, self.values, self.alive)
                for z, g, a in zip(self.z0, vals, al)]
        if hasattr(path_or_file, "write"):
            w = csv.writer(path_or_file, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        else:
            with open(path_or_file, "w", newline="") as fh:
                self.to_csv(fh)


def _points(grid):
    if isinstance(grid, GridG):
        return grid.points
    z = np.atleast_1d(np.asarray(grid, dtype=np.complex128))
    if np.any(~(z.imag > 0)):
        raise ConfigurationError("seed points must lie in the upper half-plane")
    return z


def _out_times(times, T):
    if T < 0:
        raise ConfigurationError("T must be >= 0")
    times = np.asarray(times, dtype=np.float64)
    times = times[(times >= 0) & (times <= T + 1e-12)]
    if times.size == 0 or times[0] > 0:
        times = np.r_[0.0, times]
    if times[-1] < T - 1e-12:
        times = np.r_[times, T]
    return times


def _integrate(velocity, z0, out_times, tol):
    """Per-point adaptive DP45 from out_times[0], recording at each out time.

    ``velocity(g, t)`` returns (v, near) where ``near`` flags points sitting on
    a driver (swallowed).  Non-finite or lower-half-plane stages reject a step.
    """
    p = z0.size
    k_out = out_times.size
    vals = np.full((k_out, p), np.nan + 1j * np.nan)
    alive_rec = np.zeros((k_out, p), dtype=bool)
    g = z0.astype(np.complex128).copy()
    tp = np.full(p, out_times[0])
    alive = np.ones(p, dtype=bool)
    swallow = np.full(p, np.nan)
    h = np.full(p, max(min(1e-2, (out_times[-1] - out_times[0]) / 10), 1e-6))
    im0sq = z0.imag ** 2
    vals[0] = g
    alive_rec[0] = True
    for k in range(1, k_out):
        te = out_times[k]
        while True:
            act = np.flatnonzero(alive & (tp < te))
            if act.size == 0:
                break
            ga, ta = g[act], tp[act]
            hh = np.minimum(h[act], te - ta)
            stages = []
            near_any = np.zeros(act.size, dtype=bool)
            for s in range(7):
                y = ga.copy()
                for j, a in enumerate(_A[s]):
                    if a:
                        y = y + hh * a * stages[j]
                v, near = velocity(y, ta + _C[s] * hh)
                near_any |= near
                stages.append(v)
            y5 = ga + hh * sum(b * st for b, st in zip(_B5, stages) if b)
            y4 = ga + hh * sum(b * st for b, st in zip(_B4, stages) if b)
            err = np.abs(y5 - y4)
            ok = np.isfinite(err) & np.isfinite(y5) & (y5.imag > 0)
            err = np.where(ok, err, np.inf)
            accept = err <= tol
            tnew = ta + hh
            # accepted steps must respect Im g^2 >= Im z^2 - 4t
            if np.any(accept):
                ia = np.flatnonzero(accept)
                lhs = y5[ia].imag ** 2
                rhs = im0sq[act[ia]] - 4.0 * (tnew[ia] - out_times[0]) - IM_BOUND_SLACK
                if np.any(lhs < rhs):
                    bad = act[ia[np.argmax(rhs - lhs)]]
                    raise IntegrationError(f"imaginary-part bound violated for seed {z0[bad]}")
            idx = act[accept]
            g[idx] = y5[accept]
            tp[idx] = np.where(te - tnew[accept] <= 1e-14 * max(1.0, te), te, tnew[accept])
            with np.errstate(divide="ignore", over="ignore"):
                fac = 0.9 * (tol / err) ** 0.2
            h[act] = hh * np.clip(fac, 0.2, 5.0)
            dead = (~accept & (h[act] < H_MIN)) | (accept & near_any)
            if np.any(dead):
                di = act[dead]
                alive[di] = False
                swallow[di] = tp[di]
        vals[k] = np.where(alive, g, np.nan + 1j * np.nan)
        alive_rec[k] = alive
    return FlowTrajectory(out_times, z0, vals, alive_rec, swallow)


def driver_velocity(path: DbmPath):
    n = path.n
    thresh = 10.0 * np.finfo(np.float64).eps * n

    def velocity(g, t):
        lam = path.positions_at(t)
        d = g[:, None] - lam
        near = np.min(np.abs(d), axis=1) < thresh
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.mean(2.0 / d, axis=1), near
    return velocity


def limit_velocity(g, t):
    return _m_delta0_raw(g, t), np.zeros(g.shape, dtype=bool)


def integrate_flow_n(path: DbmPath, grid, T, tol=1e-10, out_times=None) -> FlowTrajectory:
    """N-driver flow with drivers linearly interpolated between path knots.

    Output times default to the path knots in [0, T] (plus T).
    """
    z0 = _points(grid)
    out = _out_times(path.times if out_times is None else out_times, T)
    return _integrate(driver_velocity(path), z0, out, tol)


def integrate_flow_infty(grid, T, tol=1e-10, out_times=None) -> FlowTrajectory:
    """Hydrodynamic flow d/dt g = M_t(g) for drivers started at 0."""
    z0 = _points(grid)
    out = _out_times(np.linspace(0.0, T, 11) if out_times is None else out_times, T)
    return _integrate(limit_velocity, z0, out, tol)


@dataclass(frozen=True)
class HullBox:
    """{|Re z| <= M, 0 < Im z <= 2 sqrt(T)} contains every hull K_t, t <= T."""

    M: float
    T: float

    def __post_init__(self):
        if self.M < 0 or self.T < 0:
            raise ConfigurationError("M and T must be >= 0")

    @property
    def height(self) -> float:
        return 2.0 * math.sqrt(self.T)

    @property
    def r(self) -> float:
        """Radius of a disc about 0 containing the box."""
        return math.sqrt(self.M ** 2 + 4.0 * self.T)

    def contains(self, z):
        z = np.asarray(z)
        return (np.abs(z.real) <= self.M) & (z.imag <= self.height)


def hull_box(path: DbmPath, T) -> HullBox:
    sub = path.restrict(T)
    return HullBox(float(np.max(np.abs(sub.positions))), float(T))


@dataclass(frozen=True)
class EvaluationRegion:
    grid: GridG
    box: HullBox
    margin: float

    def strip(self, t):
        """Predicted bounds on g_t(G): (min Im, max Im, max |Re|)."""
        lo = math.sqrt(max(self.grid.im_min ** 2 - 4.0 * t, 0.0))
        f = float(np.max(np.abs(self.grid.points))) + 5.0 * self.box.r
        return lo, self.grid.im_max, f

    @property
    def eta(self) -> float:
        """Lowest imaginary part the image of the grid can reach by time T."""
        return self.strip(self.box.T)[0]


def region_g(box: HullBox, margin, re_halfwidth, counts, im_max=None) -> EvaluationRegion:
    """Grid of points above the hull box: Im z >= 2 sqrt(T) + margin."""
    if not margin > 0:
        raise ConfigurationError("margin must be > 0")
    n_re, n_im = counts
    im_min = box.height + margin
    im_max = im_min + 1.0 if im_max is None else im_max
    grid = GridG(-re_halfwidth, re_halfwidth, im_min, im_max, n_re, n_im)
    return EvaluationRegion(grid, box, float(margin))


def map_displacement_check(flow, box: HullBox) -> float:
    """max over alive points of |g(z) - z| - 5r; <= 0 when the displacement bound holds."""
    state = flow.final if isinstance(flow, FlowTrajectory) else flow
    a = state.alive
    if not np.any(a):
        return -5.0 * box.r
    return float(np.max(np.abs(state.values[a] - state.z0[a])) - 5.0 * box.r)
