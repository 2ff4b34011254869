"""Monte-Carlo studies and convergence-rate fits.

Every trial draws from its own stream ``rng.child(n, trial)``, so results do
not depend on how trials are scheduled across workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dbm import (DbmPath, check_beta, extreme_particle_stat, ks_to_semicircle, ks_two_sample,
                  sample_spectrum_matrix, simulate_path_matrix, simulate_path_sde)
from .errors import ConfigurationError, FitUndefinedError, RegionTooCloseError
from .loewner import (EvaluationRegion, hull_box, integrate_flow_infty, integrate_flow_n,
                      map_displacement_check, region_g)
from .numerics.rng import SeededRng
from .stieltjes import GridG, _m_delta0_raw

SWALLOW_LIMIT = 0.05


@dataclass(frozen=True)
class ErrorSample:
    n: int
    trial: int
    sup_error: float
    param: float
    region: str = ""
    excluded: int = 0

    def __post_init__(self):
        if not self.sup_error >= 0:
            raise ValueError("sup_error must be >= 0")


@dataclass(frozen=True)
class RateFitResult:
    slope: float
    intercept: float
    stderr: float
    n_values: list = field(default_factory=list)
    medians: list = field(default_factory=list)


def iter_trials(fn, tasks, threads=1):
    """Yield ``fn(task)`` in task order, computed in a process pool when threads > 1."""
    tasks = list(tasks)
    if threads is None or threads <= 1 or len(tasks) <= 1:
        yield from map(fn, tasks)
        return
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        yield from pool.map(fn, tasks)


def run_trials(fn, tasks, threads=1):
    return list(iter_trials(fn, tasks, threads))


def _as_rng(rng):
    return rng if isinstance(rng, SeededRng) else SeededRng(int(rng))


def _describe(grid: GridG) -> str:
    return (f"[{grid.re_min:g},{grid.re_max:g}]x[{grid.im_min:g},{grid.im_max:g}]"
            f"({grid.n_re}x{grid.n_im})")


def sup_stieltjes_error(positions, z, t) -> float:
    """sup over z of |M^N(z) - M_t(z)| for one configuration."""
    lam = np.asarray(positions, dtype=np.float64)
    z = np.asarray(z, dtype=np.complex128)
    mn = np.mean(2.0 / (z[:, None] - lam), axis=1)
    return float(np.max(np.abs(mn - _m_delta0_raw(z, t))))


# local law

def _local_law_trial(task):
    n, t, z, beta, rng = task
    conf = sample_spectrum_matrix(n, t, beta, rng.gen)
    return sup_stieltjes_error(conf.positions, z, t)


def local_law_error(n, t, region: GridG, trials, rng, beta=1, threads=1) -> list[ErrorSample]:
    """Per trial: sup over the grid of |M^N_t - M_t| for a matrix-sampled spectrum."""
    if trials < 10:
        raise ConfigurationError("local_law_error needs trials >= 10")
    beta = check_beta(beta)
    rng = _as_rng(rng)
    z = region.points
    errs = run_trials(_local_law_trial, [(n, t, z, beta, rng.child(n, i)) for i in range(trials)], threads)
    return [ErrorSample(n, i, e, float(t), _describe(region)) for i, e in enumerate(errs)]


# time-uniform local law

def net_size(n, T, multiplier=1.0) -> int:
    """Number of time knots: ceil(multiplier * N^(2/3) * T)."""
    if multiplier <= 0:
        raise ConfigurationError("net multiplier must be > 0")
    return max(1, math.ceil(multiplier * n ** (2.0 / 3.0) * T - 1e-9))


def net_times(n, T, multiplier=1.0) -> np.ndarray:
    """Uniform net 0, T/K, ..., T with K = net_size(n, T) knots after the origin."""
    k = net_size(n, T, multiplier)
    return T * np.arange(k + 1) / k


def path_sup_error(path: DbmPath, z) -> float:
    """sup over recorded times t > 0 and grid points of |M^N_t - M_t|."""
    z = np.asarray(z, dtype=np.complex128)
    best = 0.0
    for t, lam in zip(path.times, path.positions):
        if t > 0:
            best = max(best, sup_stieltjes_error(lam, z, t))
    return best


def time_uniform_error(n, T, region: GridG, rng, net_multiplier=1.0, beta=1, trial=0,
                       path: DbmPath | None = None) -> ErrorSample:
    """Sup over the time net and the grid of |M^N - M| along one matrix path.

    An explicit ``path`` replaces the simulated one (its own knots are used).
    """
    if T <= 0:
        raise ConfigurationError("T must be > 0")
    if path is None:
        path = simulate_path_matrix(n, net_times(n, T, net_multiplier), beta, _as_rng(rng).gen)
    return ErrorSample(path.n, trial, path_sup_error(path, region.points), float(T), _describe(region))


def _time_uniform_trial(task):
    n, T, grid, mult, beta, rng, i = task
    return time_uniform_error(n, T, grid, rng, mult, beta, trial=i)


def time_uniform_trials(n, T, region: GridG, trials, rng, net_multiplier=1.0, beta=1, threads=1):
    rng = _as_rng(rng)
    tasks = [(n, T, region, net_multiplier, beta, rng.child(n, i), i) for i in range(trials)]
    return run_trials(_time_uniform_trial, tasks, threads)


# flow-map convergence

@dataclass(frozen=True)
class _FlowPair:
    times: np.ndarray
    err: np.ndarray          # sup over points alive in both flows, per time
    m_err: np.ndarray        # sup |M^N - M| at the N-flow image points, per time
    excluded: int


def _flow_pair(path: DbmPath, region: EvaluationRegion, T, tol, out_times):
    z = region.grid.points
    fn = integrate_flow_n(path, z, T, tol, out_times)
    fi = integrate_flow_infty(z, T, tol, fn.times)
    both = fn.alive & fi.alive
    diff = np.where(both, np.abs(fn.values - fi.values), 0.0)
    m_err = np.zeros(fn.times.size)
    for k, t in enumerate(fn.times):
        a = both[k]
        if t > 0 and np.any(a):
            g = fn.values[k, a]
            lam = path.positions_at(t)
            mn = np.mean(2.0 / (g[:, None] - lam), axis=1)
            m_err[k] = np.max(np.abs(mn - _m_delta0_raw(g, t)))
    excluded = int(np.sum(~both[-1]))
    return _FlowPair(fn.times, diff.max(axis=1), m_err, excluded)


def _refined(knots, refine):
    if refine <= 1:
        return knots
    frac = np.arange(refine) / refine
    inner = (knots[:-1, None] + frac * np.diff(knots)[:, None]).ravel()
    return np.r_[inner, knots[-1]]


def _map_trial(task):
    n, T, region, tol, beta, mult, refine, rng = task
    if T == 0:
        return 0.0, 0, True
    path = simulate_path_matrix(n, net_times(n, T, mult), beta, rng.gen)
    pair = _flow_pair(path, region, T, tol, _refined(path.times, refine))
    eta = region.eta
    ok = gronwall_envelope_holds(pair.times, pair.err, pair.m_err, eta)
    return float(pair.err.max()), pair.excluded, ok


def _map_trials(n, T, region, trials, rng, tol, beta, mult, refine, threads):
    if trials < 10:
        raise ConfigurationError("flow experiments need trials >= 10")
    beta = check_beta(beta)
    rng = _as_rng(rng)
    tasks = [(n, T, region, tol, beta, mult, refine, rng.child(n, i)) for i in range(trials)]
    size = region.grid.size
    out = []
    for i, res in enumerate(iter_trials(_map_trial, tasks, threads)):
        if res[1] > SWALLOW_LIMIT * size:
            raise RegionTooCloseError(
                f"trial {i}: {res[1]} of {size} points swallowed; increase the margin")
        out.append(res)
    return out


def map_convergence_error(n, T, region: EvaluationRegion, trials, rng, tol=1e-10, beta=1,
                          net_multiplier=1.0, threads=1) -> list[ErrorSample]:
    """Per trial: sup over net times and grid points of |g^N_t - g_t|.

    Points swallowed in either flow are excluded and counted in ``excluded``.
    """
    out = _map_trials(n, T, region, trials, rng, tol, beta, net_multiplier, 1, threads)
    return [ErrorSample(n, i, e, float(T), _describe(region.grid), excl)
            for i, (e, excl, _) in enumerate(out)]


def gronwall_envelope_holds(times, map_err, m_err, eta, slack=1e-8) -> bool:
    """map_err(t) <= delta(t) t exp(2t / eta^2) at every time, delta(t) = sup_{s<=t} m_err(s)."""
    times = np.asarray(times, dtype=np.float64)
    if not eta > 0:
        return True  # the strip touches the real axis: no finite envelope
    delta = np.maximum.accumulate(np.asarray(m_err, dtype=np.float64))
    env = delta * times * np.exp(2.0 * times / eta ** 2)
    return bool(np.all(np.asarray(map_err) <= env + slack))


def gronwall_bound_check(n, T, region: EvaluationRegion, trials, rng, tol=1e-10, beta=1,
                         net_multiplier=1.0, refine=4, threads=1) -> list[bool]:
    """Per trial: does the realised map error sit below the Gronwall envelope?

    The envelope uses the realised Stieltjes error along the N-flow, sampled
    at ``refine`` points per knot interval.
    """
    out = _map_trials(n, T, region, trials, rng, tol, beta, net_multiplier, refine, threads)
    return [ok for _, _, ok in out]


# concentration

def _concentration_trial(task):
    n, t, z, beta, rng = task
    lam = sample_spectrum_matrix(n, t, beta, rng.gen).positions
    return complex(np.mean(2.0 / (z - lam)))


def concentration_error(n, t, z, trials, rng, beta=1, threads=1):
    """Sample sd of M^N_t(z) across trials; returns (sd, values)."""
    if trials < 100:
        raise ConfigurationError("concentration_error needs trials >= 100")
    z = complex(z)
    rng = _as_rng(rng)
    vals = np.array(run_trials(_concentration_trial,
                               [(n, t, z, check_beta(beta), rng.child(n, i)) for i in range(trials)], threads))
    sd = math.sqrt(np.sum(np.abs(vals - vals.mean()) ** 2) / (vals.size - 1))
    return sd, vals


# rate fitting

def medians_by_n(samples):
    ns = sorted({s.n for s in samples})
    groups = {n: [s.sup_error for s in samples if s.n == n] for n in ns}
    return ns, groups


def fit_rate(samples) -> RateFitResult:
    """Least squares of log(median error) on log n."""
    ns, groups = medians_by_n(samples)
    if len(ns) < 3:
        raise ConfigurationError(f"need >= 3 distinct n values, got {len(ns)}")
    short = [n for n in ns if len(groups[n]) < 10]
    if short:
        raise ConfigurationError(f"need >= 10 trials per n; short: {short}")
    med = np.array([np.median(groups[n]) for n in ns])
    if np.any(med <= 0) or not np.all(np.isfinite(med)):
        raise FitUndefinedError("median errors must be positive and finite to fit a rate")
    fit = stats.linregress(np.log(ns), np.log(med))
    return RateFitResult(float(fit.slope), float(fit.intercept), float(fit.stderr),
                         [int(n) for n in ns], [float(m) for m in med])


def fit_power(ns, values) -> RateFitResult:
    """Log-log fit of arbitrary positive values (e.g. standard deviations) against n."""
    ns = np.asarray(ns, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if ns.size < 3:
        raise ConfigurationError("need >= 3 points")
    if np.any(v <= 0):
        raise FitUndefinedError("values must be positive")
    fit = stats.linregress(np.log(ns), np.log(v))
    return RateFitResult(float(fit.slope), float(fit.intercept), float(fit.stderr),
                         [int(n) for n in ns], [float(x) for x in v])


def nonincreasing(values, allowed_inversions=0) -> bool:
    return int(np.sum(np.diff(values) > 0)) <= allowed_inversions


# driver-level studies

def _semicircle_trial(task):
    n, t, beta, rng = task
    lam = sample_spectrum_matrix(n, t, beta, rng.gen).positions
    return ks_to_semicircle(lam, 4.0 * math.sqrt(t)), float(np.max(np.abs(lam)))


def semicircle_check(n, t, seeds, rng, beta=1, threads=1):
    """Per seed: (KS distance to the semicircle of radius 4 sqrt(t), max |lambda|)."""
    rng = _as_rng(rng)
    out = run_trials(_semicircle_trial, [(n, t, beta, rng.child(n, i)) for i in range(seeds)], threads)
    return np.array([a for a, _ in out]), np.array([b for _, b in out])


def _marginal_trial(task):
    route, n, t, beta, rng, dt_max = task
    if route == "matrix":
        return sample_spectrum_matrix(n, t, beta, rng.gen).positions
    return simulate_path_sde(n, [0.0, t], beta, rng, dt_max=dt_max).positions[-1]


def sampler_equivalence(n, t, beta, trials, rng, dt_max=1e-3, threads=1) -> float:
    """Two-sample KS between pooled SDE and matrix marginals at time t."""
    rng = _as_rng(rng)
    tasks = [(r, n, t, beta, rng.child(k, n, i), dt_max)
             for k, r in enumerate(("matrix", "sde")) for i in range(trials)]
    out = run_trials(_marginal_trial, tasks, threads)
    return ks_two_sample(np.concatenate(out[:trials]), np.concatenate(out[trials:]))


def _extreme_trial(task):
    n, T, knots, beta, C, x, route, rng = task
    times = T * np.arange(knots + 1) / knots
    if route == "sde":
        path = simulate_path_sde(n, times, beta, rng)
    else:
        path = simulate_path_matrix(n, times, beta, rng.gen)
    return extreme_particle_stat(path, C, x)[1]


def extreme_bound_fraction(n, T, trials, rng, C=5.0, x=1.0, knots=100, beta=1, route="matrix",
                           threads=1) -> float:
    """Fraction of paths with max|lambda(t)| <= max|lambda(0)| + sqrt(t)(C + x) at every recorded t."""
    rng = _as_rng(rng)
    tasks = [(n, T, knots, beta, C, x, route, rng.child(n, i)) for i in range(trials)]
    return float(np.mean(run_trials(_extreme_trial, tasks, threads)))


def _displacement_trial(task):
    n, T, margin, re_half, counts, tol, beta, mult, rng = task
    path = simulate_path_matrix(n, net_times(n, T, mult), beta, rng.gen)
    box = hull_box(path, T)
    region = region_g(box, margin, re_half, counts)
    flow = integrate_flow_n(path, region.grid, T, tol)
    return map_displacement_check(flow, box)


def displacement_violations(n, T, trials, rng, margin=0.5, re_halfwidth=1.5, counts=(13, 6),
                            tol=1e-10, beta=1, net_multiplier=1.0, threads=1):
    """Per trial: max over alive points of |g_T(z) - z| - 5r (violation iff > 0)."""
    rng = _as_rng(rng)
    tasks = [(n, T, margin, re_halfwidth, tuple(counts), tol, beta, net_multiplier, rng.child(n, i))
             for i in range(trials)]
    return np.array(run_trials(_displacement_trial, tasks, threads))


# algebraic identities

def identity_suite(n, instances, beta, rng) -> dict:
    """Max Ward, resolvent and trace-difference residuals over random instances."""
    from .numerics import (check_resolvent_identity, check_trace_difference, check_ward,
                           resolvent, sample_ensemble)
    gen = _as_rng(rng).child(n, beta).gen
    worst = {"ward": 0.0, "resolvent": 0.0, "trace_difference": 0.0}
    for _ in range(instances):
        a = sample_ensemble(n, beta, gen)
        b = sample_ensemble(n, beta, gen)
        z = complex(gen.uniform(-2.0, 2.0), gen.uniform(0.1, 2.0))
        k = int(gen.integers(1, n + 1))
        worst["ward"] = max(worst["ward"], check_ward(resolvent(a, z)))
        worst["resolvent"] = max(worst["resolvent"], check_resolvent_identity(a, b, z))
        worst["trace_difference"] = max(worst["trace_difference"], check_trace_difference(a, k, z))
    return worst
