"""Command-line entry point.

    msle <subcommand> [--flags] [--config FILE] [--output DIR]

Settings are resolved in the order built-in defaults < config file < flags;
the seed falls back to the MSLE_SEED environment variable.  With ``--output``
the run writes ``<subcommand>.csv`` (``n,trial,sup_error,param``) and
``<subcommand>.json``; the summary is always printed to stdout.

Exit codes: 0 all checks passed, 1 an acceptance check failed, 2 I/O or
environment failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .errors import ConfigurationError
from .loewner import HullBox, integrate_flow_infty, integrate_flow_n, hull_box, region_g
from .numerics.rng import SeededRng
from .stieltjes import GridG, stability_experiment
from .dbm import simulate_path_matrix

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_USAGE = 0, 1, 2, 64

SUBCOMMANDS = ("identities", "sample", "locallaw", "timeuniform", "flow", "converge",
               "concentration", "stability")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    seed: int
    trials: int = 20
    n_list: list = field(default_factory=lambda: [250, 500, 1000, 2000])
    beta: int = 1
    t: float = 1.0
    T: float = 0.2
    re_min: float = -2.0
    re_max: float = 2.0
    im_min: float = 1.0
    im_max: float = 2.0
    n_re: int = 21
    n_im: int = 11
    margin: float = 0.5
    tol: float = 1e-10
    dt_max: float = 1e-3
    net_multiplier: float = 1.0
    z: complex = 2j
    eta: float = 1.0
    route: str = "matrix"
    output: str = ""
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"subcommand: unknown value {self.subcommand!r}")
        if self.beta not in (1, 2):
            raise UsageError(f"beta: must be 1 or 2, got {self.beta}")
        if not self.n_list:
            raise UsageError("n_list: must not be empty")
        if any(n < 1 for n in self.n_list) or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise UsageError("n_list: must be positive and strictly ascending")
        for name in ("trials", "n_re", "n_im", "threads"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name}: must be >= 1")
        for name in ("tol", "dt_max", "net_multiplier", "margin", "eta"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name}: must be > 0")
        for name in ("t", "T"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name}: must be >= 0")
        if not self.im_min > 0 or self.im_max < self.im_min or self.re_max < self.re_min:
            raise UsageError("grid: need 0 < im_min <= im_max and re_min <= re_max")
        if self.route not in ("matrix", "sde", "both"):
            raise UsageError(f"route: must be matrix, sde or both, got {self.route!r}")
        return self

    @property
    def grid(self) -> GridG:
        return GridG(self.re_min, self.re_max, self.im_min, self.im_max, self.n_re, self.n_im)


# per-subcommand defaults (the acceptance settings)
SUB_DEFAULTS = {
    "identities": {"trials": 100, "n_list": [16]},
    "sample": {"trials": 50, "n_list": [2000], "t": 1.0},
    "locallaw": {"trials": 20, "n_list": [250, 500, 1000, 2000], "t": 1.0},
    "timeuniform": {"trials": 20, "n_list": [1000], "T": 1.0},
    "flow": {"trials": 20, "n_list": [200], "T": 0.25, "re_min": -1.5, "re_max": 1.5, "n_re": 13, "n_im": 6},
    "converge": {"trials": 20, "n_list": [64, 128, 256, 512, 1024], "T": 0.2,
                 "re_min": -1.5, "re_max": 1.5, "im_max": 2.5, "n_re": 13, "n_im": 6},
    "concentration": {"trials": 200, "n_list": [250, 500, 1000, 2000], "t": 1.0},
    "stability": {"t": 1.0, "eta": 1.0},
}


def _parse_value(name, raw, kind):
    try:
        if kind is list:
            return [int(x) for x in str(raw).replace(" ", "").split(",") if x != ""]
        if kind is complex:
            return complex(str(raw).replace(" ", "").replace("i", "j"))
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return str(raw)
    except ValueError:
        raise UsageError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


_KINDS = {f.name: type(f.default) if f.default is not dataclasses.MISSING
          else (list if f.name == "n_list" else int if f.name in ("seed", "threads") else str)
          for f in dataclasses.fields(RunConfig)}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise OSError(f"cannot read config file {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KINDS or key == "subcommand":
            raise UsageError(f"{key}: unknown configuration key")
        out[key] = _parse_value(key, value, _KINDS[key])
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="msle", description="Dyson-driven multi-slit Loewner experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value file; flags take precedence")
        for key, kind in _KINDS.items():
            if key == "subcommand":
                continue
            flag = "--" + key.replace("_", "-")
            aliases = [flag, "--n"] if key == "n_list" else [flag]
            s.add_argument(*aliases, dest=key, default=None, metavar=key.upper())
    return p


def parse_config(argv, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    args = build_parser().parse_args(argv)
    values = dict(SUB_DEFAULTS.get(args.subcommand, {}))
    if args.config:
        values.update(read_config_file(args.config))
    for key, kind in _KINDS.items():
        raw = getattr(args, key, None)
        if key != "subcommand" and raw is not None:
            values[key] = _parse_value(key, raw, kind)
    if "seed" not in values:
        if "MSLE_SEED" not in environ:
            raise UsageError("seed: required (flag, config file or MSLE_SEED)")
        values["seed"] = _parse_value("seed", environ["MSLE_SEED"], int)
    return RunConfig(subcommand=args.subcommand, **values).validate()


@dataclass
class Criterion:
    name: str
    passed: bool
    value: float
    threshold: object

    def to_dict(self):
        return {"name": self.name, "pass": self.passed, "value": self.value, "threshold": self.threshold}


@dataclass
class RunSummary:
    config: dict
    criteria: list
    slopes: dict
    elapsed_seconds: float
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "criteria": [c.to_dict() for c in self.criteria],
                           "slopes": self.slopes, "elapsed_seconds": self.elapsed_seconds,
                           "version": self.version}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "RunSummary":
        d = json.loads(text)
        crit = [Criterion(c["name"], c["pass"], c["value"], c["threshold"]) for c in d["criteria"]]
        return cls(d["config"], crit, d["slopes"], d["elapsed_seconds"], d["version"])

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)


def _config_echo(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["z"] = [cfg.z.real, cfg.z.imag]
    return d


def _le(name, value, threshold):
    return Criterion(name, bool(value <= threshold), float(value), threshold)


def _ge(name, value, threshold):
    return Criterion(name, bool(value >= threshold), float(value), threshold)


def _within(name, value, lo, hi):
    return Criterion(name, bool(lo <= value <= hi), float(value), [lo, hi])


# subcommand bodies: each returns (rows, criteria, slopes)

def _run_identities(cfg, rng):
    crit = []
    for beta in (1, 2):
        res = ex.identity_suite(cfg.n_list[0], cfg.trials, beta, rng)
        crit += [_le(f"{k}_beta{beta}", v, 1e-10) for k, v in res.items()]
    return [], crit, {}


def _run_sample(cfg, rng):
    rows, crit = [], []
    for n in cfg.n_list:
        if cfg.route in ("matrix", "both"):
            ks, edge = ex.semicircle_check(n, cfg.t, cfg.trials, rng, cfg.beta, cfg.threads)
            rows += [(n, i, k, cfg.t) for i, k in enumerate(ks)]
            r = 4.0 * math.sqrt(cfg.t)
            crit.append(_le(f"semicircle_ks_n{n}", float(ks.max()), 0.02))
            frac = float(np.mean((edge >= 0.925 * r) & (edge <= 1.075 * r)))
            crit.append(_ge(f"edge_in_band_n{n}", frac, 0.9))
        if cfg.route in ("sde", "both"):
            ks = ex.sampler_equivalence(n, cfg.t, cfg.beta, cfg.trials, rng, cfg.dt_max, cfg.threads)
            crit.append(_le(f"sde_vs_matrix_ks_n{n}", ks, 0.05))
            frac = ex.extreme_bound_fraction(n, cfg.t, cfg.trials, rng, beta=cfg.beta, route="sde",
                                             threads=cfg.threads)
            crit.append(_ge(f"extreme_bound_n{n}", frac, 0.99))
    return rows, crit, {}


def _run_locallaw(cfg, rng):
    samples = []
    for n in cfg.n_list:
        samples += ex.local_law_error(n, cfg.t, cfg.grid, cfg.trials, rng, cfg.beta, cfg.threads)
    rows = [(s.n, s.trial, s.sup_error, s.param) for s in samples]
    if len(cfg.n_list) < 3:
        return rows, [], {}
    fit = ex.fit_rate(samples)
    crit = [_le("locallaw_slope", fit.slope, -1 / 3 + 0.05),
            Criterion("locallaw_medians_nonincreasing", ex.nonincreasing(fit.medians), 0.0, 0)]
    return rows, crit, {"locallaw": fit.slope, "locallaw_stderr": fit.stderr}


def _run_timeuniform(cfg, rng):
    n = cfg.n_list[0]
    tu = ex.time_uniform_trials(n, cfg.T, cfg.grid, cfg.trials, rng, cfg.net_multiplier, cfg.beta, cfg.threads)
    fixed = ex.local_law_error(n, cfg.T, cfg.grid, cfg.trials, rng.child(1), cfg.beta, cfg.threads)
    med = float(np.median([s.sup_error for s in fixed]))
    frac = float(np.mean([s.sup_error <= 2.0 * med for s in tu]))
    rows = [(s.n, s.trial, s.sup_error, s.param) for s in tu]
    return rows, [_ge("timeuniform_within_2x_fraction", frac, 0.9)], {}


def _run_flow(cfg, rng):
    n = cfg.n_list[0]
    viol = ex.displacement_violations(n, cfg.T, cfg.trials, rng, cfg.margin, cfg.re_max, (cfg.n_re, cfg.n_im),
                                      cfg.tol, cfg.beta, cfg.net_multiplier, cfg.threads)
    rows = [(n, i, max(v, 0.0), cfg.T) for i, v in enumerate(viol)]
    if cfg.output:
        path = simulate_path_matrix(n, ex.net_times(n, cfg.T, cfg.net_multiplier), cfg.beta,
                                    rng.child(n, 0).gen)
        region = region_g(hull_box(path, cfg.T), cfg.margin, cfg.re_max, (cfg.n_re, cfg.n_im))
        out = Path(cfg.output)
        integrate_flow_n(path, region.grid, cfg.T, cfg.tol).to_csv(out / "flow_n.csv")
        integrate_flow_infty(region.grid, cfg.T, cfg.tol, path.times).to_csv(out / "flow_infty.csv")
    return rows, [Criterion("displacement_violations", bool(np.all(viol <= 0)), float(np.sum(viol > 0)), 0)], {}


def _run_converge(cfg, rng):
    region = region_g(HullBox(0.0, cfg.T), cfg.margin, cfg.re_max, (cfg.n_re, cfg.n_im), cfg.im_max)
    samples = []
    for n in cfg.n_list:
        samples += ex.map_convergence_error(n, cfg.T, region, cfg.trials, rng, cfg.tol, cfg.beta,
                                            cfg.net_multiplier, cfg.threads)
    rows = [(s.n, s.trial, s.sup_error, s.param) for s in samples]
    swallowed = sum(s.excluded for s in samples) / (len(samples) * region.grid.size)
    crit = [Criterion("swallowed_fraction", swallowed < 0.01, swallowed, 0.01)]
    slopes = {}
    if len(cfg.n_list) >= 3:
        fit = ex.fit_rate(samples)
        crit.insert(0, _le("converge_slope", fit.slope, -1 / 3 + 0.05))
        slopes = {"converge": fit.slope, "converge_stderr": fit.stderr}
    return rows, crit, slopes


def _run_concentration(cfg, rng):
    sds, rows = [], []
    for n in cfg.n_list:
        sd, vals = ex.concentration_error(n, cfg.t, cfg.z, cfg.trials, rng, cfg.beta, cfg.threads)
        sds.append(sd)
        rows += [(n, i, abs(v - vals.mean()), cfg.t) for i, v in enumerate(vals)]
    if len(cfg.n_list) < 3:
        return rows, [], {}
    fit = ex.fit_power(cfg.n_list, sds)
    return rows, [_le("concentration_slope", fit.slope, -0.9)], {"concentration": fit.slope}


def _run_stability(cfg, rng):
    eps = np.logspace(-8, -2, 7)
    slope = stability_experiment(cfg.t, cfg.eta, eps, rng.gen)
    small = stability_experiment(1e-3, cfg.eta, eps, rng.child(1).gen)
    rows = [(0, i, 0.0, e) for i, e in enumerate(eps)]
    crit = [_within("stability_exponent", slope, 0.28, 0.39),
            _within("small_t_linear_slope", small, 0.9, 1.1)]
    return rows, crit, {"stability": slope, "small_t": small}


_RUNNERS = {"identities": _run_identities, "sample": _run_sample, "locallaw": _run_locallaw,
            "timeuniform": _run_timeuniform, "flow": _run_flow, "converge": _run_converge,
            "concentration": _run_concentration, "stability": _run_stability}


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write("n,trial,sup_error,param\n")
        for n, i, e, p in rows:
            fh.write(f"{int(n)},{int(i)},{float(e):.17g},{float(p):.17g}\n")


def run(cfg: RunConfig) -> RunSummary:
    """Run one subcommand; writes CSV + JSON when ``cfg.output`` is set."""
    start = time.perf_counter()
    if cfg.output:
        Path(cfg.output).mkdir(parents=True, exist_ok=True)
    rng = SeededRng(cfg.seed)
    rows, crit, slopes = _RUNNERS[cfg.subcommand](cfg, rng)
    summary = RunSummary(_config_echo(cfg), crit, slopes, time.perf_counter() - start)
    if cfg.output:
        out = Path(cfg.output)
        write_rows(out / f"{cfg.subcommand}.csv", rows)
        (out / f"{cfg.subcommand}.json").write_text(summary.to_json() + "\n")
    return summary


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except (UsageError, ConfigurationError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        summary = run(cfg)
    except ConfigurationError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    print(summary.to_json())
    return EXIT_OK if summary.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
