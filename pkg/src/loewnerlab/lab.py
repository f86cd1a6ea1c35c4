"""Experiment configuration, orchestration and reporting.

Every experiment is described by an :class:`ExperimentConfig` read from a
strict JSON file.  Trials are fanned out over a process pool and reduced in
trial order, so CSV outputs do not depend on the worker count.  Each run
writes per-trial and summary CSV files plus a JSON report that echoes the
resolved configuration and the outcome of every hard check.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats

from ._validation import LoewnerLabError
from .bessel import (
    BesselParams,
    besq_exact_sample,
    classify_boundary,
    mirror_solution,
    simulate_reflecting,
)
from .driver import DriverPath, TimeGrid, sample_brownian
from .excursions import estimate_lambda, long_excursion_fraction
from .geometry import (
    HullBase,
    detect_double_points,
    detect_real_hits,
    excursion_hull_experiment,
    extract_bubble,
    hull_base,
    render_svg,
)
from .loewner import (
    backward_elementary,
    build_chain,
    evolve_backward,
    forward_elementary,
    inverse_forward,
    trace,
)
from .seeds import trial_seed

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunReport",
    "KINDS",
    "trial_seed",
    "parse_config",
    "load_config",
    "dump_config",
    "ks_critical_value",
    "distribution_samples",
    "run_experiment",
    "run_phase_scan",
    "run_boundary",
    "run_mirror",
    "run_excursion_hull",
    "run_lambda",
    "run_distribution_test",
    "run_trace_render",
    "run_all",
    "shipped_config_dir",
    "shipped_schema",
]

log = logging.getLogger(__name__)

KINDS = ("phase_scan", "boundary_class", "mirror", "excursion_hull", "lambda",
         "distribution_test", "trace_render")


class ConfigError(LoewnerLabError):
    """Invalid experiment configuration; ``problems`` lists every violation."""

    def __init__(self, problems, source=None):
        self.problems = list(problems)
        where = f"{source}: " if source else ""
        super().__init__(where + "; ".join(self.problems))


def _kappa_value(x):
    if isinstance(x, str):
        return float(Fraction(x))
    return float(x)


@dataclass
class ExperimentConfig:
    """Resolved experiment parameters.  ``tol_contact = None`` means three
    times the median segment length of each trace."""

    kind: str
    kappas: list = field(default_factory=list)
    t_end: float = 1.0
    n_steps: int = 10000
    m: float = 0.05
    tol_contact: float | None = None
    tol_height: float = 0.02
    exclude_radius: float = 0.05
    zero_threshold: float = 1e-4
    escape_level: float = 0.1
    base_seed: int = 0
    n_seeds: int = 100
    out_dir: str = "out"
    every: int = 10
    rule: str = "left"
    workers: int = 1
    z: list = field(default_factory=lambda: [0.0, 1.0])
    lambda_horizons: list = field(default_factory=lambda: [0.1, 0.3, 0.9])
    long_horizons: list = field(default_factory=lambda: [0.25, 1.0, 4.0])
    eps_sequence: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    mirror_base_seeds: int = 50
    besq_x: float = 1.0
    besq_delta: float = 0.5
    besq_dt: float = 0.1
    besq_samples: int = 100000

    @property
    def dt(self):
        return self.t_end / self.n_steps

    def grid(self):
        return TimeGrid(self.t_end, self.n_steps)

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        p = []
        if self.kind not in KINDS:
            p.append(f"kind: must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if not isinstance(self.kappas, list):
            p.append("kappas: must be a list")
        else:
            for k in self.kappas:
                if not (isinstance(k, (int, float)) and not isinstance(k, bool)) or not k > 0:
                    p.append(f"kappas: values must be > 0, got {k!r}")
        for name in ("t_end", "m", "tol_height", "exclude_radius", "zero_threshold",
                     "escape_level", "besq_x", "besq_delta", "besq_dt"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
                p.append(f"{name}: must be a positive number, got {v!r}")
        if self.tol_contact is not None and (not isinstance(self.tol_contact, (int, float))
                                             or not self.tol_contact > 0):
            p.append(f"tol_contact: must be positive or null, got {self.tol_contact!r}")
        for name in ("n_steps", "n_seeds", "every", "workers", "mirror_base_seeds"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                p.append(f"{name}: must be an integer >= 1, got {v!r}")
        if isinstance(self.besq_samples, bool) or not isinstance(self.besq_samples, int) or self.besq_samples < 0:
            p.append(f"besq_samples: must be an integer >= 0, got {self.besq_samples!r}")
        if isinstance(self.base_seed, bool) or not isinstance(self.base_seed, int) or self.base_seed < 0:
            p.append(f"base_seed: must be a nonnegative integer, got {self.base_seed!r}")
        if self.rule not in ("left", "midpoint"):
            p.append(f"rule: must be 'left' or 'midpoint', got {self.rule!r}")
        if not isinstance(self.out_dir, str) or not self.out_dir:
            p.append("out_dir: must be a nonempty string")
        if not (isinstance(self.z, list) and len(self.z) == 2 and all(isinstance(v, (int, float)) for v in self.z)
                and self.z[1] > 0):
            p.append(f"z: must be [re, im] with im > 0, got {self.z!r}")
        for name in ("lambda_horizons", "long_horizons", "eps_sequence"):
            v = getattr(self, name)
            if not isinstance(v, list) or not v or not all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in v):
                p.append(f"{name}: must be a nonempty list of positive numbers")
        return p


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _key_line(text, key):
    needle = f'"{key}"'
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return n
    return None


def parse_config(text, source="<config>"):
    """Parse a JSON config string; unknown keys and bad values are all reported."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"], source) from None
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"], source)
    problems = []
    for key in raw:
        if key not in _FIELDS:
            line = _key_line(text, key)
            problems.append(f"unknown key {key!r}" + (f" (line {line})" if line else ""))
    if "kind" not in raw:
        problems.append("kind: required")
    if problems:
        raise ConfigError(problems, source)
    raw = dict(raw)
    if isinstance(raw.get("kappas"), list):
        try:
            raw["kappas"] = [_kappa_value(k) for k in raw["kappas"]]
        except (ValueError, ZeroDivisionError, TypeError):
            raise ConfigError([f"kappas: cannot parse {raw['kappas']!r}"], source) from None
    for key in ("t_end", "m", "tol_height", "exclude_radius", "zero_threshold", "escape_level",
                "besq_x", "besq_delta", "besq_dt"):
        if isinstance(raw.get(key), int) and not isinstance(raw.get(key), bool):
            raw[key] = float(raw[key])
    cfg = ExperimentConfig(**raw)
    problems = cfg.validate()
    if problems:
        raise ConfigError(problems, source)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read: {exc.strerror}"], str(path)) from None
    return parse_config(text, str(path))


def dump_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def shipped_config_dir():
    return resources.files("loewnerlab") / "configs"


def shipped_schema():
    return json.loads((resources.files("loewnerlab") / "schema" / "report.schema.json").read_text())


def with_overrides(cfg, seed=None, out=None, workers=None, dt=None, kappas=None):
    d = cfg.to_dict()
    if seed is not None:
        d["base_seed"] = int(seed)
    if out is not None:
        d["out_dir"] = str(out)
    if workers is not None:
        d["workers"] = int(workers)
    if dt is not None:
        n = round(d["t_end"] / dt)
        if n < 1 or abs(n * dt - d["t_end"]) > 1e-9 * d["t_end"]:
            raise ConfigError([f"dt: t_end={d['t_end']} is not a multiple of {dt}"])
        d["n_steps"] = int(n)
    if kappas is not None:
        d["kappas"] = list(kappas)
    new = ExperimentConfig(**d)
    problems = new.validate()
    if problems:
        raise ConfigError(problems)
    return new


# -- reporting ---------------------------------------------------------------


@dataclass
class Gate:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class RunReport:
    kind: str
    config: dict
    rows: list
    gates: list
    wall_clock_s: float
    version: str
    rng: dict
    files: list = field(default_factory=list)

    @property
    def passed(self):
        return all(g.passed for g in self.gates)

    def to_dict(self):
        return {
            "kind": self.kind,
            "config": self.config,
            "rows": self.rows,
            "gates": [g.to_dict() for g in self.gates],
            "passed": self.passed,
            "wall_clock_s": self.wall_clock_s,
            "version": self.version,
            "rng": self.rng,
            "files": self.files,
        }

    def summary_lines(self):
        return [f"[{'PASS' if g.passed else 'FAIL'}] {g.name}: {g.detail}" for g in self.gates]


def _version():
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # pragma: no cover - running from a source tree
        from . import __version__

        return __version__


_RNG = {
    "bit_generator": "numpy.random.Philox",
    "keying": "SeedSequence([seed, stream, key, block]) with 4096-value blocks",
    "trial_seed": "base_seed XOR blake2b-64(label|trial)",
}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[h]) for h in header])
    return str(path)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _finish(cfg, rows, gates, t0, files):
    rep = RunReport(cfg.kind, cfg.to_dict(), _jsonable(rows), gates, time.perf_counter() - t0,
                    _version(), dict(_RNG), files)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rpath = out / f"{cfg.kind}_report.json"
    rep.files.append(str(rpath))
    rpath.write_text(json.dumps(_jsonable(rep.to_dict()), indent=2) + "\n")
    for line in rep.summary_lines():
        log.info(line)
    return rep


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _prop_se(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else float("nan")


# -- phase scan ----------------------------------------------------------------

PHASE_MAX_SIMPLE = 0.05
PHASE_MIN_NONSIMPLE = 0.5


def _phase_trial(args):
    kappa, seed, t_end, n_steps, every, rule, tol_h, excl, m, tol_c = args
    B = sample_brownian(seed, TimeGrid(t_end, n_steps))
    chain = build_chain(DriverPath(kappa, B), rule)
    poly = trace(chain, every, contacts=True)
    hits = detect_real_hits(poly, tol_h, excl)
    dps = detect_double_points(poly, m, tol_c)
    return {"kappa": kappa, "seed": seed, "real_hit": bool(hits.size),
            "first_hit_time": float(hits[0]) if hits.size else float("nan"),
            "n_double_points": len(dps)}


def run_phase_scan(cfg):
    """Fraction of traces touching the real line (and self-touching) per kappa."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    trials, rows, gates = [], [], []
    for kappa in cfg.kappas:
        args = [(kappa, trial_seed(cfg.base_seed, f"phase_scan:{kappa!r}", j), cfg.t_end, cfg.n_steps,
                 cfg.every, cfg.rule, cfg.tol_height, cfg.exclude_radius, cfg.m, cfg.tol_contact)
                for j in range(cfg.n_seeds)]
        res = _pmap(_phase_trial, args, cfg.workers)
        trials.extend(res)
        n = len(res)
        hit = sum(r["real_hit"] for r in res) / n
        dp = sum(r["n_double_points"] > 0 for r in res) / n
        rows.append({"kappa": kappa, "n": n, "hit_fraction": hit, "hit_se": _prop_se(hit, n),
                     "double_point_fraction": dp, "double_point_se": _prop_se(dp, n)})
        if kappa < 4:
            gates.append(Gate(f"phase_scan kappa={kappa:.6g} real-hit fraction <= {PHASE_MAX_SIMPLE}",
                              hit <= PHASE_MAX_SIMPLE, f"{hit:.4f} +- {_prop_se(hit, n):.4f} (n={n})"))
        elif kappa > 4:
            gates.append(Gate(f"phase_scan kappa={kappa:.6g} real-hit fraction >= {PHASE_MIN_NONSIMPLE}",
                              hit >= PHASE_MIN_NONSIMPLE, f"{hit:.4f} +- {_prop_se(hit, n):.4f} (n={n})"))
    files = [
        _write_csv(out / "phase_scan_trials.csv",
                   ["kappa", "seed", "real_hit", "first_hit_time", "n_double_points"], trials),
        _write_csv(out / "phase_scan_summary.csv",
                   ["kappa", "n", "hit_fraction", "hit_se", "double_point_fraction", "double_point_se"], rows),
    ]
    return _finish(cfg, rows, gates, t0, files)


# -- boundary classification ---------------------------------------------------


def _besq_sampler_check(cfg):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.base_seed, 2, 0, 0])))
    x, delta, dt, n = cfg.besq_x, cfg.besq_delta, cfg.besq_dt, cfg.besq_samples
    s = besq_exact_sample(x, delta, dt, n, rng)
    mean, var = float(s.mean()), float(s.var(ddof=1))
    m4 = float(np.mean((s - s.mean()) ** 4))
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt(max(m4 - var * var, 0.0) / n)
    mean0 = x + delta * dt
    var0 = 4 * x * dt + 2 * delta * dt * dt
    row = {"kappa": None, "n": n, "check": "besq_exact_sampler", "mean": mean, "mean_se": se_mean,
           "mean_expected": mean0, "variance": var, "variance_se": se_var, "variance_expected": var0}
    gates = [
        Gate("besq exact sampler mean within 3 SE", abs(mean - mean0) <= 3 * se_mean,
             f"{mean:.5f} vs {mean0:.5f} (SE {se_mean:.5f}, n={n})"),
        Gate("besq exact sampler variance within 3 SE", abs(var - var0) <= 3 * se_var,
             f"{var:.5f} vs {var0:.5f} (SE {se_var:.5f}, n={n})"),
    ]
    return row, gates


BOUNDARY_MAX_ESCAPE = 0.01
BOUNDARY_MIN_ESCAPE = 0.99


def run_boundary(cfg):
    """Absorbing/reflecting verdict per kappa, plus the exact BESQ sampler check."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    rows, gates = [], []
    for kappa in cfg.kappas:
        res = classify_boundary(BesselParams(kappa), cfg.n_seeds, cfg.escape_level, cfg.t_end, cfg.dt,
                                cfg.base_seed)
        n = res.trials
        rows.append({"kappa": kappa, "n": n, "d": res.d, "verdict": res.verdict,
                     "escape_fraction": res.escape_fraction, "escape_se": _prop_se(res.escape_fraction, n),
                     "absorbed_fraction": res.absorbed_fraction, "x0": res.x0})
        if kappa <= 4:
            want, ok = "absorbing", res.escape_fraction <= BOUNDARY_MAX_ESCAPE
            bound = f"escape <= {BOUNDARY_MAX_ESCAPE}"
        else:
            want, ok = "reflecting", res.escape_fraction >= BOUNDARY_MIN_ESCAPE
            bound = f"escape >= {BOUNDARY_MIN_ESCAPE}"
        gates.append(Gate(f"boundary kappa={kappa:.6g} is {want} with {bound}", ok and res.verdict == want,
                          f"verdict {res.verdict}, escape fraction {res.escape_fraction:.4f} (n={n})"))
    if cfg.besq_samples:
        row, g = _besq_sampler_check(cfg)
        rows.append(row)
        gates.extend(g)
    files = [_write_csv(out / "boundary_summary.csv",
                        ["kappa", "n", "d", "verdict", "escape_fraction", "escape_se", "absorbed_fraction", "x0"],
                        [r for r in rows if r.get("check") is None])]
    return _finish(cfg, rows, gates, t0, files)


# -- mirror solutions ----------------------------------------------------------

MIRROR_MIN_SPREAD = 0.1
MIRROR_MIN_FRACTION = 0.95
BASE_MAX_REL_ERR = 0.05


def _mirror_trial(args):
    kappa, seed, t_end, n_steps, with_base, eps = args
    B = sample_brownian(seed, TimeGrid(t_end, n_steps))
    params = BesselParams(kappa)
    rho = simulate_reflecting(params, B).values
    rho_m = mirror_solution(params, B).values
    spread = float(np.max(rho - rho_m))
    ok = bool(rho.min() >= -1e-12 and rho_m.max() <= 1e-12 and rho[0] == 0 and rho_m[0] == 0
              and spread > MIRROR_MIN_SPREAD)
    row = {"kappa": kappa, "seed": seed, "rho_min": float(rho.min()), "mirror_max": float(rho_m.max()),
           "sup_spread": spread, "conditions_ok": ok, "base_length": float("nan"),
           "bessel_base": float("nan"), "rel_err": float("nan")}
    if with_base:
        chain = build_chain(DriverPath(kappa, B))
        base = hull_base(chain, n_steps, eps)
        pred = math.sqrt(kappa) * float(rho[-1] - rho_m[-1])
        row["base_length"] = base.length
        row["bessel_base"] = pred
        row["rel_err"] = abs(base.length - pred) / base.length if base.length > 0 else float("inf")
    return row


def run_mirror(cfg):
    """Two solutions from 0 and the hull base they predict."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    trials, rows, gates = [], [], []
    for kappa in cfg.kappas:
        if not kappa > 4:
            raise ConfigError([f"kappas: mirror solutions need kappa > 4, got {kappa}"])
        args = [(kappa, trial_seed(cfg.base_seed, f"mirror:{kappa!r}", j), cfg.t_end, cfg.n_steps,
                 j < cfg.mirror_base_seeds, cfg.eps_sequence) for j in range(cfg.n_seeds)]
        res = _pmap(_mirror_trial, args, cfg.workers)
        trials.extend(res)
        n = len(res)
        frac = sum(r["conditions_ok"] for r in res) / n
        errs = np.array([r["rel_err"] for r in res if not math.isnan(r["rel_err"])])
        nb = errs.size
        mean_err = float(errs.mean()) if nb else float("nan")
        se_err = float(errs.std(ddof=1) / math.sqrt(nb)) if nb > 1 else float("nan")
        rows.append({"kappa": kappa, "n": n, "conditions_fraction": frac, "conditions_se": _prop_se(frac, n),
                     "n_base": nb, "mean_rel_err": mean_err, "rel_err_se": se_err,
                     "max_rel_err": float(errs.max()) if nb else float("nan")})
        gates.append(Gate(f"mirror kappa={kappa:.6g} sign/spread conditions in >= {MIRROR_MIN_FRACTION:.0%} seeds",
                          frac >= MIRROR_MIN_FRACTION, f"{frac:.3f} (n={n})"))
        if nb:
            bad = [r["seed"] for r in res if r["rel_err"] > BASE_MAX_REL_ERR]
            gates.append(Gate(f"mirror kappa={kappa:.6g} mean relative base error <= {BASE_MAX_REL_ERR}",
                              mean_err <= BASE_MAX_REL_ERR,
                              f"{mean_err:.4f} +- {se_err:.4f} (n={nb}); seeds above bound: {len(bad)}"))
    files = [
        _write_csv(out / "mirror_trials.csv",
                   ["kappa", "seed", "rho_min", "mirror_max", "sup_spread", "conditions_ok",
                    "base_length", "bessel_base", "rel_err"], trials),
        _write_csv(out / "mirror_summary.csv",
                   ["kappa", "n", "conditions_fraction", "conditions_se", "n_base", "mean_rel_err",
                    "rel_err_se", "max_rel_err"], rows),
    ]
    return _finish(cfg, rows, gates, t0, files)


# -- excursion -> hull ---------------------------------------------------------

HULL_MIN_BASE = 0.01
HULL_BASE_FRACTION = 0.9
HULL_DOUBLE_FRACTION = 0.5


def _hull_trial(args):
    kappa, seed, t_end, n_steps, m, zt, every, eps, tol_c = args
    B = sample_brownian(seed, TimeGrid(t_end, n_steps))
    reps = excursion_hull_experiment(DriverPath(kappa, B), m, zt, every, eps, tol_c)
    return [r.to_dict() for r in reps]


def run_excursion_hull(cfg):
    """Hull base and double points after macroscopic excursion starts."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    trials, rows, gates = [], [], []
    for kappa in cfg.kappas:
        if not kappa > 4:
            raise ConfigError([f"kappas: the excursion-hull experiment needs kappa > 4, got {kappa}"])
        args = [(kappa, trial_seed(cfg.base_seed, f"excursion_hull:{kappa!r}", j), cfg.t_end, cfg.n_steps,
                 cfg.m, cfg.zero_threshold, cfg.every, cfg.eps_sequence, cfg.tol_contact)
                for j in range(cfg.n_seeds)]
        res = [r for group in _pmap(_hull_trial, args, cfg.workers) for r in group]
        trials.extend(res)
        n = len(res)
        fb = sum(r["base_length"] > HULL_MIN_BASE for r in res) / n if n else float("nan")
        fd = sum(r["double_point_found"] for r in res) / n if n else float("nan")
        fc = sum(r["closes_at_end"] for r in res) / n if n else float("nan")
        rows.append({"kappa": kappa, "n": n, "seeds": cfg.n_seeds, "base_fraction": fb,
                     "base_se": _prop_se(fb, n), "double_point_fraction": fd, "double_point_se": _prop_se(fd, n),
                     "closes_fraction": fc, "closes_se": _prop_se(fc, n)})
        gates.append(Gate(f"excursion_hull kappa={kappa:.6g} base > {HULL_MIN_BASE} in >= "
                          f"{HULL_BASE_FRACTION:.0%} of restarts", n > 0 and fb >= HULL_BASE_FRACTION,
                          f"{fb:.3f} (n={n})"))
        gates.append(Gate(f"excursion_hull kappa={kappa:.6g} double point in >= "
                          f"{HULL_DOUBLE_FRACTION:.0%} of restarts", n > 0 and fd >= HULL_DOUBLE_FRACTION,
                          f"{fd:.3f} (n={n})"))
    files = [
        _write_csv(out / "excursion_hull_trials.csv",
                   ["seed", "kappa", "excursion_start", "excursion_end", "duration", "base_left",
                    "base_right", "base_length", "double_point_found", "n_double_points", "closes_at_end"],
                   trials),
        _write_csv(out / "excursion_hull_summary.csv",
                   ["kappa", "n", "seeds", "base_fraction", "base_se", "double_point_fraction",
                    "double_point_se", "closes_fraction", "closes_se"], rows),
    ]
    return _finish(cfg, rows, gates, t0, files)


# -- excursion statistics ------------------------------------------------------

LONG_MIN_FRACTION = 0.95


def run_lambda(cfg):
    """Probability of no long completed excursion, and of some long excursion, versus horizon."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    rows, gates = [], []
    for kappa in cfg.kappas:
        params = BesselParams(kappa)
        lam = [estimate_lambda(t, cfg.m, params, cfg.n_seeds, cfg.base_seed, cfg.dt, cfg.zero_threshold)
               for t in cfg.lambda_horizons]
        lng = [long_excursion_fraction(t, cfg.m, params, cfg.n_seeds, cfg.base_seed, cfg.dt,
                                       cfg.zero_threshold) for t in cfg.long_horizons]
        for e in lam:
            rows.append({"kappa": kappa, "n": e.n, "quantity": "no_long_completed_excursion", "t": e.t,
                         "m": e.m, "p_hat": e.p_hat, "se": e.se, "delta": e.delta})
        for e in lng:
            rows.append({"kappa": kappa, "n": e.n, "quantity": "some_long_excursion", "t": e.t,
                         "m": e.m, "p_hat": e.p_hat, "se": e.se, "delta": e.delta})
        mono = all(b.p_hat <= a.p_hat + 3 * math.hypot(a.se, b.se) for a, b in zip(lam, lam[1:]))
        gates.append(Gate(f"lambda kappa={kappa:.6g} nonincreasing in t", mono,
                          ", ".join(f"t={e.t:g}: {e.p_hat:.4f}" for e in lam)))
        by_t = {round(e.t, 12): e for e in lam}
        for e in lam:
            first = by_t.get(round(e.t / 3, 12))
            if first is None:
                continue
            se = math.hypot(e.se, 2 * first.p_hat * first.se)
            ok = e.p_hat <= first.p_hat ** 2 + 3 * se
            gates.append(Gate(f"lambda kappa={kappa:.6g} p(t={e.t:g}) <= p(t={first.t:g})^2 + 3 SE", ok,
                              f"{e.p_hat:.4f} vs {first.p_hat ** 2:.4f} (SE {se:.4f}, n={e.n})"))
        rising = all(b.p_hat >= a.p_hat - 3 * math.hypot(a.se, b.se) for a, b in zip(lng, lng[1:]))
        gates.append(Gate(f"lambda kappa={kappa:.6g} long-excursion fraction nondecreasing", rising,
                          ", ".join(f"T={e.t:g}: {e.p_hat:.4f}" for e in lng)))
        last = lng[-1]
        gates.append(Gate(f"lambda kappa={kappa:.6g} long-excursion fraction at T={last.t:g} "
                          f">= {LONG_MIN_FRACTION}", last.p_hat >= LONG_MIN_FRACTION,
                          f"{last.p_hat:.4f} (n={last.n})"))
    files = [_write_csv(out / "lambda_summary.csv",
                        ["kappa", "quantity", "t", "m", "n", "p_hat", "se", "delta"], rows)]
    return _finish(cfg, rows, gates, t0, files)


# -- distributional identity ---------------------------------------------------

MIN_KS_SAMPLES = 500


def ks_critical_value(n1, n2, alpha=0.01):
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def _dist_trial(args):
    kappa, seed, t_end, n_steps, z, side, form = args
    B = sample_brownian(seed, TimeGrid(t_end, n_steps))
    drv = DriverPath(kappa, B)
    chain = build_chain(drv)
    shift = float(drv.values[-1])
    if side == "backward":
        w = evolve_backward(chain, z)
        return w - shift if form == "centered" else w + shift
    return inverse_forward(chain, z + shift if form == "centered" else z)


def distribution_samples(kappa, z, grid, seeds, side, form="centered", workers=1):
    """Samples of the backward map or the inverse forward map at ``z``.

    ``side="backward"`` gives ``h_t(z) - U_t`` (``form="centered"``) or
    ``h_t(z) + U_t`` (``form="literal"``); ``side="forward"`` gives
    ``g_t^{-1}(z + U_t)`` or ``g_t^{-1}(z)``.
    """
    if side not in ("backward", "forward") or form not in ("centered", "literal"):
        raise LoewnerLabError("bad side or form")
    args = [(kappa, s, grid.t_end, grid.n_steps, complex(z), side, form) for s in seeds]
    return np.array(_pmap(_dist_trial, args, workers), dtype=np.complex128)


def run_distribution_test(cfg):
    """Two-sample KS comparison of the backward map and the inverse forward map."""
    t0 = time.perf_counter()
    if cfg.n_seeds < MIN_KS_SAMPLES:
        raise ConfigError([f"n_seeds: at least {MIN_KS_SAMPLES} samples per side are needed, got {cfg.n_seeds}"])
    out = Path(cfg.out_dir)
    z = complex(*cfg.z)
    grid = cfg.grid()
    rows, gates, samples = [], [], []
    n = cfg.n_seeds
    crit = ks_critical_value(n, n)
    for kappa in cfg.kappas:
        sa = [trial_seed(cfg.base_seed, f"dist:backward:{kappa!r}", j) for j in range(n)]
        sb = [trial_seed(cfg.base_seed, f"dist:forward:{kappa!r}", j) for j in range(n)]
        for form in ("centered", "literal"):
            a = distribution_samples(kappa, z, grid, sa, "backward", form, cfg.workers)
            b = distribution_samples(kappa, z, grid, sb, "forward", form, cfg.workers)
            ks_re = float(stats.ks_2samp(a.real, b.real).statistic)
            ks_im = float(stats.ks_2samp(a.imag, b.imag).statistic)
            rows.append({"kappa": kappa, "n": n, "form": form, "ks_re": ks_re, "ks_im": ks_im,
                         "critical": crit, "alpha": 0.01})
            for j in range(n):
                samples.append({"kappa": kappa, "form": form, "index": j, "backward_re": a[j].real,
                                "backward_im": a[j].imag, "forward_re": b[j].real, "forward_im": b[j].imag})
            if form == "centered":
                gates.append(Gate(f"dist kappa={kappa:.6g} KS(Re) < 0.01-level critical value", ks_re < crit,
                                  f"{ks_re:.4f} vs {crit:.4f} (n={n}/side)"))
                gates.append(Gate(f"dist kappa={kappa:.6g} KS(Im) < 0.01-level critical value", ks_im < crit,
                                  f"{ks_im:.4f} vs {crit:.4f} (n={n}/side)"))
    files = [
        _write_csv(out / "distribution_summary.csv",
                   ["kappa", "form", "n", "ks_re", "ks_im", "critical", "alpha"], rows),
        _write_csv(out / "distribution_samples.csv",
                   ["kappa", "form", "index", "backward_re", "backward_im", "forward_re", "forward_im"],
                   samples),
    ]
    return _finish(cfg, rows, gates, t0, files)


# -- rendering and exact oracles -----------------------------------------------


def exact_oracle_checks():
    """Deterministic checks against closed forms; returns ``(rows, gates)``."""
    from .driver import synthetic_path

    rows, gates = [], []
    n = 1000
    zero = synthetic_path(np.zeros(n + 1), 1.0)
    chain0 = build_chain(DriverPath(0.0, zero))
    poly = trace(chain0, 1)
    expect = 2j * np.sqrt(poly.times)
    err = float(np.max(np.abs(poly.points - expect)))
    rows.append({"kappa": 0.0, "n": n + 1, "check": "zero_driver_trace", "max_error": err})
    gates.append(Gate("kappa=0 trace equals 2i sqrt(t) within 1e-8", err <= 1e-8, f"max error {err:.3e}"))
    t = 1.0
    worst = 0.0
    for z in (2j, 1 + 1j, 3 + 0j):
        h = evolve_backward(chain0, z)
        exact = np.sqrt(complex(z) ** 2 - 4 * t)
        exact = exact if exact.imag > 0 or (exact.imag == 0 and exact.real * z.real >= 0) else -exact
        worst = max(worst, abs(h - exact))
    rows.append({"kappa": 0.0, "n": 3, "check": "zero_driver_backward_map", "max_error": worst})
    gates.append(Gate("zero-driver backward map equals sqrt(z^2 - 4t) within 1e-9", worst <= 1e-9,
                      f"max error {worst:.3e}"))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([0, 3, 0, 0])))
    rt = 0.0
    for _ in range(1000):
        z = complex(rng.uniform(-3, 3), rng.uniform(0.01, 3))
        u = rng.uniform(-1, 1)
        dt = 10 ** rng.uniform(-6, -1)
        w, _, _ = forward_elementary(backward_elementary(z, u, dt), u, dt)
        rt = max(rt, abs(w - z))
    rows.append({"kappa": None, "n": 1000, "check": "elementary_round_trip", "max_error": rt})
    gates.append(Gate("forward(backward(z)) == z within 1e-12", rt <= 1e-12, f"max error {rt:.3e}"))
    return rows, gates


def _render_trial(args):
    kappa, seed, t_end, n_steps, every, m, tol_c, out_dir = args
    B = sample_brownian(seed, TimeGrid(t_end, n_steps))
    chain = build_chain(DriverPath(kappa, B))
    poly = trace(chain, every, contacts=True)
    reals = np.concatenate([[poly.root.real], poly.contact_points])
    base = HullBase(float(reals.min()), float(reals.max()), n_steps)
    bubbles = []
    for rec in detect_double_points(poly, m, tol_c):
        try:
            bubbles.append(extract_bubble(poly, rec, tol_c))
        except LoewnerLabError:
            continue
    path = Path(out_dir) / f"trace_kappa{kappa:.4g}_seed{seed}.svg"
    render_svg(poly, path, hull=base, bubbles=bubbles, title=f"kappa={kappa:.4g} seed={seed}")
    return {"kappa": kappa, "seed": seed, "n_points": len(poly), "n_bubbles": len(bubbles),
            "base_left": base.left, "base_right": base.right, "file": str(path)}


def run_trace_render(cfg):
    """SVG renderings of traces plus the closed-form oracle checks."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, gates = exact_oracle_checks()
    args = [(kappa, trial_seed(cfg.base_seed, f"trace_render:{kappa!r}", j), cfg.t_end, cfg.n_steps,
             cfg.every, cfg.m, cfg.tol_contact, str(out))
            for kappa in cfg.kappas for j in range(cfg.n_seeds)]
    renders = _pmap(_render_trial, args, cfg.workers)
    files = [_write_csv(out / "trace_render.csv",
                        ["kappa", "seed", "n_points", "n_bubbles", "base_left", "base_right", "file"], renders)]
    files.extend(r["file"] for r in renders)
    rows.extend({"kappa": r["kappa"], "n": r["n_points"], "check": "render", "file": r["file"],
                 "n_bubbles": r["n_bubbles"]} for r in renders)
    return _finish(cfg, rows, gates, t0, files)


_RUNNERS = {
    "phase_scan": run_phase_scan,
    "boundary_class": run_boundary,
    "mirror": run_mirror,
    "excursion_hull": run_excursion_hull,
    "lambda": run_lambda,
    "distribution_test": run_distribution_test,
    "trace_render": run_trace_render,
}


def run_experiment(cfg):
    return _RUNNERS[cfg.kind](cfg)


def run_all(config_dir=None, out_dir=None, **overrides):
    """Run every ``*.json`` config in ``config_dir`` (default: the shipped ones).

    Each report goes to its own subdirectory named after the config file.
    Returns ``(reports, aggregate)``.
    """
    t0 = time.perf_counter()
    cdir = Path(str(shipped_config_dir())) if config_dir is None else Path(config_dir)
    paths = sorted(cdir.glob("*.json"))
    if not paths:
        raise ConfigError([f"no *.json configs in {cdir}"])
    root = Path(out_dir) if out_dir is not None else None
    reports = []
    for p in paths:
        cfg = load_config(p)
        sub = (root or Path(cfg.out_dir)) / p.stem
        cfg = with_overrides(cfg, out=sub, **overrides)
        log.info("running %s", p.name)
        reports.append(run_experiment(cfg))
    agg = {
        "configs": [str(p) for p in paths],
        "reports": [{"config": p.name, "kind": r.kind, "passed": r.passed,
                     "gates": [g.to_dict() for g in r.gates]} for p, r in zip(paths, reports)],
        "passed": all(r.passed for r in reports),
        "wall_clock_s": time.perf_counter() - t0,
        "version": _version(),
    }
    dest = root if root is not None else Path(".")
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "aggregate_report.json").write_text(json.dumps(agg, indent=2) + "\n")
    return reports, agg
