"""Excursions of nonnegative paths away from zero.

An excursion runs from the last grid index at or below the zero threshold
before a positive stretch to the first such index after it.  A stretch that
is still positive at the horizon (or already positive at time 0) is kept
but flagged incomplete.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from ._validation import LoewnerLabError
from .bessel import RealPath
from .driver import TimeGrid, sample_brownian
from .seeds import trial_seed

__all__ = [
    "ExcursionRecord",
    "LambdaEstimate",
    "decompose",
    "filter_macroscopic",
    "macroscopic_start_times",
    "estimate_lambda",
    "long_excursion_fraction",
    "write_records_csv",
    "records_json",
]


@dataclass(frozen=True)
class ExcursionRecord:
    start_idx: int
    end_idx: int
    duration: float
    max_height: float
    complete: bool


def _runs(values, zero_threshold):
    """(start, end, left_cut, right_cut) index runs of values above threshold."""
    pos = values > zero_threshold
    n = values.shape[0] - 1
    edges = np.diff(pos.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1))  # index of last zero before the run
    ends = list(np.flatnonzero(edges == -1) + 1)  # first zero after the run
    left_cut = bool(pos[0])
    if left_cut:
        starts.insert(0, 0)
    right_cut = bool(pos[-1])
    if right_cut:
        ends.append(n)
    out = []
    for i, (s, e) in enumerate(zip(starts, ends)):
        lc = left_cut and i == 0
        rc = right_cut and i == len(starts) - 1
        out.append((int(s), int(e), lc, rc))
    return out


def decompose(path, zero_threshold=1e-4):
    """Split ``path`` into excursion records, in time order."""
    if not isinstance(path, RealPath):
        raise LoewnerLabError("decompose expects a RealPath")
    if zero_threshold < 0:
        raise LoewnerLabError("zero_threshold must be >= 0")
    v = path.values
    dt = path.grid.dt
    recs = []
    for s, e, lc, rc in _runs(v, zero_threshold):
        recs.append(ExcursionRecord(s, e, (e - s) * dt, float(v[s:e + 1].max()), not (lc or rc)))
    return recs


def filter_macroscopic(records, m):
    if not m > 0:
        raise LoewnerLabError("m must be > 0")
    return [r for r in records if r.duration >= m - 1e-12]


def macroscopic_start_times(path, m, zero_threshold=1e-4):
    """Grid times at which an excursion of duration at least ``m`` begins."""
    return [r.start_idx * path.grid.dt for r in filter_macroscopic(decompose(path, zero_threshold), m)]


@dataclass
class LambdaEstimate:
    """Fraction of paths whose completed excursions before ``t`` all last at most ``m``."""

    t: float
    m: float
    p_hat: float
    se: float
    n: int
    delta: float
    dt: float

    def to_dict(self):
        return asdict(self)


def _besq_batch(delta, grid, seeds):
    db = np.stack([sample_brownian(s, grid).increments for s in seeds])
    return K.besq_euler(0.0, delta * grid.dt, db, 1.0)


def _seeds(seed, label, n):
    return [trial_seed(seed, label, j) for j in range(n)]


def estimate_lambda(t, m, params, n, seed, dt=1e-4, zero_threshold=1e-4, batch=200):
    """Monte Carlo estimate of P(no completed excursion longer than ``m`` ends before ``t``).

    Paths are Euler BESQ(delta = d) started at 0.  Trial ``j`` uses the same
    Brownian seed for every ``t``, so estimates at different horizons are
    coupled and nested.
    """
    d = params.d
    if not 0.0 < d < 2.0:
        raise LoewnerLabError(f"need d in (0, 2), got {d}")
    if not m > 0 or not t > 0 or n < 100:
        raise LoewnerLabError("need t > 0, m > 0 and n >= 100")
    grid = TimeGrid.from_dt(t, dt)
    seeds = _seeds(seed, f"besq:{params.kappa!r}", n)
    good = 0
    for lo in range(0, n, batch):
        paths = _besq_batch(d, grid, seeds[lo:lo + batch])
        for row in paths:
            ok = True
            for s, e, lc, rc in _runs(row, zero_threshold):
                if not (lc or rc) and e < grid.n_steps and (e - s) * dt > m + 1e-12:
                    ok = False
                    break
            good += ok
    p = good / n
    return LambdaEstimate(t, m, p, math.sqrt(p * (1 - p) / n), n, d, dt)


def long_excursion_fraction(t, m, params, n, seed, dt=1e-4, zero_threshold=1e-4, batch=200):
    """Fraction of BESQ paths on ``[0, t]`` having some excursion (complete or
    not) of duration at least ``m``.  Seeds are shared with :func:`estimate_lambda`."""
    d = params.d
    if not m > 0 or not t > 0 or n < 1:
        raise LoewnerLabError("need t > 0, m > 0 and n >= 1")
    grid = TimeGrid.from_dt(t, dt)
    seeds = _seeds(seed, f"besq:{params.kappa!r}", n)
    hits = 0
    for lo in range(0, n, batch):
        paths = _besq_batch(d, grid, seeds[lo:lo + batch])
        for row in paths:
            hits += any((e - s) * dt >= m - 1e-12 for s, e, _, _ in _runs(row, zero_threshold))
    p = hits / n
    return LambdaEstimate(t, m, p, math.sqrt(p * (1 - p) / n), n, d, dt)


def write_records_csv(records, dt, file):
    """CSV with columns ``start_t, end_t, duration, max_height, complete``."""
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start_t", "end_t", "duration", "max_height", "complete"])
        for r in records:
            w.writerow([repr(r.start_idx * dt), repr(r.end_idx * dt), repr(r.duration), repr(r.max_height),
                        int(r.complete)])


def records_json(records):
    return json.dumps([asdict(r) for r in records], indent=2)
