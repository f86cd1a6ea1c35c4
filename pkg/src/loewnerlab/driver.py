"""Brownian driver paths on uniform time grids.

Increments are drawn from a counter-based generator (Philox) keyed by the
seed and the block holding the increment, so any stretch of a path can be
regenerated without replaying what came before it, and paths on grids that
share a step size share their common prefix exactly.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import GridAlignmentError, LoewnerLabError, as_readonly, check_kappa

__all__ = [
    "TimeGrid",
    "BrownianPath",
    "DriverPath",
    "sample_brownian",
    "synthetic_path",
    "reverse_shift",
    "negate",
    "shift_increments",
    "refine",
    "write_binary",
    "read_binary",
    "write_csv",
]

_BLOCK = 4096
_MASK64 = (1 << 64) - 1
# stream identifiers mixed into the seed sequence
_STREAM_INCREMENTS = 0
_STREAM_BRIDGE = 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * dt`` for ``k = 0 .. n_steps``."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 1:
            raise LoewnerLabError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        t_end = float(self.t_end)
        if not math.isfinite(t_end) or t_end <= 0:
            raise LoewnerLabError(f"t_end must be finite and > 0, got {self.t_end!r}")
        object.__setattr__(self, "t_end", t_end)
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_dt(cls, t_end, dt):
        n = round(t_end / dt)
        if n < 1 or abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
            raise GridAlignmentError(f"t_end={t_end} is not a multiple of dt={dt}")
        return cls(t_end, int(n))

    @property
    def dt(self):
        return self.t_end / self.n_steps

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def index_of(self, t):
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        k = round(float(t) / self.dt)
        if abs(k * self.dt - t) > 1e-9 * self.dt or not 0 <= k <= self.n_steps:
            raise GridAlignmentError(f"time {t} is not on the grid (dt={self.dt})")
        return int(k)

    def prefix(self, k):
        """Grid covering the first ``k`` steps."""
        return TimeGrid(k * self.dt, k)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """A discretized Brownian sample; ``values[0] == 0``.

    ``seed`` identifies the realization, ``tag`` records how the path was
    derived from it (empty for a freshly sampled path).
    """

    grid: TimeGrid
    values: np.ndarray
    seed: int = 0
    tag: str = ""

    def __post_init__(self):
        values = as_readonly(self.values)
        if values.shape != (self.grid.n_steps + 1,):
            raise LoewnerLabError(
                f"expected {self.grid.n_steps + 1} values, got shape {values.shape}"
            )
        if values[0] != 0.0:
            raise LoewnerLabError("Brownian paths must start at 0")
        if not np.all(np.isfinite(values)):
            raise LoewnerLabError("path values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def increments(self):
        return np.diff(self.values)

    @property
    def times(self):
        return self.grid.times

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class DriverPath:
    """The Loewner driving function ``sqrt(kappa) * B``."""

    kappa: float
    base: BrownianPath
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        kappa = float(self.kappa)
        if kappa != 0.0:
            check_kappa(kappa)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "values", as_readonly(math.sqrt(kappa) * self.base.values))

    @property
    def grid(self):
        return self.base.grid


def _block_normals(seed, stream, key, block):
    ss = np.random.SeedSequence([seed & _MASK64, stream, key, block])
    return np.random.Generator(np.random.Philox(ss)).standard_normal(_BLOCK)


def _normals(seed, stream, key, count):
    n_blocks = -(-count // _BLOCK)
    out = np.concatenate([_block_normals(seed, stream, key, b) for b in range(n_blocks)])
    return out[:count]


def _normal_at(seed, stream, key, index):
    block, offset = divmod(index, _BLOCK)
    return float(_block_normals(seed, stream, key, block)[offset])


def sample_brownian(seed, grid):
    """Sample a Brownian path on ``grid``; a pure function of ``(seed, grid)``."""
    seed = int(seed)
    z = _normals(seed, _STREAM_INCREMENTS, 0, grid.n_steps)
    values = np.empty(grid.n_steps + 1)
    values[0] = 0.0
    np.cumsum(z * math.sqrt(grid.dt), out=values[1:])
    return BrownianPath(grid, values, seed)


def increment_at(seed, grid, j):
    """Increment ``j`` (0-based) of ``sample_brownian(seed, grid)`` without the rest."""
    return _normal_at(int(seed), _STREAM_INCREMENTS, 0, j) * math.sqrt(grid.dt)


def synthetic_path(values, t_end, tag="synthetic"):
    """Wrap explicit values (e.g. ``B = 0``) as a path on a uniform grid."""
    values = np.asarray(values, dtype=float)
    return BrownianPath(TimeGrid(t_end, values.shape[0] - 1), values, 0, tag)


def reverse_shift(path, t0):
    """Time-reversed increments ``B~_r = B_t0 - B_(t0 - r)`` on ``[0, t0]``."""
    k0 = path.grid.index_of(t0)
    if k0 == 0:
        raise GridAlignmentError("t0 must be a positive grid time")
    v = path.values
    out = v[k0] - v[k0::-1]
    return BrownianPath(path.grid.prefix(k0), out, path.seed, f"{path.tag}rev({k0})")


def negate(path):
    return BrownianPath(path.grid, -path.values, path.seed, f"{path.tag}neg")


def shift_increments(path, s):
    """Restarted increments ``B^_r = B_(s + r) - B_s`` on ``[0, t_end - s]``."""
    k = path.grid.index_of(s)
    n = path.grid.n_steps
    if k >= n:
        raise GridAlignmentError(f"shift {s} must be strictly before t_end={path.grid.t_end}")
    v = path.values
    tag = f"{path.tag}shift({k})" if k else path.tag
    return BrownianPath(path.grid.prefix(n - k), v[k:] - v[k], path.seed, tag)


def refine(path):
    """Halve the step of ``path`` by Brownian-bridge midpoints.

    The midpoints are keyed by the path's seed and its current step count,
    so repeated refinement of the same realization is reproducible and
    nested: the coarse values are kept exactly at even indices.
    """
    n = path.grid.n_steps
    z = _normals(path.seed, _STREAM_BRIDGE, n, n)
    v = path.values
    fine = np.empty(2 * n + 1)
    fine[0::2] = v
    fine[1::2] = 0.5 * (v[:-1] + v[1:]) + 0.5 * math.sqrt(path.grid.dt) * z
    return BrownianPath(TimeGrid(path.grid.t_end, 2 * n), fine, path.seed, path.tag)


_HEADER = struct.Struct("<qqd")


def write_binary(path, file):
    """Columnar binary: little-endian header (seed, n_steps, t_end) then float64 values."""
    with open(file, "wb") as fh:
        fh.write(_HEADER.pack(path.seed & _MASK64 if path.seed < 0 else path.seed,
                              path.grid.n_steps, path.grid.t_end))
        fh.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def read_binary(file):
    data = Path(file).read_bytes()
    seed, n_steps, t_end = _HEADER.unpack_from(data)
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if values.shape[0] != n_steps + 1:
        raise LoewnerLabError(f"{file}: payload holds {values.shape[0]} values, header says {n_steps + 1}")
    return BrownianPath(TimeGrid(t_end, n_steps), values, seed)


def write_csv(path, file):
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, x in zip(path.times, path.values):
            w.writerow([repr(float(t)), repr(float(x))])
