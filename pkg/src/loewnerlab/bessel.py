"""Bessel processes attached to the Loewner flow.

For a boundary point ``x0`` the gap ``X = (h - sqrt(kappa) B) / sqrt(kappa)``
between its backward image and the driver solves

    dX = -(2 / kappa) / X dt - dB,

a Bessel process of dimension ``d = 1 - 4 / kappa`` driven by ``-B``.  For
``kappa <= 4`` (``d <= 0``) it is absorbed at 0; for ``kappa > 4`` it is
instantaneously reflecting.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from ._validation import LoewnerLabError, as_readonly, check_kappa
from .driver import TimeGrid, negate, sample_brownian
from .seeds import trial_seed

__all__ = [
    "BesselParams",
    "RealPath",
    "BoundaryClassification",
    "dimension",
    "boundary_bessel_from_loewner",
    "simulate_reflecting",
    "mirror_solution",
    "besq_exact_step",
    "besq_exact_sample",
    "besq_pathwise",
    "pv_residual",
    "classify_boundary",
    "write_csv",
]

SIGNS = ("nonnegative", "nonpositive", "signed")


def dimension(kappa):
    """Bessel dimension ``1 - 4 / kappa``."""
    return 1.0 - 4.0 / check_kappa(kappa)


@dataclass(frozen=True)
class BesselParams:
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "kappa", check_kappa(self.kappa))

    @property
    def d(self):
        return dimension(self.kappa)

    @property
    def delta(self):
        """Dimension of the associated squared Bessel process (equal to ``d``)."""
        return self.d


@dataclass(frozen=True, eq=False)
class RealPath:
    """Real-valued path on a grid.  ``absorbed_at`` is a grid time or ``None``."""

    grid: TimeGrid
    values: np.ndarray
    absorbed_at: float | None = None
    sign: str = "signed"

    def __post_init__(self):
        values = as_readonly(self.values)
        if values.shape != (self.grid.n_steps + 1,):
            raise LoewnerLabError(f"expected {self.grid.n_steps + 1} values, got {values.shape}")
        if self.sign not in SIGNS:
            raise LoewnerLabError(f"sign must be one of {SIGNS}")
        object.__setattr__(self, "values", values)

    @property
    def times(self):
        return self.grid.times

    def __neg__(self):
        flipped = {"nonnegative": "nonpositive", "nonpositive": "nonnegative"}.get(self.sign, "signed")
        return RealPath(self.grid, -self.values, self.absorbed_at, flipped)


def boundary_bessel_from_loewner(driver, x0, rule="left"):
    """Gap process of the boundary point ``sqrt(kappa) * x0`` under the backward flow.

    The point is flowed exactly by the slit maps until the gap to the next
    slit can no longer be resolved (``|X| <= 2 sqrt(dt / kappa)``, or the
    driver has jumped past it); from that grid time on the gap is 0.
    """
    kappa = driver.kappa
    check_kappa(kappa)
    x0 = float(x0)
    if x0 == 0.0 or not math.isfinite(x0):
        raise LoewnerLabError("x0 must be finite and nonzero")
    v = driver.values
    u = v[:-1] if rule == "left" else 0.5 * (v[:-1] + v[1:])
    sk = math.sqrt(kappa)
    h, hit = K.absorbing_boundary_flow(sk * x0, u, driver.grid.dt)
    x = (h - v) / sk
    absorbed_at = None
    if hit >= 0:
        # the state one step before contact already had an unresolvable gap
        k = hit - 1
        x[k:] = 0.0
        absorbed_at = k * driver.grid.dt
    sign = "nonnegative" if x0 > 0 else "nonpositive"
    return RealPath(driver.grid, x, absorbed_at, sign)


def simulate_reflecting(params, B, x0=0.0, scheme="splitting"):
    """Nonnegative Bessel process of dimension ``d`` in (0, 1) driven by ``B``.

    ``scheme="splitting"`` (default) alternates the exact deterministic
    flow of the drift, ``x -> sqrt(max(x^2 - (1 - d) dt, 0))``, with the
    noise increment and clips at 0; this is the recursion the slit maps
    induce on the gap process.  ``scheme="euler"`` returns the square root
    of the truncated Euler BESQ path.
    """
    d = params.d
    if not 0.0 < d < 1.0:
        raise LoewnerLabError(f"reflecting solutions need d in (0, 1), got d={d}")
    x0 = float(x0)
    if x0 < 0:
        raise LoewnerLabError("x0 must be >= 0")
    dt = B.grid.dt
    db = B.increments[None, :]
    if scheme == "splitting":
        vals = K.bessel_splitting(x0, (1.0 - d) * dt, db)[0]
    elif scheme == "euler":
        vals = np.sqrt(K.besq_euler(x0 * x0, d * dt, db, 1.0)[0])
    else:
        raise LoewnerLabError(f"unknown scheme {scheme!r}")
    return RealPath(B.grid, vals, None, "nonnegative")


def mirror_solution(params, B, scheme="splitting"):
    """The nonpositive solution ``-Y`` where ``Y`` is reflecting and driven by ``-B``."""
    return -simulate_reflecting(params, negate(B), 0.0, scheme)


def besq_exact_step(x, delta, dt, rng):
    """One exact transition of BESQ(delta) over ``dt`` from ``x >= 0``.

    Uses the Poisson mixture of Gamma laws: ``2 dt * Gamma(delta / 2 + N)``
    with ``N ~ Poisson(x / (2 dt))``.
    """
    return float(besq_exact_sample(x, delta, dt, 1, rng)[0])


def besq_exact_sample(x, delta, dt, size, rng):
    if x < 0 or not dt > 0 or delta < 0:
        raise LoewnerLabError("need x >= 0, dt > 0 and delta >= 0")
    n = rng.poisson(x / (2.0 * dt), size=size)
    return 2.0 * dt * rng.gamma(0.5 * delta + n)


def besq_pathwise(x0, delta, B, orientation="upper"):
    """Truncated Euler solution of ``dZ = delta dt + 2 sqrt(Z) dB`` (upper) or
    ``dZ = delta dt - 2 sqrt(Z) dB`` (lower), both driven by the same ``B``."""
    if orientation not in ("upper", "lower"):
        raise LoewnerLabError("orientation must be 'upper' or 'lower'")
    if x0 < 0:
        raise LoewnerLabError("x0 must be >= 0")
    if delta < 0:
        raise LoewnerLabError("delta must be >= 0")
    sign = 1.0 if orientation == "upper" else -1.0
    vals = K.besq_euler(float(x0), delta * B.grid.dt, B.increments[None, :], sign)[0]
    return RealPath(B.grid, vals, None, "nonnegative")


def pv_residual(Z, B, d, eps):
    """Sup-norm residual of ``Z_t = Z_0 + B_t + (d - 1) / 2 * k_eps(t)``.

    ``k_eps(t_k)`` is the left-point sum of ``dt / Z_j`` over ``j < k`` with
    ``Z_j > eps``.
    """
    if not eps > 0:
        raise LoewnerLabError("eps must be > 0")
    if Z.grid.n_steps != B.grid.n_steps:
        raise LoewnerLabError("Z and B must share a grid")
    z = Z.values
    dt = Z.grid.dt
    zj = z[:-1]
    contrib = np.where(zj > eps, dt / np.where(zj > eps, zj, 1.0), 0.0)
    k = np.concatenate([[0.0], np.cumsum(contrib)])
    res = z - z[0] - B.values - 0.5 * (d - 1.0) * k
    return float(np.max(np.abs(res)))


@dataclass
class BoundaryClassification:
    kappa: float
    d: float
    verdict: str
    escape_fraction: float
    absorbed_fraction: float
    trials: int
    threshold: float
    horizon: float
    dt: float
    x0: float
    escapes: list = field(default_factory=list, repr=False)

    def to_json(self):
        out = asdict(self)
        out.pop("escapes")
        return json.dumps(out, indent=2)


def classify_boundary(params, trials, threshold=0.1, horizon=1.0, dt=1e-4, seed=0, seeds=None):
    """Classify the boundary behaviour of the gap process at 0 by simulation.

    For ``d > 0`` paths start at 0 and use the reflecting splitting scheme;
    for ``d <= 0`` they start at ``10 sqrt(dt)`` and use the Euler scheme,
    absorbed at the first nonpositive value.  A trial escapes when it is
    still alive at the horizon and its running maximum has reached
    ``threshold``.  The verdict is ``"reflecting"`` iff more than half of
    the trials escape.
    """
    if trials < 100 and seeds is None:
        raise LoewnerLabError("classify_boundary needs at least 100 trials")
    grid = TimeGrid.from_dt(horizon, dt)
    d = params.d
    if seeds is None:
        seeds = [trial_seed(seed, f"boundary:{params.kappa!r}", j) for j in range(trials)]
    db = np.stack([sample_brownian(s, grid).increments for s in seeds])
    if d <= 0:
        x0 = 10.0 * math.sqrt(dt)
        paths, hit = K.bessel_euler(x0, 0.5 * (d - 1.0) * dt, db, True)
        alive = hit < 0
    else:
        x0 = 0.0
        paths = K.bessel_splitting(x0, (1.0 - d) * dt, db)
        alive = np.ones(len(seeds), dtype=bool)
    escapes = alive & (paths.max(axis=1) >= threshold)
    frac = float(escapes.mean())
    verdict = "reflecting" if frac > 0.5 else "absorbing"
    return BoundaryClassification(params.kappa, d, verdict, frac, float(1.0 - alive.mean()),
                                  len(seeds), threshold, horizon, dt, x0, escapes.tolist())


def write_csv(path, file):
    """CSV with columns ``t, value, absorbed`` (absorbed is 1 from ``absorbed_at`` on)."""
    t = path.times
    absorbed = np.zeros(t.shape, dtype=int)
    if path.absorbed_at is not None:
        absorbed[t >= path.absorbed_at - 1e-12] = 1
    with open(file, "w", newline="") as fh:
        fh.write("t,value,absorbed\n")
        for ti, v, a in zip(t, path.values, absorbed):
            fh.write(f"{float(ti)!r},{float(v)!r},{a}\n")
