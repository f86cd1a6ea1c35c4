"""Discrete Loewner chains built from vertical-slit maps.

The driver is held constant on each grid step.  One backward step with value
``u`` over ``dt`` is the conformal map ``z -> u + sqrt((z - u)^2 - 4 dt)``
from the upper half-plane onto the half-plane minus the vertical slit
``[u, u + 2i sqrt(dt)]``; composing these solves the backward equation
``dh = -2 / (h - U) dt`` exactly for a piecewise-constant ``U``.  The forward
step ``z -> u + sqrt((z - u)^2 + 4 dt)`` is its inverse.

Composing backward steps in reverse order (``k, k-1, .., 1``) gives the
inverse of the forward map ``g_{t_k}``, whose image of the newest slit tip is
the discrete trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._validation import LoewnerLabError, as_readonly
from .driver import DriverPath, negate, reverse_shift, shift_increments

__all__ = [
    "ElementarySlitMap",
    "BackwardChain",
    "TracePolyline",
    "BoundaryImages",
    "backward_elementary",
    "forward_elementary",
    "build_chain",
    "evolve_backward",
    "inverse_forward",
    "trace",
    "backward_trace",
    "boundary_images",
    "shifted_chain",
    "squared_map",
    "write_trace_csv",
]

RULES = ("left", "midpoint")


def backward_elementary(z, u, dt):
    """One backward slit step; maps the closed upper half-plane into itself."""
    z = complex(z)
    if z.imag < 0:
        raise LoewnerLabError("z must lie in the closed upper half-plane")
    if not dt >= 0:
        raise LoewnerLabError("dt must be >= 0")
    if dt == 0:
        return z
    return complex(K.backward_step(z, float(u), float(dt)))


def forward_elementary(z, u, dt):
    """One forward slit step.

    Returns ``(value, swallowed, swallow_time)``.  A point on the slit
    ``[u, u + 2i sqrt(dt)]`` is swallowed: its value is reported as ``u`` and
    ``swallow_time = |z - u|^2 / 4`` is the time at which a slit growing at
    ``u`` reaches it.  Otherwise ``swallow_time`` is ``None``.
    """
    z = complex(z)
    if z.imag < 0:
        raise LoewnerLabError("z must lie in the closed upper half-plane")
    if not dt >= 0:
        raise LoewnerLabError("dt must be >= 0")
    if z == complex(u, 0.0):
        raise LoewnerLabError("the forward map is singular at z = u")
    if dt == 0:
        return z, False, None
    value, swallowed, st = K.forward_step(z, float(u), float(dt))
    return complex(value), bool(swallowed), (float(st) if swallowed else None)


@dataclass(frozen=True)
class ElementarySlitMap:
    u: float
    dt: float

    def backward(self, z):
        return backward_elementary(z, self.u, self.dt)

    def forward(self, z):
        return forward_elementary(z, self.u, self.dt)


@dataclass(frozen=True, eq=False)
class BackwardChain:
    """The ordered slit maps of one driver.

    ``u[j]`` is the driver value used on step ``j + 1``: the left endpoint
    ``U(t_j)`` or, with ``rule="midpoint"``, ``(U(t_j) + U(t_{j+1})) / 2``.
    ``origin`` is the real offset between the chain's own frame and the
    frame of the chain it was cut from (zero unless made by
    :func:`shifted_chain`).
    """

    kappa: float
    driver: DriverPath
    rule: str = "left"
    origin: float = 0.0
    u: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.rule not in RULES:
            raise LoewnerLabError(f"rule must be one of {RULES}, got {self.rule!r}")
        v = self.driver.values
        u = v[:-1] if self.rule == "left" else 0.5 * (v[:-1] + v[1:])
        object.__setattr__(self, "u", as_readonly(u))

    @property
    def dt(self):
        return self.driver.grid.dt

    @property
    def n_steps(self):
        return self.driver.grid.n_steps

    @property
    def grid(self):
        return self.driver.grid

    def slit(self, k):
        """Elementary map of step ``k`` (1-based)."""
        return ElementarySlitMap(float(self.u[k - 1]), self.dt)

    @property
    def slits(self):
        return [self.slit(k) for k in range(1, self.n_steps + 1)]


def build_chain(driver, rule="left"):
    return BackwardChain(driver.kappa, driver, rule)


@dataclass(frozen=True, eq=False)
class TracePolyline:
    """Sampled curve with its grid times.

    ``root`` is the point where the curve is attached to the real line.
    ``contact_times`` / ``contact_points`` list the places where a slit of
    the discrete chain was attached directly to the real line away from the
    existing hull (for the forward trace these are the curve's returns to
    the boundary; they are not joined into the polyline).
    """

    times: np.ndarray
    points: np.ndarray
    kappa: float
    seed: int
    root: complex = 0j
    contact_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    contact_points: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        times = as_readonly(self.times)
        points = as_readonly(self.points, np.complex128)
        if times.shape != points.shape or times.ndim != 1:
            raise LoewnerLabError("times and points must be 1-D of equal length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "contact_times", as_readonly(self.contact_times))
        object.__setattr__(self, "contact_points", as_readonly(self.contact_points))
        object.__setattr__(self, "root", complex(self.root))

    def __len__(self):
        return self.points.shape[0]

    def map_points(self, f):
        """New polyline with ``f`` applied to points, root and contacts."""
        cp = f(self.contact_points.astype(np.complex128)) if self.contact_points.size else self.contact_points
        return TracePolyline(self.times, f(self.points), self.kappa, self.seed,
                             complex(f(np.array([self.root]))[0]), self.contact_times, cp)


def _check_k(chain, k):
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= chain.n_steps:
        raise LoewnerLabError(f"step count must be an integer in [0, {chain.n_steps}], got {k!r}")
    return int(k)


def _as_points(z):
    arr = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    if np.any(arr.imag < 0):
        raise LoewnerLabError("points must lie in the closed upper half-plane")
    return arr


def evolve_backward(chain, z, k=None):
    """``h_{t_k}(z)``: apply steps ``1..k`` in time order (all steps by default)."""
    k = chain.n_steps if k is None else _check_k(chain, k)
    arr = _as_points(z)
    out = K.backward_flow(arr, chain.u, chain.dt, k)
    return complex(out[0]) if np.ndim(z) == 0 else out


def inverse_forward(chain, w, k=None):
    """``g_{t_k}^{-1}(w)``: apply steps ``k..1`` in reverse order."""
    k = chain.n_steps if k is None else _check_k(chain, k)
    arr = _as_points(w)
    out = K.inverse_flow(arr, chain.u, chain.dt, k)
    return complex(out[0]) if np.ndim(w) == 0 else out


def _sample_indices(n, every):
    if not isinstance(every, (int, np.integer)) or every < 1:
        raise LoewnerLabError(f"every must be a positive integer, got {every!r}")
    idx = np.arange(0, n + 1, every, dtype=np.int64)
    if idx[-1] != n:
        idx = np.append(idx, n)
    return idx


def trace(chain, every=1, contacts=False):
    """Discrete trace ``g_{t_k}^{-1}(u_k + 2i sqrt(dt))`` at every ``every``-th step.

    The point at ``k = 0`` is the root ``U(0)``; the last step is always
    included.  Cost is quadratic in the number of steps divided by
    ``every``.  With ``contacts=True`` the real points where slits attach
    to the line away from the hull are also computed.
    """
    idx = _sample_indices(chain.n_steps, every)
    pts = K.trace_points(chain.u, float(chain.driver.values[0]), chain.dt, idx)
    times = idx * chain.dt
    ct = np.empty(0)
    cp = np.empty(0)
    if contacts:
        steps = np.flatnonzero(K.slit_landings(chain.u, chain.dt))
        if steps.size:
            ct = steps * chain.dt
            cp = np.array([K.inverse_flow(np.array([complex(chain.u[j])]), chain.u, chain.dt, j)[0].real
                           for j in steps])
    return TracePolyline(times, pts, chain.kappa, chain.driver.base.seed,
                         complex(chain.driver.values[0]), ct, cp)


def backward_trace(driver, t0, every=1, rule="left"):
    """Trace of the hull of the backward map ``h_{t0}``, tip first.

    The hull of ``h_{t0}`` is the forward hull of the reversed driver
    ``U(t0 - s) - U(t0)`` translated by ``U(t0)``.  Index 0 of the result
    is the tip, the last point is the root on the real line at ``U(t0)``.
    """
    k0 = driver.grid.index_of(t0)
    rev = negate(reverse_shift(driver.base, t0))
    chain = build_chain(DriverPath(driver.kappa, rev), rule)
    fwd = trace(chain, every)
    shift = float(driver.values[k0])
    times = fwd.times[-1] - fwd.times[::-1]
    pts = fwd.points[::-1] + shift
    return TracePolyline(times, pts, driver.kappa, driver.base.seed, pts[-1])


@dataclass(frozen=True)
class BoundaryImages:
    """Images of ``-eps`` and ``+eps`` after ``k`` steps of the boundary flow."""

    left: float
    right: float
    left_absorbed: bool
    right_absorbed: bool
    eps: float
    k: int


def boundary_images(chain, k, eps):
    """Flow ``-eps`` and ``+eps`` along the real line for ``k`` steps.

    A point whose gap to the driver closes is carried with the driver from
    then on, so the images bracket the base of the backward hull.
    """
    k = _check_k(chain, k)
    if not eps > 0:
        raise LoewnerLabError("eps must be > 0")
    u = chain.u[:k]
    lt, lh = K.real_boundary_flow(-float(eps), u, chain.dt)
    rt, rh = K.real_boundary_flow(float(eps), u, chain.dt)
    # the base always contains the current driver value; a point stuck to the
    # last slit sits at U(t_{k-1}) and is moved onto U(t_k)
    uk = float(chain.driver.values[k])
    left, right = min(float(lt[-1]), uk), max(float(rt[-1]), uk)
    return BoundaryImages(left, right, lh >= 0, rh >= 0, float(eps), k)


def shifted_chain(chain, r):
    """Chain of steps ``r+1..n``, driven by the restarted increments.

    Maps in the new chain act in a frame translated by ``origin = U(t_r)``:
    ``h_{t_n}(z) = origin + h~(h_{t_r}(z) - origin)``.
    """
    r = _check_k(chain, r)
    if r >= chain.n_steps:
        raise LoewnerLabError("shift must leave at least one step")
    d = chain.driver
    base = shift_increments(d.base, r * d.grid.dt)
    new = BackwardChain(chain.kappa, DriverPath(chain.kappa, base), chain.rule,
                        chain.origin + float(d.values[r]))
    return new


def squared_map(chain, z, k=None):
    """``(h_{t_k}(sqrt z) - U(t_k))^2`` for ``z`` off the ray ``[0, inf)``.

    The square root is taken with values in the upper half-plane.
    """
    k = chain.n_steps if k is None else _check_k(chain, k)
    arr = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    if np.any((arr.imag == 0) & (arr.real >= 0)):
        raise LoewnerLabError("squared_map is undefined on [0, inf)")
    root = np.sqrt(arr)
    root = np.where(root.imag < 0, -root, root)
    w = K.backward_flow(root, chain.u, chain.dt, k)
    out = (w - chain.driver.values[k]) ** 2
    return complex(out[0]) if np.ndim(z) == 0 else out


def write_trace_csv(poly, file):
    """CSV with columns ``t, re, im``."""
    data = np.column_stack([poly.times, poly.points.real, poly.points.imag])
    np.savetxt(file, data, delimiter=",", header="t,re,im", comments="", fmt="%.17g")
