"""Compiled inner loops for the vertical-slit Loewner maps.

Every kernel takes the per-step driver values ``u`` (``u[j]`` drives step
``j + 1``) and a constant time step ``dt``.  Nothing here validates input;
the public wrappers in :mod:`loewnerlab.loewner` do that.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def sqrt_upper(w, side):
    """Square root of ``w`` on the branch with nonnegative imaginary part.

    When ``w`` is a nonnegative real the two roots are both real; ``side``
    picks the sign of the real part in that case.
    """
    a = w.real
    b = w.imag
    r = math.hypot(a, b)
    if a >= 0.0:
        s = math.sqrt(0.5 * (r + a))
        t = 0.5 * abs(b) / s if s > 0.0 else 0.0
    else:
        t = math.sqrt(0.5 * (r - a))
        s = 0.5 * abs(b) / t
    if b > 0.0:
        return complex(s, t)
    if b < 0.0:
        return complex(-s, t)
    if a >= 0.0:
        return complex(math.copysign(s, side), 0.0)
    return complex(0.0, t)


@njit(cache=True)
def backward_step(z, u, dt):
    zeta = z - u
    return u + sqrt_upper(zeta * zeta - 4.0 * dt, zeta.real)


@njit(cache=True)
def forward_step(z, u, dt):
    """Returns ``(value, swallowed, swallow_time)``; value is ``u`` if swallowed."""
    zeta = z - u
    if zeta.real == 0.0 and zeta.imag > 0.0 and zeta.imag * zeta.imag <= 4.0 * dt:
        return complex(u, 0.0), True, 0.25 * zeta.imag * zeta.imag
    return u + sqrt_upper(zeta * zeta + 4.0 * dt, zeta.real), False, -1.0


@njit(cache=True)
def backward_flow(z, u, dt, k):
    """Apply steps 1..k in time order to every point of ``z``."""
    out = z.copy()
    for i in range(out.shape[0]):
        w = out[i]
        for j in range(k):
            w = backward_step(w, u[j], dt)
        out[i] = w
    return out


@njit(cache=True)
def backward_flow_history(z, u, dt):
    """Trajectory of one point under the backward flow, length ``len(u) + 1``."""
    n = u.shape[0]
    out = np.empty(n + 1, dtype=np.complex128)
    out[0] = z
    w = z
    for j in range(n):
        w = backward_step(w, u[j], dt)
        out[j + 1] = w
    return out


@njit(cache=True)
def inverse_flow(w, u, dt, k):
    """Apply steps k..1 (reverse time order) to every point of ``w``."""
    out = w.copy()
    for i in range(out.shape[0]):
        v = out[i]
        for j in range(k - 1, -1, -1):
            v = backward_step(v, u[j], dt)
        out[i] = v
    return out


@njit(cache=True)
def trace_points(u, u0, dt, idx):
    """Tip of the discrete hull after ``idx[p]`` steps, for each p."""
    out = np.empty(idx.shape[0], dtype=np.complex128)
    tip = complex(0.0, 2.0 * math.sqrt(dt))
    for p in range(idx.shape[0]):
        k = idx[p]
        if k == 0:
            out[p] = complex(u0, 0.0)
            continue
        w = u[k - 1] + tip
        for j in range(k - 2, -1, -1):
            w = backward_step(w, u[j], dt)
        out[p] = w
    return out


@njit(cache=True)
def real_boundary_flow(x, u, dt):
    """Flow a real point along the real line, sticking it to the driver when
    the slit would lift it off.

    Returns the trajectory (length ``len(u) + 1``) and the first step at
    which the point reached the driver (-1 if never).
    """
    n = u.shape[0]
    out = np.empty(n + 1)
    out[0] = x
    side = 1.0 if x > 0.0 else -1.0
    hit = -1
    four_dt = 4.0 * dt
    for j in range(n):
        g = x - u[j]
        if side * g > 0.0 and g * g > four_dt:
            x = u[j] + side * math.sqrt(g * g - four_dt)
        else:
            x = u[j]
            if hit < 0:
                hit = j + 1
        out[j + 1] = x
    return out, hit


@njit(cache=True)
def absorbing_boundary_flow(x, u, dt):
    """Like :func:`real_boundary_flow` but the point stops at its first contact."""
    n = u.shape[0]
    out = np.empty(n + 1)
    out[0] = x
    side = 1.0 if x > 0.0 else -1.0
    hit = -1
    four_dt = 4.0 * dt
    for j in range(n):
        if hit >= 0:
            out[j + 1] = u[j]
            continue
        g = x - u[j]
        if side * g > 0.0 and g * g > four_dt:
            x = u[j] + side * math.sqrt(g * g - four_dt)
        else:
            x = u[j]
            hit = j + 1
        out[j + 1] = x
    return out, hit


@njit(cache=True)
def besq_euler(x0, drift, db, sign):
    """Truncated Euler scheme for dZ = delta dt + sign * 2 sqrt(Z) dB.

    ``drift`` is ``delta * dt``.  ``db`` may hold one path per row.
    """
    n_paths, n = db.shape
    out = np.empty((n_paths, n + 1))
    for p in range(n_paths):
        z = x0
        out[p, 0] = z
        for k in range(n):
            z = z + drift + sign * 2.0 * math.sqrt(z) * db[p, k]
            if z < 0.0:
                z = 0.0
            out[p, k + 1] = z
    return out


@njit(cache=True)
def slit_landings(u, dt):
    """Steps whose slit base falls outside the current hull.

    Tracks the real interval ``[a, b]`` that the hull occupies in the mapped
    plane.  Step ``k`` (1-based) lands on the real line when ``u[k-1]`` lies
    outside that interval.  Returns a boolean mask of length ``len(u)``.
    """
    n = u.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    two_sqdt = 2.0 * math.sqrt(dt)
    four_dt = 4.0 * dt
    a = u[0]
    b = u[0]
    for j in range(n):
        v = u[j]
        if j > 0 and (v > b or v < a):
            out[j] = True
        if b > v:
            b = v + math.sqrt((b - v) ** 2 + four_dt)
        else:
            b = v + two_sqdt
        if a < v:
            a = v - math.sqrt((a - v) ** 2 + four_dt)
        else:
            a = v - two_sqdt
    return out


@njit(cache=True)
def bessel_splitting(x0, c, db):
    """Exact-drift splitting for the reflecting Bessel process.

    One step is the deterministic flow of ``dY = -(c / (2 dt)) / Y dt`` over
    ``dt`` (``Y -> sqrt(Y^2 - c)``, stopped at 0) followed by the noise
    increment; ``c`` is ``(1 - d) * dt``.  Returns ``max(Y, 0)`` per row.
    """
    n_paths, n = db.shape
    out = np.empty((n_paths, n + 1))
    for p in range(n_paths):
        y = x0
        out[p, 0] = max(y, 0.0)
        for k in range(n):
            x = max(y, 0.0)
            q = x * x - c
            y = (math.sqrt(q) if q > 0.0 else 0.0) + db[p, k]
            out[p, k + 1] = max(y, 0.0)
    return out


@njit(cache=True)
def bessel_euler(x0, half_drift, db, absorb):
    """Euler scheme for dX = ((d - 1) / 2) / X dt + dB started at ``x0 > 0``.

    ``half_drift`` is ``(d - 1) / 2 * dt``.  With ``absorb`` the path is
    frozen at 0 from the first step that does not stay strictly positive;
    otherwise negative values are reflected.  Returns ``(paths, hit)``
    with ``hit[p] = -1`` for paths never absorbed.
    """
    n_paths, n = db.shape
    out = np.zeros((n_paths, n + 1))
    hit = np.full(n_paths, -1, dtype=np.int64)
    for p in range(n_paths):
        x = x0
        out[p, 0] = x
        for k in range(n):
            if x > 0.0:
                x = x + half_drift / x + db[p, k]
            else:
                x = db[p, k]
            if x <= 0.0:
                if absorb:
                    hit[p] = k + 1
                    break
                x = -x
            out[p, k + 1] = x
    return out, hit
