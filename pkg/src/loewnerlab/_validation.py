"""Small argument checks shared by the public modules."""

import math

import numpy as np


class LoewnerLabError(ValueError):
    """Base class for invalid-argument errors raised by this package."""


class GridAlignmentError(LoewnerLabError):
    """A time was supplied that does not sit on the path's grid."""


def check_positive(name, value, *, strict=True):
    value = float(value)
    if not math.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise LoewnerLabError(f"{name} must be finite and {bound}, got {value!r}")
    return value


def check_kappa(kappa):
    return check_positive("kappa", kappa)


def check_upper_half_plane(z, tol=0.0):
    z = np.asarray(z, dtype=np.complex128)
    if np.any(z.imag < -tol):
        raise LoewnerLabError("points must lie in the closed upper half-plane")
    return z


def as_readonly(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr
