import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def zero_path():
    from loewnerlab.driver import synthetic_path

    def make(n, t_end=1.0):
        return synthetic_path(np.zeros(n + 1), t_end)

    return make


def rk4(f, y0, t_end, n):
    """Classical fixed-step RK4; used as an independent ODE oracle."""
    h = t_end / n
    y = complex(y0)
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
