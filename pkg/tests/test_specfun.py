import math

import numpy as np
import pytest
import scipy.special

from barriertop.specfun import gamma, log_gamma


def test_half_integer_values():
    assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert gamma(1.5) == pytest.approx(0.5 * math.sqrt(math.pi), rel=1e-14)
    for n in range(1, 12):
        assert gamma(n + 1) == pytest.approx(math.factorial(n), rel=1e-13)


def test_recurrence_complex():
    rng = np.random.default_rng(3)
    for _ in range(200):
        z = complex(rng.uniform(-8, 8), rng.uniform(-8, 8))
        if min(abs(z - k) for k in range(-12, 2)) < 1e-2:
            continue
        lhs = gamma(z + 1)
        rhs = z * gamma(z)
        assert abs(lhs - rhs) <= 1e-11 * max(abs(lhs), 1.0)


def test_reflection_strip_identity():
    # |gamma(1/2 + iy)|^2 cosh(pi y) / pi = 1
    for y in np.linspace(-5, 5, 101):
        v = abs(gamma(complex(0.5, y))) ** 2 * np.cosh(np.pi * y) / np.pi
        assert abs(v - 1.0) <= 1e-10


def test_against_scipy():
    rng = np.random.default_rng(11)
    for _ in range(300):
        z = complex(rng.uniform(-6, 6), rng.uniform(-6, 6))
        ref = scipy.special.gamma(z)
        if not np.isfinite(ref.real) or abs(ref) > 1e12 or abs(ref) < 1e-12:
            continue
        assert abs(gamma(z) - ref) <= 1e-11 * abs(ref)


def test_pole_raises():
    with pytest.raises(ZeroDivisionError):
        gamma(0.0)
    with pytest.raises(ZeroDivisionError):
        gamma(-3.0)


def test_log_gamma_consistency():
    import cmath

    for z in (0.7 + 0.3j, 2.5 - 1j, -1.3 + 0.4j):
        assert abs(cmath.exp(log_gamma(z)) - gamma(z)) <= 1e-12 * abs(gamma(z))
