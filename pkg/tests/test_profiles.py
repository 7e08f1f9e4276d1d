import numpy as np
import pytest

from degenhorizon.profiles import (
    PhiProfile,
    ZetaProfile,
    smooth_step,
    smooth_step_d1,
    smooth_step_d2,
)


def test_smooth_step_shape():
    x = np.linspace(-0.5, 1.5, 401)
    s = smooth_step(x)
    assert np.all(s[x <= 0] == 0.0) and np.all(s[x >= 1] == 1.0)
    assert np.all(np.diff(s) >= 0.0)
    assert abs(smooth_step(0.5) - 0.5) <= 1e-15


def test_smooth_step_derivatives_match_differences():
    x = np.linspace(0.02, 0.98, 97)
    h = 1e-5
    fd1 = (smooth_step(x + h) - smooth_step(x - h)) / (2 * h)
    fd2 = (smooth_step_d1(x + h) - smooth_step_d1(x - h)) / (2 * h)
    assert np.max(np.abs(fd1 - smooth_step_d1(x))) <= 1e-8
    assert np.max(np.abs(fd2 - smooth_step_d2(x))) <= 1e-6


def test_zeta_invariants():
    z = ZetaProfile()
    assert z(0.0) == 1.0 and z(1.0) == 0.0
    t = np.linspace(0.5, 1.0, 51)
    assert np.all(z(t) == 0.0) and np.all(z.deriv(t) == 0.0) and np.all(z.deriv2(t) == 0.0)
    assert z.deriv(0.0) <= -0.25
    tt = np.linspace(0.0, 1.0, 2001)
    assert np.all(z.deriv(tt) <= 0.0)
    assert np.all((z(tt) >= 0.0) & (z(tt) <= 1.0))


def test_zeta_flat_at_half():
    # every derivative of the smooth step vanishes at its endpoints, so zeta
    # and its first derivatives are tiny just below t = 1/2
    z = ZetaProfile()
    for d in (5e-3, 1e-2):
        t = 0.5 - d
        assert abs(z(t)) <= d**6
        assert abs(z.deriv(t)) <= d**6
        assert abs(z.deriv2(t)) <= d**6


def test_zeta_derivative_differences():
    z = ZetaProfile(0.3)
    t = np.linspace(0.01, 0.49, 49)
    h = 1e-6
    assert np.max(np.abs((z(t + h) - z(t - h)) / (2 * h) - z.deriv(t))) <= 1e-7
    assert np.max(np.abs((z.deriv(t + h) - z.deriv(t - h)) / (2 * h) - z.deriv2(t))) <= 1e-5
    with pytest.raises(ValueError):
        ZetaProfile(0.0)


@pytest.mark.parametrize("A", [10.0, 30.0, 100.0])
def test_phi_invariants(A):
    p = PhiProfile(A)
    t = np.array([1e-3, 0.01, 0.1, 0.25])
    assert np.array_equal(p(t), A / np.sqrt(t))
    assert np.all(p(np.linspace(0.5, 1.0, 11)) == 2 * A - 1)
    assert p.bridge_end <= 0.5
    tt = np.linspace(0.2, 0.6, 801)
    vals = p(tt)
    assert np.all(np.diff(vals) <= 0.0)
    assert np.all(p.deriv(tt) <= 0.0) and np.all(p.deriv2(tt) >= -1e-12)
    for t0 in (0.25, p.bridge_end):
        assert abs(p(t0 - 1e-9) - p(t0 + 1e-9)) <= 1e-7 * A
        assert abs(p.deriv(t0 - 1e-12) - p.deriv(t0 + 1e-12)) <= 1e-9 * A


def test_phi_derivative_differences():
    p = PhiProfile(30.0)
    t = np.linspace(0.1, 0.4, 31)
    h = 1e-6
    assert np.max(np.abs((p(t + h) - p(t - h)) / (2 * h) - p.deriv(t))) <= 1e-5
    assert np.max(np.abs((p.deriv(t + h) - p.deriv(t - h)) / (2 * h) - p.deriv2(t))) <= 1e-3


def test_phi_rejects_small_A():
    with pytest.raises(ValueError):
        PhiProfile(0.0)
    with pytest.raises(ValueError):
        PhiProfile(1.0)
