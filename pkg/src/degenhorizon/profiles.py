"""One-variable profiles: the smooth step, the path schedule zeta and the warp Phi."""
from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import expit


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, built from exp(-1/x) bumps."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    m = (x > 0.0) & (x < 1.0)
    xm = x[m]
    out[m] = expit(1.0 / (1.0 - xm) - 1.0 / xm)
    return out if out.ndim else float(out)


def smooth_step_d1(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = (x > 0.0) & (x < 1.0)
    xm = x[m]
    arg = 1.0 / (1.0 - xm) - 1.0 / xm
    out[m] = expit(arg) * expit(-arg) * (1.0 / xm**2 + 1.0 / (1.0 - xm) ** 2)
    return out if out.ndim else float(out)


def smooth_step_d2(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = (x > 0.0) & (x < 1.0)
    xm = x[m]
    arg = 1.0 / (1.0 - xm) - 1.0 / xm
    S, C = expit(arg), expit(-arg)
    k = 1.0 / xm**2 + 1.0 / (1.0 - xm) ** 2
    dk = -2.0 / xm**3 + 2.0 / (1.0 - xm) ** 3
    out[m] = (C - S) * S * C * k * k + S * C * dk
    return out if out.ndim else float(out)


class ZetaProfile:
    """``zeta(t) = (1 - tilt t) (1 - S(2t))``.

    Decreasing from 1 to 0, identically 0 on [1/2, 1], with ``zeta'(0) = -tilt``.
    """

    def __init__(self, tilt=0.5):
        if not 0.0 < tilt <= 1.0:
            raise ValueError("tilt must lie in (0, 1]")
        self.tilt = tilt

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 - self.tilt * t) * (1.0 - smooth_step(2.0 * t))

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return -self.tilt * (1.0 - smooth_step(2.0 * t)) - (1.0 - self.tilt * t) * 2.0 * smooth_step_d1(2.0 * t)

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        return 4.0 * self.tilt * smooth_step_d1(2.0 * t) - (1.0 - self.tilt * t) * 4.0 * smooth_step_d2(2.0 * t)


class PhiProfile:
    """Warp profile: ``A / sqrt(t)`` on (0, 1/4], constant ``2A - 1`` from ``1/4 + width`` on.

    On the bridge the derivative is cut off, ``Phi' = chi(t) * d/dt (A / sqrt t)``
    with ``chi`` a smooth step from 1 to 0 over ``[1/4, 1/4 + width]``. That
    keeps ``Phi`` decreasing and convex by construction; ``width`` is solved
    for so that the bridge drops by exactly 1.
    """

    def __init__(self, A):
        A = float(A)
        if A <= 0.0:
            raise ValueError("A must be positive")
        self.A = A
        drop_max = self._drop(0.25)
        if drop_max < 1.0:
            raise ValueError(f"A = {A} too small for a bridge inside (1/4, 1/2]")
        self.width = brentq(lambda eta: self._drop(eta) - 1.0, 1e-9, 0.25, xtol=1e-15, rtol=1e-15)

    def _chi(self, t, width):
        return 1.0 - smooth_step((np.asarray(t, dtype=float) - 0.25) / width)

    def _drop(self, width):
        f = lambda s: self._chi(s, width) * self.A / (2.0 * s**1.5)
        return quad(f, 0.25, 0.25 + width, epsabs=1e-14, epsrel=1e-13, limit=200)[0]

    @property
    def bridge_end(self):
        return 0.25 + self.width

    def chi(self, t):
        return self._chi(t, self.width)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            if ti <= 0.25:
                out[i] = self.A / np.sqrt(ti)
            elif ti >= self.bridge_end:
                out[i] = 2.0 * self.A - 1.0
            else:
                f = lambda s: self.chi(s) * self.A / (2.0 * s**1.5)
                out[i] = 2.0 * self.A - quad(f, 0.25, ti, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        return out if out.size > 1 else float(out[0])

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return -self.chi(np.maximum(t, 0.25)) * self.A / (2.0 * t**1.5)

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        chi = self.chi(np.maximum(t, 0.25))
        dchi = np.where(t > 0.25, -smooth_step_d1((t - 0.25) / self.width) / self.width, 0.0)
        return -dchi * self.A / (2.0 * t**1.5) + chi * 3.0 * self.A / (4.0 * t**2.5)
