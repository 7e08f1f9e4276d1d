"""Tensor calculus for general 2-metrics in two stereographic charts.

Chart ``+1`` projects from the north pole and is centred on the south pole,
chart ``-1`` projects from the south pole. Both use the same uniform
Cartesian grid, wide enough that every node with ``|z| <= 1.5`` has the two
ghost nodes the fourth-order stencils need. The transition map is the
inversion ``z -> z / |z|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMetric
from .sphere import ScalarField, evaluate_coeffs, xyz_to_angles

CHART_RADIUS = 1.5
POLES = (1, -1)


def inverse_stereo(z1, z2, pole):
    r2 = z1 * z1 + z2 * z2
    d = 1.0 + r2
    return np.stack([2.0 * z1 / d, 2.0 * z2 / d, pole * (r2 - 1.0) / d], axis=-1)


def stereo(X, pole):
    X = np.asarray(X, dtype=float)
    d = 1.0 - pole * X[..., 2]
    return X[..., 0] / d, X[..., 1] / d


def stereo_jacobian(z1, z2, pole):
    """Ambient derivative dX/dz, shape (..., 3, 2)."""
    r2 = z1 * z1 + z2 * z2
    d = 1.0 + r2
    J = np.empty(np.shape(z1) + (3, 2))
    J[..., 0, 0] = 2.0 / d - 4.0 * z1 * z1 / d**2
    J[..., 0, 1] = -4.0 * z1 * z2 / d**2
    J[..., 1, 0] = -4.0 * z1 * z2 / d**2
    J[..., 1, 1] = 2.0 / d - 4.0 * z2 * z2 / d**2
    J[..., 2, 0] = pole * 4.0 * z1 / d**2
    J[..., 2, 1] = pole * 4.0 * z2 / d**2
    return J


def transition(z1, z2):
    r2 = z1 * z1 + z2 * z2
    return z1 / r2, z2 / r2


class ChartAtlas:
    """Two stereographic charts sharing one uniform grid of ``n`` x ``n`` nodes."""

    def __init__(self, n=193, radius=CHART_RADIUS):
        if n < 9:
            raise ValueError("need at least 9 nodes per side")
        self.n = n
        self.radius = radius
        self.h = 2.0 * radius / (n - 5)
        half = radius + 2.0 * self.h
        self.coords = np.linspace(-half, half, n)
        self.z1, self.z2 = np.meshgrid(self.coords, self.coords, indexing="ij")
        self.r = np.hypot(self.z1, self.z2)
        self.inside = self.r <= radius + 1e-12
        self.interior = np.zeros((n, n), dtype=bool)
        self.interior[2:-2, 2:-2] = True
        self.points = {p: inverse_stereo(self.z1, self.z2, p) for p in POLES}
        self.jacobians = {p: stereo_jacobian(self.z1, self.z2, p) for p in POLES}

    def primary(self, pole):
        """Nodes assigned to this chart by the partition (|z| <= 1 on chart +1, |z| < 1 on -1)."""
        return self.r <= 1.0 if pole == 1 else self.r < 1.0

    def round_metric(self):
        f = 4.0 / (1.0 + self.r**2) ** 2
        g = np.zeros((self.n, self.n, 2, 2))
        g[..., 0, 0] = f
        g[..., 1, 1] = f
        return g

    def sample(self, field: ScalarField):
        """Values of a band-limited field at the nodes of both charts."""
        out = {}
        for p in POLES:
            th, ph = xyz_to_angles(self.points[p])
            val, _, _ = evaluate_coeffs([field.coeffs], field.grid.L, th, ph, grad=False)
            out[p] = val[0].reshape(self.n, self.n)
        return out

    def sample_function(self, func):
        return {p: func(*np.moveaxis(self.points[p], -1, 0)) for p in POLES}

    def conformal_metric(self, w: ScalarField):
        wv = self.sample(w)
        g0 = self.round_metric()
        return ChartMetric(self, {p: np.exp(2.0 * wv[p])[..., None, None] * g0 for p in POLES})

    def check_roundtrip(self):
        err = 0.0
        for p in POLES:
            z1, z2 = stereo(self.points[p], p)
            err = max(err, float(np.max(np.abs(z1 - self.z1) + np.abs(z2 - self.z2))))
        m = self.r > 0.1
        a, b = transition(*transition(self.z1[m], self.z2[m]))
        return max(err, float(np.max(np.abs(a - self.z1[m]) + np.abs(b - self.z2[m]))))


@dataclass
class ChartMetric:
    """Metric components per chart, optionally with first and second t-derivatives."""

    atlas: ChartAtlas
    g: dict
    gdot: dict | None = None
    gddot: dict | None = None

    def check_spd(self):
        for p in POLES:
            det = _det(self.g[p])
            if np.any(~(det > 0.0)) or np.any(~(self.g[p][..., 0, 0] > 0.0)):
                raise SingularMetric(f"non-positive metric in chart {p}")

    def overlap_mismatch(self):
        """Relative mismatch of chart +1 components against chart -1 on the overlap.

        Components of chart -1 are interpolated at the transition images and
        transformed with the transition Jacobian.
        """
        from scipy.interpolate import RectBivariateSpline

        at = self.atlas
        m = at.inside & (at.r >= 2.0 / 3.0)
        z1, z2 = at.z1[m], at.z2[m]
        w1, w2 = transition(z1, z2)
        r2 = z1 * z1 + z2 * z2
        # d w / d z for the inversion
        J = np.empty(z1.shape + (2, 2))
        J[:, 0, 0] = (r2 - 2 * z1 * z1) / r2**2
        J[:, 0, 1] = -2 * z1 * z2 / r2**2
        J[:, 1, 0] = -2 * z1 * z2 / r2**2
        J[:, 1, 1] = (r2 - 2 * z2 * z2) / r2**2
        gs = np.empty(z1.shape + (2, 2))
        for i in range(2):
            for j in range(2):
                spl = RectBivariateSpline(at.coords, at.coords, self.g[-1][..., i, j], kx=5, ky=5)
                gs[:, i, j] = spl.ev(w1, w2)
        pulled = np.einsum("pki,pkl,plj->pij", J, gs, J)
        ref = self.g[1][m]
        return float(np.max(np.abs(pulled - ref)) / np.max(np.abs(ref)))


def _det(g):
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def _inv(g):
    det = _det(g)
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1] / det
    out[..., 1, 1] = g[..., 0, 0] / det
    out[..., 0, 1] = -g[..., 0, 1] / det
    out[..., 1, 0] = -g[..., 1, 0] / det
    return out


# --- fourth-order finite differences --------------------------------------


def d1(f, axis, h):
    """Central fourth-order first derivative along ``axis`` (0 or 1); NaN on the two-node margin."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.full_like(f, np.nan)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    return np.moveaxis(out, 0, axis)


def d2(f, axis, h):
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.full_like(f, np.nan)
    out[2:-2] = (-f[:-4] + 16.0 * f[1:-3] - 30.0 * f[2:-2] + 16.0 * f[3:-1] - f[4:]) / (12.0 * h * h)
    return np.moveaxis(out, 0, axis)


def d12(f, h):
    return d1(d1(f, 0, h), 1, h)


def brioschi(g, h):
    """Gaussian curvature of ``g`` (n, n, 2, 2) on a uniform grid of spacing h."""
    E, F, G = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    det = E * G - F * F
    if np.any(~(det > 0.0)):
        raise SingularMetric("det <= 0 at a node")
    Eu, Ev = d1(E, 0, h), d1(E, 1, h)
    Fu, Fv = d1(F, 0, h), d1(F, 1, h)
    Gu, Gv = d1(G, 0, h), d1(G, 1, h)
    Evv = d2(E, 1, h)
    Guu = d2(G, 0, h)
    Fuv = d12(F, h)
    M1 = np.empty(E.shape + (3, 3))
    M1[..., 0, 0] = -0.5 * Evv + Fuv - 0.5 * Guu
    M1[..., 0, 1] = 0.5 * Eu
    M1[..., 0, 2] = Fu - 0.5 * Ev
    M1[..., 1, 0] = Fv - 0.5 * Gu
    M1[..., 1, 1] = E
    M1[..., 1, 2] = F
    M1[..., 2, 0] = 0.5 * Gv
    M1[..., 2, 1] = F
    M1[..., 2, 2] = G
    M2 = np.zeros(E.shape + (3, 3))
    M2[..., 0, 1] = 0.5 * Ev
    M2[..., 0, 2] = 0.5 * Gu
    M2[..., 1, 0] = 0.5 * Ev
    M2[..., 2, 0] = 0.5 * Gu
    M2[..., 1, 1] = E
    M2[..., 1, 2] = F
    M2[..., 2, 1] = F
    M2[..., 2, 2] = G
    return (_det3(M1) - _det3(M2)) / det**2


def _det3(M):
    return (
        M[..., 0, 0] * (M[..., 1, 1] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 1])
        - M[..., 0, 1] * (M[..., 1, 0] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 0])
        + M[..., 0, 2] * (M[..., 1, 0] * M[..., 2, 1] - M[..., 1, 1] * M[..., 2, 0])
    )


def laplace_beltrami_fd(g, f, h):
    """``(1/sqrt det) d_i (sqrt det g^ij d_j f)``, expanded by the product rule."""
    det = _det(g)
    if np.any(~(det > 0.0)):
        raise SingularMetric("det <= 0 at a node")
    gi = _inv(g)
    sq = np.sqrt(det)
    fx = [d1(f, 0, h), d1(f, 1, h)]
    fxx = [[d2(f, 0, h), d12(f, h)], [None, d2(f, 1, h)]]
    fxx[1][0] = fxx[0][1]
    out = np.zeros_like(f, dtype=float)
    for i in range(2):
        for j in range(2):
            flux_coef = sq * gi[..., i, j]
            out = out + gi[..., i, j] * fxx[i][j] + d1(flux_coef, i, h) / sq * fx[j]
    return out


def curvature_general(m: ChartMetric) -> dict:
    return {p: brioschi(m.g[p], m.atlas.h) for p in POLES}


def laplace_beltrami_general(m: ChartMetric, f: dict) -> dict:
    return {p: laplace_beltrami_fd(m.g[p], f[p], m.atlas.h) for p in POLES}


def trace_and_norm(m, mdot):
    """``tr_m mdot`` and ``|mdot|^2_m`` nodewise for (..., 2, 2) arrays."""
    mi = _inv(np.asarray(m, dtype=float))
    mdot = np.asarray(mdot, dtype=float)
    tr = np.einsum("...ij,...ij->...", mi, mdot)
    a = np.einsum("...ik,...kj->...ij", mi, mdot)
    nrm = np.einsum("...ij,...ji->...", a, a)
    return tr, nrm


def gather(atlas: ChartAtlas, per_chart: dict):
    """Values on the partition: chart +1 where |z| <= 1, chart -1 on the rest of the sphere."""
    return np.concatenate([per_chart[1][atlas.primary(1)], per_chart[-1][atlas.primary(-1)]])


def partition_points(atlas: ChartAtlas):
    return np.concatenate([atlas.points[1][atlas.primary(1)], atlas.points[-1][atlas.primary(-1)]])
