"""Conformal metrics ``g = exp(2w) g_*`` and the operator ``L_g = -Lap_g + K_g``.

The first eigenpair is computed by Galerkin projection onto the harmonic
basis. Because the Dirichlet energy is conformally invariant in two
dimensions, the quadratic form of ``L_g`` only sees ``w`` through the
potential ``1 - Lap_* w`` while the mass matrix carries ``exp(2w)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import EigensolverFailure, NonPositiveArea, ZeroNorm
from .sphere import ScalarField, laplacian_round


@dataclass
class ConformalMetric:
    w: ScalarField

    @property
    def grid(self):
        return self.w.grid

    def shifted(self, c):
        return ConformalMetric(self.w + float(c))

    def scaled(self, s):
        return ConformalMetric(float(s) * self.w)

    def area_density(self):
        return np.exp(2.0 * self.w.values)


@dataclass
class EigenPair:
    lambda1: float
    u: ScalarField
    lambda2: float
    residual: float
    min_u: float

    @property
    def gap(self):
        return self.lambda2 - self.lambda1

    @property
    def non_simple(self):
        return self.gap < 1e-8


def gauss_curvature(g: ConformalMetric) -> ScalarField:
    lap = laplacian_round(g.w).values
    return ScalarField.from_values(g.grid, np.exp(-2.0 * g.w.values) * (1.0 - lap))


def area(g: ConformalMetric) -> float:
    a = g.grid.integrate_values(g.area_density())
    if not np.isfinite(a) or a <= 0.0:
        raise NonPositiveArea(f"area {a}")
    return a


def hawking_mass(area_value: float) -> float:
    if not area_value > 0.0:
        raise NonPositiveArea(f"area {area_value}")
    return float(np.sqrt(area_value / (16.0 * np.pi)))


def potential(g: ConformalMetric) -> np.ndarray:
    """Grid values of ``1 - Lap_* w`` (curvature times area density)."""
    return 1.0 - laplacian_round(g.w).values


def stability_matrices(g: ConformalMetric):
    """Galerkin stiffness-plus-potential matrix and the exp(2w) mass matrix."""
    grid = g.grid
    Y = grid.basis_matrix()
    q = grid.weights.ravel()
    ell = grid.ell
    V = potential(g).ravel()
    A = (Y * (q * V)[:, None]).T @ Y
    A[np.diag_indices_from(A)] += ell * (ell + 1.0)
    B = (Y * (q * np.exp(2.0 * g.w.values.ravel()))[:, None]).T @ Y
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    return A, B


def apply_operator(g: ConformalMetric, u: ScalarField) -> ScalarField:
    """``L_g u`` on the grid for band-limited ``u``."""
    lap = laplacian_round(u).values
    vals = np.exp(-2.0 * g.w.values) * (-lap + potential(g) * u.values)
    return ScalarField.from_values(g.grid, vals)


def first_eigenpair(g: ConformalMetric) -> EigenPair:
    A, B = stability_matrices(g)
    try:
        evals, evecs = scipy.linalg.eigh(A, B, subset_by_index=[0, 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(evals)):
        raise EigensolverFailure("non-finite eigenvalues")
    c = evecs[:, 0]
    norm = float(c @ B @ c)
    c = c / np.sqrt(norm)
    if c[0] < 0.0:
        c = -c
    u = ScalarField.from_coeffs(g.grid, c)
    lam = float(evals[0])
    res = apply_operator(g, u).values - lam * u.values
    residual = float(np.sqrt(g.grid.integrate_values(res**2 * g.area_density())))
    return EigenPair(lambda1=lam, u=u, lambda2=float(evals[1]), residual=residual,
                     min_u=float(np.min(u.values)))


def smallest_form_eigenvalue(g: ConformalMetric) -> float:
    """Lowest eigenvalue of the stability form against the round mass matrix.

    Same sign as ``lambda_1(g)`` (Sylvester inertia) but independent of
    ``exp(2w)``, so it stays well conditioned for very large ``w``.
    """
    A, _ = stability_matrices(g)
    return float(scipy.linalg.eigh(A, eigvals_only=True, subset_by_index=[0, 0])[0])


def rayleigh_numerator(g: ConformalMetric, v: ScalarField, zeta: float = 1.0) -> float:
    """``int |grad v|^2 + (1 - zeta Lap_* w) v^2 dA_*`` for band-limited ``v``."""
    grid = g.grid
    gth, gph = grid.gradient_values(v.coeffs)
    lap = laplacian_round(g.w).values
    dens = gth**2 + gph**2 + (1.0 - zeta * lap) * v.values**2
    return grid.integrate_values(dens)


def rayleigh_quotient(g: ConformalMetric, v) -> float:
    """Rayleigh quotient of ``L_g``; ``v`` is a ScalarField or any object with
    ``quadratic_form(g)`` and ``mass(g)`` (e.g. a chart-supported test function)."""
    if hasattr(v, "quadratic_form"):
        den = v.mass(g)
        if not den > 0.0:
            raise ZeroNorm("test function vanishes in L2(dA_g)")
        return v.quadratic_form(g) / den
    den = g.grid.integrate_values(v.values**2 * g.area_density())
    if not den > 0.0:
        raise ZeroNorm("test function vanishes in L2(dA_g)")
    return rayleigh_numerator(g, v) / den


def eigenpair_report(g: ConformalMetric, pair: EigenPair) -> dict:
    a = area(g)
    return {
        "lambda1": pair.lambda1,
        "gap": pair.gap,
        "residual": pair.residual,
        "min_u": pair.min_u,
        "area": a,
        "hawking_mass": hawking_mass(a),
    }


def eigenpair_report_json(g: ConformalMetric, pair: EigenPair) -> str:
    return json.dumps(eigenpair_report(g, pair), sort_keys=True, indent=2)
