"""A path of metrics from ``e^{2w} g_*`` to a round metric with fixed area form.

The conformal stage is ``h(t) = exp(2 zeta(t) w + 2 a(t)) g_*``. The constant
``a(t)`` keeps the total area fixed, and pulling ``h(t)`` back by the flow of
an area-fixing vector field ``X_t`` keeps the area *form* fixed pointwise:
``g(t) = phi_t^* h(t)``.

Flow maps are tracked in the ambient embedding: each node carries its image
``y = phi_t(x)`` in R^3 and the ambient differential ``J = d phi_t`` applied to
a fixed basis at ``x`` (an orthonormal frame on the quadrature grid, or the
stereographic coordinate vectors on a chart grid). Components of the pulled
back metric in that basis are ``exp(2 f(y)) J^T J``.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .conformal import ConformalMetric, EigenPair, area, first_eigenpair
from .errors import LostPositivity, NegativeInteriorEigenvalue, StepSizeUnderflow
from .profiles import ZetaProfile
from .sphere import (
    ScalarField,
    TangentField,
    evaluate_coeffs,
    frame_vectors,
    gradient_round,
    poisson_solve_round,
    xyz_to_angles,
)

FLOW_MAGIC = b"DHFM"


# --- the constant a(t) ------------------------------------------------------


def weighted_mean(w: ScalarField, z):
    """``int w e^{2 z w} dA_* / int e^{2 z w} dA_*``."""
    v = w.values
    e = np.exp(2.0 * z * (v - v.max()))
    return w.grid.integrate_values(v * e) / w.grid.integrate_values(e)


def _a_rhs(w, zeta, t):
    dz = float(zeta.deriv(t))
    if dz == 0.0:
        return 0.0
    return -dz * weighted_mean(w, float(zeta(t)))


def _rk4_quadrature(w, zeta, t0, t1, n):
    h = (t1 - t0) / n
    acc = 0.0
    for i in range(n):
        s = t0 + i * h
        k1 = _a_rhs(w, zeta, s)
        k2 = _a_rhs(w, zeta, s + 0.5 * h)
        k4 = _a_rhs(w, zeta, s + h)
        acc += h * (k1 + 4.0 * k2 + k4) / 6.0
    return acc


def solve_a(w: ScalarField, zeta: ZetaProfile, times, tol=1e-9, max_sub=4096):
    """``a(t_k)`` from ``a' = -zeta' <w>_zeta``, ``a(0) = 0``, by RK4.

    The right-hand side does not depend on ``a``, so the two middle RK4
    stages coincide. Substeps per interval are doubled until the step-halving
    difference is below ``tol``.

    Returns
    -------
    a : ndarray
    err : float
        Final step-halving estimate.
    n_sub : int
        Substeps per interval used for the accepted solution.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        raise ValueError("time grid must start at 0")
    n = 1
    coarse = None
    while True:
        a = np.zeros_like(times)
        for k in range(1, times.size):
            a[k] = a[k - 1] + _rk4_quadrature(w, zeta, times[k - 1], times[k], n)
        if coarse is not None:
            err = float(np.max(np.abs(a - coarse)))
            if err <= tol:
                return a, err, n
            if n >= max_sub:
                raise StepSizeUnderflow(f"a(t) did not converge (err {err:.2e})")
        coarse = a
        n *= 2


def a_closed_form(w: ScalarField, zeta: ZetaProfile, t):
    """``a(t) = (1/2) log(Z(1) / Z(zeta(t)))`` with ``Z(z) = int e^{2 z w} dA_*``."""
    v = w.values
    vmax = v.max()

    def logZ(z):
        return 2.0 * z * vmax + np.log(w.grid.integrate_values(np.exp(2.0 * z * (v - vmax))))

    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.array([0.5 * (logZ(1.0) - logZ(float(zeta(s)))) for s in t])


# --- the path ------------------------------------------------------------------


@dataclass
class MetricPath:
    """Conformal path ``h(t) = exp(2 zeta(t) w + 2 a(t)) g_*`` on a time grid."""

    w: ScalarField
    zeta: ZetaProfile
    times: np.ndarray
    a: np.ndarray
    a_error: float
    n_sub: int
    eigen: list = field(default_factory=list)

    @classmethod
    def build(cls, w, zeta=None, n_times=65, tol=1e-9, eigen=True):
        zeta = ZetaProfile() if zeta is None else zeta
        times = np.linspace(0.0, 1.0, n_times)
        a, err, n_sub = solve_a(w, zeta, times, tol=tol)
        path = cls(w=w, zeta=zeta, times=times, a=a, a_error=err, n_sub=n_sub)
        if eigen:
            path.compute_eigen()
        return path

    @property
    def grid(self):
        return self.w.grid

    def a_at(self, t):
        """Dense ``a(t)``: RK4 from the nearest grid time at or below ``t``."""
        t = float(t)
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 1))
        t0 = self.times[k]
        if t == t0:
            return float(self.a[k])
        dt = self.times[1] - self.times[0]
        n = max(1, int(np.ceil(self.n_sub * abs(t - t0) / dt)))
        return float(self.a[k] + _rk4_quadrature(self.w, self.zeta, t0, t, n))

    def a_prime(self, t):
        return _a_rhs(self.w, self.zeta, float(t))

    def factor(self, t) -> ScalarField:
        """``zeta(t) w + a(t)``."""
        z = float(self.zeta(t))
        return ScalarField.from_coeffs(self.grid, z * self.w.coeffs) + self.a_at(t)

    def h(self, t) -> ConformalMetric:
        return ConformalMetric(self.factor(t))

    def frozen(self, t):
        """True where the path is constant in t."""
        return float(t) >= 0.5

    def compute_eigen(self):
        self.eigen = []
        cached = None
        for t in self.times:
            if self.frozen(t) and cached is not None:
                self.eigen.append(cached)
                continue
            pair = first_eigenpair(self.h(t))
            self.eigen.append(pair)
            if self.frozen(t):
                cached = pair
        return self.eigen

    def areas(self):
        return np.array([area(self.h(t)) for t in self.times])

    def to_csv(self, path):
        areas = self.areas()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "a", "lambda1", "area", "min_u"])
            for k, t in enumerate(self.times):
                e = self.eigen[k] if self.eigen else None
                wr.writerow([repr(float(t)), repr(float(self.a[k])),
                             repr(e.lambda1) if e else "", repr(float(areas[k])),
                             repr(e.min_u) if e else ""])


# --- eigenvalue curve -----------------------------------------------------------


@dataclass
class EigenCurve:
    times: np.ndarray
    lambda1: np.ndarray
    alpha: float
    leading_coefficient: float
    inf_u_range: float
    lipschitz: float
    max_jump_ratio: float


def eigen_curve(path: MetricPath, tol=1e-7) -> EigenCurve:
    """``lambda_1(h(t_k))`` and the measured slope ``alpha = min_k lambda_1 / t_k``.

    ``leading_coefficient`` is ``-4 pi zeta'(0) inf u_0^2``; ``inf_u_range``
    is the largest grid time up to which ``inf u_t^2 >= inf u_0^2 / 2``.
    """
    if not path.eigen:
        path.compute_eigen()
    t = path.times
    lam = np.array([e.lambda1 for e in path.eigen])
    bad = np.nonzero((t > 0) & (lam < -tol))[0]
    if bad.size:
        k = bad[0]
        raise NegativeInteriorEigenvalue(f"lambda_1 = {lam[k]:.3e} at t = {t[k]:.4f}")
    pos = t > 0
    alpha = float(np.min(lam[pos] / t[pos]))
    if lam[0] >= -tol and not alpha > 0.0:
        raise NegativeInteriorEigenvalue(f"fitted alpha = {alpha:.3e} is not positive")
    inf_u2 = np.array([np.min(e.u.values**2) for e in path.eigen])
    lead = float(-4.0 * np.pi * path.zeta.deriv(0.0) * inf_u2[0])
    ok = inf_u2 >= 0.5 * inf_u2[0]
    k_end = ok.size if ok.all() else int(np.argmin(ok))
    inf_u_range = float(t[max(k_end - 1, 0)])
    steps = np.abs(np.diff(lam))
    lip = float(np.max(steps / np.diff(t)))
    med = float(np.median(steps[steps > 0])) if np.any(steps > 0) else 0.0
    jump = float(np.max(steps) / med) if med > 0 else 0.0
    return EigenCurve(times=t, lambda1=lam, alpha=alpha, leading_coefficient=lead,
                      inf_u_range=inf_u_range, lipschitz=lip, max_jump_ratio=jump)


# --- the area-fixing field ------------------------------------------------------


def _potential(path: MetricPath, t):
    """``psi`` with ``Lap_* psi = -2 e^{2f} (zeta' w + a')``, and the factor ``f``."""
    f = path.factor(t)
    dz = float(path.zeta.deriv(t))
    ap = path.a_prime(t)
    src = -2.0 * np.exp(2.0 * f.values) * (dz * path.w.values + ap)
    psi = poisson_solve_round(ScalarField.from_values(path.grid, src), tol=1e-8)
    return psi, f


def area_fixing_field(path: MetricPath, t) -> TangentField:
    """``X_t = grad_{h_t} psi`` in round-frame components at the grid nodes."""
    if path.frozen(t):
        z = np.zeros(path.grid.shape)
        return TangentField(path.grid, z, z.copy())
    psi, f = _potential(path, t)
    g = gradient_round(psi)
    s = np.exp(-2.0 * f.values)
    return TangentField(path.grid, s * g.e_theta, s * g.e_phi)


def path_velocity(path: MetricPath):
    """Ambient velocity ``F(y, t)`` of the flow, evaluable at arbitrary unit vectors."""
    L = path.grid.L
    cache = {}

    def velocity(y, t):
        if path.frozen(t) or path.zeta.deriv(t) == 0.0:
            return np.zeros_like(y)
        if t not in cache:
            cache.clear()
            psi, _ = _potential(path, t)
            cache[t] = (psi.coeffs, float(path.zeta(t)), path.a_at(t))
        cpsi, z, a = cache[t]
        th, ph = xyz_to_angles(y)
        val, gth, gph = evaluate_coeffs([cpsi, path.w.coeffs], L, th, ph, grad=True)
        s = np.exp(-2.0 * (z * val[1] + a))
        et, ep = frame_vectors(th, ph)
        return (s * gth[0])[:, None] * et + (s * gph[0])[:, None] * ep

    return velocity


# --- flow integration -----------------------------------------------------------


def _normalize(y):
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def _tangent(y, J):
    return J - y[:, :, None] * np.einsum("ni,nic->nc", y, J)[:, None, :]


@dataclass
class FlowMap:
    """Images and differentials of a set of base points along a flow.

    Binary layout (little-endian): ``b"DHFM"``, int32 version (1), int32
    n_times, int32 n_points, then float64 arrays ``times[n_times]``,
    ``positions[n_times, n_points, 3]``, ``jac[n_times, n_points, 3, 2]``.
    """

    times: np.ndarray
    positions: np.ndarray
    jac: np.ndarray

    def index(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-14:
            raise KeyError(f"flow not recorded at t = {t}")
        return k

    def frame_differential(self, k, base_frames=None):
        """``D phi`` as 2x2 matrices from the base basis to the (e_theta, e_phi) frame at the image."""
        y = self.positions[k]
        th, ph = xyz_to_angles(y)
        et, ep = frame_vectors(th, ph)
        E = np.stack([et, ep], axis=-1)
        return np.einsum("nia,nic->nac", E, self.jac[k])

    def det(self, k):
        D = self.frame_differential(k)
        return D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]

    def to_bytes(self):
        T, N = self.positions.shape[:2]
        head = FLOW_MAGIC + struct.pack("<3i", 1, T, N)
        body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                        for a in (self.times, self.positions, self.jac))
        return head + body

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != FLOW_MAGIC:
            raise ValueError("not a flow-map dump")
        _, T, N = struct.unpack("<3i", data[4:16])
        arr = np.frombuffer(data[16:], dtype="<f8")
        times = arr[:T].copy()
        pos = arr[T: T + 3 * T * N].reshape(T, N, 3).copy()
        jac = arr[T + 3 * T * N:].reshape(T, N, 3, 2).copy()
        return cls(times, pos, jac)


def grid_frames(grid):
    th, ph = grid.mesh()
    et, ep = frame_vectors(th.ravel(), ph.ravel())
    return np.stack([et, ep], axis=-1)


def flow_rhs(velocity, y, J, t, jvp_step=1e-5):
    """``(F(y), DF(y) J)``; the directional derivatives are central differences along the sphere."""
    N = y.shape[0]
    Yp = [y]
    for c in range(2):
        d = jvp_step * J[:, :, c]
        Yp.append(_normalize(y + d))
        Yp.append(_normalize(y - d))
    F = velocity(np.concatenate(Yp), t)
    dJ = np.empty_like(J)
    for c in range(2):
        dJ[:, :, c] = (F[(1 + 2 * c) * N:(2 + 2 * c) * N] - F[(2 + 2 * c) * N:(3 + 2 * c) * N]) / (2.0 * jvp_step)
    return F[:N], dJ


def integrate_flow(path: MetricPath | None = None, t_out=None, points=None, jac0=None,
                   velocity=None, spacing=None, min_sub=2, max_steps=200000, jvp_step=1e-5,
                   max_dt=2.0 ** -8):
    """RK4 for the flow and its differential, recording states at ``t_out``.

    Parameters
    ----------
    path : MetricPath, optional
        Supplies the default velocity, time grid, base points and spacing.
    t_out : array_like, optional
        Increasing output times starting at 0; defaults to ``path.times``.
    points, jac0 : ndarray, optional
        Base points (N, 3) and initial differentials (N, 3, 2); default to the
        quadrature nodes and their orthonormal frames.
    velocity : callable, optional
        ``F(y, t) -> (N, 3)`` tangent velocity; defaults to the area-fixing field.
    spacing : float, optional
        Length scale for the step rule ``dt <= spacing / (2 max|F|)``; the
        rule is applied at every step.
    min_sub : int
        Steps are at most ``1/min_sub`` of the output interval.
    max_dt : float
        Absolute step cap; the field varies on a fixed time scale even where
        its magnitude is small.

    Notes
    -----
    Positions are projected to the sphere after every stage and the
    differential to the tangent plane after every step. The differential obeys
    ``dJ/dt = DF(y) J``, with the directional derivative taken by central
    differences along the sphere.
    """
    if velocity is None:
        velocity = path_velocity(path)
    if t_out is None:
        t_out = path.times
    t_out = np.asarray(t_out, dtype=float)
    if points is None:
        points = path.grid.xyz().reshape(-1, 3)
        jac0 = grid_frames(path.grid)
    if spacing is None:
        spacing = np.pi / path.grid.spec.n_lat if path is not None else 0.05
    y = _normalize(np.array(points, dtype=float))
    J = np.array(jac0, dtype=float)
    N = y.shape[0]

    def rhs(y, J, t):
        return flow_rhs(velocity, y, J, t, jvp_step)

    pos = np.empty((t_out.size, N, 3))
    jac = np.empty((t_out.size, N, 3, 2))
    pos[0], jac[0] = y, J
    n_steps = 0
    for k in range(1, t_out.size):
        t0, t1 = t_out[k - 1], t_out[k]
        t = t0
        while t < t1:
            F0 = velocity(y, t)
            vmax = float(np.max(np.linalg.norm(F0, axis=-1)))
            if not np.isfinite(vmax):
                raise StepSizeUnderflow(f"non-finite velocity at t = {t}")
            if vmax == 0.0 and float(np.max(np.linalg.norm(velocity(y, t1), axis=-1))) == 0.0:
                break
            h = min((t1 - t0) / min_sub, max_dt)
            if vmax > 0.0:
                h = min(h, 0.5 * spacing / vmax)
            h = min(h, t1 - t)
            if h < 1e-14 * max(1.0, t1):
                raise StepSizeUnderflow(f"step {h:.2e} at t = {t}")
            if t1 - (t + h) < 1e-12 * (t1 - t0):
                h = t1 - t
            k1y, k1J = rhs(y, J, t)
            y2 = _normalize(y + 0.5 * h * k1y)
            k2y, k2J = rhs(y2, J + 0.5 * h * k1J, t + 0.5 * h)
            y3 = _normalize(y + 0.5 * h * k2y)
            k3y, k3J = rhs(y3, J + 0.5 * h * k2J, t + 0.5 * h)
            y4 = _normalize(y + h * k3y)
            k4y, k4J = rhs(y4, J + h * k3J, t + h)
            y = _normalize(y + h * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0)
            J = _tangent(y, J + h * (k1J + 2.0 * k2J + 2.0 * k3J + k4J) / 6.0)
            t = t1 if h == t1 - t else t + h
            n_steps += 1
            if n_steps > max_steps:
                raise StepSizeUnderflow(f"more than {max_steps} steps")
        pos[k], jac[k] = y, J
    return FlowMap(t_out.copy(), pos, jac)


# --- pulled-back metrics --------------------------------------------------------


@dataclass
class PulledBackMetric:
    """Components ``g(t)_x`` (N, 2, 2) of ``phi_t^* h(t)`` in the base basis at each node."""

    t: float
    g: np.ndarray

    def det(self):
        g = self.g
        return g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]


def pullback_metric(path: MetricPath, flow: FlowMap, t) -> PulledBackMetric:
    k = flow.index(t)
    y = flow.positions[k]
    J = flow.jac[k]
    th, ph = xyz_to_angles(y)
    val, _, _ = evaluate_coeffs([path.w.coeffs], path.grid.L, th, ph, grad=False)
    f = float(path.zeta(t)) * val[0] + path.a_at(t)
    g = np.exp(2.0 * f)[:, None, None] * np.einsum("nia,nib->nab", J, J)
    g = 0.5 * (g + np.swapaxes(g, 1, 2))
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
    if np.any(~(det > 0.0)) or np.any(~(g[:, 0, 0] > 0.0)):
        raise LostPositivity(f"pulled-back metric not positive definite at t = {t}")
    return PulledBackMetric(float(t), g)


def metric_and_rate(path: MetricPath, y, J, t, velocity=None, jvp_step=1e-5):
    """Pulled-back components ``g(t)`` and ``dg/dt`` (N, 2, 2) at flowed points.

    With ``g = e^{2 f(y)} J^T J`` along the flow,
    ``dg/dt = e^{2f} (2 (f_t + <grad f, F>) J^T J + J^T DF J + (DF J)^T J)``.
    """
    velocity = path_velocity(path) if velocity is None else velocity
    th, ph = xyz_to_angles(y)
    val, gth, gph = evaluate_coeffs([path.w.coeffs], path.grid.L, th, ph, grad=True)
    z = float(path.zeta(t))
    f = z * val[0] + path.a_at(t)
    ft = float(path.zeta.deriv(t)) * val[0] + path.a_prime(t)
    if path.frozen(t):
        F, DJ = np.zeros_like(y), np.zeros_like(J)
    else:
        F, DJ = flow_rhs(velocity, y, J, t, jvp_step)
    et, ep = frame_vectors(th, ph)
    grad_f = z * (gth[0][:, None] * et + gph[0][:, None] * ep)
    e2f = np.exp(2.0 * f)[:, None, None]
    JJ = np.einsum("nia,nib->nab", J, J)
    cross = np.einsum("nia,nib->nab", J, DJ)
    g = e2f * JJ
    gdot = e2f * (2.0 * (ft + np.einsum("ni,ni->n", grad_f, F))[:, None, None] * JJ + cross
                  + np.swapaxes(cross, 1, 2))
    return 0.5 * (g + np.swapaxes(g, 1, 2)), 0.5 * (gdot + np.swapaxes(gdot, 1, 2))


def area_form_drift(path: MetricPath, flow: FlowMap):
    """Max over recorded times and grid nodes of ``|sqrt det g(t) / e^{2w} - 1|``."""
    ref = np.exp(2.0 * path.w.values.ravel())
    out = 0.0
    for t in flow.times:
        g = pullback_metric(path, flow, t)
        out = max(out, float(np.max(np.abs(np.sqrt(g.det()) / ref - 1.0))))
    return out


def total_area_drift(path: MetricPath):
    areas = path.areas()
    return float(np.max(np.abs(areas / areas[0] - 1.0)))


def pulled_back_rayleigh(path: MetricPath, flow: FlowMap, t, pair: EigenPair):
    """Rayleigh quotient of ``u o phi_t`` for ``g(t)``, by quadrature at the grid nodes.

    Pulling back is an isometry, so this reproduces ``lambda_1(h(t))`` up to
    discretization error.
    """
    k = flow.index(t)
    grid = path.grid
    gm = pullback_metric(path, flow, t)
    y = flow.positions[k]
    th, ph = xyz_to_angles(y)
    f = path.factor(t)
    lapf = -grid.ell * (grid.ell + 1.0) * f.coeffs
    val, gth, gph = evaluate_coeffs([pair.u.coeffs, lapf], grid.L, th, ph, grad=True)
    et, ep = frame_vectors(th, ph)
    du_amb = gth[0][:, None] * et + gph[0][:, None] * ep
    dv = np.einsum("ni,nia->na", du_amb, flow.jac[k])
    ginv = np.linalg.inv(gm.g)
    grad2 = np.einsum("na,nab,nb->n", dv, ginv, dv)
    sq = np.sqrt(gm.det())
    fv = float(path.zeta(t)) * path.w.evaluate(th, ph) + path.a_at(t)
    K = np.exp(-2.0 * fv) * (1.0 - val[1])
    q = grid.weights.ravel()
    num = np.sum(q * sq * (grad2 + K * val[0] ** 2))
    den = np.sum(q * sq * val[0] ** 2)
    return float(num / den)


def trace_of_derivative(path: MetricPath, t, delta=1e-3):
    """``tr_{g(t)} dg/dt`` at every grid node, by central differences of step ``delta``."""
    if t - delta <= 0.0:
        raise ValueError("need t > delta")
    flow = integrate_flow(path, t_out=[0.0, t - delta, t, t + delta])
    gm = pullback_metric(path, flow, t - delta).g
    g0 = pullback_metric(path, flow, t).g
    gp = pullback_metric(path, flow, t + delta).g
    return np.einsum("nab,nba->n", np.linalg.inv(g0), (gp - gm) / (2.0 * delta))
