"""Rotationally symmetric continuation of the collar to an exact Schwarzschild end.

Radial work is done in the arclength gauge ``rho(s)^2 g_1 + ds^2`` with
``g_1`` the unit round metric. There the scalar curvature is
``R = (2 / rho^2)(1 - rho'^2) - 4 rho'' / rho`` and the Hawking mass function
``mu = (rho / 2)(1 - rho'^2)`` obeys ``mu' = rho' rho^2 R / 4``: prescribing
``R >= 0`` makes ``mu`` nondecreasing, and ``mu == m`` characterises the
mass-``m`` Schwarzschild profile ``rho' = sqrt(1 - 2 m / rho)``.

The bridge starts at the collar's ``t = 1/2`` slice with the collar's own
curvature, cuts it off smoothly, coasts with ``R = 0`` until ``rho >= 4 m``
and then adds a bump of curvature whose amplitude is tuned so that ``mu``
ends exactly at ``m``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .collar import CollarMetric
from .conformal import area as area_of, first_eigenpair, hawking_mass
from .errors import BridgeInfeasible, NotRotationallySymmetric, VerificationFailure
from .profiles import smooth_step, smooth_step_d1
from .sphere import evaluate_coeffs, xyz_to_angles

RTOL = 1e-12
ATOL = 1e-14


def radial_curvature(rho, rho_p, rho_pp):
    """``R = (2 / rho^2)(1 - rho'^2) - 4 rho'' / rho``."""
    return 2.0 / rho**2 * (1.0 - rho_p**2) - 4.0 * rho_pp / rho


def hawking_mass_function(rho, rho_p):
    return 0.5 * rho * (1.0 - rho_p**2)


def schwarzschild_slope(rho, m):
    return np.sqrt(np.maximum(1.0 - 2.0 * m / rho, 0.0))


@dataclass
class RadialProfile:
    """Samples of ``rho(s)``, ``rho'(s)`` and ``R(s)`` in the arclength gauge."""

    s: np.ndarray
    rho: np.ndarray
    rho_prime: np.ndarray
    R: np.ndarray
    gauge: str = "arclength"

    def __post_init__(self):
        if np.any(~(self.rho > 0.0)):
            raise ValueError("areal radius must be positive")

    @property
    def mu(self):
        return hawking_mass_function(self.rho, self.rho_prime)

    def fd_curvature(self):
        """``R`` on interior nodes from second differences of ``rho`` (nonuniform grid)."""
        s, r = self.s, self.rho
        h0, h1 = s[1:-1] - s[:-2], s[2:] - s[1:-1]
        rpp = 2.0 * (h0 * r[2:] - (h0 + h1) * r[1:-1] + h1 * r[:-2]) / (h0 * h1 * (h0 + h1))
        return radial_curvature(r[1:-1], self.rho_prime[1:-1], rpp)

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.s, self.rho, self.rho_prime, self.R]),
                   delimiter=",", fmt="%.17g", header="s,rho,rho_prime,R", comments="")


@dataclass
class Junction:
    """Areal radius and slope of the collar at ``t = 1/2`` plus the outer-segment data."""

    rho: float
    rho_prime: float
    eps: float
    area: float
    speed: float

    @property
    def rho0(self):
        return math.sqrt(self.area / (4.0 * math.pi))

    def collar_profile(self, s):
        """``(rho, rho', rho'')`` of ``sqrt(1 + eps t^2) rho0`` with ``t = 1/2 + s / speed``."""
        t = 0.5 + np.asarray(s, dtype=float) / self.speed
        q = 1.0 + self.eps * t * t
        rho = self.rho0 * np.sqrt(q)
        rt = self.rho0 * self.eps * t / np.sqrt(q)
        rtt = self.rho0 * self.eps / q**1.5
        return rho, rt / self.speed, rtt / self.speed**2

    def collar_curvature(self, s):
        return radial_curvature(*self.collar_profile(s))


def junction_data(c: CollarMetric, t=0.5, tol=1e-8) -> Junction:
    """Arclength data of the collar's rotationally symmetric outer segment at ``t``.

    On the frozen range the slice metric is round with the area of the
    boundary, and ``u`` is the constant ``area^{-1/2}``, so the segment is
    ``(1 + eps t^2) area / (4 pi) g_1 + ((2A - 1) u)^2 dt^2``.
    """
    path = c.data.path
    if not path.frozen(t):
        raise NotRotationallySymmetric(f"path not frozen at t = {t}")
    h = path.h(t)
    wv = h.w.values
    if np.ptp(wv) > tol * max(1.0, np.abs(wv).max()):
        raise NotRotationallySymmetric("slice metric is not round")
    area = 4.0 * math.pi * math.exp(2.0 * float(wv.mean()))
    u = 1.0 / math.sqrt(area)
    speed = float(c.phi(t)) * u
    q = 1.0 + c.eps * t * t
    rho = math.sqrt(q * area / (4.0 * math.pi))
    rho_p = c.eps * t * rho / (q * speed)
    return Junction(rho=rho, rho_prime=rho_p, eps=c.eps, area=area, speed=speed)


@dataclass
class BridgePlan:
    """Piecewise description of the prescribed curvature ``R(s)``."""

    junction: Junction
    m: float
    cut_start: float
    cut_end: float
    bump_start: float = np.nan
    bump_end: float = np.nan
    amplitude: float = 0.0

    def curvature(self, s):
        s = np.asarray(s, dtype=float)
        j = self.junction
        w = self.cut_end - self.cut_start
        chi = 1.0 - smooth_step((s - self.cut_start) / w)
        R = np.where(s < self.cut_end, chi * j.collar_curvature(np.minimum(s, self.cut_end)), 0.0)
        if self.amplitude != 0.0:
            lb = self.bump_end - self.bump_start
            R = R + self.amplitude * smooth_step_d1((s - self.bump_start) / lb)
        return R


def _rhs(plan):
    def f(s, y):
        rho, p = y
        return [p, (1.0 - p * p) / (2.0 * rho) - rho * float(plan.curvature(s)) / 4.0]

    return f


def _slope_event(s, y):
    return y[1]


_slope_event.terminal = True
_slope_event.direction = -1


def _integrate(plan, s0, s1, y0, events=None):
    sol = solve_ivp(_rhs(plan), (s0, s1), y0, method="DOP853", rtol=RTOL, atol=ATOL,
                    dense_output=True, events=events)
    if sol.status < 0:
        raise BridgeInfeasible(f"integration failed: {sol.message}")
    return sol


def build_bridge(junction: Junction, m, coast_max=None, n_out=400, cut_width=None):
    """Radial profile from the junction to an exact mass-``m`` Schwarzschild end.

    Returns
    -------
    profile : RadialProfile
        Samples on ``[0, s_T + 4 m]``; exact Schwarzschild for ``s >= s_T``.
    info : dict
        ``s_T``, ``T`` (areal radius at ``s_T``), the bump amplitude, the
        mass function after the cutoff and the ODE residual at ``s_T``.

    Raises
    ------
    BridgeInfeasible
        When the mass function already reaches ``m`` before the bump, or the
        slope would turn nonpositive.

    Notes
    -----
    The collar curvature is kept on ``[0, cut_width]`` and switched off over
    ``[cut_width, 2 cut_width]``; the default width is ``rho_J / 20``.
    """
    j = junction
    if m <= 0.0:
        raise BridgeInfeasible("mass must be positive")
    mu_j = hawking_mass_function(j.rho, j.rho_prime)
    if m <= mu_j:
        raise BridgeInfeasible(f"m = {m:.12g} does not exceed the junction mass {mu_j:.12g}")
    # a short cutoff keeps the slope, and so the mass gain, of order cut^2 / rho
    cut = 0.05 * j.rho if cut_width is None else cut_width
    plan = BridgePlan(j, m, cut_start=cut, cut_end=2.0 * cut)
    y0 = [j.rho, j.rho_prime]
    seg1 = _integrate(plan, 0.0, plan.cut_end, y0, events=_slope_event)
    if seg1.t_events[0].size:
        raise BridgeInfeasible("slope vanished inside the cutoff")
    y1 = seg1.y[:, -1]
    mu1 = hawking_mass_function(*y1)
    if mu1 >= m:
        raise BridgeInfeasible(f"mass function {mu1:.12g} reaches m = {m:.12g} before the bump")

    def reach(s, y):
        return y[0] - 4.0 * m

    reach.terminal = True
    reach.direction = 1
    coast_max = 1e3 * m if coast_max is None else coast_max
    if y1[0] >= 4.0 * m:
        s_b0, yb = plan.cut_end, y1
        seg2 = None
    else:
        seg2 = _integrate(plan, plan.cut_end, plan.cut_end + coast_max, y1, events=[_slope_event, reach])
        if seg2.t_events[0].size or not seg2.t_events[1].size:
            raise BridgeInfeasible("coasting profile never reaches 4 m")
        s_b0, yb = float(seg2.t_events[1][0]), seg2.y_events[1][0]
    plan.bump_start, plan.bump_end = s_b0, s_b0 + 4.0 * m

    def end_mass(alpha):
        plan.amplitude = alpha
        sol = _integrate(plan, plan.bump_start, plan.bump_end, yb, events=_slope_event)
        if sol.t_events[0].size:
            return np.inf
        return hawking_mass_function(*sol.y[:, -1]) - m

    # first-order amplitude from the flux weight rho' rho^2 / 4 along the unbumped path
    sb = np.linspace(plan.bump_start, plan.bump_end, 201)
    plan.amplitude = 0.0
    Y = _integrate(plan, plan.bump_start, plan.bump_end, yb).sol(sb)
    weight = np.trapezoid(Y[1] * Y[0] ** 2 / 4.0 * smooth_step_d1((sb - sb[0]) / (sb[-1] - sb[0])), sb)
    hi = (m - mu1) / weight
    while end_mass(hi) < 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise BridgeInfeasible("bump amplitude diverged")
    alpha = brentq(end_mass, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    plan.amplitude = alpha
    seg3 = _integrate(plan, plan.bump_start, plan.bump_end, yb)
    yT = seg3.y[:, -1]
    s_T = plan.bump_end
    residual = abs(yT[1] - schwarzschild_slope(yT[0], m))
    ext = _schwarzschild_segment(m, s_T, yT[0], s_T + 4.0 * m)

    segs = [(seg1, 0.0, plan.cut_end)]
    if seg2 is not None:
        segs.append((seg2, plan.cut_end, s_b0))
    segs.append((seg3, s_b0, s_T))
    segs.append((ext, s_T, s_T + 4.0 * m))
    s_all, rho, rp = [], [], []
    per = max(n_out // len(segs), 8)
    for sol, a, b in segs:
        ss = np.linspace(a, b, per)
        Y = sol.sol(ss)
        s_all.append(ss)
        rho.append(Y[0])
        rp.append(Y[1])
    s_all, rho, rp = (np.concatenate(x) for x in (s_all, rho, rp))
    keep = np.concatenate([[True], np.diff(s_all) > 0.0])
    s_all, rho, rp = s_all[keep], rho[keep], rp[keep]
    R = plan.curvature(s_all)
    info = dict(s_T=float(s_T), T=float(yT[0]), amplitude=float(alpha), mu_junction=float(mu_j),
                mu_before_bump=float(mu1), residual=float(residual), plan=plan,
                segments=segs, y_T=yT)
    return RadialProfile(s_all, rho, rp, R), info


def _schwarzschild_segment(m, s0, rho0, s1):
    """Exact mass-``m`` profile through ``rho(s0) = rho0``, as an ODE solution with ``R = 0``."""
    f = lambda s, y: [y[1], m / y[0] ** 2]
    y0 = [rho0, float(schwarzschild_slope(rho0, m))]
    return solve_ivp(f, (s0, s1), y0, method="DOP853", rtol=RTOL, atol=ATOL, dense_output=True)


def schwarzschild_profile(m, s_max=None, n=400):
    """Profile starting at the minimal sphere ``rho = 2 m`` with ``rho' = 0``."""
    s_max = 20.0 * m if s_max is None else s_max
    sol = _schwarzschild_segment(m, 0.0, 2.0 * m, s_max)
    s = np.linspace(0.0, s_max, n)
    Y = sol.sol(s)
    return RadialProfile(s, Y[0], Y[1], np.zeros_like(s)), sol


def _jets(rho, p, R_coeffs, order=4):
    """Taylor coefficients ``a_k`` of ``rho`` solving ``rho'' = (1 - rho'^2) / (2 rho) - rho R / 4``.

    ``R_coeffs`` are the Taylor coefficients of ``R`` at the expansion point.
    Returns the derivatives ``rho^(k)`` for ``k = 0..order``.
    """
    a = np.zeros(order + 1)
    a[0], a[1] = rho, p
    Rc = np.zeros(order + 1)
    Rc[: len(R_coeffs)] = R_coeffs[: order + 1]
    for k in range(order - 1):
        n = k + 1
        b = np.array([(i + 1) * a[i + 1] for i in range(n)])
        bb = np.convolve(b, b)[:n]
        inv = np.zeros(n)
        inv[0] = 1.0 / a[0]
        for i in range(1, n):
            inv[i] = -np.dot(a[1: i + 1], inv[i - 1:: -1][:i]) / a[0]
        num = -bb
        num[0] += 1.0
        G = 0.5 * np.convolve(num, inv)[:n] - 0.25 * np.convolve(a[:n], Rc[:n])[:n]
        a[k + 2] = G[k] / ((k + 2) * (k + 1))
    return np.array([math.factorial(k) * a[k] for k in range(order + 1)])


@dataclass
class GluedMetric:
    """Collar on ``(0, 1/2]`` followed by the radial bridge and the Schwarzschild end.

    ``collar`` is ``None`` for the Schwarzschild-only configuration.
    """

    collar: CollarMetric | None
    junction: Junction | None
    profile: RadialProfile
    m: float
    T: float
    s_T: float
    info: dict = field(default_factory=dict)

    def manifest(self):
        adm = adm_numeric(self)
        return {
            "m": self.m,
            "T": self.T,
            "s_T": self.s_T,
            "epsilon": None if self.collar is None else self.collar.eps,
            "A": None if self.collar is None else self.collar.A,
            "junctions": junction_report(self),
            "margins": margins(self),
            "adm_numeric": adm,
        }

    def manifest_json(self):
        return json.dumps(self.manifest(), sort_keys=True, indent=2)


def assemble(c: CollarMetric | None, m, junction: Junction | None = None, n_out=400):
    """Glue a collar (or nothing) to a mass-``m`` end; ``c = None`` gives pure Schwarzschild."""
    if c is None:
        prof, sol = schwarzschild_profile(m, n=n_out)
        return GluedMetric(None, None, prof, m, T=2.0 * m, s_T=0.0,
                           info=dict(residual=0.0, segments=[(sol, 0.0, prof.s[-1])]))
    j = junction_data(c) if junction is None else junction
    prof, info = build_bridge(j, m, n_out=n_out)
    return GluedMetric(c, j, prof, m, T=info["T"], s_T=info["s_T"], info=info)


def glue_with_retry(data, A, eps, m, shrink=0.5, eps_min=1e-8):
    """Assemble, halving ``eps`` after every infeasible attempt; never increases ``eps``."""
    tried = []
    while eps >= eps_min:
        c = CollarMetric(data, eps, A)
        try:
            gm = assemble(c, m)
            gm.info["eps_tried"] = tried
            return gm
        except BridgeInfeasible:
            tried.append(eps)
            eps *= shrink
    raise BridgeInfeasible(f"no eps in [{eps_min:g}, {tried[0] if tried else eps:g}] works for m = {m}")


def junction_report(gm: GluedMetric):
    """Continuity of the slice metric and mean curvature at both junctions."""
    out = {}
    if gm.collar is not None:
        c, j = gm.collar, gm.junction
        k = c.data.index(0.5)
        q = 1.0 + c.eps * 0.25
        g = c.data.slices[k].g
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
        # base frames are orthonormal for the round metric, so sqrt(det g) is the area density
        base = c.data.path.grid
        dens = np.sqrt(det)
        if dens.size == base.shape[0] * base.shape[1]:
            area = q * float(base.integrate_values(dens.reshape(base.shape)))
        else:
            # subsampled points: the flow fixes the area form, so dens / e^{2 w_0} is constant
            w0 = c.data.path.h(0.0).w
            th, ph = xyz_to_angles(c.data.points)
            w0_pts = evaluate_coeffs([w0.coeffs], base.L, th, ph, grad=False)[0][0]
            ratio = dens / np.exp(2.0 * w0_pts)
            area = q * area_of(c.data.path.h(0.0)) * float(ratio.mean())
            dens = ratio
        H, _ = c.mean_curvature(k)
        out["collar_bridge"] = dict(
            rho_collar=math.sqrt(area / (4.0 * math.pi)), rho_bridge=float(gm.profile.rho[0]),
            H_collar=float(np.mean(H)), H_bridge=float(gm.profile.rho_prime[0] / gm.profile.rho[0]),
            H_spread=float(np.ptp(H)), density_spread=float(np.ptp(dens) / np.abs(dens).max()))
        # the bump ends flat, so R has a vanishing jet at s_T on the bridge side
        yT = gm.info["y_T"]
        jb = _jets(yT[0], yT[1], np.zeros(5))
        je = _jets(yT[0], float(schwarzschild_slope(yT[0], gm.m)), np.zeros(5))
        out["bridge_exterior"] = dict(rho=float(yT[0]), max_jet_mismatch=float(np.max(np.abs(jb - je))),
                                      residual=float(gm.info["residual"]))
    return out


def margins(gm: GluedMetric):
    prof = gm.profile
    out = dict(min_R_radial=float(prof.R.min()), min_rho_prime=float(prof.rho_prime[1:].min()))
    if gm.collar is not None:
        rep = gm.collar.report()
        out.update(min_R_collar=rep["min_R"], min_H_collar=rep["min_H"])
    return out


def adm_mass(gm: GluedMetric):
    """Mass of the exterior; exact by construction."""
    return gm.m


def adm_numeric(gm: GluedMetric, radii=(50.0, 100.0, 200.0)):
    """Surface-integral mass ``r (g_rr - 1) / 2`` at ``r = k m``, Richardson-extrapolated in ``1/r``.

    In asymptotically Cartesian coordinates with ``|x| = rho`` the metric is
    ``delta + (1 / rho'^2 - 1) x x^T / rho^2`` and the flux integral reduces to
    ``rho (1 / rho'^2 - 1) / 2``. The exterior is integrated numerically from
    ``s_T`` outward.
    """
    m = gm.m
    seg = gm.info["segments"][-1]
    sol, s0 = seg[0], seg[1]
    y0 = sol.sol(s0)
    vals = []
    for k in radii:
        def hit(s, y, r=k * m):
            return y[0] - r

        hit.terminal = True
        f = lambda s, y: [y[1], m / y[0] ** 2]
        sol_k = solve_ivp(f, (s0, s0 + 10.0 * k * m), y0, method="DOP853", rtol=RTOL, atol=ATOL,
                          events=hit)
        r, p = sol_k.y_events[0][0]
        vals.append(0.5 * r * (1.0 / p**2 - 1.0))
    x = np.array([1.0 / (k * m) for k in radii])
    coef = np.polyfit(x, vals, len(radii) - 1)
    return dict(radii=[k * m for k in radii], values=[float(v) for v in vals],
                extrapolated=float(coef[-1]))


def _extrapolate_to_zero(t, y, basis):
    A = np.column_stack([b(t) for b in basis])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def verify_theorem(gm: GluedMetric, n_fit=5, tol_R=1e-6, tol_boundary=1e-5, tol_ode=1e-9,
                   tol_junction=1e-7, tol_jets=1e-6):
    """Check the four conclusions plus junction continuity; raise on the first failure.

    Returns the report dict when every clause holds.
    """
    rep = {}
    prof = gm.profile
    if gm.collar is None:
        rep["i"] = dict(min_R=float(prof.R.min()), boundary_R=0.0)
        rep["ii"] = dict(boundary_rho=0.0)
        rep["iii"] = dict(min_H=float(prof.rho_prime[1:].min()))
        res = np.abs(prof.rho_prime - schwarzschild_slope(prof.rho, gm.m))
        rep["iv"] = dict(residual=float(res.max()), T=gm.T, m=gm.m)
        if prof.rho[0] != 2.0 * gm.m or prof.rho_prime[0] != 0.0:
            raise VerificationFailure("(ii) boundary is not the minimal sphere rho = 2m")
        return rep
    rows = gm.collar.summary()
    t = np.array([r["t"] for r in rows])
    near = np.argsort(t)[:n_fit]
    tt = t[near]
    maxR = np.array([rows[i]["max_abs_R"] for i in near])
    maxrho = np.array([rows[i]["max_rho"] for i in near])
    bR = _extrapolate_to_zero(tt, maxR, [np.ones_like, lambda x: x, lambda x: x * x])
    # rho expands in powers of sqrt(t)
    brho = _extrapolate_to_zero(tt, maxrho, [np.ones_like, np.sqrt, lambda x: x, lambda x: x**1.5])
    min_R = min(min(r["min_R"] for r in rows), float(prof.R.min()))
    # the boundary limit of R is 2 lambda_1 of the boundary metric: zero exactly when degenerate
    lam0 = first_eigenpair(gm.collar.data.path.h(0.0)).lambda1
    rep["i"] = dict(min_R=min_R, boundary_R=bR, boundary_limit=2.0 * lam0)
    if min_R < -tol_R:
        raise VerificationFailure(f"(i) scalar curvature {min_R:.3e} below tolerance")
    if abs(bR - 2.0 * lam0) > tol_boundary:
        raise VerificationFailure(f"(i) boundary scalar curvature {bR:.3e} vs {2.0 * lam0:.3e}")
    rep["ii"] = dict(boundary_rho=brho)
    if abs(brho) > tol_boundary:
        raise VerificationFailure(f"(ii) boundary second fundamental form {brho:.3e}")
    min_H = min(r["min_H"] for r in rows)
    rep["iii"] = dict(min_H=min_H, min_rho_prime=float(prof.rho_prime.min()))
    if not (min_H > 0.0 and prof.rho_prime.min() > 0.0):
        raise VerificationFailure("(iii) a slice is not strictly mean convex")
    ext = prof.s >= gm.s_T
    res = np.abs(prof.rho_prime[ext] - schwarzschild_slope(prof.rho[ext], gm.m))
    rep["iv"] = dict(residual=float(max(res.max(), gm.info["residual"])), T=gm.T, m=gm.m)
    if rep["iv"]["residual"] > tol_ode:
        raise VerificationFailure(f"(iv) Schwarzschild residual {rep['iv']['residual']:.3e}")
    if not gm.T > 2.0 * gm.m:
        raise VerificationFailure("(iv) T does not exceed 2m")
    jr = junction_report(gm)
    rep["junctions"] = jr
    cb = jr["collar_bridge"]
    if abs(cb["rho_collar"] - cb["rho_bridge"]) > tol_junction or abs(cb["H_collar"] - cb["H_bridge"]) > tol_junction:
        raise VerificationFailure("junction mismatch between collar and bridge")
    if jr["bridge_exterior"]["max_jet_mismatch"] > tol_jets:
        raise VerificationFailure("derivative mismatch between bridge and exterior")
    return rep


def feasibility_threshold(junction: Junction, m_lo, m_hi, tol=1e-10):
    """Smallest feasible mass in ``[m_lo, m_hi]`` by bisection on :func:`build_bridge`."""
    def ok(m):
        try:
            build_bridge(junction, m, n_out=16)
            return True
        except BridgeInfeasible:
            return False

    if ok(m_lo):
        return m_lo
    if not ok(m_hi):
        raise BridgeInfeasible(f"no feasible mass up to {m_hi}")
    while m_hi - m_lo > tol * m_hi:
        mid = 0.5 * (m_lo + m_hi)
        if ok(mid):
            m_hi = mid
        else:
            m_lo = mid
    return m_hi


def boundary_hawking_mass(c: CollarMetric):
    return hawking_mass(junction_data(c).area)
