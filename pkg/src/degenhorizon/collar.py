"""The collar ``gamma = (1 + eps t^2) g(t) + Phi(t)^2 u(t, .)^2 dt^2`` on S^2 x (0, 1].

Everything that does not depend on ``(eps, A)`` is computed once per slice
(:class:`SliceJets`) at a fixed set of base points carried by the flow:
components of ``g(t)`` and ``dg/dt`` in a fixed base frame, the pulled-back
eigenfunction ``u`` at five time levels, ``K_g`` and ``Lap_g u``. Because
``g(t)`` is the pull-back of ``h(t) = e^{2f} g_*`` by the flow, ``K_g`` and
``Lap_g u`` equal ``K_h`` and ``Lap_h U`` at the image point and are taken
from the spectral representation there. A :class:`CollarMetric` combines the
jets with ``eps`` and the warp ``Phi`` algebraically.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .charts import d1, d2, inverse_stereo, stereo, stereo_jacobian, trace_and_norm
from .conformal import first_eigenpair
from .errors import MissingDerivatives, SearchExhausted, SingularMetric
from .path import MetricPath, grid_frames, integrate_flow, metric_and_rate, path_velocity
from .profiles import PhiProfile, ZetaProfile
from .sphere import GridSpec, ScalarField, evaluate_coeffs, get_grid, xyz_to_angles

# five-point central stencils
_W1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_W2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
OFFSETS = np.arange(-2, 3)


def default_slices(t_min=1e-3):
    near = np.geomspace(t_min, 0.25, 10)
    bridge = np.array([0.26, 0.28, 0.3, 0.35, 0.4, 0.45, 0.5])
    outer = np.array([0.625, 0.75, 0.875, 1.0])
    return np.concatenate([near, bridge, outer])


def fd_step(t, delta_max=0.002, frac=0.05):
    return min(frac * t, delta_max)


@dataclass
class SliceJets:
    """``(eps, A)``-independent data on one slice; arrays run over the base points."""

    t: float
    delta: float
    g_levels: np.ndarray
    gdot_levels: np.ndarray
    u_levels: np.ndarray
    lam: float
    K: np.ndarray
    lap_u: np.ndarray

    def _dt(self, arr, order):
        w = _W1 / self.delta if order == 1 else _W2 / self.delta**2
        return np.tensordot(w, arr, axes=(0, 0))

    @property
    def g(self):
        return self.g_levels[2]

    @property
    def gdot(self):
        return self.gdot_levels[2]

    @property
    def gddot(self):
        return self._dt(self.gdot_levels, 1)

    @property
    def u(self):
        return self.u_levels[2]

    @property
    def u_t(self):
        return self._dt(self.u_levels, 1)

    @property
    def u_tt(self):
        return self._dt(self.u_levels, 2)


class _EigenCache:
    """``first_eigenpair(h(t))`` memoized per time, with one shared entry on the frozen range."""

    def __init__(self, path):
        self.path = path
        self.store = {}

    def __call__(self, t):
        key = 0.5 if self.path.frozen(t) else float(t)
        if key not in self.store:
            self.store[key] = first_eigenpair(self.path.h(t))
        return self.store[key]


def sample_slices(path: MetricPath, points, jac0, times, eig=None):
    """Flow ``points`` to every time in ``times`` and sample the slice data there.

    Returns a dict ``t -> (g, gdot, u, K, lap_u, lambda1)`` with arrays over the points.
    """
    eig = _EigenCache(path) if eig is None else eig
    times = np.unique(np.concatenate([[0.0], np.asarray(times, dtype=float)]))
    flow = integrate_flow(path, t_out=times, points=points, jac0=jac0)
    velocity = path_velocity(path)
    grid = path.grid
    lap_w = -grid.ell * (grid.ell + 1.0) * path.w.coeffs
    out = {}
    for k, t in enumerate(times):
        pair = eig(t)
        y, J = flow.positions[k], flow.jac[k]
        g, gdot = metric_and_rate(path, y, J, t, velocity)
        lap_u = -grid.ell * (grid.ell + 1.0) * pair.u.coeffs
        th, ph = xyz_to_angles(y)
        val, _, _ = evaluate_coeffs([path.w.coeffs, lap_w, pair.u.coeffs, lap_u], grid.L, th, ph,
                                    grad=False)
        z = float(path.zeta(t))
        s = np.exp(-2.0 * (z * val[0] + path.a_at(t)))
        out[float(t)] = (g, gdot, val[2], s * (1.0 - z * val[1]), s * val[3], pair.lambda1)
    return out


def compute_slice_jets(path: MetricPath, points, jac0, slices=None, delta_max=0.002, frac=0.05,
                       eig=None):
    """Jets of every slice at the base points, from samples at ``t + j delta``, ``j = -2..2``."""
    slices = default_slices() if slices is None else np.asarray(slices, dtype=float)
    deltas = np.array([fd_step(t, delta_max, frac) for t in slices])
    # rounding merges levels that coincide between neighbouring slices
    levels = np.round(slices[:, None] + deltas[:, None] * OFFSETS[None, :], 14)
    data = sample_slices(path, points, jac0, levels.ravel(), eig)
    out = []
    for t, dlt, lv in zip(slices, deltas, levels):
        rows = [data[float(s)] for s in lv]
        c = rows[2]
        g = c[0]
        if np.any(g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0] <= 0.0):
            raise SingularMetric(f"pulled-back metric degenerate at t = {t}")
        out.append(SliceJets(
            t=float(t), delta=float(dlt),
            g_levels=np.stack([r[0] for r in rows]),
            gdot_levels=np.stack([r[1] for r in rows]),
            u_levels=np.stack([r[2] for r in rows]),
            lam=float(c[5]), K=c[3], lap_u=c[4],
        ))
    return out


@dataclass
class CollarData:
    """Path, base points and the per-slice jets; shared by every ``(eps, A)`` probe."""

    path: MetricPath
    points: np.ndarray
    slices: list

    @classmethod
    def build(cls, path, slices=None, points=None, jac0=None, delta_max=0.002, frac=0.05):
        """Default base points are the quadrature nodes with their orthonormal frames."""
        if points is None:
            points = path.grid.xyz().reshape(-1, 3)
            jac0 = grid_frames(path.grid)
        jets = compute_slice_jets(path, points, jac0, slices, delta_max, frac)
        return cls(path, np.asarray(points), jets)

    @property
    def times(self):
        return np.array([s.t for s in self.slices])

    def save(self, file):
        """Store the jets plus what is needed to rebuild the path (``.npz``)."""
        sl = self.slices
        spec = self.path.grid.spec
        np.savez(file, w=self.path.w.coeffs, grid=np.array([spec.band, spec.n_lat, spec.n_lon]),
                 tilt=self.path.zeta.tilt, n_times=self.path.times.size, points=self.points,
                 t=np.array([s.t for s in sl]), delta=np.array([s.delta for s in sl]),
                 lam=np.array([s.lam for s in sl]),
                 g_levels=np.stack([s.g_levels for s in sl]),
                 gdot_levels=np.stack([s.gdot_levels for s in sl]),
                 u_levels=np.stack([s.u_levels for s in sl]),
                 K=np.stack([s.K for s in sl]), lap_u=np.stack([s.lap_u for s in sl]))

    @classmethod
    def load(cls, file):
        z = np.load(file)
        band, n_lat, n_lon = (int(x) for x in z["grid"])
        grid = get_grid(GridSpec(band=band, n_lat=n_lat, n_lon=n_lon))
        w = ScalarField.from_coeffs(grid, z["w"])
        path = MetricPath.build(w, ZetaProfile(float(z["tilt"])), n_times=int(z["n_times"]),
                                eigen=False)
        slices = [SliceJets(t=float(z["t"][k]), delta=float(z["delta"][k]),
                            g_levels=z["g_levels"][k], gdot_levels=z["gdot_levels"][k],
                            u_levels=z["u_levels"][k], lam=float(z["lam"][k]), K=z["K"][k],
                            lap_u=z["lap_u"][k])
                  for k in range(z["t"].size)]
        return cls(path, z["points"], slices)

    def index(self, t):
        if isinstance(t, (int, np.integer)):
            if not 0 <= t < len(self.slices):
                raise MissingDerivatives(f"no jets for slice {t}")
            return int(t)
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12:
            raise MissingDerivatives(f"no jets at t = {t}")
        return k


@dataclass
class CollarMetric:
    data: CollarData
    eps: float
    A: float
    phi: PhiProfile = None

    def __post_init__(self):
        if self.phi is None:
            self.phi = PhiProfile(self.A)

    def _pieces(self, t):
        s = self.data.slices[self.data.index(t)]
        t, eps = s.t, self.eps
        q = 1.0 + eps * t * t
        Phi = float(self.phi(t))
        dPhi = float(self.phi.deriv(t))
        g, gd, gdd = s.g, s.gdot, s.gddot
        h = q * g
        hd = 2.0 * eps * t * g + q * gd
        hdd = 2.0 * eps * g + 4.0 * eps * t * gd + q * gdd
        tr_hd, nrm_hd = trace_and_norm(h, hd)
        tr_hdd, _ = trace_and_norm(h, hdd)
        u, ut = s.u, s.u_t
        if np.any(~(u > 0.0)):
            raise SingularMetric(f"eigenfunction not positive at t = {t}")
        return s, dict(q=q, t=t, Phi=Phi, dPhi=dPhi, g=g, gd=gd, gdd=gdd, h=h, hd=hd,
                       tr_hd=tr_hd, nrm_hd=nrm_hd, tr_hdd=tr_hdd, u=u, ut=ut,
                       v=Phi * u, vt=dPhi * u + Phi * ut)

    def scalar_curvature(self, t):
        """``R_gamma`` on a slice plus the labelled bracket terms.

        Returns a dict with keys ``"R", "I", "II", "III", "IV", "V", "bracket", "rest"``
        where ``bracket = I + ... + V`` and ``rest`` collects what the bracket
        omits, so that ``R Phi^2 q u^2 = bracket + rest``.
        """
        s, d = self._pieces(t)
        eps = self.eps
        q, t, u, v = d["q"], d["t"], d["u"], d["v"]
        two_K_minus = (2.0 / q) * (s.K - s.lap_u / u)
        br = -d["tr_hdd"] - 0.25 * d["tr_hd"] ** 2 + (d["vt"] / v) * d["tr_hd"] + 0.75 * d["nrm_hd"]
        R = two_K_minus + br / v**2
        tr_g_gdd, _ = trace_and_norm(d["g"], d["gdd"])
        terms = {
            "I": 2.0 * d["Phi"] ** 2 * s.lam * u**2,
            "II": np.full_like(u, -4.0 * eps),
            "III": -q * tr_g_gdd,
            "IV": 4.0 * eps * t * d["ut"] / u,
            "V": np.full_like(u, 4.0 * eps * t * d["dPhi"] / d["Phi"]),
        }
        bracket = sum(terms.values())
        return dict(R=R, bracket=bracket, rest=R * d["Phi"] ** 2 * q * u**2 - bracket,
                    tr_hdd=d["tr_hdd"], **terms)

    def second_fundamental_form(self, t):
        """``rho_ij = -(1 / 2v) d_t h_ij`` for the unit normal ``v^{-1} d_t``."""
        _, d = self._pieces(t)
        return -d["hd"] / (2.0 * d["v"][:, None, None])

    def mean_curvature(self, t):
        """``H = -tr_h rho / 2`` and the prediction ``eps t / (v (1 + eps t^2))``."""
        _, d = self._pieces(t)
        return d["tr_hd"] / (4.0 * d["v"]), self.eps * d["t"] / (d["v"] * d["q"])

    def rho_norm(self, t):
        """``|rho|_h`` per node."""
        _, d = self._pieces(t)
        return np.sqrt(np.maximum(d["nrm_hd"], 0.0)) / (2.0 * d["v"])

    def summary(self):
        rows = []
        for k, s in enumerate(self.data.slices):
            cur = self.scalar_curvature(k)
            H, pred = self.mean_curvature(k)
            others = sum(np.abs(cur[n]) for n in ("II", "III", "IV", "V"))
            rows.append(dict(t=s.t, min_R=float(cur["R"].min()),
                             max_abs_R=float(np.abs(cur["R"]).max()),
                             min_bracket=float(cur["bracket"].min()), min_H=float(H.min()),
                             max_H_error=float(np.abs(H - pred).max()),
                             max_rho=float(self.rho_norm(k).max()),
                             min_I=float(cur["I"].min()), max_rest_terms=float(others.max())))
        return rows

    def report(self, t_min=None):
        rows = self.summary()
        t_min = rows[0]["t"] if t_min is None else t_min
        first = min(rows, key=lambda r: abs(r["t"] - t_min))
        return {
            "epsilon": self.eps,
            "A": self.A,
            "min_R": min(r["min_R"] for r in rows),
            "min_H": min(r["min_H"] for r in rows),
            "max_H_error": max(r["max_H_error"] for r in rows),
            "max_rho_at_tmin": first["max_rho"],
            "rho_scale_at_tmin": first["t"] ** 1.5 / self.A,
            "bracket_margin": min(r["min_bracket"] for r in rows),
            "C1": max(r["max_rest_terms"] for r in rows),
            "slices": rows,
        }

    def report_json(self):
        return json.dumps(self.report(), sort_keys=True, indent=2)

    def slice_csv(self, t, path):
        """Per-node dump of one slice: ``x, y, z, u, R, bracket, H, H_pred, rho``."""
        cur = self.scalar_curvature(t)
        H, pred = self.mean_curvature(t)
        X = self.data.points
        cols = np.column_stack([X, self.data.slices[self.data.index(t)].u, cur["R"],
                                cur["bracket"], H, pred, self.rho_norm(t)])
        np.savetxt(path, cols, delimiter=",", fmt="%.17g",
                   header="x,y,z,u,R,bracket,H,H_pred,rho", comments="")


def scalar_curvature_collar(c: CollarMetric, t):
    return c.scalar_curvature(t)


def second_fundamental_form(c: CollarMetric, t):
    return c.second_fundamental_form(t)


def mean_curvature(c: CollarMetric, t):
    return c.mean_curvature(t)


# --- brute-force 3D check -------------------------------------------------------


def _deriv(f, axis, h, order):
    """Fourth-order central derivative of a box array along a spatial axis (0, 1, 2)."""
    return d1(f, axis, h) if order == 1 else d2(f, axis, h)


def scalar_curvature_3d_oracle(gamma, spacing):
    """Scalar curvature of a 3-metric sampled on a box, with no structural shortcuts.

    Parameters
    ----------
    gamma : ndarray, shape (n0, n1, n2, 3, 3)
        Components on a uniform box.
    spacing : sequence of 3 floats

    Returns
    -------
    ndarray, shape (n0, n1, n2)
        NaN where the stencils do not fit.
    """
    gamma = np.asarray(gamma, dtype=float)
    shape = gamma.shape[:3]
    dg = np.empty(shape + (3, 3, 3))
    ddg = np.empty(shape + (3, 3, 3, 3))
    for e in range(3):
        dg[..., e, :, :] = _deriv(gamma, e, spacing[e], 1)
    for e in range(3):
        for f in range(3):
            if e == f:
                ddg[..., e, f, :, :] = _deriv(gamma, e, spacing[e], 2)
            elif e < f:
                ddg[..., e, f, :, :] = _deriv(dg[..., e, :, :], f, spacing[f], 1)
            else:
                ddg[..., e, f, :, :] = ddg[..., f, e, :, :]
    ok = np.all(np.isfinite(ddg.reshape(shape + (-1,))), axis=-1) & np.all(
        np.isfinite(dg.reshape(shape + (-1,))), axis=-1)
    out = np.full(shape, np.nan)
    G = gamma[ok]
    if np.any(~(np.linalg.det(G) > 0.0)):
        raise SingularMetric("3-metric not positive definite")
    out[ok] = kernels.ricci_scalar_from_jets(G, dg[ok], ddg[ok])
    return out


DEFAULT_CENTERS = ((0.35, 0.2), (0.9, 1.3), (1.5707963267948966, 0.0), (1.6, 2.5),
                   (2.2, 4.0), (2.8, 5.5))


@dataclass
class OracleBoxes:
    """Small chart boxes around sample points, flowed with the path.

    Each box is ``n x n`` stereographic nodes of spacing ``spacing`` centred on a
    sample point, in the chart whose projection pole is farther away. Jets are
    sampled at five time levels of step ``fd_step(t, delta_max, frac)``.
    """

    data: CollarData
    n: int
    spacing: float
    n_boxes: int

    @classmethod
    def build(cls, path, slices, centers=DEFAULT_CENTERS, n=9, spacing=0.0015, delta_max=0.002,
              frac=0.05):
        off = (np.arange(n) - n // 2) * spacing
        o1, o2 = np.meshgrid(off, off, indexing="ij")
        pts, jac = [], []
        for th, ph in centers:
            X = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
            pole = 1 if X[2] <= 0.0 else -1
            z1, z2 = stereo(X, pole)
            pts.append(inverse_stereo(z1 + o1, z2 + o2, pole).reshape(-1, 3))
            jac.append(stereo_jacobian(z1 + o1, z2 + o2, pole).reshape(-1, 3, 2))
        pts, jac = np.concatenate(pts), np.concatenate(jac)
        data = CollarData.build(path, slices, points=pts, jac0=jac, delta_max=delta_max, frac=frac)
        return cls(data, n, spacing, len(centers))

    @property
    def centre_index(self):
        n2 = self.n * self.n
        return np.arange(self.n_boxes) * n2 + n2 // 2

    def gamma_box(self, c: CollarMetric, k, b):
        """Components of ``gamma`` on box ``b`` of slice ``k``: shape (n, n, 5, 3, 3)."""
        s = self.data.slices[k]
        n, n2 = self.n, self.n * self.n
        sl = slice(b * n2, (b + 1) * n2)
        box = np.zeros((n, n, 5, 3, 3))
        for j, off in enumerate(OFFSETS):
            t = s.t + off * s.delta
            q = 1.0 + c.eps * t * t
            box[:, :, j, :2, :2] = q * s.g_levels[j][sl].reshape(n, n, 2, 2)
            box[:, :, j, 2, 2] = (float(c.phi(t)) * s.u_levels[j][sl].reshape(n, n)) ** 2
        return box

    def oracle(self, eps, A, k):
        """Oracle ``R`` at the box centres of slice ``k``."""
        c = CollarMetric(self.data, eps, A)
        s = self.data.slices[k]
        out = np.empty(self.n_boxes)
        for b in range(self.n_boxes):
            R = scalar_curvature_3d_oracle(self.gamma_box(c, k, b), (self.spacing, self.spacing, s.delta))
            out[b] = R[self.n // 2, self.n // 2, 2]
        return out

    def compare(self, eps, A, k):
        """``(formula, oracle, relative)``; the difference is scaled by the largest ``|R|``."""
        c = CollarMetric(self.data, eps, A)
        formula = c.scalar_curvature(k)["R"][self.centre_index]
        ora = self.oracle(eps, A, k)
        scale = float(np.max(np.abs(formula)))
        return formula, ora, float(np.max(np.abs(formula - ora))) / scale


def formula_vs_oracle(boxes: OracleBoxes, eps, A, ks=None):
    """Max over slices of the relative formula/oracle difference."""
    ks = range(len(boxes.data.slices)) if ks is None else ks
    return max(boxes.compare(eps, A, k)[2] for k in ks)


# --- s = sqrt(t) gauge ------------------------------------------------------------


def _forward_weights(order, npts):
    """One-sided finite-difference weights at node 0 for unit spacing."""
    x = np.arange(npts, dtype=float)
    V = np.vander(x, npts, increasing=True).T
    rhs = np.zeros(npts)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def _fd_along(H, ds, order=1):
    """Fourth-order d/ds along axis 0: central inside, one-sided near the ends."""
    D = np.empty_like(H)
    wf = _forward_weights(order, 5)
    sign = -1.0 if order % 2 else 1.0
    for j in range(H.shape[0]):
        if 2 <= j < H.shape[0] - 2:
            D[j] = np.tensordot(_W1 if order == 1 else _W2, H[j - 2:j + 3], axes=(0, 0))
        elif j < 2:
            D[j] = np.tensordot(wf, H[j:j + 5], axes=(0, 0))
        else:
            D[j] = sign * np.tensordot(wf, H[j - 4:j + 1][::-1], axes=(0, 0))
    return D / ds**order


@dataclass
class SGauge:
    """Collar near the boundary in ``s = sqrt(t)``: ``(1 + eps s^4) g(s^2) + 4 A^2 u(s^2)^2 ds^2``."""

    s: np.ndarray
    g: np.ndarray
    u: np.ndarray
    eps: float
    A: float

    @property
    def q(self):
        return 1.0 + self.eps * self.s**4

    @property
    def h(self):
        return self.q[:, None, None, None] * self.g

    @property
    def gss(self):
        return 4.0 * self.A**2 * self.u**2

    def ds_h(self):
        return _fd_along(self.h, self.s[1] - self.s[0])

    def mean_curvature(self):
        """``H(s)`` per node: ``tr_h(d_s h) / (4 v_s)`` with ``v_s = 2 A u``."""
        tr, _ = trace_and_norm(self.h, self.ds_h())
        return tr / (8.0 * self.A * self.u)

    def boundary_derivatives(self, order=3):
        """Max ``|d^k/ds^k|`` at ``s = 0`` over every component, ``k = 1..order``."""
        ds = self.s[1] - self.s[0]
        res = []
        for k in range(1, order + 1):
            w = _forward_weights(k, k + 4) / ds**k
            m = max(float(np.max(np.abs(np.tensordot(w, self.h[: k + 4], axes=(0, 0))))),
                    float(np.max(np.abs(np.tensordot(w, self.gss[: k + 4], axes=(0, 0))))))
            res.append(m)
        return res


def sqrt_reparametrize(path: MetricPath, eps, A, s_max=0.2, n_s=11, points=None, jac0=None):
    """Sample the s-gauge collar on a uniform ``s in [0, s_max]``, boundary included."""
    if s_max**2 > 0.25:
        raise ValueError("the s gauge is used only for t <= 1/4")
    if points is None:
        points = path.grid.xyz().reshape(-1, 3)
        jac0 = grid_frames(path.grid)
    s = np.linspace(0.0, s_max, n_s)
    data = sample_slices(path, points, jac0, s**2)
    g = np.stack([data[float(t)][0] for t in s**2])
    u = np.stack([data[float(t)][2] for t in s**2])
    return SGauge(s=s, g=g, u=u, eps=eps, A=A)


# --- parameter search -------------------------------------------------------------


@dataclass
class SearchResult:
    eps: float
    A: float
    margin: float
    min_R: float
    min_H: float
    table: list


def parameter_search(data: CollarData, eps_values, A_values):
    """Sweep ``(eps, A)``; return the first pair (A ascending, eps descending) that is certified.

    A pair is certified when ``R > 0`` and ``H > 0`` on every slice. The
    bracket margin is reported but not required (it omits a nonnegative term).
    """
    if len(eps_values) == 0 or len(A_values) == 0:
        raise ValueError("empty search range")
    if min(eps_values) <= 0.0 or min(A_values) <= 0.0:
        raise ValueError("ranges must be positive")
    table = []
    found = None
    for A in sorted(A_values):
        for eps in sorted(eps_values, reverse=True):
            rep = CollarMetric(data, eps, A).report()
            row = dict(eps=eps, A=A, min_R=rep["min_R"], min_H=rep["min_H"],
                       margin=rep["bracket_margin"])
            table.append(row)
            if found is None and rep["min_R"] > 0.0 and rep["min_H"] > 0.0:
                found = row
    if found is None:
        raise SearchExhausted("no (eps, A) pair gives R > 0 and H > 0; enlarge the A range")
    return SearchResult(eps=found["eps"], A=found["A"], margin=found["margin"],
                        min_R=found["min_R"], min_H=found["min_H"], table=table)
