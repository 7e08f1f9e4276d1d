"""Construction of a conformal metric whose stability operator has ``lambda_1 = 0``.

Along the ray ``g_t = exp(2 t A w) g_*`` the first eigenvalue starts at 1.
For ``A`` large enough an explicit test function, supported in a small chart
around a point where ``Lap_* w > 0``, has negative Rayleigh quotient at
``t = 1``, and the root in between is located by bracketing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .conformal import ConformalMetric, first_eigenpair, smallest_form_eigenvalue
from .errors import (
    EigensolverFailure,
    MaxDepthExceeded,
    NoPositivePoint,
    NoSignChange,
    SearchExhausted,
)
from .sphere import ScalarField, angles_to_xyz, evaluate_coeffs, lm_index, xyz_to_angles


def default_w(grid) -> ScalarField:
    """``Y_{2,0}`` scaled to unit sup norm, i.e. ``(3 z^2 - 1) / 2``."""
    return ScalarField.harmonic(grid, 2, 0, 1.0 / np.sqrt(5.0 / (4.0 * np.pi)))


def parse_w_spec(spec, grid) -> ScalarField:
    """Build ``w`` from a short text spec.

    ``default``
        the default field;
    ``Y:l,m[:scale]`` terms joined by ``+``
        sums of real harmonics;
    ``file:<path>``
        a ScalarField dump (``.csv`` or binary).
    """
    spec = spec.strip()
    if spec in ("", "default"):
        return default_w(grid)
    if spec.startswith("file:"):
        path = spec[5:]
        if path.endswith(".csv"):
            return ScalarField.from_csv(grid, path)
        return ScalarField.from_binary(path)
    c = np.zeros(grid.spec.n_coeffs)
    for term in spec.split("+"):
        parts = term.strip().split(":")
        if parts[0] != "Y" or len(parts) not in (2, 3):
            raise ValueError(f"cannot parse w term {term!r}")
        l, m = (int(x) for x in parts[1].split(","))
        if not (0 <= l <= grid.L and abs(m) <= l):
            raise ValueError(f"harmonic ({l}, {m}) outside band {grid.L}")
        c[lm_index(l, m)] += float(parts[2]) if len(parts) == 3 else 1.0
    return ScalarField.from_coeffs(grid, c)


# --- the positive-Laplacian point --------------------------------------------------


@dataclass
class PositivePoint:
    p: np.ndarray
    peak: float
    c: float
    radius: float


def _lap_coeffs(w):
    ell = w.grid.ell
    return -ell * (ell + 1.0) * w.coeffs


def find_positive_laplacian_point(w: ScalarField) -> PositivePoint:
    """Maximum of ``Lap_* w`` and the geodesic radius within which it stays ``>= peak / 2``.

    The grid argmax is refined by a local optimization of the band-limited
    Laplacian.
    """
    grid = w.grid
    lc = _lap_coeffs(w)
    lap = grid.synthesize(lc)
    scale = float(np.max(np.abs(lap)))
    if not scale > 1e-12 * max(1.0, float(np.max(np.abs(w.values)))):
        raise NoPositivePoint("w is constant")
    i, j = np.unravel_index(np.argmax(lap), lap.shape)

    def neg(x):
        return -float(evaluate_coeffs([lc], grid.L, np.array([x[0]]), np.array([x[1]]), grad=False)[0][0, 0])

    res = minimize(neg, [grid.theta[i], grid.phi[j]], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    th, ph = (res.x if -res.fun >= lap[i, j] else (grid.theta[i], grid.phi[j]))
    peak = max(-float(res.fun), float(lap[i, j]))
    p = angles_to_xyz(np.float64(th), np.float64(ph))
    c = 0.5 * peak
    return PositivePoint(p=p, peak=peak, c=c, radius=_level_radius(lc, grid.L, p, c))


def _level_radius(lc, L, p, c, n_dir=128, n_r=2000):
    """Largest geodesic radius around ``p`` on which the field with coefficients ``lc`` stays ``>= c``.

    Scanned along ``n_dir`` geodesics with ``n_r`` samples each on ``(0, pi]``;
    the returned radius stops one sample short of the first crossing.
    """
    e1, e2 = tangent_basis(p)
    r = np.linspace(0.0, np.pi, n_r + 1)[1:]
    ang = 2.0 * np.pi * np.arange(n_dir) / n_dir
    d = np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2
    X = np.cos(r)[None, :, None] * p + np.sin(r)[None, :, None] * d[:, None, :]
    th, ph = xyz_to_angles(X.reshape(-1, 3))
    vals = evaluate_coeffs([lc], L, th, ph, grad=False)[0][0].reshape(n_dir, n_r)
    low = vals < c
    if not low.any():
        return float(np.pi)
    first = np.where(low.any(axis=1), np.argmax(low, axis=1), n_r)
    k = int(first.min())
    return float(r[k - 1]) if k > 0 else 0.0


# --- the slice certificate ------------------------------------------------------------


def tangent_basis(p):
    p = np.asarray(p, dtype=float)
    a = np.array([1.0, 0.0, 0.0]) if abs(p[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ p) * p
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(p, e1)


def chart_points(p, z1, z2):
    """Inverse stereographic chart centred at ``p``: ``z = 0`` maps to ``p``."""
    e1, e2 = tangent_basis(p)
    r2 = z1 * z1 + z2 * z2
    X = ((1.0 - r2)[..., None] * p + 2.0 * z1[..., None] * e1 + 2.0 * z2[..., None] * e2)
    return X / (1.0 + r2)[..., None]


@dataclass
class SliceCertificate:
    """Test function ``v = (1 - |x|)^2`` on the unit disk of a shrunk chart at ``p``.

    Chart coordinates ``x`` relate to the stereographic coordinate ``z`` by
    ``z = rho x`` with ``rho = 2^{-(N-1)}``; ``v`` vanishes outside ``|x| < 1``.
    Integrals use Gauss-Legendre in ``r`` and a uniform rule in angle.
    """

    p: np.ndarray
    level: int
    c: float
    w: ScalarField
    n_r: int = 64
    n_ang: int = 128
    annulus: tuple = (2.0 / 3.0, 1.0)
    annulus_min_lap: float = float("nan")
    min_lap_w: float = float("nan")
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def rho(self):
        return 2.0 ** (-(self.level - 1))

    def conformal_factor_sq(self, r):
        """``Omega^2``: the round metric is ``Omega^2 |dx|^2`` in chart coordinates."""
        rho = self.rho
        return 4.0 * rho * rho / (1.0 + rho * rho * r * r) ** 2

    @staticmethod
    def v(r):
        return np.where(r < 1.0, (1.0 - np.minimum(r, 1.0)) ** 2, 0.0)

    def lap_round_v(self, r):
        """``Lap_* v = Omega^{-2} (4 - 2 / r)`` inside the disk."""
        return (4.0 - 2.0 / r) / self.conformal_factor_sq(r)

    def nodes(self):
        """Radii, weights (of ``dx``) and sphere points of the polar rule."""
        if "nodes" not in self._cache:
            xr, wr = np.polynomial.legendre.leggauss(self.n_r)
            r = 0.5 * (xr + 1.0)
            wr = 0.5 * wr
            ang = 2.0 * np.pi * np.arange(self.n_ang) / self.n_ang
            R, T = np.meshgrid(r, ang, indexing="ij")
            wq = (wr * r)[:, None] * np.full(self.n_ang, 2.0 * np.pi / self.n_ang)[None, :]
            X = chart_points(self.p, self.rho * R * np.cos(T), self.rho * R * np.sin(T))
            self._cache["nodes"] = (R.ravel(), wq.ravel(), X.reshape(-1, 3))
        return self._cache["nodes"]

    def field_values(self, f: ScalarField):
        """``f`` and ``Lap_* f`` at the quadrature points."""
        _, _, X = self.nodes()
        th, ph = xyz_to_angles(X)
        val, _, _ = evaluate_coeffs([f.coeffs, _lap_coeffs(f)], f.grid.L, th, ph, grad=False)
        return val[0], val[1]

    def dirichlet_energy(self):
        """``int |grad v|^2``, a conformal invariant (exactly ``2 pi / 3``)."""
        r, q, _ = self.nodes()
        return float(np.sum(q * 4.0 * (1.0 - r) ** 2))

    def mass(self, g: ConformalMetric):
        """``int v^2 dA_g`` for ``g = e^{2 f} g_*``."""
        r, q, _ = self.nodes()
        f, _ = self.field_values(g.w)
        return float(np.sum(q * self.conformal_factor_sq(r) * np.exp(2.0 * f) * self.v(r) ** 2))

    def quadratic_form(self, g: ConformalMetric, zeta=1.0):
        """``int |grad v|^2 + (1 - zeta Lap_* f) v^2 dA_*`` for ``g = e^{2 f} g_*``."""
        r, q, _ = self.nodes()
        _, lapf = self.field_values(g.w)
        pot = (1.0 - zeta * lapf) * self.v(r) ** 2 * self.conformal_factor_sq(r)
        return self.dirichlet_energy() + float(np.sum(q * pot))

    def rayleigh(self, g: ConformalMetric):
        return self.quadratic_form(g) / self.mass(g)

    def annulus_laplacian(self, n=48, h=1e-4):
        """Five-point ``Lap_* v`` on a polar sample of the annulus."""
        r = np.linspace(self.annulus[0], self.annulus[1], n, endpoint=False)
        ang = 2.0 * np.pi * np.arange(n) / n
        R, T = np.meshgrid(r, ang, indexing="ij")
        x, y = R * np.cos(T), R * np.sin(T)

        def v(a, b):
            return self.v(np.hypot(a, b))

        flat = (v(x + h, y) + v(x - h, y) + v(x, y + h) + v(x, y - h) - 4.0 * v(x, y)) / (h * h)
        return flat / self.conformal_factor_sq(R)

    def to_dict(self):
        return {
            "center": [float(x) for x in self.p],
            "level": self.level,
            "chart_scale": self.rho,
            "c": self.c,
            "annulus": list(self.annulus),
            "annulus_min_laplacian": self.annulus_min_lap,
            "min_laplacian_w_on_support": self.min_lap_w,
            "dirichlet_energy": self.dirichlet_energy(),
        }


def build_certificate(w: ScalarField, p, c, radius=None, max_level=20, **quad) -> SliceCertificate:
    """First dyadic level whose chart disk lies where ``Lap_* w >= c`` with ``Lap_* v > 0`` on the annulus."""
    for N in range(1, max_level + 1):
        cert = SliceCertificate(p=np.asarray(p, dtype=float), level=N, c=float(c), w=w, **quad)
        if radius is not None and 2.0 * np.arctan(cert.rho) > radius:
            continue
        _, lapw = cert.field_values(w)
        cert.min_lap_w = float(np.min(lapw))
        if cert.min_lap_w < c:
            continue
        cert.annulus_min_lap = float(np.min(cert.annulus_laplacian()))
        if cert.annulus_min_lap > 0.0:
            return cert
    raise MaxDepthExceeded(f"no admissible chart level up to {max_level}")


def threshold_A(cert: SliceCertificate, c, n=4001):
    """``(1/c) [1 + sup v Lap_* v / inf v^2]`` over ``|x| <= 2/3``, by a radial scan."""
    r = np.linspace(1e-6, cert.annulus[0], n)
    vlap = cert.v(r) * cert.lap_round_v(r)
    inf_v2 = float(np.min(cert.v(r) ** 2))
    return (1.0 + float(np.max(vlap)) / inf_v2) / c


def choose_A(cert: SliceCertificate, c, w=None, max_doublings=20):
    """``1.1`` times the threshold, doubled until the certificate's Rayleigh quotient at t = 1 is negative.

    Returns ``(A, rayleigh_value, doublings)``.
    """
    w = cert.w if w is None else w
    A = 1.1 * threshold_A(cert, c)
    for k in range(max_doublings + 1):
        rq = cert.rayleigh(ConformalMetric(A * w))
        if rq < 0.0:
            return A, rq, k
        A *= 2.0
    raise SearchExhausted("Rayleigh quotient stayed non-negative")


# --- the ray and its root ------------------------------------------------------------


@dataclass
class ConformalRay:
    w: ScalarField
    A: float

    def __post_init__(self):
        v = self.w.values
        mean = self.w.grid.integrate_values(v) / (4.0 * np.pi)
        if not np.sqrt(self.w.grid.integrate_values((v - mean) ** 2)) > 0.0:
            raise NoPositivePoint("w is constant")

    def metric(self, t) -> ConformalMetric:
        return ConformalMetric(ScalarField.from_coeffs(self.w.grid, float(t) * self.A * self.w.coeffs))

    def spread(self, t):
        v = self.w.values
        return float(t) * self.A * float(v.max() - v.min())


@dataclass
class Probe:
    t: float
    lambda1: float
    form_min: float
    sign: int


def probe(ray: ConformalRay, t, max_spread=30.0) -> Probe:
    """Eigenvalue at ``t``; only the sign (from the stability form) when ``e^{2tAw}`` is too spread out."""
    g = ray.metric(t)
    form = smallest_form_eigenvalue(g)
    lam = float("nan")
    if ray.spread(t) <= max_spread:
        try:
            lam = first_eigenpair(g).lambda1
        except EigensolverFailure:
            pass
    s = lam if np.isfinite(lam) else form
    return Probe(float(t), lam, form, int(np.sign(s)))


@dataclass
class DegenerateResult:
    ray: ConformalRay
    t0: float
    lambda1: float
    residual: float
    certificate: SliceCertificate
    rayleigh_t1: float
    lambda1_t0: float
    curve: list
    history: list
    doublings: int

    @property
    def w0(self) -> ScalarField:
        """Conformal factor of the degenerate metric."""
        return ScalarField.from_coeffs(self.ray.w.grid, self.t0 * self.ray.A * self.ray.w.coeffs)

    def to_dict(self):
        return {
            "A": self.ray.A,
            "t0": self.t0,
            "lambda1": self.lambda1,
            "residual": self.residual,
            "lambda1_at_0": self.lambda1_t0,
            "rayleigh_at_1": self.rayleigh_t1,
            "A_doublings": self.doublings,
            "certificate": self.certificate.to_dict(),
            "bracket_history": [[a, b] for a, b in self.history],
            "curve": [{"t": p.t, "lambda1": p.lambda1 if np.isfinite(p.lambda1) else None,
                       "form_min": p.form_min} for p in self.curve],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def eigenvalue_curve_and_root(ray: ConformalRay, n_coarse=33, tol=1e-7, max_iter=200):
    """Coarse sign scan on ``[0, 1]``, then bracketing on the first sign change.

    Bisection runs until the bracket lies where the eigensolver is trusted,
    then Illinois false position finishes to ``|lambda_1| <= tol``. Brackets
    nest strictly and keep opposite signs at their ends.

    Returns ``(curve, t0, pair, history)``.
    """
    ts = np.linspace(0.0, 1.0, n_coarse)
    curve = [probe(ray, t) for t in ts]
    if curve[0].sign <= 0 or curve[-1].sign >= 0:
        raise NoSignChange(f"lambda_1 signs at the ends: {curve[0].sign}, {curve[-1].sign}")
    k = next(i for i in range(1, len(curve)) if curve[i].sign < 0)
    lo, hi = curve[k - 1], curve[k]
    history = [(lo.t, hi.t)]
    it = 0
    while not (np.isfinite(lo.lambda1) and np.isfinite(hi.lambda1)) or hi.t - lo.t > 1e-3 * max(lo.t, 1e-3):
        mid = probe(ray, 0.5 * (lo.t + hi.t))
        if mid.sign == 0:
            lo = hi = mid
            break
        if mid.sign > 0:
            lo = mid
        else:
            hi = mid
        history.append((lo.t, hi.t))
        it += 1
        if it > max_iter:
            raise SearchExhausted("bisection did not reach the trusted range")
    fl, fh = lo.lambda1, hi.lambda1
    tl, th = lo.t, hi.t
    side = 0
    pair = None
    for _ in range(max_iter):
        if tl == th:
            t = tl
        else:
            t = th - fh * (th - tl) / (fh - fl)
            if not tl < t < th:
                t = 0.5 * (tl + th)
        pair = first_eigenpair(ray.metric(t))
        f = pair.lambda1
        if abs(f) <= tol or tl == th:
            return curve, float(t), pair, history
        if f > 0:
            tl, fl = t, f
            if side == 1:
                fh *= 0.5
            side = 1
        else:
            th, fh = t, f
            if side == -1:
                fl *= 0.5
            side = -1
        history.append((tl, th))
    raise SearchExhausted("root not reached")


def find_degenerate(w: ScalarField, tol=1e-7) -> DegenerateResult:
    """Full construction: point, certificate, ``A``, and the root ``t_0``."""
    pt = find_positive_laplacian_point(w)
    cert = build_certificate(w, pt.p, pt.c, radius=pt.radius)
    A, rq, doublings = choose_A(cert, pt.c, w)
    ray = ConformalRay(w, A)
    curve, t0, pair, history = eigenvalue_curve_and_root(ray, tol=tol)
    lam0 = first_eigenpair(ray.metric(0.0)).lambda1
    return DegenerateResult(ray=ray, t0=t0, lambda1=pair.lambda1, residual=pair.residual,
                            certificate=cert, rayleigh_t1=rq, lambda1_t0=lam0, curve=curve,
                            history=history, doublings=doublings)
