"""Round-sphere discretization and spherical-harmonic machinery.

Conventions, fixed once for the whole package:

* colatitude ``theta`` in (0, pi), longitude ``phi`` in [0, 2 pi);
* the round metric ``g_*`` is the unit sphere metric (area 4 pi);
* real orthonormal harmonics without the Condon-Shortley phase::

      Y_{l,0}  = P_l^0(cos theta)
      Y_{l,m}  = sqrt(2) P_l^m(cos theta) cos(m phi)     (m > 0)
      Y_{l,-m} = sqrt(2) P_l^m(cos theta) sin(m phi)     (m > 0)

  with ``P_l^m`` normalized so that every ``Y_{l,m}`` has unit L2 norm.
  Coefficients are stored flat at index ``l*l + l + m``.

The quadrature grid is Gauss-Legendre in cos(theta) times a uniform
longitude grid; the exact poles are never nodes.
"""
from __future__ import annotations

import csv
import functools
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NonZeroMean

SQRT2 = np.sqrt(2.0)


def lm_index(l, m):
    return l * l + l + m


def degrees(L):
    """Degree ``l`` of every flat coefficient slot up to band ``L``."""
    return np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])


@dataclass(frozen=True)
class GridSpec:
    """Discretization parameters.

    ``n_lat`` Gauss-Legendre colatitudes, ``n_lon`` equispaced longitudes,
    ``band`` the largest harmonic degree kept.
    """

    band: int = 32
    n_lat: int | None = None
    n_lon: int | None = None

    def __post_init__(self):
        if self.n_lat is None:
            object.__setattr__(self, "n_lat", 2 * self.band + 2)
        if self.n_lon is None:
            object.__setattr__(self, "n_lon", 2 * self.n_lat)
        if self.n_lat < self.band + 1:
            raise ValueError("n_lat must be at least band + 1")
        if self.n_lon < 2 * self.band + 1:
            raise ValueError("n_lon must be at least 2 band + 1")

    @property
    def n_coeffs(self):
        return (self.band + 1) ** 2


class SphereGrid:
    """Nodes, weights and Legendre tables for a :class:`GridSpec`.

    Use :func:`get_grid` to obtain shared instances.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        L = spec.band
        self.L = L
        x, wx = np.polynomial.legendre.leggauss(spec.n_lat)
        # north to south
        x = x[::-1]
        wx = wx[::-1]
        self.cos_theta = x
        self.sin_theta = np.sqrt(1.0 - x * x)
        self.theta = np.arccos(x)
        self.phi = 2.0 * np.pi * np.arange(spec.n_lon) / spec.n_lon
        self.dphi = 2.0 * np.pi / spec.n_lon
        self.lat_weights = wx
        self.weights = np.outer(wx, np.full(spec.n_lon, self.dphi))
        self.P, self.Q, self.D = kernels.legendre_pq(x, self.sin_theta, L)
        m = np.arange(L + 1)
        self.cos_mphi = np.cos(np.outer(m, self.phi))
        self.sin_mphi = np.sin(np.outer(m, self.phi))
        self.ell = degrees(L)
        self._ymat = None

    @property
    def shape(self):
        return (self.spec.n_lat, self.spec.n_lon)

    @property
    def n_points(self):
        return self.spec.n_lat * self.spec.n_lon

    def mesh(self):
        """(theta, phi) arrays of shape (n_lat, n_lon)."""
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    def xyz(self):
        th, ph = self.mesh()
        return angles_to_xyz(th, ph)

    def zeros(self):
        return ScalarField.from_values(self, np.zeros(self.shape))

    def from_function(self, func):
        """Sample ``func(x, y, z)`` on the nodes."""
        X = self.xyz()
        return ScalarField.from_values(self, func(X[..., 0], X[..., 1], X[..., 2]))

    def basis_matrix(self):
        """Dense (n_points, n_coeffs) matrix of every basis function at every node."""
        if self._ymat is None:
            L = self.L
            Y = np.empty((self.spec.n_lat, self.spec.n_lon, self.spec.n_coeffs))
            for l in range(L + 1):
                Y[:, :, lm_index(l, 0)] = self.P[l, 0][:, None]
                for m in range(1, l + 1):
                    Y[:, :, lm_index(l, m)] = SQRT2 * self.P[l, m][:, None] * self.cos_mphi[m][None, :]
                    Y[:, :, lm_index(l, -m)] = SQRT2 * self.P[l, m][:, None] * self.sin_mphi[m][None, :]
            self._ymat = Y.reshape(self.n_points, -1)
        return self._ymat

    # --- transforms -------------------------------------------------------

    def synthesize(self, coeffs):
        ccos, csin = split_coeffs(coeffs, self.L)
        A = np.einsum("lm,lmi->mi", ccos, self.P)
        B = np.einsum("lm,lmi->mi", csin, self.P)
        return A.T @ self.cos_mphi + B.T @ self.sin_mphi

    def analyze(self, values):
        values = np.asarray(values, dtype=float)
        a = (values @ self.cos_mphi.T) * self.dphi
        b = (values @ self.sin_mphi.T) * self.dphi
        wa = a * self.lat_weights[:, None]
        wb = b * self.lat_weights[:, None]
        ccos = np.einsum("lmi,im->lm", self.P, wa)
        csin = np.einsum("lmi,im->lm", self.P, wb)
        return merge_coeffs(ccos, csin, self.L)

    def gradient_values(self, coeffs):
        """Frame components (d_theta f, d_phi f / sin theta) on the nodes."""
        L = self.L
        ccos, csin = split_coeffs(coeffs, L)
        m = np.arange(L + 1)[:, None]
        Ad = np.einsum("lm,lmi->mi", ccos, self.D)
        Bd = np.einsum("lm,lmi->mi", csin, self.D)
        Aq = np.einsum("lm,lmi->mi", ccos, self.Q) * m
        Bq = np.einsum("lm,lmi->mi", csin, self.Q) * m
        gth = Ad.T @ self.cos_mphi + Bd.T @ self.sin_mphi
        gph = Bq.T @ self.cos_mphi - Aq.T @ self.sin_mphi
        return gth, gph

    def integrate_values(self, values):
        return float(np.sum(self.weights * values))


@functools.lru_cache(maxsize=8)
def get_grid(spec: GridSpec = GridSpec()) -> SphereGrid:
    return SphereGrid(spec)


def split_coeffs(coeffs, L):
    """Flat real coefficients -> (cos, sin) tables indexed [l, m], m >= 0."""
    coeffs = np.asarray(coeffs, dtype=float)
    ccos = np.zeros((L + 1, L + 1))
    csin = np.zeros((L + 1, L + 1))
    for l in range(L + 1):
        base = l * l + l
        ccos[l, 0] = coeffs[base]
        ccos[l, 1 : l + 1] = SQRT2 * coeffs[base + 1 : base + l + 1]
        csin[l, 1 : l + 1] = SQRT2 * coeffs[base - 1 : base - l - 1 : -1] if l > 0 else 0.0
    return ccos, csin


def merge_coeffs(ccos, csin, L):
    out = np.zeros((L + 1) ** 2)
    for l in range(L + 1):
        base = l * l + l
        out[base] = ccos[l, 0]
        if l > 0:
            out[base + 1 : base + l + 1] = SQRT2 * ccos[l, 1 : l + 1]
            out[base - 1 : base - l - 1 : -1] = SQRT2 * csin[l, 1 : l + 1]
    return out


def angles_to_xyz(theta, phi):
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def xyz_to_angles(X):
    X = np.asarray(X, dtype=float)
    r = np.linalg.norm(X, axis=-1)
    theta = np.arccos(np.clip(X[..., 2] / r, -1.0, 1.0))
    phi = np.mod(np.arctan2(X[..., 1], X[..., 0]), 2.0 * np.pi)
    return theta, phi


def frame_vectors(theta, phi):
    """Ambient unit vectors e_theta, e_phi (shape (..., 3) each)."""
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    e_th = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_ph = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return e_th, e_ph


@dataclass
class HarmonicCoeffs:
    """Output of :func:`analyze`: flat coefficients plus aliasing diagnostics."""

    coeffs: np.ndarray
    band: int
    tail_energy: float = 0.0

    def __getitem__(self, lm):
        l, m = lm
        return self.coeffs[lm_index(l, m)]


@dataclass
class ScalarField:
    """Real function on the sphere held as grid samples and/or coefficients.

    Whichever representation is missing is computed on first access; the
    grid samples of a field built from coefficients are exact, while the
    coefficients of a field built from samples are the band-limited
    projection.
    """

    grid: SphereGrid
    _values: np.ndarray | None = field(default=None, repr=False)
    _coeffs: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_values(cls, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"expected grid shape {grid.shape}, got {values.shape}")
        return cls(grid, _values=values.copy())

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (grid.spec.n_coeffs,):
            raise ValueError("coefficient vector does not match the grid band")
        return cls(grid, _coeffs=coeffs.copy())

    @classmethod
    def harmonic(cls, grid, l, m, scale=1.0):
        c = np.zeros(grid.spec.n_coeffs)
        c[lm_index(l, m)] = scale
        return cls.from_coeffs(grid, c)

    @classmethod
    def constant(cls, grid, value):
        return cls.from_values(grid, np.full(grid.shape, float(value)))

    @property
    def values(self):
        if self._values is None:
            self._values = self.grid.synthesize(self._coeffs)
        return self._values

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = self.grid.analyze(self._values)
        return self._coeffs

    def is_band_limited(self, tol=1e-10):
        if self._values is None:
            return True
        back = self.grid.synthesize(self.coeffs)
        scale = max(1.0, np.max(np.abs(self._values)))
        return np.max(np.abs(back - self._values)) <= tol * scale

    def map(self, func):
        return ScalarField.from_values(self.grid, func(self.values))

    def __add__(self, other):
        if isinstance(other, ScalarField):
            if self._coeffs is not None and other._coeffs is not None and self._values is None:
                return ScalarField.from_coeffs(self.grid, self._coeffs + other._coeffs)
            return ScalarField.from_values(self.grid, self.values + other.values)
        return ScalarField.from_values(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField.from_values(self.grid, self.values * other.values)
        if self._values is None:
            return ScalarField.from_coeffs(self.grid, self._coeffs * other)
        return ScalarField.from_values(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return -1.0 * self

    def evaluate(self, theta, phi, grad=False):
        """Values (and frame gradient) of the band-limited field at arbitrary points."""
        val, gth, gph = evaluate_coeffs([self.coeffs], self.grid.L, theta, phi, grad=grad)
        if grad:
            return val[0], gth[0], gph[0]
        return val[0]

    # --- serialization -----------------------------------------------------

    def to_csv(self, path):
        v = self.values
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lat_index", "lon_index", "value"])
            for i in range(v.shape[0]):
                for j in range(v.shape[1]):
                    wr.writerow([i, j, repr(float(v[i, j]))])

    @classmethod
    def from_csv(cls, grid, path):
        v = np.zeros(grid.shape)
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            next(rd)
            for i, j, val in rd:
                v[int(i), int(j)] = float(val)
        return cls.from_values(grid, v)

    def to_bytes(self):
        """Little-endian dump: int32 n_lat, n_lon, band, then row-major float64 values."""
        s = self.grid.spec
        head = struct.pack("<3i", s.n_lat, s.n_lon, s.band)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data):
        n_lat, n_lon, band = struct.unpack("<3i", data[:12])
        grid = get_grid(GridSpec(band=band, n_lat=n_lat, n_lon=n_lon))
        vals = np.frombuffer(data[12:], dtype="<f8").reshape(n_lat, n_lon)
        return cls.from_values(grid, vals)

    def to_binary(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_binary(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class TangentField:
    """Tangent vector field in the orthonormal (e_theta, e_phi) frame at the nodes."""

    grid: SphereGrid
    e_theta: np.ndarray
    e_phi: np.ndarray

    def ambient(self):
        th, ph = self.grid.mesh()
        et, ep = frame_vectors(th, ph)
        return self.e_theta[..., None] * et + self.e_phi[..., None] * ep

    def norm_sq(self):
        return self.e_theta**2 + self.e_phi**2


def evaluate_coeffs(coeff_list, L, theta, phi, grad=True, trim=1e-15):
    """Evaluate several band-L fields at arbitrary points via the kernel backend.

    Degrees and orders whose coefficients all lie below ``trim`` times the
    largest one are dropped before evaluation (zonal fields cost O(L) per point).
    """
    tabs = [split_coeffs(c, L) for c in coeff_list]
    ccos = np.stack([t[0] for t in tabs])
    csin = np.stack([t[1] for t in tabs])
    lmax, mmax = L, L
    if trim:
        mag = np.max(np.maximum(np.abs(ccos), np.abs(csin)), axis=0)
        big = mag > trim * max(float(mag.max()), 1e-300)
        if big.any():
            ls, ms = np.nonzero(big)
            lmax, mmax = int(ls.max()), int(ms.max())
        else:
            lmax, mmax = 0, 0
        ccos = ccos[:, : lmax + 1, : lmax + 1]
        csin = csin[:, : lmax + 1, : lmax + 1]
    return kernels.eval_sh_points(ccos, csin, theta, phi, grad=grad, mmax=mmax)


def ambient_gradient(theta, phi, gth, gph):
    et, ep = frame_vectors(theta, phi)
    return gth[..., None] * et + gph[..., None] * ep


# --- operations -------------------------------------------------------------


def analyze(f: ScalarField) -> HarmonicCoeffs:
    g = f.grid
    c = f.coeffs
    total = g.integrate_values(f.values**2)
    tail = max(0.0, total - float(np.dot(c, c)))
    return HarmonicCoeffs(coeffs=c.copy(), band=g.L, tail_energy=tail)


def synthesize(grid, coeffs) -> ScalarField:
    return ScalarField.from_coeffs(grid, coeffs)


def laplacian_round(f: ScalarField) -> ScalarField:
    ell = f.grid.ell
    return ScalarField.from_coeffs(f.grid, -ell * (ell + 1.0) * f.coeffs)


def gradient_round(f: ScalarField) -> TangentField:
    gth, gph = f.grid.gradient_values(f.coeffs)
    return TangentField(f.grid, gth, gph)


def poisson_solve_round(f: ScalarField, tol=1e-9) -> ScalarField:
    """Zero-mean solution of Lap_* psi = f."""
    c = f.coeffs
    scale = float(np.max(np.abs(f.values)))
    if scale == 0.0:
        return f.grid.zeros()
    # scaled so the squares cannot underflow for tiny sources
    norm = scale * np.sqrt(max(f.grid.integrate_values((f.values / scale) ** 2), 0.0))
    mean_integral = c[0] * np.sqrt(4.0 * np.pi)
    if abs(mean_integral) > tol * max(norm, 1e-300) and abs(mean_integral) > 1e-300:
        raise NonZeroMean(f"source integrates to {mean_integral:.3e} (norm {norm:.3e})")
    ell = f.grid.ell
    out = np.zeros_like(c)
    nz = ell > 0
    out[nz] = -c[nz] / (ell[nz] * (ell[nz] + 1.0))
    return ScalarField.from_coeffs(f.grid, out)


def transfer(f: ScalarField, grid: SphereGrid) -> ScalarField:
    """Re-express ``f`` on another grid by truncating or zero-padding its coefficients."""
    n = grid.spec.n_coeffs
    c = np.zeros(n)
    k = min(n, f.coeffs.size)
    c[:k] = f.coeffs[:k]
    return ScalarField.from_coeffs(grid, c)


def integrate(f: ScalarField, weight: ScalarField | None = None) -> float:
    v = f.values if weight is None else f.values * weight.values
    return f.grid.integrate_values(v)
