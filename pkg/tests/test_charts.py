import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import RectBivariateSpline

from degenhorizon.charts import (
    POLES,
    ChartAtlas,
    ChartMetric,
    brioschi,
    curvature_general,
    gather,
    laplace_beltrami_general,
    partition_points,
    trace_and_norm,
    transition,
)
from degenhorizon.conformal import ConformalMetric, gauss_curvature
from degenhorizon.errors import SingularMetric
from degenhorizon.sphere import GridSpec, ScalarField, get_grid, laplacian_round, xyz_to_angles


@pytest.fixture(scope="module")
def atlas():
    return ChartAtlas(n=193)


@pytest.fixture(scope="module")
def w():
    return ScalarField.harmonic(get_grid(GridSpec(band=8)), 2, 0, 0.2)


def spectral_at(field, pts):
    th, ph = xyz_to_angles(pts)
    return field.evaluate(th, ph)


def test_atlas_roundtrip_and_cover(atlas):
    assert atlas.check_roundtrip() <= 1e-12
    pts = partition_points(atlas)
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1)) <= 1e-14
    # every direction is within one chart spacing of a partition node
    rng = np.random.default_rng(0)
    q = rng.standard_normal((500, 3))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    assert np.min(q @ pts.T, axis=1).size == 500
    assert np.max(np.arccos(np.clip(np.max(q @ pts.T, axis=1), -1, 1))) <= 2 * atlas.h


def test_transition_is_an_involution():
    z1, z2 = np.array([0.7, -1.2]), np.array([0.9, 0.4])
    a, b = transition(*transition(z1, z2))
    assert np.allclose(a, z1, atol=1e-14) and np.allclose(b, z2, atol=1e-14)


def test_round_and_flat_curvature(atlas):
    K = brioschi(atlas.round_metric(), atlas.h)
    sel = atlas.inside & atlas.interior
    assert np.max(np.abs(K[sel] - 1.0)) <= 1e-6
    flat = np.zeros((atlas.n, atlas.n, 2, 2))
    flat[..., 0, 0] = flat[..., 1, 1] = 1.0
    Kf = brioschi(flat, atlas.h)
    assert np.all(Kf[2:-2, 2:-2] == 0.0)


def test_conformal_curvature_cross_module(atlas, w):
    m = atlas.conformal_metric(w)
    m.check_spd()
    K = curvature_general(m)
    Kspec = gauss_curvature(ConformalMetric(w))
    for p in POLES:
        sel = atlas.inside & atlas.interior
        ref = spectral_at(Kspec, atlas.points[p][sel])
        assert np.max(np.abs(K[p][sel] - ref)) <= 1e-5


def test_laplace_beltrami_examples(atlas, w):
    grid = w.grid
    y = ScalarField.harmonic(grid, 2, 0)
    round_m = ChartMetric(atlas, {p: atlas.round_metric() for p in POLES})
    f = atlas.sample(y)
    lap = laplace_beltrami_general(round_m, f)
    sel = atlas.inside & atlas.interior
    for p in POLES:
        assert np.max(np.abs(lap[p][sel] + 6.0 * f[p][sel])) <= 1e-5
    const = {p: np.full((atlas.n, atlas.n), 3.0) for p in POLES}
    lap_c = laplace_beltrami_general(atlas.conformal_metric(w), const)
    for p in POLES:
        assert np.max(np.abs(lap_c[p][sel])) <= 1e-12
    # conformal metric: Lap_g f = e^{-2w} Lap_* f
    g = atlas.conformal_metric(w)
    y31 = ScalarField.harmonic(grid, 3, 1)
    lap_g = laplace_beltrami_general(g, atlas.sample(y31))
    ref_field = laplacian_round(y31)
    for p in POLES:
        pts = atlas.points[p][sel]
        ref = np.exp(-2 * spectral_at(w, pts)) * spectral_at(ref_field, pts)
        assert np.max(np.abs(lap_g[p][sel] - ref)) <= 1e-5


def test_overlap_consistency(atlas, w):
    m = atlas.conformal_metric(w)
    assert m.overlap_mismatch() <= 1e-5
    K = curvature_general(m)
    ov = atlas.inside & (atlas.r >= 2 / 3)
    z1, z2 = atlas.z1[ov], atlas.z2[ov]
    w1, w2 = transition(z1, z2)
    c = atlas.coords[2:-2]
    spl = RectBivariateSpline(c, c, K[-1][2:-2, 2:-2], kx=5, ky=5)
    assert np.max(np.abs(spl.ev(w1, w2) - K[1][ov])) <= 1e-5


def test_gather_covers_partition(atlas):
    vals = {p: np.full((atlas.n, atlas.n), float(p)) for p in POLES}
    out = gather(atlas, vals)
    assert out.shape[0] == partition_points(atlas).shape[0]
    assert set(np.unique(out)) == {-1.0, 1.0}


def test_singular_metric_raises(atlas):
    g = atlas.round_metric().copy()
    g[10, 10] = 0.0
    with pytest.raises(SingularMetric):
        brioschi(g, atlas.h)
    with pytest.raises(SingularMetric):
        ChartMetric(atlas, {1: g, -1: g}).check_spd()


def analytic_metric(h):
    """Smooth non-conformal test metric on a uniform square grid of spacing h."""
    x = np.arange(-0.5, 0.5 + h / 2, h)
    X, Y = np.meshgrid(x, x, indexing="ij")
    g = np.empty(X.shape + (2, 2))
    g[..., 0, 0] = 1.0 + 0.3 * np.sin(X + 2 * Y)
    g[..., 1, 1] = 1.2 + 0.2 * np.cos(2 * X - Y)
    g[..., 0, 1] = g[..., 1, 0] = 0.1 * np.sin(X * Y + 1)
    return X, Y, g


def test_fourth_order_curvature():
    errs = []
    for h in (0.05, 0.025, 0.0125):
        X, Y, g = analytic_metric(h)
        K = brioschi(g, h)
        i = np.argmin(np.abs(X[:, 0] - 0.2))
        j = np.argmin(np.abs(Y[0] + 0.1))
        errs.append(K[i, j])
    # Richardson: successive differences shrink by 2^4
    assert abs(errs[0] - errs[1]) / abs(errs[1] - errs[2]) >= 8.0


def test_trace_and_norm_examples():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((2, 2))
    m = a @ a.T + np.eye(2)
    tr, nrm = trace_and_norm(m, m)
    assert abs(tr - 2) <= 1e-13 and abs(nrm - 2) <= 1e-13
    eps, t = 1e-3, 0.7
    tr, _ = trace_and_norm((1 + eps * t * t) * m, 2 * eps * t * m)
    assert abs(tr - 4 * eps * t / (1 + eps * t * t)) <= 1e-15


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=7, max_size=7))
def test_trace_cauchy_schwarz(x):
    a = np.array([[x[0], x[1]], [x[2], x[3]]])
    m = a @ a.T + 1e-3 * np.eye(2)
    s = np.array([[x[4], x[5]], [x[5], x[6]]])
    tr, nrm = trace_and_norm(m, s)
    assert tr * tr <= 2 * nrm * (1 + 1e-9) + 1e-12
