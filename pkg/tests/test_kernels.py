import json
import os
import subprocess
import sys

import numpy as np
import pytest

from degenhorizon import _kernels_py, kernels


def _random_jets(rng, n=50, dim=3):
    B = rng.standard_normal((n, dim, dim))
    g = np.einsum("pij,pkj->pik", B, B) + dim * np.eye(dim)
    dg = rng.standard_normal((n, dim, dim, dim))
    dg = 0.5 * (dg + np.swapaxes(dg, 2, 3))
    ddg = rng.standard_normal((n, dim, dim, dim, dim))
    ddg = 0.5 * (ddg + np.swapaxes(ddg, 1, 2))
    ddg = 0.5 * (ddg + np.swapaxes(ddg, 3, 4))
    return g, dg, ddg


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_sh_backends_agree():
    rng = np.random.default_rng(1)
    L = 14
    ccos = rng.standard_normal((2, L + 1, L + 1))
    csin = rng.standard_normal((2, L + 1, L + 1))
    for l in range(L + 1):
        ccos[:, l, l + 1:] = 0.0
        csin[:, l, l + 1:] = 0.0
    csin[:, :, 0] = 0.0
    th = rng.uniform(0, np.pi, 300)
    ph = rng.uniform(0, 2 * np.pi, 300)
    a = kernels.eval_sh_points(ccos, csin, th, ph)
    b = _kernels_py.eval_sh_points(ccos, csin, th, ph)
    for x, y in zip(a, b):
        assert np.max(np.abs(x - y)) < 1e-11 * max(1.0, np.abs(y).max())


def test_ricci_backends_agree():
    g, dg, ddg = _random_jets(np.random.default_rng(2))
    a = kernels.ricci_scalar_from_jets(g, dg, ddg)
    b = _kernels_py.ricci_scalar_from_jets(g, dg, ddg)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_ricci_flat_metric_with_constant_jets_is_zero():
    g = np.tile(np.diag([1.0, 2.0, 3.0]), (4, 1, 1))
    R = kernels.ricci_scalar_from_jets(g, np.zeros((4, 3, 3, 3)), np.zeros((4, 3, 3, 3, 3)))
    assert np.all(R == 0.0)


def test_ricci_round_sphere_in_stereographic_chart():
    # g = 4 / (1 + r^2)^2 delta at z = 0: second derivatives -16 delta_ef delta_ab, R = 2
    g = 4.0 * np.eye(2)[None]
    ddg = np.zeros((1, 2, 2, 2, 2))
    for e in range(2):
        ddg[0, e, e] = -16.0 * np.eye(2)
    R = kernels.ricci_scalar_from_jets(g, np.zeros((1, 2, 2, 2)), ddg)
    assert abs(R[0] - 2.0) < 1e-14


def test_env_var_forces_fallback():
    code = "import json; from degenhorizon import kernels; print(json.dumps(kernels.BACKEND))"
    env = dict(os.environ, DEGENHORIZON_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert json.loads(out.stdout) == "python"


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
def test_fallback_matches_compiled_end_to_end():
    code = (
        "import numpy as np; from degenhorizon.sphere import GridSpec, get_grid;"
        "from degenhorizon.conformal import ConformalMetric, first_eigenpair;"
        "g = get_grid(GridSpec(band=10)); w = g.zeros(); w.coeffs[6] = 0.3;"
        "print(repr(first_eigenpair(ConformalMetric(w)).lambda1))"
    )
    res = []
    for flag in ("0", "1"):
        env = dict(os.environ, DEGENHORIZON_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        res.append(float(out.stdout))
    assert abs(res[0] - res[1]) < 1e-12
