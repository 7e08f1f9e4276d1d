import numpy as np
import pytest

from degenhorizon.sphere import GridSpec, ScalarField, get_grid


@pytest.fixture(scope="session")
def grid16():
    return get_grid(GridSpec(band=16))


@pytest.fixture(scope="session")
def grid32():
    return get_grid(GridSpec(band=32))


def random_field(grid, rng, lmax=None, decay=1.0, scale=1.0):
    """Band-limited field with coefficients decaying like (1 + l)^-decay."""
    lmax = grid.L if lmax is None else lmax
    c = np.zeros(grid.spec.n_coeffs)
    ell = grid.ell
    keep = ell <= lmax
    c[keep] = rng.standard_normal(keep.sum()) / (1.0 + ell[keep]) ** decay
    return ScalarField.from_coeffs(grid, scale * c)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> list of (label, passed, detail), printed after the run."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        parts = log[n]
        ok = all(p for _, p, _ in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}")
        for label, p, detail in parts:
            terminalreporter.write_line(f"    [{'ok' if p else 'FAIL'}] {label}: {detail}")
