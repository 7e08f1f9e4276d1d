"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop.
Real spherical harmonics use the orthonormal convention without the
Condon-Shortley phase (see :mod:`degenhorizon.sphere`).
"""
import numpy as np

_INV_SQRT_4PI = 1.0 / np.sqrt(4.0 * np.pi)


def legendre_pq(x, s, L):
    """Normalized associated Legendre functions and their theta derivatives.

    Parameters
    ----------
    x, s : ndarray
        cos(theta) and sin(theta), same shape.
    L : int
        Maximum degree.

    Returns
    -------
    P, Q, D : ndarray, shape (L+1, L+1) + x.shape
        ``P[l, m]`` is the normalized function, ``Q[l, m] = P[l, m] / s`` for
        m >= 1 (computed without dividing, so finite at the poles) and
        ``D[l, m]`` is dP/dtheta.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    shape = (L + 1, L + 1) + x.shape
    P = np.zeros(shape)
    Q = np.zeros(shape)
    D = np.zeros(shape)
    pmm = np.full(x.shape, _INV_SQRT_4PI)
    for m in range(L + 1):
        if m > 0:
            c = np.sqrt((2.0 * m + 1.0) / (2.0 * m))
            Q[m, m] = c * pmm
            pmm = c * s * pmm
        P[m, m] = pmm
        if m < L:
            f = np.sqrt(2.0 * m + 3.0)
            P[m + 1, m] = f * x * P[m, m]
            Q[m + 1, m] = f * x * Q[m, m]
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
            Q[l, m] = a * (x * Q[l - 1, m] - b * Q[l - 2, m])
    for l in range(1, L + 1):
        D[l, 0] = -np.sqrt(l * (l + 1.0)) * P[l, 1]
    for m in range(1, L + 1):
        for l in range(m, L + 1):
            D[l, m] = l * x * Q[l, m]
            if l > m:
                D[l, m] -= np.sqrt((2.0 * l + 1.0) * (l * l - m * m) / (2.0 * l - 1.0)) * Q[l - 1, m]
    return P, Q, D


def eval_sh_points(ccos, csin, theta, phi, grad=True, chunk=2048, mmax=None):
    """Evaluate real harmonic series (and gradients) at arbitrary points.

    ``ccos[f, l, m]`` and ``csin[f, l, m]`` multiply ``P[l, m] cos(m phi)`` and
    ``P[l, m] sin(m phi)``. Returns ``(val, dtheta, dphi_over_sin)`` each of
    shape (nfields, npts); the gradient arrays are None when ``grad`` is false.
    Orders above ``mmax`` are skipped.
    """
    ccos = np.ascontiguousarray(ccos, dtype=float)
    csin = np.ascontiguousarray(csin, dtype=float)
    theta = np.ravel(np.asarray(theta, dtype=float))
    phi = np.ravel(np.asarray(phi, dtype=float))
    nf, L1, _ = ccos.shape
    L = L1 - 1
    M = L if mmax is None else min(int(mmax), L)
    ccos = ccos[:, :, : M + 1]
    csin = csin[:, :, : M + 1]
    n = theta.size
    val = np.zeros((nf, n))
    gth = np.zeros((nf, n)) if grad else None
    gph = np.zeros((nf, n)) if grad else None
    mm = np.arange(M + 1)[:, None]
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        th = theta[sl]
        P, Q, D = legendre_pq(np.cos(th), np.sin(th), L)
        P, Q, D = P[:, : M + 1], Q[:, : M + 1], D[:, : M + 1]
        cm = np.cos(mm * phi[sl])
        sm = np.sin(mm * phi[sl])
        val[:, sl] = np.einsum("flm,lmn,mn->fn", ccos, P, cm) + np.einsum("flm,lmn,mn->fn", csin, P, sm)
        if grad:
            gth[:, sl] = np.einsum("flm,lmn,mn->fn", ccos, D, cm) + np.einsum("flm,lmn,mn->fn", csin, D, sm)
            gph[:, sl] = np.einsum("flm,lmn,mn->fn", csin, Q, mm * cm) - np.einsum("flm,lmn,mn->fn", ccos, Q, mm * sm)
    return val, gth, gph


def ricci_scalar_from_jets(g, dg, ddg):
    """Scalar curvature of an n-metric from its first two derivatives.

    Parameters
    ----------
    g : ndarray (N, n, n)
    dg : ndarray (N, n, n, n)
        ``dg[p, e, a, b]`` is the partial derivative along coordinate e of g_ab.
    ddg : ndarray (N, n, n, n, n)
        ``ddg[p, e, f, a, b]`` is the second partial along e, f of g_ab.
    """
    gi = np.linalg.inv(g)
    # first-kind symbols G[c, a, b] = 1/2 (d_a g_bc + d_b g_ac - d_c g_ab)
    G1 = 0.5 * (np.einsum("pabc->pcab", dg) + np.einsum("pbac->pcab", dg) - dg)
    Gam = np.einsum("pdc,pcab->pdab", gi, G1)
    dG1 = 0.5 * (np.einsum("peabc->pecab", ddg) + np.einsum("pebac->pecab", ddg) - ddg)
    dgi = -np.einsum("pdf,pefh,phc->pedc", gi, dg, gi)
    dGam = np.einsum("pedc,pcab->pedab", dgi, G1) + np.einsum("pdc,pecab->pedab", gi, dG1)
    ric = (
        np.einsum("pddab->pab", dGam)
        - np.einsum("pbdad->pab", dGam)
        + np.einsum("pdde,peab->pab", Gam, Gam)
        - np.einsum("pdbe,pead->pab", Gam, Gam)
    )
    return np.einsum("pab,pab->p", gi, ric)
