# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_kernels_py``.

Same signatures and conventions; see that module for the documentation.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin

cnp.import_array()

cdef double INV_SQRT_4PI = 0.28209479177387814


def eval_sh_points(ccos, csin, theta, phi, grad=True, chunk=None, mmax=None):
    cdef double[:, :, ::1] cc = np.ascontiguousarray(ccos, dtype=np.float64)
    cdef double[:, :, ::1] cs = np.ascontiguousarray(csin, dtype=np.float64)
    cdef double[::1] th = np.ascontiguousarray(np.ravel(theta), dtype=np.float64)
    cdef double[::1] ph = np.ascontiguousarray(np.ravel(phi), dtype=np.float64)
    cdef Py_ssize_t nf = cc.shape[0]
    cdef Py_ssize_t L = cc.shape[1] - 1
    cdef Py_ssize_t n = th.shape[0]
    cdef bint want_grad = bool(grad)
    cdef Py_ssize_t M = L if mmax is None else min(<Py_ssize_t>mmax, L)

    val_a = np.zeros((nf, n))
    gth_a = np.zeros((nf, n))
    gph_a = np.zeros((nf, n))
    cdef double[:, ::1] val = val_a
    cdef double[:, ::1] gth = gth_a
    cdef double[:, ::1] gph = gph_a

    # recurrence constants
    ra_a = np.zeros((L + 1, L + 1))
    rb_a = np.zeros((L + 1, L + 1))
    rd_a = np.zeros((L + 1, L + 1))
    cdef double[:, ::1] ra = ra_a
    cdef double[:, ::1] rb = rb_a
    cdef double[:, ::1] rd = rd_a
    cdef Py_ssize_t l, m, f, p
    for m in range(L + 1):
        for l in range(m + 2, L + 1):
            ra[l, m] = sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            rb[l, m] = sqrt(((l - 1.0) * (l - 1.0) - m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0))
        for l in range(m + 1, L + 1):
            rd[l, m] = sqrt((2.0 * l + 1.0) * (l * l - m * m) / (2.0 * l - 1.0))

    Pcol_a = np.zeros(L + 2)
    Qcol_a = np.zeros(L + 2)
    P1col_a = np.zeros(L + 2)
    acc_a = np.zeros((6, nf))
    cdef double[::1] Pcol = Pcol_a
    cdef double[::1] Qcol = Qcol_a
    cdef double[::1] P1col = P1col_a
    cdef double[:, ::1] acc = acc_a

    cdef double x, s, pmm, qmm, c, cm, sm, c1, s1, ctmp, dP, Pl, Ql, a0, b0
    for p in range(n):
        x = cos(th[p])
        s = sin(th[p])
        c1 = cos(ph[p])
        s1 = sin(ph[p])
        cm = 1.0
        sm = 0.0
        pmm = INV_SQRT_4PI
        qmm = 0.0
        # m = 1 column is needed for the m = 0 theta derivative
        P1col[0] = 0.0
        P1col[1] = sqrt(1.5) * s * INV_SQRT_4PI
        if L >= 2:
            P1col[2] = sqrt(5.0) * x * P1col[1]
        for l in range(3, L + 1):
            P1col[l] = ra[l, 1] * (x * P1col[l - 1] - rb[l, 1] * P1col[l - 2])
        for m in range(M + 1):
            if m > 0:
                c = sqrt((2.0 * m + 1.0) / (2.0 * m))
                qmm = c * pmm
                pmm = c * s * pmm
                ctmp = cm * c1 - sm * s1
                sm = sm * c1 + cm * s1
                cm = ctmp
            Pcol[m] = pmm
            Qcol[m] = qmm
            if m < L:
                Pcol[m + 1] = sqrt(2.0 * m + 3.0) * x * pmm
                Qcol[m + 1] = sqrt(2.0 * m + 3.0) * x * qmm
            for l in range(m + 2, L + 1):
                Pcol[l] = ra[l, m] * (x * Pcol[l - 1] - rb[l, m] * Pcol[l - 2])
                Qcol[l] = ra[l, m] * (x * Qcol[l - 1] - rb[l, m] * Qcol[l - 2])
            for f in range(nf):
                acc[0, f] = 0.0
                acc[1, f] = 0.0
                acc[2, f] = 0.0
                acc[3, f] = 0.0
                acc[4, f] = 0.0
                acc[5, f] = 0.0
            for l in range(m, L + 1):
                Pl = Pcol[l]
                if want_grad:
                    if m == 0:
                        dP = -sqrt(l * (l + 1.0)) * P1col[l]
                    else:
                        dP = l * x * Qcol[l]
                        if l > m:
                            dP = dP - rd[l, m] * Qcol[l - 1]
                    Ql = Qcol[l]
                for f in range(nf):
                    a0 = cc[f, l, m]
                    b0 = cs[f, l, m]
                    acc[0, f] += a0 * Pl
                    acc[1, f] += b0 * Pl
                    if want_grad:
                        acc[2, f] += a0 * dP
                        acc[3, f] += b0 * dP
                        acc[4, f] += a0 * Ql
                        acc[5, f] += b0 * Ql
            for f in range(nf):
                val[f, p] += acc[0, f] * cm + acc[1, f] * sm
                if want_grad:
                    gth[f, p] += acc[2, f] * cm + acc[3, f] * sm
                    gph[f, p] += m * (acc[5, f] * cm - acc[4, f] * sm)
    if want_grad:
        return val_a, gth_a, gph_a
    return val_a, None, None


def ricci_scalar_from_jets(g, dg, ddg):
    cdef double[:, :, ::1] G = np.ascontiguousarray(g, dtype=np.float64)
    cdef double[:, :, :, ::1] dG = np.ascontiguousarray(dg, dtype=np.float64)
    cdef double[:, :, :, :, ::1] ddG = np.ascontiguousarray(ddg, dtype=np.float64)
    gi_all = np.linalg.inv(np.asarray(G))
    cdef double[:, :, ::1] GI = np.ascontiguousarray(gi_all)
    cdef Py_ssize_t N = G.shape[0]
    cdef Py_ssize_t n = G.shape[1]
    out_a = np.zeros(N)
    cdef double[::1] out = out_a
    G1_a = np.zeros((n, n, n))
    Gam_a = np.zeros((n, n, n))
    dG1_a = np.zeros((n, n, n, n))
    dgi_a = np.zeros((n, n))
    dGam_a = np.zeros((n, n, n, n))
    ric_a = np.zeros((n, n))
    cdef double[:, :, ::1] G1 = G1_a
    cdef double[:, :, ::1] Gam = Gam_a
    cdef double[:, :, :, ::1] dG1 = dG1_a
    cdef double[:, ::1] dgi = dgi_a
    cdef double[:, :, :, ::1] dGam = dGam_a
    cdef double[:, ::1] ric = ric_a
    cdef Py_ssize_t p, a, b, c, d, e, f, h
    cdef double acc, r
    for p in range(N):
        for c in range(n):
            for a in range(n):
                for b in range(n):
                    G1[c, a, b] = 0.5 * (dG[p, a, b, c] + dG[p, b, a, c] - dG[p, c, a, b])
        for d in range(n):
            for a in range(n):
                for b in range(n):
                    acc = 0.0
                    for c in range(n):
                        acc += GI[p, d, c] * G1[c, a, b]
                    Gam[d, a, b] = acc
        for e in range(n):
            for d in range(n):
                for c in range(n):
                    acc = 0.0
                    for f in range(n):
                        for h in range(n):
                            acc -= GI[p, d, f] * dG[p, e, f, h] * GI[p, h, c]
                    dgi[d, c] = acc
            for c in range(n):
                for a in range(n):
                    for b in range(n):
                        dG1[e, c, a, b] = 0.5 * (ddG[p, e, a, b, c] + ddG[p, e, b, a, c] - ddG[p, e, c, a, b])
            for d in range(n):
                for a in range(n):
                    for b in range(n):
                        acc = 0.0
                        for c in range(n):
                            acc += dgi[d, c] * G1[c, a, b] + GI[p, d, c] * dG1[e, c, a, b]
                        dGam[e, d, a, b] = acc
        r = 0.0
        for a in range(n):
            for b in range(n):
                acc = 0.0
                for d in range(n):
                    acc += dGam[d, d, a, b] - dGam[b, d, a, d]
                    for e in range(n):
                        acc += Gam[d, d, e] * Gam[e, a, b] - Gam[d, b, e] * Gam[e, a, d]
                ric[a, b] = acc
                r += GI[p, a, b] * acc
        out[p] = r
    return out_a
