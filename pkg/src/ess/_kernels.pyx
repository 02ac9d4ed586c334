# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled frontal kernels.  Every routine releases the GIL."""

from libc.math cimport fabs
from libc.stdint cimport int64_t

NAME = "cython"


cdef Py_ssize_t _dense_lu(double[:, ::1] F, int64_t[::1] rows, int64_t[::1] cols,
                          Py_ssize_t nfs, double tol, double floor) noexcept nogil:
    cdef Py_ssize_t m = F.shape[0]
    cdef Py_ssize_t k = 0, c, r, i, j, best, piv_r, piv_c
    cdef double colmax, v, bestv, p, l, t
    cdef int64_t ti
    while k < nfs:
        piv_r = -1
        piv_c = -1
        for c in range(k, nfs):
            colmax = 0.0
            for r in range(k, m):
                v = fabs(F[r, c])
                if v > colmax:
                    colmax = v
            best = -1
            for r in range(k, nfs):
                if rows[r] == cols[c]:
                    v = fabs(F[r, c])
                    if v >= tol * colmax and v > floor:
                        best = r
                    break
            if best < 0:
                bestv = 0.0
                for r in range(k, nfs):
                    v = fabs(F[r, c])
                    if v > bestv:
                        bestv = v
                        best = r
                if not (bestv >= tol * colmax and bestv > floor):
                    best = -1
            if best >= 0:
                piv_r = best
                piv_c = c
                break
        if piv_r < 0:
            break
        if piv_r != k:
            for j in range(m):
                t = F[k, j]
                F[k, j] = F[piv_r, j]
                F[piv_r, j] = t
            ti = rows[k]
            rows[k] = rows[piv_r]
            rows[piv_r] = ti
        if piv_c != k:
            for i in range(m):
                t = F[i, k]
                F[i, k] = F[i, piv_c]
                F[i, piv_c] = t
            ti = cols[k]
            cols[k] = cols[piv_c]
            cols[piv_c] = ti
        p = F[k, k]
        for i in range(k + 1, m):
            l = F[i, k] / p
            F[i, k] = l
            if l != 0.0:
                for j in range(k + 1, m):
                    F[i, j] -= l * F[k, j]
        k += 1
    return k


def dense_lu(double[:, ::1] F, int64_t[::1] rows, int64_t[::1] cols, Py_ssize_t nfs,
             double tol, double floor):
    """Threshold-pivoted partial LU of the leading ``nfs`` columns in place.

    Returns the number of pivots eliminated; uneliminated fully summed
    rows/columns are left at positions [e, nfs).
    """
    cdef Py_ssize_t e
    with nogil:
        e = _dense_lu(F, rows, cols, nfs, tol, floor)
    return e


def scatter_add(double[:, ::1] F, int64_t[::1] rmap, int64_t[::1] cmap, double[:, ::1] C):
    cdef Py_ssize_t i, j, ri
    with nogil:
        for i in range(C.shape[0]):
            ri = rmap[i]
            for j in range(C.shape[1]):
                F[ri, cmap[j]] += C[i, j]


def scatter_entries(double[:, ::1] F, int64_t[::1] ri, int64_t[::1] ci, double[::1] vals):
    cdef Py_ssize_t t
    with nogil:
        for t in range(vals.shape[0]):
            F[ri[t], ci[t]] += vals[t]


def front_forward(double[:, ::1] Lp, double[::1] w):
    """w[:e] <- L11^{-1} w[:e]; w[e:] -= L21 w[:e]  (unit lower L)."""
    cdef Py_ssize_t m = Lp.shape[0], e = Lp.shape[1], i, k, kmax
    cdef double s
    with nogil:
        for i in range(1, m):
            kmax = i if i < e else e
            s = w[i]
            for k in range(kmax):
                s -= Lp[i, k] * w[k]
            w[i] = s


def front_backward(double[:, ::1] Up, double[::1] x):
    """x[:e] <- U11^{-1} (x[:e] - U12 x[e:])."""
    cdef Py_ssize_t e = Up.shape[0], m = Up.shape[1], i, j
    cdef double s
    with nogil:
        for i in range(e - 1, -1, -1):
            s = x[i]
            for j in range(i + 1, m):
                s -= Up[i, j] * x[j]
            x[i] = s / Up[i, i]
