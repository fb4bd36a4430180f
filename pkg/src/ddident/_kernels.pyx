# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see ``_fallback`` for semantics)."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, sqrt, cos, sin, M_PI
from libc.stdlib cimport calloc, free, malloc

cnp.import_array()


cdef Py_ssize_t _lower_bound(const double[::1] a, Py_ssize_t lo, Py_ssize_t hi,
                             double v) noexcept nogil:
    # first index with a[i] >= v
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _upper_bound(const double[::1] a, Py_ssize_t lo, Py_ssize_t hi,
                             double v) noexcept nogil:
    # first index with a[i] > v
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _first_covering(const double[::1] sy, double y, double r,
                                bint closed) noexcept nogil:
    # first j whose window [sy[j], sy[j] + r) (or closed) reaches y; sy ascending
    cdef Py_ssize_t lo = 0, hi = sy.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if (sy[mid] + r < y) if closed else (sy[mid] + r <= y):
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef void _toggle(cnp.int64_t* diff, Py_ssize_t a, Py_ssize_t b, int sign) noexcept nogil:
    if a < b:
        diff[a] += sign
        diff[b] -= sign


cdef void _sweep(const double[::1] px, const double[::1] py, const double[::1] sx,
                 const double[::1] sy, double r, bint closed,
                 cnp.int64_t[:, ::1] counts) noexcept nogil:
    # x and y starts ascend: rows differ only by the points entering or leaving the slab
    cdef Py_ssize_t n = px.shape[0], nx = sx.shape[0], ny = sy.shape[0]
    cdef Py_ssize_t i, j, k, lo = 0, hi = 0, new_lo, new_hi
    cdef cnp.int64_t run
    cdef Py_ssize_t* jlo = <Py_ssize_t*>malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t* jhi = <Py_ssize_t*>malloc(n * sizeof(Py_ssize_t))
    cdef cnp.int64_t* diff = <cnp.int64_t*>calloc(ny + 1, sizeof(cnp.int64_t))
    if jlo == NULL or jhi == NULL or diff == NULL:
        free(jlo)
        free(jhi)
        free(diff)
        with gil:
            raise MemoryError()
    for k in range(n):
        jlo[k] = _first_covering(sy, py[k], r, closed)
        # windows starting above y miss it
        jhi[k] = _upper_bound(sy, 0, ny, py[k])
    for i in range(nx):
        new_lo = _lower_bound(px, lo, n, sx[i])
        if new_lo > hi:
            new_hi = new_lo
        else:
            new_hi = hi
        if closed:
            new_hi = _upper_bound(px, new_hi, n, sx[i] + r)
        else:
            new_hi = _lower_bound(px, new_hi, n, sx[i] + r)
        for k in range(lo, min(new_lo, hi)):
            _toggle(diff, jlo[k], jhi[k], -1)
        for k in range(max(hi, new_lo), new_hi):
            _toggle(diff, jlo[k], jhi[k], 1)
        lo = new_lo
        hi = new_hi
        run = 0
        for j in range(ny):
            run += diff[j]
            counts[i, j] = run
    free(jlo)
    free(jhi)
    free(diff)


def window_counts(xs, ys, x_starts, y_starts, double r, bint closed=False):
    cdef const double[::1] px = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] py = np.ascontiguousarray(ys, dtype=np.float64)
    x_arr = np.ascontiguousarray(x_starts, dtype=np.float64)
    y_arr = np.ascontiguousarray(y_starts, dtype=np.float64)
    cdef const double[::1] sx = x_arr
    cdef const double[::1] sy = y_arr
    cdef Py_ssize_t n = px.shape[0], nx = sx.shape[0], ny = sy.shape[0]
    out = np.zeros((nx, ny), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] counts = out
    cdef Py_ssize_t i, j, k, lo, hi, m, a, b
    cdef double x0
    if n == 0 or nx == 0 or ny == 0:
        return out
    if np.all(x_arr[1:] >= x_arr[:-1]) and np.all(y_arr[1:] >= y_arr[:-1]):
        with nogil:
            _sweep(px, py, sx, sy, r, closed, counts)
        return out
    slab_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] slab = slab_arr
    for i in range(nx):
        x0 = sx[i]
        lo = _lower_bound(px, 0, n, x0)
        hi = _upper_bound(px, lo, n, x0 + r) if closed else _lower_bound(px, lo, n, x0 + r)
        m = hi - lo
        if m <= 0:
            continue
        for k in range(m):
            slab[k] = py[lo + k]
        slab_arr[:m].sort()
        for j in range(ny):
            a = _lower_bound(slab, 0, m, sy[j])
            b = _upper_bound(slab, a, m, sy[j] + r) if closed else _lower_bound(slab, a, m, sy[j] + r)
            counts[i, j] = b - a
    return out


def gaussian_response(times, amps, delays, dopplers, double bandwidth, double center):
    cdef const double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    a_arr = np.ascontiguousarray(amps, dtype=np.complex128)
    cdef const double[::1] are = np.ascontiguousarray(a_arr.real)
    cdef const double[::1] aim = np.ascontiguousarray(a_arr.imag)
    cdef const double[::1] tau = np.ascontiguousarray(delays, dtype=np.float64)
    cdef const double[::1] nu = np.ascontiguousarray(dopplers, dtype=np.float64)
    cdef Py_ssize_t nt = t.shape[0], nk = tau.shape[0], m, k
    out = np.zeros(nt, dtype=np.complex128)
    cdef double[:, ::1] o = out.view(np.float64).reshape(nt, 2)
    cdef double scale = sqrt(bandwidth)
    cdef double c = -M_PI * bandwidth * bandwidth / 2.0
    cdef double u, env, ph, cr, ci, accr, acci
    # each sample sums its taps in ascending order, so threads cannot change the result
    for m in prange(nt, nogil=True, schedule="static"):
        accr = 0.0
        acci = 0.0
        for k in range(nk):
            u = t[m] - tau[k] - center
            env = scale * exp(c * u * u)
            ph = -2.0 * M_PI * nu[k] * t[m]
            cr = env * cos(ph)
            ci = env * sin(ph)
            accr = accr + (are[k] * cr - aim[k] * ci)
            acci = acci + (are[k] * ci + aim[k] * cr)
        o[m, 0] = accr
        o[m, 1] = acci
    return out
