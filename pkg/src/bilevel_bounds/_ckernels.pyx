# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; same API as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan, log1p, sqrt

cnp.import_array()

cdef double _SERIES_CUTOFF = 0.05
cdef int _SERIES_TERMS = 16


cdef inline double _ipow(double x, int n) nogil:
    cdef double out = 1.0
    cdef int i
    for i in range(n):
        out *= x
    return out


cdef inline double _ups(double x, double r) nogil:
    cdef double r2 = r * r
    cdef double s = 1.0 / r2
    cdef double m = x * x if x * x > 1.0 else 1.0
    cdef double out, coef, d
    cdef int k, a
    if s * m <= _SERIES_CUTOFF:
        out = 0.0
        coef = 1.0
        for k in range(_SERIES_TERMS):
            a = 2 * k + 4
            out += coef * ((_ipow(x, a) - 1.0) / a - (_ipow(x, a - 1) - 1.0) / (a - 1))
            coef *= -s
        return 120.0 * out
    d = 0.5 * (x * x - 1.0) - (x - 1.0)
    d -= 0.5 * r2 * log1p((x * x - 1.0) / (1.0 + r2))
    d += r * (atan(x / r) - atan(1.0 / r))
    return 120.0 * r2 * d


cdef inline double _ups_d1(double x, double r) nogil:
    cdef double t = x / r
    return 120.0 * x * x * (x - 1.0) / (1.0 + t * t)


cdef inline double _ups_d2(double x, double r) nogil:
    cdef double r2 = r * r
    cdef double q = x * x + r2
    return 120.0 * r2 * (x * x * x * x + 3.0 * r2 * x * x - 2.0 * r2 * x) / (q * q)


def upsilon(x, double r):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xa.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double[::1] xv = xa
    for i in range(n):
        o[i] = _ups(xv[i], r)
    return out.reshape(np.shape(x))


def upsilon_d1(x, double r):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xa.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double[::1] xv = xa
    for i in range(n):
        o[i] = _ups_d1(xv[i], r)
    return out.reshape(np.shape(x))


def upsilon_d2(x, double r):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xa.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double[::1] xv = xa
    for i in range(n):
        o[i] = _ups_d2(xv[i], r)
    return out.reshape(np.shape(x))


def nc_chain(x, double nu, double r, Py_ssize_t n_reg):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t T = xv.shape[0], i
    grad = np.zeros(T)
    cdef double[::1] g = grad
    cdef double snu = sqrt(nu)
    cdef double val, d, reg = 0.0
    val = 0.5 * snu * (xv[0] - 1.0) * (xv[0] - 1.0)
    g[0] = snu * (xv[0] - 1.0)
    for i in range(1, T):
        d = xv[i] - xv[i - 1]
        val += 0.5 * d * d
        g[i] += d
        g[i - 1] -= d
    if n_reg > T:
        n_reg = T
    for i in range(n_reg):
        reg += _ups(xv[i], r)
        g[i] += nu * _ups_d1(xv[i], r)
    return val + nu * reg, grad


def agd_quadratic(A, c, z0, double L, double mu, Py_ssize_t K, zstar=None):
    cdef double[:, ::1] Am = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t d = Am.shape[0], i, j, k
    z_arr = np.array(z0, dtype=np.float64)
    cdef double[::1] z = z_arr
    cdef double[::1] zt = z_arr.copy()
    cdef double[::1] zn = np.empty(d)
    cdef double[::1] zs
    cdef bint track = zstar is not None
    errs = np.empty(K + 1 if track else 0)
    cdef double[::1] ev = errs
    cdef double sk = sqrt(L / mu)
    cdef double mom = (sk - 1.0) / (sk + 1.0)
    cdef double acc, e, tot, invL = 1.0 / L
    if track:
        zs = np.ascontiguousarray(zstar, dtype=np.float64)
        tot = 0.0
        for i in range(d):
            e = z[i] - zs[i]
            tot += e * e
        ev[0] = tot
    with nogil:
        for k in range(K):
            for i in range(d):
                acc = -cv[i]
                for j in range(d):
                    acc += Am[i, j] * zt[j]
                zn[i] = zt[i] - invL * acc
            for i in range(d):
                zt[i] = zn[i] + mom * (zn[i] - z[i])
                z[i] = zn[i]
            if track:
                tot = 0.0
                for i in range(d):
                    e = z[i] - zs[i]
                    tot += e * e
                ev[k + 1] = tot
    return z_arr, errs


def gd_quadratic(A, c, z0, double L, Py_ssize_t K, zstar=None):
    cdef double[:, ::1] Am = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t d = Am.shape[0], i, j, k
    z_arr = np.array(z0, dtype=np.float64)
    cdef double[::1] z = z_arr
    cdef double[::1] gr = np.empty(d)
    cdef double[::1] zs
    cdef bint track = zstar is not None
    errs = np.empty(K + 1 if track else 0)
    cdef double[::1] ev = errs
    cdef double acc, e, tot, invL = 1.0 / L
    if track:
        zs = np.ascontiguousarray(zstar, dtype=np.float64)
        tot = 0.0
        for i in range(d):
            e = z[i] - zs[i]
            tot += e * e
        ev[0] = tot
    with nogil:
        for k in range(K):
            for i in range(d):
                acc = -cv[i]
                for j in range(d):
                    acc += Am[i, j] * z[j]
                gr[i] = acc
            for i in range(d):
                z[i] -= invL * gr[i]
            if track:
                tot = 0.0
                for i in range(d):
                    e = z[i] - zs[i]
                    tot += e * e
                ev[k + 1] = tot
    return z_arr, errs
