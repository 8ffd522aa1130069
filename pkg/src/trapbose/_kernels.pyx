# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, M_PI

from ._kernels_py import ZETA_COEFFS, X_SWITCH, ladder_cutoff

cnp.import_array()

cdef double[::1] _zc = np.ascontiguousarray(ZETA_COEFFS, dtype=np.float64)
cdef int _nz = _zc.shape[0]
cdef double _xs = X_SWITCH


cdef inline double _g_half(double x) nogil:
    cdef double acc, z, zk, term
    cdef int i, k
    if x < _xs:
        acc = _zc[_nz - 1]
        for i in range(_nz - 2, -1, -1):
            acc = acc * x + _zc[i]
        return sqrt(M_PI / x) + acc
    z = exp(-x)
    zk = z
    acc = z
    k = 1
    while True:
        k += 1
        zk *= z
        term = zk / sqrt(<double>k)
        acc += term
        if term < 1e-17 * acc or k > 200:
            break
    return acc


def g_half(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(xf)
    cdef Py_ssize_t i, n = xf.shape[0]
    cdef double[::1] xv = xf
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _g_half(xv[i])
    return out.reshape(np.shape(x))


def ideal_ladder(mu, double temperature, double rel_tol=1e-10):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mf = np.ascontiguousarray(mu, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros_like(mf)
    cdef int j, j_max = ladder_cutoff(temperature, rel_tol)
    cdef Py_ssize_t i, n = mf.shape[0]
    cdef double[::1] mv = mf
    cdef double[::1] ov = out
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(j_max + 1):
                acc += (j + 1.0) * _g_half(((j + 1.0) - mv[i]) / temperature)
            ov[i] = acc
    return out.reshape(np.shape(mu))


def thermal_accumulate(occupation, phi):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] occ = np.ascontiguousarray(occupation, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ph = np.ascontiguousarray(phi, dtype=np.float64).reshape(occ.shape[0], -1)
    cdef Py_ssize_t n_states = ph.shape[0], n_nodes = ph.shape[1], a, s
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n_nodes)
    cdef double[::1] ov = out
    cdef double[::1] oc = occ
    cdef double[:, ::1] pv = ph
    cdef double w, v
    with nogil:
        for a in range(n_states):
            w = oc[a]
            if w == 0.0:
                continue
            for s in range(n_nodes):
                v = pv[a, s]
                ov[s] += w * v * v
    return out
