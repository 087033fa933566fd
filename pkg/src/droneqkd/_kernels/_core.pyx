# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pulse kernels: link pipeline and sync-pattern correlator.

Must stay semantically identical to droneqkd._kernels._py; the pure
backend is the reference and the tests compare both.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fmod, sin

cnp.import_array()

TWO_PI = 2.0 * np.pi

BACKEND = "compiled"


def propagate_block(double[::1] x, double[::1] p, double[::1] amp,
                    double[::1] drift_incr, double doppler_incr,
                    double[::1] z_chx, double[::1] z_chp,
                    double[::1] z_dx, double[::1] z_dp,
                    double drift0, double doppler0,
                    double xi_sqrt, double eta_sqrt, double det_sigma):
    """See droneqkd._kernels._py.propagate_block."""
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s2 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s3 = np.empty(n)
    cdef double[::1] s2v = s2
    cdef double[::1] s3v = s3
    cdef double drift = drift0
    cdef double dop = doppler0
    cdef double theta, c, s, xr, pr
    cdef Py_ssize_t i
    for i in range(n):
        drift = drift + drift_incr[i]
        dop = dop + doppler_incr
        theta = drift + dop
        c = cos(theta)
        s = sin(theta)
        xr = c * x[i] - s * p[i]
        pr = s * x[i] + c * p[i]
        s2v[i] = eta_sqrt * (amp[i] * (xr + xi_sqrt * z_chx[i])) + det_sigma * z_dx[i]
        s3v[i] = eta_sqrt * (amp[i] * (pr + xi_sqrt * z_chp[i])) + det_sigma * z_dp[i]
    cdef double two_pi = TWO_PI
    drift = fmod(drift, two_pi)
    if drift < 0.0:
        drift += two_pi
    dop = fmod(dop, two_pi)
    if dop < 0.0:
        dop += two_pi
    return s2, s3, drift, dop


def match_pattern(u, signs, double threshold):
    """See droneqkd._kernels._py.match_pattern."""
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef signed char[::1] sv = np.ascontiguousarray(signs, dtype=np.int8)
    cdef Py_ssize_t n = uv.shape[0]
    cdef Py_ssize_t k = sv.shape[0]
    cdef Py_ssize_t n_off = n - k + 1
    if n_off <= 0:
        return -1, 0, 0
    cdef Py_ssize_t off, j, score
    cdef Py_ssize_t best = 0
    cdef Py_ssize_t first = -1
    cdef Py_ssize_t count = 0
    cdef double v
    for off in range(n_off):
        score = 0
        for j in range(k):
            v = uv[off + j]
            if sv[j] > 0:
                if v > threshold:
                    score += 1
            else:
                if v < -threshold:
                    score += 1
        if score > best:
            best = score
        if score == k:
            count += 1
            if first < 0:
                first = off
    return int(first), int(best), int(count)
