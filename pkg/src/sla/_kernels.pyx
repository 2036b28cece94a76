# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recurrent scans; drop-in replacement for ``sla._fallback``."""

import numpy as np


def decay_scan(const double[:, ::1] q, const double[:, ::1] k, const double[:, ::1] v,
               decay, const double[:, ::1] s0):
    cdef Py_ssize_t L = q.shape[0], dk = q.shape[1], dv = v.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double a, ki, qi
    cdef bint has_decay = decay is not None
    cdef const double[:, ::1] dec
    if has_decay:
        dec = decay
    s_arr = np.array(s0, dtype=np.float64, copy=True, order="C")
    y_arr = np.zeros((L, dv), dtype=np.float64)
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] y = y_arr
    with nogil:
        for t in range(L):
            for i in range(dk):
                ki = k[t, i]
                if has_decay:
                    a = dec[t, i]
                    for j in range(dv):
                        s[i, j] = a * s[i, j] + ki * v[t, j]
                else:
                    for j in range(dv):
                        s[i, j] = s[i, j] + ki * v[t, j]
            for i in range(dk):
                qi = q[t, i]
                for j in range(dv):
                    y[t, j] += qi * s[i, j]
    return y_arr, s_arr


def delta_scan(const double[:, ::1] q, const double[:, ::1] k, const double[:, ::1] v,
               const double[::1] beta, const double[::1] alpha, const double[:, ::1] s0):
    cdef Py_ssize_t L = q.shape[0], dk = q.shape[1], dv = v.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double a, b, ki, qi
    s_arr = np.array(s0, dtype=np.float64, copy=True, order="C")
    y_arr = np.zeros((L, dv), dtype=np.float64)
    u_arr = np.zeros(dv, dtype=np.float64)
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] y = y_arr
    cdef double[::1] u = u_arr
    with nogil:
        for t in range(L):
            a = alpha[t]
            b = beta[t]
            for j in range(dv):
                u[j] = 0.0
            for i in range(dk):
                ki = k[t, i]
                for j in range(dv):
                    s[i, j] = a * s[i, j]
                    u[j] += ki * s[i, j]
            for j in range(dv):
                u[j] = b * (v[t, j] - u[j])
            for i in range(dk):
                ki = k[t, i]
                for j in range(dv):
                    s[i, j] += ki * u[j]
            for i in range(dk):
                qi = q[t, i]
                for j in range(dv):
                    y[t, j] += qi * s[i, j]
    return y_arr, s_arr
