# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled window-coding kernel.  Contract documented in _pure.py."""

import numpy as np

cimport numpy as cnp

BACKEND = "compiled"


def pattern_codes(field, translates, offsets, base):
    cdef cnp.int64_t[::1] f = np.ascontiguousarray(field, dtype=np.int64)
    cdef cnp.int64_t[::1] ts = np.ascontiguousarray(translates, dtype=np.int64)
    cdef cnp.int64_t[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t nt = ts.shape[0]
    cdef Py_ssize_t no = offs.shape[0]
    out = np.empty(nt, dtype=np.uint64)
    cdef cnp.uint64_t[::1] ov = out
    cdef unsigned long long b = <unsigned long long> base
    cdef unsigned long long code
    cdef Py_ssize_t i, j
    cdef cnp.int64_t t
    with nogil:
        for i in range(nt):
            t = ts[i]
            code = 0
            for j in range(no):
                code = code * b + <unsigned long long> f[t + offs[j]]
            ov[i] = code
    return out
