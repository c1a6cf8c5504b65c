# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Native segmentation kernel: running bitwise-AND + popcount DP."""

import numpy as np

from libc.stdint cimport int64_t, uint64_t

cdef extern from *:
    """
    #if defined(_MSC_VER)
    #include <intrin.h>
    static inline unsigned long long tm_popcount64(unsigned long long x)
    { return __popcnt64(x); }
    #else
    static inline unsigned long long tm_popcount64(unsigned long long x)
    { return __builtin_popcountll(x); }
    #endif
    """
    uint64_t tm_popcount64(uint64_t x) nogil


def dp_segment(const uint64_t[:, ::1] words, Py_ssize_t n_frames):
    """Same contract as _pykernels.dp_segment (see its docstring)."""
    cdef Py_ssize_t b = n_frames
    cdef Py_ssize_t w = words.shape[1]
    if words.shape[0] != (b - 1 if b > 1 else 0):
        raise ValueError(
            f"mask has {words.shape[0]} rows, expected {b - 1} for {b} frames")

    dp_arr = np.zeros(b + 2, dtype=np.int64)
    prev_arr = np.zeros(b + 2, dtype=np.int64)
    acc_arr = np.empty(w, dtype=np.uint64)
    cdef int64_t[::1] dp = dp_arr
    cdef int64_t[::1] prev = prev_arr
    cdef uint64_t[::1] acc = acc_arr

    cdef Py_ssize_t i, j, t
    cdef int64_t best, cand, best_j, n
    with nogil:
        for i in range(2, b + 2):
            best = dp[i - 1]  # j = i-1: single-frame segment, gain 0
            best_j = i - 1
            for t in range(w):
                acc[t] = <uint64_t> 0xFFFFFFFFFFFFFFFFULL
            # j descends so the running AND grows one row at a time and
            # ties naturally resolve toward the smallest start frame.
            for j in range(i - 2, 0, -1):
                n = 0
                for t in range(w):
                    acc[t] &= words[j - 1, t]
                    n += <int64_t> tm_popcount64(acc[t])
                cand = dp[j] + n * (i - j - 1)
                if cand >= best:
                    best = cand
                    best_j = j
            dp[i] = best
            prev[i] = best_j
    prev_arr[1] = 0
    return dp_arr, prev_arr
