# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Euler-Maruyama downcrossing walk; mirrors ``_walk_py.walk_chunk``."""

from libc.math cimport floor


def walk_chunk(const double[::1] z, double x, long j, long n_steps,
               long long[::1] counts, long long[::1] occ,
               double a, double delta, double drift_dt, double sd, double corr,
               long i_lo, long target, long max_steps):
    cdef Py_ssize_t i, nz = z.shape[0]
    cdef Py_ssize_t nc = counts.shape[0], no = occ.shape[0]
    cdef long cell, idx
    cdef long ia = -i_lo
    for i in range(nz):
        if n_steps >= max_steps:
            return x, j, n_steps, i, 2
        cell = <long>floor((x - a) / delta)
        idx = cell - i_lo
        if 0 <= idx < no:
            occ[idx] += 1
        x = x + drift_dt + sd * z[i]
        n_steps += 1
        while x <= a + (j - 1) * delta + corr:
            j -= 1
            idx = j - i_lo
            if 0 <= idx < nc:
                counts[idx] += 1
                if idx == ia and counts[idx] >= target:
                    return x, j, n_steps, i + 1, 1
        while x >= a + (j + 1) * delta - corr:
            j += 1
    return x, j, n_steps, nz, 0
