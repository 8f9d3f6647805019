# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Gagliardo pair sum over a row range."""
from libc.math cimport floor, pow, sqrt


cdef inline double ipow(double x, int m) noexcept nogil:
    cdef double out = 1.0
    while m > 0:
        if m & 1:
            out = out * x
        x = x * x
        m = m >> 1
    return out


cdef inline double half_pow(double r2, double e, int mode, int m) noexcept nogil:
    # r2^(e/2): mode 1 -> integer power of r2, mode 2 -> integer power of sqrt(r2)
    if mode == 1:
        return ipow(r2, m)
    if mode == 2:
        return ipow(sqrt(r2), m)
    return pow(r2, 0.5 * e)


cdef inline int exponent_mode(double e, int *m) noexcept nogil:
    if e == floor(e) and e >= 0 and e < 64:
        if (<int>e) % 2 == 0:
            m[0] = (<int>e) // 2
            return 1
        m[0] = <int>e
        return 2
    m[0] = 0
    return 0


def pair_sum_rows(const double[:, ::1] X, const double[:, :, ::1] F, const double[::1] W,
                  const double[::1] V, double q, double expo, Py_ssize_t i0, Py_ssize_t i1):
    """sum_{i in [i0,i1)} sum_{j != i} W_i W_j D_ij^q / |X_i - X_j|^expo.

    D_ij^q = sum_g V_g (sum_c (F_igc - F_jgc)^2)^(q/2); coincident points are skipped.
    """
    cdef Py_ssize_t n = X.shape[0], dim = X.shape[1], G = F.shape[1], C = F.shape[2]
    cdef Py_ssize_t i, j, k, g, c
    cdef double r2, diff, acc, dq, total = 0.0, row
    cdef int mq, me
    cdef int qmode = exponent_mode(q, &mq)
    cdef int emode = exponent_mode(expo, &me)
    with nogil:
        for i in range(i0, i1):
            row = 0.0
            for j in range(n):
                if j == i:
                    continue
                r2 = 0.0
                for k in range(dim):
                    diff = X[i, k] - X[j, k]
                    r2 = r2 + diff * diff
                if r2 == 0.0:
                    continue
                dq = 0.0
                for g in range(G):
                    acc = 0.0
                    for c in range(C):
                        diff = F[i, g, c] - F[j, g, c]
                        acc = acc + diff * diff
                    if acc > 0.0:
                        dq = dq + V[g] * half_pow(acc, q, qmode, mq)
                if dq > 0.0:
                    row = row + W[j] * dq / half_pow(r2, expo, emode, me)
            total = total + W[i] * row
    return total
