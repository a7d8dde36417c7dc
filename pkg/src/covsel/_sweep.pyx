# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled majorize-minimize sweep. Mirrors ``covsel._sweep_py`` exactly."""
import numpy as np

from libc.math cimport fabs, sqrt


cdef inline void _group_update(double* c, double* h, double* kold, double* x,
                               Py_ssize_t S, double lam, double eps, bint exact) noexcept nogil:
    cdef Py_ssize_t s, it
    cdef double cn2 = 0.0, a = 0.0, r, f, fp, d, q, g, step
    for s in range(S):
        cn2 += c[s] * c[s]
    if sqrt(cn2) <= lam:
        for s in range(S):
            x[s] = 0.0
        return
    if not exact:
        for s in range(S):
            a += kold[s] * kold[s]
        a = sqrt(a)
        if a < eps:
            a = eps
        for s in range(S):
            x[s] = -c[s] / (h[s] + lam / a)
        return
    if S == 1:
        r = (sqrt(cn2) - lam) / h[0]
    else:
        # Newton on g(r) = F(r)^(-1/2) = 1 with F(r) = sum c^2 / (h r + lam)^2;
        # g is linear when all h agree, so this converges in a few steps
        r = 0.0
        for it in range(100):
            f = 0.0
            fp = 0.0
            for s in range(S):
                d = h[s] * r + lam
                q = c[s] * c[s] / (d * d)
                f += q
                fp -= 2.0 * q * h[s] / d
            g = 1.0 / sqrt(f)
            step = (g - 1.0) / (-0.5 * g * fp / f)
            r -= step
            if r < 0.0:
                r = 0.0
            if fabs(step) <= 1e-15 * r:
                break
    for s in range(S):
        x[s] = -c[s] * r / (h[s] * r + lam)


def mm_sweep(double[:, :, ::1] K, double[:, :, ::1] W, const double[:, :, ::1] C,
             double lam, double eps, bint exact, int max_passes=1, double pass_tol=1e-9):
    """One in-place sweep over every column of every subject.

    ``K`` holds the precisions, ``W`` their inverses (kept in sync), ``C``
    the covariances; all have shape (S, p, p) and C order. Each column's
    coordinates are cycled up to ``max_passes`` times, stopping early once
    no entry moves by more than ``pass_tol / min_s C[s, j, j]``.
    """
    cdef Py_ssize_t S = K.shape[0], p = K.shape[1]
    cdef Py_ssize_t s, j, t, a, b
    cdef int it
    cdef double wjj, wa, acc, s22, dx, moved, limit
    cdef double[:, :, ::1] A = np.zeros((S, p, p))
    cdef double[:, ::1] u = np.zeros((S, p))
    cdef double[::1] c = np.empty(S)
    cdef double[::1] h = np.empty(S)
    cdef double[::1] x = np.empty(S)
    cdef double[::1] kold = np.empty(S)

    with nogil:
        for j in range(p):
            for s in range(S):
                wjj = W[s, j, j]
                for a in range(p):
                    wa = W[s, a, j] / wjj
                    for b in range(p):
                        A[s, a, b] = W[s, a, b] - wa * W[s, b, j]
                for a in range(p):
                    acc = 0.0
                    for b in range(p):
                        if b != j:
                            acc = acc + A[s, a, b] * K[s, b, j]
                    u[s, a] = acc
            limit = 0.0
            for s in range(S):
                if pass_tol / C[s, j, j] > limit:
                    limit = pass_tol / C[s, j, j]
            for it in range(max_passes):
                moved = 0.0
                for t in range(p):
                    if t == j:
                        continue
                    for s in range(S):
                        s22 = C[s, j, j]
                        kold[s] = K[s, t, j]
                        c[s] = C[s, t, j] + s22 * (u[s, t] - A[s, t, t] * kold[s])
                        h[s] = s22 * A[s, t, t]
                    _group_update(&c[0], &h[0], &kold[0], &x[0], S, lam, eps, exact)
                    for s in range(S):
                        dx = x[s] - kold[s]
                        if dx != 0.0:
                            if fabs(dx) > moved:
                                moved = fabs(dx)
                            for a in range(p):
                                u[s, a] = u[s, a] + A[s, a, t] * dx
                            K[s, t, j] = x[s]
                            K[s, j, t] = x[s]
                if moved <= limit:
                    break
            for s in range(S):
                s22 = C[s, j, j]
                acc = 0.0
                for a in range(p):
                    if a != j:
                        acc = acc + K[s, a, j] * u[s, a]
                K[s, j, j] = 1.0 / s22 + acc
                for a in range(p):
                    if a == j:
                        continue
                    for b in range(p):
                        if b != j:
                            W[s, a, b] = A[s, a, b] + s22 * u[s, a] * u[s, b]
                    W[s, a, j] = -s22 * u[s, a]
                    W[s, j, a] = -s22 * u[s, a]
                W[s, j, j] = s22
