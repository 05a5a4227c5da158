# cython: language_level=3, boundscheck=False, wraparound=False
# cython: cdivision=True, initializedcheck=False
"""Compiled working-set solver for the epsilon-insensitive SVR dual.

This mirrors the reference implementation in ``_smo_py`` step for step:
the same most-violating-pair selection, the same tie handling (lowest
index wins), the same clipping, bound snapping and gradient updates.
Only the pair loop is lowered to C; result assembly is shared with the
fallback so both backends return identical objects.

Per-iteration objective tracing is test-only and stays with the
reference implementation; the dispatcher in ``svr`` routes
``record_objective=True`` calls there.
"""

import numpy as np

from ._smo_py import _BOUND_SNAP, finalize

from libc.math cimport INFINITY


cdef long _run(const double[:, ::1] K, double[::1] a, double[::1] G,
               Py_ssize_t l, double C, double tol, long max_pairs,
               double snap_lo, double snap_hi, double* out_gap) noexcept nogil:
    """Run the pair loop in place on (a, G); return the update count.

    ``out_gap`` receives the KKT gap from the last pair selection, 0.0
    when a working set emptied, and stays at +inf if no iteration ran.
    """
    cdef Py_ssize_t t, i, j, ii, jj, L2 = 2 * l
    cdef long it = 0
    cdef double best_up, best_low, v, gap, eta, lam, room_i, room_j, kd

    out_gap[0] = INFINITY
    while it < max_pairs:
        # viol[t] = -z_t G[t]; argmax over I_up, argmin over I_low.
        # Strict comparisons keep the first (lowest-index) extremum,
        # matching numpy argmax/argmin in the reference.
        best_up = -INFINITY
        best_low = INFINITY
        i = -1
        j = -1
        for t in range(L2):
            if t < l:
                v = -G[t]
                if a[t] < C and v > best_up:
                    best_up = v
                    i = t
                if a[t] > 0.0 and v < best_low:
                    best_low = v
                    j = t
            else:
                v = G[t]
                if a[t] > 0.0 and v > best_up:
                    best_up = v
                    i = t
                if a[t] < C and v < best_low:
                    best_low = v
                    j = t

        if i < 0 or j < 0:
            out_gap[0] = 0.0
            break
        gap = best_up - best_low
        out_gap[0] = gap
        if gap <= tol:
            break

        ii = i if i < l else i - l
        jj = j if j < l else j - l
        eta = K[ii, ii] + K[jj, jj] - 2.0 * K[ii, jj]
        if eta <= 0.0:
            eta = 1e-12
        lam = gap / eta
        room_i = (C - a[i]) if i < l else a[i]
        room_j = a[j] if j < l else (C - a[j])
        if room_i < lam:
            lam = room_i
        if room_j < lam:
            lam = room_j

        if i < l:
            a[i] = a[i] + lam
        else:
            a[i] = a[i] - lam
        if j < l:
            a[j] = a[j] - lam
        else:
            a[j] = a[j] + lam
        if a[i] < snap_lo:
            a[i] = 0.0
        elif a[i] > snap_hi:
            a[i] = C
        if a[j] < snap_lo:
            a[j] = 0.0
        elif a[j] > snap_hi:
            a[j] = C

        # dG = z * lam * (K[ii, :] - K[jj, :]) tiled over both halves.
        for t in range(l):
            kd = K[ii, t] - K[jj, t]
            G[t] = G[t] + lam * kd
            G[t + l] = G[t + l] - lam * kd

        it += 1

    return it


def solve_svr_smo(K, y, C, epsilon, tol=1e-5, max_pairs=100_000,
                  record_objective=False):
    """Compiled twin of ``_smo_py.solve_svr_smo``; same contract."""
    if record_objective:
        from ._smo_py import solve_svr_smo as _reference
        return _reference(K, y, C, epsilon, tol=tol, max_pairs=max_pairs,
                          record_objective=True)

    K = np.ascontiguousarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    cdef Py_ssize_t l = len(y)
    cdef double C_ = float(C)
    cdef double tol_ = float(tol)
    cdef long cap = int(max_pairs)

    a = np.zeros(2 * l)
    p = np.concatenate((epsilon - y, epsilon + y))
    G = p.copy()

    cdef double gap = INFINITY
    cdef double snap_lo = _BOUND_SNAP * C_
    cdef double snap_hi = (1.0 - _BOUND_SNAP) * C_
    cdef double[:, ::1] Kv = K
    cdef double[::1] av = a
    cdef double[::1] Gv = G
    cdef long iterations
    with nogil:
        iterations = _run(Kv, av, Gv, l, C_, tol_, cap,
                          snap_lo, snap_hi, &gap)

    return finalize(a, G, p, C_, l, gap, tol_, int(iterations), None)
