"""Pure-numpy fallback for the SVR dual solver.

Solves the epsilon-insensitive SVR dual in the doubled-variable form

    min_a  1/2 a^T Q a + p^T a
    s.t.   z^T a = 0,  0 <= a_t <= C

with a = [alpha; alpha*], Q = [[K, -K], [-K, K]], p = [eps - y; eps + y]
and z = [+1]*l + [-1]*l, by pairwise coordinate steps on the maximal
KKT-violating pair.  Q is never materialized; rows of K are enough.

The compiled extension in ``_smo.pyx`` implements the identical iteration
(and tie rules), so both backends produce the same solution path.
"""

from __future__ import annotations

import numpy as np

_BOUND_SNAP = 1e-12


class SmoResult:
    """Raw output of one dual solve."""

    __slots__ = (
        "beta", "bias", "iterations", "kkt_violation", "objective",
        "converged", "alpha", "objective_trace",
    )

    def __init__(self, beta, bias, iterations, kkt_violation, objective,
                 converged, alpha, objective_trace):
        self.beta = beta
        self.bias = bias
        self.iterations = iterations
        self.kkt_violation = kkt_violation
        self.objective = objective
        self.converged = converged
        self.alpha = alpha
        self.objective_trace = objective_trace


def solve_svr_smo(K, y, C, epsilon, tol=1e-5, max_pairs=100_000, record_objective=False):
    """Run the pairwise dual optimization on a precomputed kernel matrix."""
    K = np.ascontiguousarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    l = len(y)
    C = float(C)

    a = np.zeros(2 * l)
    p = np.concatenate((epsilon - y, epsilon + y))
    G = p.copy()
    # viol_t = -z_t G_t; the optimality gap is max(viol | I_up) - min(viol | I_low)
    sign = np.concatenate((np.ones(l), -np.ones(l)))

    trace = [] if record_objective else None
    iterations = 0
    gap = np.inf
    while iterations < max_pairs:
        viol = -sign * G
        up = np.where(sign > 0, a < C, a > 0)
        low = np.where(sign > 0, a > 0, a < C)
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.where(up, viol, -np.inf).argmax())
        j = int(np.where(low, viol, np.inf).argmin())
        gap = viol[i] - viol[j]
        if gap <= tol:
            break

        ii, jj = i % l, j % l
        eta = K[ii, ii] + K[jj, jj] - 2.0 * K[ii, jj]
        if eta <= 0.0:
            eta = 1e-12
        lam = gap / eta
        room_i = (C - a[i]) if sign[i] > 0 else a[i]
        room_j = a[j] if sign[j] > 0 else (C - a[j])
        lam = min(lam, room_i, room_j)

        a[i] += sign[i] * lam
        a[j] -= sign[j] * lam
        for t in (i, j):
            if a[t] < _BOUND_SNAP * C:
                a[t] = 0.0
            elif a[t] > (1.0 - _BOUND_SNAP) * C:
                a[t] = C

        kdiff = K[ii, :] - K[jj, :]
        G[:l] += lam * kdiff
        G[l:] -= lam * kdiff
        iterations += 1
        if record_objective:
            trace.append(0.5 * float(a @ G + a @ p))

    return finalize(a, G, p, C, l, gap, tol, iterations,
                    np.asarray(trace) if record_objective else None)


def finalize(a, G, p, C, l, gap, tol, iterations, trace) -> SmoResult:
    """Assemble an SmoResult from the terminal solver state (shared with the
    compiled backend)."""
    sign = np.concatenate((np.ones(l), -np.ones(l)))
    converged = gap <= tol or not np.isfinite(gap) or gap <= 0.0
    viol = -sign * G
    free = (a > 0.0) & (a < C)
    if free.any():
        bias = float(viol[free].mean())
    else:
        up = np.where(sign > 0, a < C, a > 0)
        low = np.where(sign > 0, a > 0, a < C)
        hi = viol[up].max() if up.any() else 0.0
        lo = viol[low].min() if low.any() else 0.0
        bias = 0.5 * (hi + lo)

    objective = 0.5 * float(a @ G + a @ p)
    beta = a[:l] - a[l:]
    return SmoResult(
        beta=beta,
        bias=bias,
        iterations=iterations,
        kkt_violation=max(gap, 0.0) if np.isfinite(gap) else 0.0,
        objective=objective,
        converged=converged,
        alpha=a,
        objective_trace=trace,
    )
