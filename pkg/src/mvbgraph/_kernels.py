"""Compiled inner loop of the dual prox solver.

Pairs are laid out group-major: the pairs of group ``v`` occupy
``gptr[v]:gptr[v+1]`` and ``member[k]`` is the block of pair ``k``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _scatter(S, member, q):
    z = np.zeros((q, S.shape[1]))
    for k in range(S.shape[0]):
        z[member[k]] += S[k]
    return z


@njit(cache=True)
def _weighted_penalty(c, radius, gptr, member, cols):
    # sum_v radius_v ||c^{T_v}|| over penalized columns
    q = c.shape[0]
    bsq = np.zeros(q)
    for w in range(q):
        acc = 0.0
        for j in range(c.shape[1]):
            if cols[j]:
                acc += c[w, j] * c[w, j]
        bsq[w] = acc
    total = 0.0
    for v in range(radius.shape[0]):
        acc = 0.0
        for k in range(gptr[v], gptr[v + 1]):
            acc += bsq[member[k]]
        total += radius[v] * np.sqrt(acc)
    return total


@njit(cache=True)
def _project(S, radius, gptr, norms):
    for v in range(radius.shape[0]):
        acc = 0.0
        for k in range(gptr[v], gptr[v + 1]):
            for j in range(S.shape[1]):
                acc += S[k, j] * S[k, j]
        nrm = np.sqrt(acc)
        norms[v] = nrm
        if nrm > radius[v]:
            s = radius[v] / nrm
            for k in range(gptr[v], gptr[v + 1]):
                for j in range(S.shape[1]):
                    S[k, j] *= s


@njit(cache=True)
def dual_ascent(u, Ck, G, S, alpha, radius, gptr, member, cols, step,
                inner_tol, inner_max, interior, tiny_tol):
    """Accelerated projected gradient ascent on the prox dual.

    Returns ``(c, gap, S, iterations)`` for the best certified primal point.
    """
    q, m = u.shape
    n_groups = radius.shape[0]
    norms = np.empty(n_groups)
    Yk = S.copy()
    t = 1.0
    eta_prev = -np.inf
    best_c = u.copy()
    best_gap = np.inf
    best_S = S.copy()
    it = 0
    for it in range(1, inner_max + 1):
        zy = _scatter(Yk, member, q)
        S_new = np.empty_like(S)
        for k in range(S.shape[0]):
            w = member[k]
            for j in range(m):
                if cols[j]:
                    S_new[k, j] = Yk[k, j] + step * (u[w, j] - zy[w, j] / alpha)
                else:
                    S_new[k, j] = 0.0
        _project(S_new, radius, gptr, norms)

        z = _scatter(S_new, member, q)
        ctil = u - z / alpha
        gap = _weighted_penalty(ctil, radius, gptr, member, cols) - np.sum(z * ctil)
        cand = ctil
        cand_gap = gap

        # groups inside their dual ball, or carrying negligible primal mass,
        # are proposed as exactly zero and kept if the certificate allows
        zero = np.zeros(q, dtype=np.bool_)
        any_drop = False
        for v in range(n_groups):
            drop = norms[v] < radius[v] * (1.0 - interior)
            if not drop:
                acc = 0.0
                for k in range(gptr[v], gptr[v + 1]):
                    for j in range(m):
                        if cols[j]:
                            acc += ctil[member[k], j] ** 2
                drop = np.sqrt(acc) <= tiny_tol
            if drop:
                any_drop = True
                for k in range(gptr[v], gptr[v + 1]):
                    zero[member[k]] = True
        if any_drop:
            sparse_c = ctil.copy()
            dsq = 0.0
            for w in range(q):
                if zero[w]:
                    for j in range(m):
                        dsq += ctil[w, j] ** 2
                        sparse_c[w, j] = 0.0
            sgap = (_weighted_penalty(sparse_c, radius, gptr, member, cols)
                    - np.sum(z * sparse_c) + 0.5 * alpha * dsq)
            if sgap <= inner_tol:
                cand = sparse_c
                cand_gap = sgap

        if cand_gap <= best_gap or cand_gap <= inner_tol:
            best_c = cand
            best_gap = cand_gap
            best_S = S_new
        if cand_gap <= inner_tol:
            break

        eta = -np.sum((G + z) ** 2) / (2.0 * alpha) + np.sum(z * Ck)
        if eta < eta_prev:
            # adaptive restart
            t = 1.0
            Yk = S_new
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            Yk = S_new + ((t - 1.0) / t_next) * (S_new - S)
            t = t_next
        S = S_new
        eta_prev = eta
    return best_c, best_gap, best_S, it
