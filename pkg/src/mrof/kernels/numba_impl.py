"""numba-compiled versions of the hot kernels.

Signatures and results match :mod:`mrof.kernels.numpy_impl`; reductions run
in a fixed sequential order so results are bit-stable between runs.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _edge_geometry(code, radius, ua, ub, want_logs):
    m, N = ua.shape
    d = np.empty(m)
    nl = m if want_logs else 0
    lab = np.zeros((nl, N))
    lba = np.zeros((nl, N))
    for k in range(m):
        if code == 0:
            acc = 0.0
            for i in range(N):
                t = ub[k, i] - ua[k, i]
                acc += t * t
                if want_logs:
                    lab[k, i] = t
                    lba[k, i] = -t
            d[k] = math.sqrt(acc)
        elif code == 1:
            r2 = radius * radius
            c = 0.0
            for i in range(N):
                c += ua[k, i] * ub[k, i]
            c /= r2
            nwa = 0.0
            nwb = 0.0
            for i in range(N):
                wa = ub[k, i] - c * ua[k, i]
                wb = ua[k, i] - c * ub[k, i]
                nwa += wa * wa
                nwb += wb * wb
            nwa = math.sqrt(nwa)
            nwb = math.sqrt(nwb)
            dk = radius * math.atan2(nwa / radius, c)
            d[k] = dk
            if want_logs:
                sa = dk / nwa if nwa > 0 else 0.0
                sb = dk / nwb if nwb > 0 else 0.0
                pa = 0.0
                pb = 0.0
                for i in range(N):
                    lab[k, i] = sa * (ub[k, i] - c * ua[k, i])
                    lba[k, i] = sb * (ua[k, i] - c * ub[k, i])
                    pa += ua[k, i] * lab[k, i]
                    pb += ub[k, i] * lba[k, i]
                for i in range(N):
                    lab[k, i] -= pa / r2 * ua[k, i]
                    lba[k, i] -= pb / r2 * ub[k, i]
        else:
            ip = -ua[k, 0] * ub[k, 0]
            ch = -(ub[k, 0] - ua[k, 0]) ** 2
            for i in range(1, N):
                ip += ua[k, i] * ub[k, i]
                ch += (ub[k, i] - ua[k, i]) ** 2
            alpha = -ip
            if alpha > 2.0:
                dk = math.acosh(alpha)
            else:
                dk = 2.0 * math.asinh(0.5 * math.sqrt(max(ch, 0.0)))
            d[k] = dk
            if want_logs:
                ratio = dk / math.sinh(dk) if dk > 1e-8 else 1.0 - dk * dk / 6.0
                for i in range(N):
                    lab[k, i] = ratio * (ub[k, i] - alpha * ua[k, i])
                    lba[k, i] = ratio * (ua[k, i] - alpha * ub[k, i])
                pa = -lab[k, 0] * ua[k, 0]
                pb = -lba[k, 0] * ub[k, 0]
                for i in range(1, N):
                    pa += lab[k, i] * ua[k, i]
                    pb += lba[k, i] * ub[k, i]
                for i in range(N):
                    lab[k, i] += pa * ua[k, i]
                    lba[k, i] += pb * ub[k, i]
    return d, lab, lba


def edge_geometry(code, radius, ua, ub, want_logs):
    if code not in (0, 1, 2):
        raise ValueError(f"no edge kernel for manifold code {code}")
    return _edge_geometry(
        code, float(radius), np.ascontiguousarray(ua), np.ascontiguousarray(ub), bool(want_logs)
    )


@njit(cache=True)
def tv_assemble(d, inv_len2, term_w, term_edges, eps, sigma, want_coef):
    T, width = term_edges.shape
    coef = np.zeros(len(d) if want_coef else 0)
    tv = 0.0
    dirichlet = 0.0
    for t in range(T):
        s = 0.0
        for j in range(width):
            e = term_edges[t, j]
            if e >= 0:
                s += d[e] * d[e] * inv_len2[e]
        root = math.sqrt(s + eps * eps)
        tv += term_w[t] * root
        dirichlet += term_w[t] * 0.5 * sigma * s
        if want_coef:
            dphi = 0.5 * sigma
            if root > 0:
                dphi += 0.5 / root
            for j in range(width):
                e = term_edges[t, j]
                if e >= 0:
                    coef[e] += term_w[t] * dphi * inv_len2[e]
    return tv, dirichlet, coef


@njit(cache=True)
def scatter_gradient(n_nodes, a, b, coef, lab, lba):
    N = lab.shape[1]
    grad = np.zeros((n_nodes, N))
    for e in range(len(a)):
        ce = 2.0 * coef[e]
        for i in range(N):
            grad[a[e], i] -= ce * lab[e, i]
            grad[b[e], i] -= ce * lba[e, i]
    return grad


@njit(cache=True)
def taut_string(f, mass):
    n = len(f)
    X = np.zeros(n + 1)
    F = np.zeros(n + 1)
    for i in range(n):
        X[i + 1] = X[i] + mass[i]
        F[i + 1] = F[i] + mass[i] * f[i]
    u = np.empty(n)
    a = 0
    ya = 0.0
    while a < n:
        min_up = np.inf
        iu = -1
        max_lo = -np.inf
        il = -1
        bent = False
        for j in range(a + 1, n + 1):
            dx = X[j] - X[a]
            if j == n:
                up = F[n]
                lo = F[n]
            else:
                up = F[j] + 1.0
                lo = F[j] - 1.0
            su = (up - ya) / dx
            sl = (lo - ya) / dx
            if sl > min_up:
                for i in range(a, iu):
                    u[i] = min_up
                ya = F[iu] + 1.0
                a = iu
                bent = True
                break
            if su < max_lo:
                for i in range(a, il):
                    u[i] = max_lo
                ya = F[il] - 1.0
                a = il
                bent = True
                break
            if su < min_up:
                min_up = su
                iu = j
            if sl > max_lo:
                max_lo = sl
                il = j
        if not bent:
            slope = (F[n] - ya) / (X[n] - X[a])
            for i in range(a, n):
                u[i] = slope
            a = n
    return u


@njit(cache=True)
def brute_force_scan(D, fid, a, b, inv_len2, term_w, term_edges, eps, sigma):
    K, M = fid.shape
    E = len(a)
    T, width = term_edges.shape
    idx = np.zeros(K, dtype=np.int64)
    best_idx = np.zeros(K, dtype=np.int64)
    best = np.inf
    q = np.empty(E)
    total_count = M**K
    for _ in range(total_count):
        val = 0.0
        for k in range(K):
            val += fid[k, idx[k]]
        for e in range(E):
            de = D[idx[a[e]], idx[b[e]]]
            q[e] = de * de * inv_len2[e]
        for t in range(T):
            s = 0.0
            for j in range(width):
                e = term_edges[t, j]
                if e >= 0:
                    s += q[e]
            val += term_w[t] * (math.sqrt(s + eps * eps) + 0.5 * sigma * s)
        if val < best:
            best = val
            for k in range(K):
                best_idx[k] = idx[k]
        # odometer increment, last index fastest
        k = K - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < M:
                break
            idx[k] = 0
            k -= 1
    return best, best_idx
