"""Vectorized numpy versions of the hot kernels (the fallback path)."""

import itertools
import math

import numpy as np


def _dot(x, y):
    return np.einsum("...i,...i->...", x, y)


def _mink(x, y):
    return _dot(x[..., 1:], y[..., 1:]) - x[..., 0] * y[..., 0]


def edge_geometry(code, radius, ua, ub, want_logs):
    """Distances and (optionally) both logarithms across a batch of edges.

    ``code``: 0 euclidean, 1 sphere (given radius), 2 hyperboloid.
    Returns ``(d, log_a(b), log_b(a))``; logs are empty arrays if not wanted.
    """
    if code == 0:
        diff = ub - ua
        d = np.sqrt(_dot(diff, diff))
        if not want_logs:
            return d, np.empty((0, ua.shape[1])), np.empty((0, ua.shape[1]))
        return d, diff, -diff
    if code == 1:
        r2 = radius * radius
        c = _dot(ua, ub) / r2
        wa = ub - c[:, None] * ua
        wb = ua - c[:, None] * ub
        nwa = np.sqrt(_dot(wa, wa))
        theta = np.arctan2(nwa / radius, c)
        d = radius * theta
        if not want_logs:
            return d, np.empty((0, ua.shape[1])), np.empty((0, ua.shape[1]))
        nwb = np.sqrt(_dot(wb, wb))
        sa = np.where(nwa > 0, d / np.where(nwa > 0, nwa, 1.0), 0.0)
        sb = np.where(nwb > 0, d / np.where(nwb > 0, nwb, 1.0), 0.0)
        lab = sa[:, None] * wa
        lba = sb[:, None] * wb
        lab -= (_dot(ua, lab) / r2)[:, None] * ua
        lba -= (_dot(ub, lba) / r2)[:, None] * ub
        return d, lab, lba
    if code == 2:
        alpha = -_mink(ua, ub)
        diff = ub - ua
        chord2 = np.maximum(_mink(diff, diff), 0.0)
        d = np.where(
            alpha > 2.0,
            np.arccosh(np.maximum(alpha, 1.0)),
            2.0 * np.arcsinh(0.5 * np.sqrt(chord2)),
        )
        if not want_logs:
            return d, np.empty((0, ua.shape[1])), np.empty((0, ua.shape[1]))
        wa = ub + _mink(ub, ua)[:, None] * ua
        wb = ua + _mink(ua, ub)[:, None] * ub
        big = d > 1e-8
        ratio = np.where(big, d / np.sinh(np.where(big, d, 1.0)), 1.0 - d * d / 6.0)
        lab = ratio[:, None] * wa
        lba = ratio[:, None] * wb
        lab += _mink(lab, ua)[:, None] * ua
        lba += _mink(lba, ub)[:, None] * ub
        return d, lab, lba
    raise ValueError(f"no edge kernel for manifold code {code}")


def tv_assemble(d, inv_len2, term_w, term_edges, eps, sigma, want_coef):
    """Sum the gradient-dependent energy terms.

    For each term k: s_k = sum_e d_e^2 / len_e^2 over its edges,
    tv += w_k sqrt(s_k + eps^2), dirichlet += w_k sigma/2 s_k.
    ``coef[e]`` is d(tv + dirichlet)/d(d_e^2).
    """
    q = d * d * inv_len2
    present = term_edges >= 0
    idx = np.where(present, term_edges, 0)
    s = np.sum(np.where(present, q[idx], 0.0), axis=1)
    root = np.sqrt(s + eps * eps)
    tv = float(np.sum(term_w * root))
    dirichlet = float(np.sum(term_w * (0.5 * sigma) * s))
    if not want_coef:
        return tv, dirichlet, np.empty(0)
    safe = np.where(root > 0, root, 1.0)
    dphi = np.where(root > 0, 0.5 / safe, 0.0) + 0.5 * sigma
    contrib = (term_w * dphi)[:, None] * np.where(present, inv_len2[idx], 0.0)
    coef = np.zeros(len(d))
    np.add.at(coef, idx[present], contrib[present])
    return tv, dirichlet, coef


def scatter_gradient(n_nodes, a, b, coef, lab, lba):
    """grad[a] -= 2 coef log_a(b); grad[b] -= 2 coef log_b(a)."""
    grad = np.zeros((n_nodes, lab.shape[1]))
    np.add.at(grad, a, -2.0 * coef[:, None] * lab)
    np.add.at(grad, b, -2.0 * coef[:, None] * lba)
    return grad


def taut_string(f, mass):
    """Exact minimizer of sum_i |u_{i+1}-u_i| + 1/2 sum_i mass_i (u_i - f_i)^2.

    The cumulative sum of mass*(u - f) must stay in [-1, 1]; u is the slope of
    the shortest path through that tube (funnel algorithm).
    """
    n = len(f)
    X = np.concatenate([[0.0], np.cumsum(mass)])
    F = np.concatenate([[0.0], np.cumsum(mass * f)])
    u = np.empty(n)
    a = 0
    ya = 0.0
    while a < n:
        min_up, iu = math.inf, -1
        max_lo, il = -math.inf, -1
        bent = False
        for j in range(a + 1, n + 1):
            dx = X[j] - X[a]
            if j == n:
                up = lo = F[n]
            else:
                up = F[j] + 1.0
                lo = F[j] - 1.0
            su = (up - ya) / dx
            sl = (lo - ya) / dx
            if sl > min_up:
                u[a:iu] = min_up
                ya = F[iu] + 1.0
                a = iu
                bent = True
                break
            if su < max_lo:
                u[a:il] = max_lo
                ya = F[il] - 1.0
                a = il
                bent = True
                break
            if su < min_up:
                min_up, iu = su, j
            if sl > max_lo:
                max_lo, il = sl, j
        if not bent:
            u[a:n] = (F[n] - ya) / (X[n] - X[a])
            a = n
    return u


def _block_energy(idx_cols, D, fid, a, b, inv_len2, term_w, term_edges, eps, sigma):
    """Energies of a block of candidate tuples; idx_cols[k] is an index array per node."""
    K = len(idx_cols)
    shape = np.broadcast(*idx_cols).shape
    total = np.zeros(shape)
    for k in range(K):
        total += fid[k][idx_cols[k]]
    q = [D[idx_cols[a[e]], idx_cols[b[e]]] ** 2 * inv_len2[e] for e in range(len(a))]
    for t in range(len(term_w)):
        s = np.zeros(shape)
        for e in term_edges[t]:
            if e >= 0:
                s = s + q[e]
        total += term_w[t] * (np.sqrt(s + eps * eps) + 0.5 * sigma * s)
    return total


def brute_force_scan(D, fid, a, b, inv_len2, term_w, term_edges, eps, sigma):
    """Exhaustive argmin over all candidate tuples (lexicographically first on ties).

    ``D`` is the (M, M) candidate distance table, ``fid[k, m]`` the fidelity
    energy of node k at candidate m.
    """
    K, M = fid.shape
    best = math.inf
    best_idx = np.zeros(K, dtype=np.int64)
    tail = min(K, 2)
    head = K - tail
    grids = np.meshgrid(*([np.arange(M)] * tail), indexing="ij")
    for prefix in itertools.product(range(M), repeat=head):
        cols = [np.full(grids[0].shape, p) for p in prefix] + list(grids)
        vals = _block_energy(cols, D, fid, a, b, inv_len2, term_w, term_edges, eps, sigma)
        flat = int(np.argmin(vals))
        if vals.flat[flat] < best:
            best = float(vals.flat[flat])
            best_idx[:head] = prefix
            best_idx[head:] = np.unravel_index(flat, vals.shape)
    return best, best_idx
