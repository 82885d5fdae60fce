"""Compiled per-node kernels for the hot loops of the flow right-hand side."""

import numba
import numpy as np


@numba.njit(cache=True)
def quadratic_packed(ginv, dpk, pi, pj, out):
    """Symmetrised first-order products of the flow equation at every node.

    ``ginv`` (P, d, d), ``dpk`` (P, d, ncomp) with dpk[n, a, c] = d_a g_c for the
    packed component c = (pi[c], pj[c]); result written to ``out`` (P, ncomp).
    """
    P = ginv.shape[0]
    d = ginv.shape[1]
    nc = dpk.shape[2]
    D = np.empty((d, d, d))
    M = np.empty((d, d, d))
    DG = np.empty((d, d, d))
    Q = np.empty((d, d, d))
    MG = np.empty((d, d, d))
    for n in range(P):
        G = ginv[n]
        for a in range(d):
            for c in range(nc):
                v = dpk[n, a, c]
                D[a, pi[c], pj[c]] = v
                D[a, pj[c], pi[c]] = v
        for a in range(d):
            for p in range(d):
                for r in range(d):
                    s = 0.0
                    s2 = 0.0
                    for q in range(d):
                        s += G[p, q] * D[a, q, r]
                        s2 += D[a, p, q] * G[q, r]
                    M[a, p, r] = s
                    DG[a, p, r] = s2
        for b in range(d):
            for j in range(d):
                for q in range(d):
                    s = 0.0
                    s3 = 0.0
                    for a in range(d):
                        s += G[a, b] * DG[a, j, q]
                        s3 += M[j, q, a] * G[a, b]
                    Q[b, j, q] = s
                    MG[j, q, b] = s3
        for c in range(nc):
            i = pi[c]
            j = pj[c]
            t1 = 0.0
            t2 = 0.0
            t3 = 0.0
            t4 = 0.0
            for p in range(d):
                for r in range(d):
                    t1 += M[i, p, r] * M[j, r, p]
                    t2 += Q[p, j, r] * D[r, i, p] + Q[p, i, r] * D[r, j, p]
                    t3 += Q[p, j, r] * D[p, i, r] + Q[p, i, r] * D[p, j, r]
                    t4 += MG[j, r, p] * D[p, i, r] + MG[i, r, p] * D[p, j, r]
            out[n, c] = 0.5 * (t1 + t2 - t3) - t4


@numba.njit(cache=True)
def _heap_push(keys, vals, size, key, val):
    if size == keys.shape[0]:
        nk = np.empty(2 * size)
        nv = np.empty(2 * size, dtype=np.int64)
        nk[:size] = keys
        nv[:size] = vals
        keys = nk
        vals = nv
    i = size
    keys[i] = key
    vals[i] = val
    while i > 0:
        parent = (i - 1) // 2
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return keys, vals, size + 1


@numba.njit(cache=True)
def _heap_pop(keys, vals, size):
    key = keys[0]
    val = vals[0]
    size -= 1
    keys[0] = keys[size]
    vals[0] = vals[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and keys[left + 1] < keys[left]:
            child = left + 1
        if keys[i] <= keys[child]:
            break
        keys[child], keys[i] = keys[i], keys[child]
        vals[child], vals[i] = vals[i], vals[child]
        i = child
    return key, val, size


@numba.njit(cache=True)
def grid_dijkstra(comps, n, d, offsets, pi, pj, dx, source, target):
    """Shortest distances on the periodic grid graph with edges along ``offsets``.

    Edge weight from a to b along v is dx * sqrt(v^T (g_a + g_b)/2 v). Stops once
    ``target`` is settled (pass -1 to settle every node).
    """
    P = comps.shape[0]
    nc = comps.shape[1]
    K = offsets.shape[0]
    dist = np.full(P, np.inf)
    done = np.zeros(P, dtype=np.bool_)
    strides = np.empty(d, dtype=np.int64)
    s = 1
    for a in range(d - 1, -1, -1):
        strides[a] = s
        s *= n
    coef = np.empty((K, nc))
    for k in range(K):
        for c in range(nc):
            w = 1.0 if pi[c] == pj[c] else 2.0
            coef[k, c] = w * offsets[k, pi[c]] * offsets[k, pj[c]]
    keys = np.empty(1024)
    vals = np.empty(1024, dtype=np.int64)
    size = 0
    dist[source] = 0.0
    keys, vals, size = _heap_push(keys, vals, size, 0.0, source)
    coord = np.empty(d, dtype=np.int64)
    while size > 0:
        du, u, size = _heap_pop(keys, vals, size)
        if done[u]:
            continue
        done[u] = True
        if u == target:
            break
        rem = u
        for a in range(d):
            coord[a] = rem // strides[a]
            rem = rem % strides[a]
        for k in range(K):
            v = 0
            for a in range(d):
                v += ((coord[a] + offsets[k, a]) % n) * strides[a]
            if done[v]:
                continue
            q = 0.0
            for c in range(nc):
                q += coef[k, c] * (comps[u, c] + comps[v, c])
            nd = du + dx * np.sqrt(0.5 * q)
            if nd < dist[v]:
                dist[v] = nd
                keys, vals, size = _heap_push(keys, vals, size, nd, v)
    return dist
