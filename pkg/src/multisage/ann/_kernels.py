"""Numba kernels for the layered proximity graph.

Adjacency of node ``n`` on layer ``l`` lives in
``indices[start[l, n] : start[l, n] + count[l, n]]``. During construction
every (layer, node) owns a fixed slab of ``cap`` slots; the frozen index uses a
compact CSR layout with the same addressing.

Vectors are unit-norm float64 rows, so the distance is ``1 - dot``.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _dist(vecs, a, q):
    s = 0.0
    for t in range(q.shape[0]):
        s += vecs[a, t] * q[t]
    return 1.0 - s


@njit(cache=True, inline="always")
def _dist_nodes(vecs, a, b):
    s = 0.0
    for t in range(vecs.shape[1]):
        s += vecs[a, t] * vecs[b, t]
    return 1.0 - s


# -- binary min-heap over parallel (key, value) arrays -------------------------

@njit(cache=True)
def _heap_push(keys, vals, size, key, val):
    i = size
    keys[i] = key
    vals[i] = val
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return size + 1


@njit(cache=True)
def _heap_pop(keys, vals, size):
    """Remove the root; returns the new size. Caller reads the root first."""
    size -= 1
    keys[0] = keys[size]
    vals[0] = vals[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        small = left
        right = left + 1
        if right < size and keys[right] < keys[left]:
            small = right
        if keys[i] <= keys[small]:
            break
        keys[i], keys[small] = keys[small], keys[i]
        vals[i], vals[small] = vals[small], vals[i]
        i = small
    return size


@njit(cache=True)
def search_layer(vecs, q, entries, ef, layer, start, count, indices, visited, tag, ckeys, cvals):
    """Best-first beam search on one layer.

    Returns ``(dist, ids)`` of at most ``ef`` closest nodes found, unsorted.
    ``visited`` must hold no value equal to ``tag`` on entry; ``ckeys`` and
    ``cvals`` are scratch buffers with room for one entry per node.
    """
    rkeys = np.empty(ef + 2, np.float64)  # max-heap via negated keys
    rvals = np.empty(ef + 2, np.int64)
    csize = 0
    rsize = 0
    for e in entries:
        if visited[e] == tag:
            continue
        visited[e] = tag
        d = _dist(vecs, e, q)
        csize = _heap_push(ckeys, cvals, csize, d, e)
        rsize = _heap_push(rkeys, rvals, rsize, -d, e)
        if rsize > ef:
            rsize = _heap_pop(rkeys, rvals, rsize)
    while csize > 0:
        dc = ckeys[0]
        c = cvals[0]
        csize = _heap_pop(ckeys, cvals, csize)
        if dc > -rkeys[0]:
            break
        s = start[layer, c]
        for p in range(s, s + count[layer, c]):
            e = indices[p]
            if visited[e] == tag:
                continue
            visited[e] = tag
            d = _dist(vecs, e, q)
            if rsize < ef or d < -rkeys[0]:
                csize = _heap_push(ckeys, cvals, csize, d, e)
                rsize = _heap_push(rkeys, rvals, rsize, -d, e)
                if rsize > ef:
                    rsize = _heap_pop(rkeys, rvals, rsize)
    out_d = np.empty(rsize, np.float64)
    out_i = np.empty(rsize, np.int64)
    for t in range(rsize):
        out_d[t] = -rkeys[t]
        out_i[t] = rvals[t]
    return out_d, out_i


@njit(cache=True)
def _greedy(vecs, q, ep, layer, start, count, indices):
    cur = ep
    cur_d = _dist(vecs, cur, q)
    changed = True
    while changed:
        changed = False
        s = start[layer, cur]
        for p in range(s, s + count[layer, cur]):
            e = indices[p]
            d = _dist(vecs, e, q)
            if d < cur_d or (d == cur_d and e < cur):
                cur_d = d
                cur = e
                changed = True
    return cur


@njit(cache=True)
def _select_heuristic(vecs, cand_d, cand_i, m):
    """Keep a candidate only if it is closer to the base than to every kept one."""
    order = np.argsort(cand_d, kind="mergesort")
    kept = np.empty(m, np.int64)
    nk = 0
    for t in range(order.shape[0]):
        if nk >= m:
            break
        e = cand_i[order[t]]
        de = cand_d[order[t]]
        good = True
        for r in range(nk):
            if _dist_nodes(vecs, e, kept[r]) < de:
                good = False
                break
        if good:
            kept[nk] = e
            nk += 1
    return kept[:nk]


@njit(cache=True)
def build_graph(vecs, levels, m, m0, ef_construction):
    """Insert every row of ``vecs`` in order. Returns (start, count, indices, entry)."""
    n = vecs.shape[0]
    top = 0
    for i in range(n):
        if levels[i] > top:
            top = levels[i]
    cap = m0
    nlayers = top + 1
    start = np.empty((nlayers, n), np.int64)
    for l in range(nlayers):
        for i in range(n):
            start[l, i] = (l * n + i) * cap
    count = np.zeros((nlayers, n), np.int64)
    indices = np.zeros(nlayers * n * cap, np.int64)
    visited = np.zeros(n, np.int64)
    ckeys = np.empty(n + 1, np.float64)
    cvals = np.empty(n + 1, np.int64)
    tag = 0

    entry = 0
    max_level = levels[0]
    for node in range(1, n):
        q = vecs[node]
        lvl = levels[node]
        ep = entry
        for layer in range(max_level, lvl, -1):
            ep = _greedy(vecs, q, ep, layer, start, count, indices)
        eps = np.array([ep], np.int64)
        for layer in range(min(lvl, max_level), -1, -1):
            tag += 1
            wd, wi = search_layer(vecs, q, eps, ef_construction, layer, start, count, indices, visited, tag,
                                  ckeys, cvals)
            layer_cap = m0 if layer == 0 else m
            chosen = _select_heuristic(vecs, wd, wi, m)
            base = start[layer, node]
            for t in range(chosen.shape[0]):
                indices[base + t] = chosen[t]
            count[layer, node] = chosen.shape[0]
            for t in range(chosen.shape[0]):
                nb = chosen[t]
                nbase = start[layer, nb]
                c = count[layer, nb]
                if c < layer_cap:
                    indices[nbase + c] = node
                    count[layer, nb] = c + 1
                else:
                    cd = np.empty(c + 1, np.float64)
                    ci = np.empty(c + 1, np.int64)
                    for u in range(c):
                        ci[u] = indices[nbase + u]
                        cd[u] = _dist_nodes(vecs, nb, ci[u])
                    ci[c] = node
                    cd[c] = _dist_nodes(vecs, nb, node)
                    pruned = _select_heuristic(vecs, cd, ci, layer_cap)
                    for u in range(pruned.shape[0]):
                        indices[nbase + u] = pruned[u]
                    count[layer, nb] = pruned.shape[0]
            eps = wi
        if lvl > max_level:
            max_level = lvl
            entry = node
    return start, count, indices, entry


@njit(cache=True)
def search(vecs, q, entry, max_level, ef, start, count, indices, visited, tag, ckeys, cvals):
    ep = entry
    for layer in range(max_level, 0, -1):
        ep = _greedy(vecs, q, ep, layer, start, count, indices)
    eps = np.array([ep], np.int64)
    return search_layer(vecs, q, eps, ef, 0, start, count, indices, visited, tag, ckeys, cvals)


@njit(cache=True)
def search_batch(vecs, queries, k, entry, max_level, ef, start, count, indices):
    nq = queries.shape[0]
    out_i = np.full((nq, k), -1, np.int64)
    out_d = np.full((nq, k), np.inf, np.float64)
    visited = np.zeros(vecs.shape[0], np.int64)
    ckeys = np.empty(vecs.shape[0] + 1, np.float64)
    cvals = np.empty(vecs.shape[0] + 1, np.int64)
    for r in range(nq):
        d, ids = search(vecs, queries[r], entry, max_level, ef, start, count, indices, visited, r + 1,
                        ckeys, cvals)
        order = np.argsort(d, kind="mergesort")
        for t in range(min(k, order.shape[0])):
            out_i[r, t] = ids[order[t]]
            out_d[r, t] = d[order[t]]
    return out_d, out_i
