"""Compiled kernels for the hot paths.

Two things live here: the single-edge coupled heat-bath loop (driven by
pre-drawn edge/uniform buffers) and the exhaustive enumeration of edge
configurations used by the exact-distribution oracle.  Everything else in
the package is plain Python; these kernels are verified against the pure
Python implementations in the test suite.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _bidir_connected(indptr, nbr, eid, state, n_real, src, dst, va, vb, qa, qb, qid):
    """Is src joined to dst over open edges?  Pseudo-edges (id >= n_real)
    are always open.  Bidirectional search, expanding the smaller frontier."""
    va[src] = qid
    vb[dst] = qid
    qa[0] = src
    qb[0] = dst
    ha, ta = 0, 1
    hb, tb = 0, 1
    while ha < ta and hb < tb:
        if ta - ha <= tb - hb:
            stop = ta
            while ha < stop:
                w = qa[ha]
                ha += 1
                for i in range(indptr[w], indptr[w + 1]):
                    e = eid[i]
                    if e < n_real and state[e] == 0:
                        continue
                    x = nbr[i]
                    if vb[x] == qid:
                        return True
                    if va[x] != qid:
                        va[x] = qid
                        qa[ta] = x
                        ta += 1
        else:
            stop = tb
            while hb < stop:
                w = qb[hb]
                hb += 1
                for i in range(indptr[w], indptr[w + 1]):
                    e = eid[i]
                    if e < n_real and state[e] == 0:
                        continue
                    x = nbr[i]
                    if va[x] == qid:
                        return True
                    if vb[x] != qid:
                        vb[x] = qid
                        qb[tb] = x
                        tb += 1
    return False


@njit(cache=True)
def _bfs_side(indptr, nbr, eid, state, n_real, src, ghost_t, ghost_b, vs, queue, qid):
    """Which ghost does the open cluster of src touch: 1 for T, 2 for B,
    0 for neither.  Assumes the cluster touches at most one ghost."""
    vs[src] = qid
    queue[0] = src
    h, t = 0, 1
    while h < t:
        w = queue[h]
        h += 1
        for i in range(indptr[w], indptr[w + 1]):
            e = eid[i]
            if e < n_real and state[e] == 0:
                continue
            x = nbr[i]
            if x == ghost_t:
                return 1
            if x == ghost_b:
                return 2
            if vs[x] != qid:
                vs[x] = qid
                queue[t] = x
                t += 1
    return 0


@njit(cache=True)
def _tb_connected(indptr, nbr, eid, state, n_real, ghost_t, ghost_b, vs, queue, qid):
    """Full check: is the T ghost joined to the B ghost?"""
    vs[ghost_t] = qid
    queue[0] = ghost_t
    h, t = 0, 1
    while h < t:
        w = queue[h]
        h += 1
        for i in range(indptr[w], indptr[w + 1]):
            e = eid[i]
            if e < n_real and state[e] == 0:
                continue
            x = nbr[i]
            if x == ghost_b:
                return True
            if vs[x] != qid:
                vs[x] = qid
                queue[t] = x
                t += 1
    return False


@njit(cache=True)
def run_coupled_chunk(
    xi, xn, xe, nx_tot,
    yi, yn, ye, ny_tot,
    eu, ev, n_e,
    x_state, y_state,
    thr_conn, thr_disc,
    ghost_t, ghost_b,
    edges, us,
    t0, stride, burnin,
    do_mask, x_counts, y_counts,
    x_acc, y_acc,
    validate,
):
    """Advance the coupled pair by len(edges) ticks.

    Each tick resamples one shared edge: the unconditioned chain by the
    heat-bath rule, the conditioned chain by the same rule with openings
    vetoed when they would join T to B.  The edge is virtually closed
    before the connectivity query, which makes the query independent of
    its current state.  Returns sampling and violation counters.
    """
    n_scratch = max(nx_tot, ny_tot)
    va = np.zeros(n_scratch, np.int64)
    vb = np.zeros(n_scratch, np.int64)
    vs = np.zeros(n_scratch, np.int64)
    qa = np.empty(n_scratch, np.int64)
    qb = np.empty(n_scratch, np.int64)
    qs = np.empty(n_scratch, np.int64)
    qid = 0
    n_samples = 0
    viol_dom = 0
    viol_disc = 0
    viol_thr = 0
    for i in range(len(edges)):
        e = edges[i]
        u = us[i]
        a = np.int64(eu[e])
        b = np.int64(ev[e])

        x_state[e] = 0
        qid += 1
        joined_x = _bidir_connected(xi, xn, xe, x_state, n_e, a, b, va, vb, qa, qb, qid)
        thr_x = thr_conn if joined_x else thr_disc
        if u >= thr_x:
            x_state[e] = 1

        y_state[e] = 0
        qid += 1
        joined_y = _bidir_connected(yi, yn, ye, y_state, n_e, a, b, va, vb, qa, qb, qid)
        thr_y = thr_conn if joined_y else thr_disc
        if u >= thr_y:
            if joined_y:
                y_state[e] = 1
            else:
                qid += 1
                sa = _bfs_side(yi, yn, ye, y_state, n_e, a, ghost_t, ghost_b, vs, qs, qid)
                if sa == 0:
                    y_state[e] = 1
                else:
                    qid += 1
                    sb = _bfs_side(yi, yn, ye, y_state, n_e, b, ghost_t, ghost_b, vs, qs, qid)
                    if sb == 0 or sb == sa:
                        y_state[e] = 1

        if validate:
            if joined_y and not joined_x:
                viol_thr += 1
            for j in range(n_e):
                if x_state[j] < y_state[j]:
                    viol_dom += 1
                    break
            qid += 1
            if _tb_connected(yi, yn, ye, y_state, n_e, ghost_t, ghost_b, vs, qs, qid):
                viol_disc += 1

        t = t0 + i + 1
        if stride > 0 and t > burnin and (t - burnin) % stride == 0:
            n_samples += 1
            if do_mask:
                xm = 0
                ym = 0
                for j in range(n_e):
                    if x_state[j]:
                        xm |= 1 << j
                    if y_state[j]:
                        ym |= 1 << j
                x_counts[xm] += 1
                y_counts[ym] += 1
            for j in range(n_e):
                x_acc[j] += x_state[j]
                y_acc[j] += y_state[j]
    return n_samples, viol_dom, viol_disc, viol_thr


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


@njit(cache=True)
def enumerate_log_weights(
    n_vertices, n_total, eu, ev, gu, gv, top, bottom, log_p, log_1p, log_q
):
    """Log weight and T-B connection flag for every edge configuration.

    Configurations are bitmasks over the real edges; (gu, gv) are the
    permanently open ghost attachments of the boundary condition.  The
    cluster count includes only components containing a real vertex.
    """
    n_e = len(eu)
    n_masks = 1 << n_e
    logw = np.empty(n_masks, np.float64)
    tb = np.zeros(n_masks, np.uint8)
    parent = np.empty(n_total, np.int64)
    seen = np.full(n_total, -1, np.int64)
    mark = np.full(n_total, -1, np.int64)
    for mask in range(n_masks):
        for v in range(n_total):
            parent[v] = v
        n_open = 0
        for e in range(n_e):
            if (mask >> e) & 1:
                n_open += 1
                ra = _find(parent, eu[e])
                rb = _find(parent, ev[e])
                if ra != rb:
                    parent[rb] = ra
        for g in range(len(gu)):
            ra = _find(parent, gu[g])
            rb = _find(parent, gv[g])
            if ra != rb:
                parent[rb] = ra
        k = 0
        for v in range(n_vertices):
            r = _find(parent, v)
            if seen[r] != mask:
                seen[r] = mask
                k += 1
        connected = False
        for v in top:
            mark[_find(parent, v)] = mask
        for v in bottom:
            if mark[_find(parent, v)] == mask:
                connected = True
                break
        tb[mask] = 1 if connected else 0
        w = k * log_q
        if n_open > 0:
            w += n_open * log_p
        if n_open < n_e:
            w += (n_e - n_open) * log_1p
        logw[mask] = w
    return logw, tb


@njit(cache=True)
def warmup_kernels():
    """Touch every kernel once so JIT compilation happens up front."""
    # two real vertices joined by edge 0, ghost T = 2 on vertex 0,
    # ghost B = 3 on vertex 1
    indptr = np.array([0, 2, 4, 5, 6], np.int64)
    nbr = np.array([1, 2, 0, 3, 0, 1], np.int64)
    eid = np.array([0, 1, 0, 2, 1, 2], np.int64)
    state = np.ones(1, np.uint8)
    va = np.zeros(4, np.int64)
    vb = np.zeros(4, np.int64)
    qa = np.empty(4, np.int64)
    qb = np.empty(4, np.int64)
    _bidir_connected(indptr, nbr, eid, state, 1, 0, 1, va, vb, qa, qb, 1)
    _bfs_side(indptr, nbr, eid, state, 1, 0, 2, 3, va, qa, 2)
    _tb_connected(indptr, nbr, eid, state, 1, 2, 3, va, qa, 3)
    eu = np.array([0], np.int32)
    ev = np.array([1], np.int32)
    edges = np.array([0, 0], np.int64)
    us = np.array([0.5, 0.01], np.float64)
    counts = np.zeros(2, np.int64)
    acc = np.zeros(1, np.int64)
    run_coupled_chunk(
        indptr, nbr, eid, 4, indptr, nbr, eid, 4, eu, ev, 1,
        state.copy(), state.copy(), 0.3, 0.5, 2, 3,
        edges, us, 0, 1, 0, True, counts, counts.copy(), acc, acc.copy(), True,
    )
    enumerate_log_weights(
        2, 2, eu.astype(np.int64), ev.astype(np.int64),
        np.empty(0, np.int64), np.empty(0, np.int64),
        np.array([0], np.int64), np.array([1], np.int64),
        -0.5, -0.7, 0.69,
    )
