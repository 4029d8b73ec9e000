# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled routing kernels; mirrors pure.py operation-for-operation.

Keep any behavioral change in sync with the pure fallback: the two backends
must produce bit-identical outputs (same label acceptance order, same
integer arithmetic).
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()

INF = 2 ** 62
BACKEND = "cython"

cdef long long C_INF = 2 ** 62


cdef struct HeapEntry:
    double d
    long long rank
    long long node


cdef inline bint _lt(HeapEntry a, HeapEntry b) nogil:
    if a.d != b.d:
        return a.d < b.d
    if a.rank != b.rank:
        return a.rank < b.rank
    return a.node < b.node


cdef struct Heap:
    HeapEntry* items
    Py_ssize_t size
    Py_ssize_t cap


cdef inline int _heap_push(Heap* h, double d, long long rank, long long node) nogil:
    cdef Py_ssize_t i, parent
    cdef HeapEntry e
    cdef HeapEntry* grown
    if h.size == h.cap:
        grown = <HeapEntry*> malloc(sizeof(HeapEntry) * h.cap * 2)
        if grown == NULL:
            return -1
        for i in range(h.size):
            grown[i] = h.items[i]
        free(h.items)
        h.items = grown
        h.cap *= 2
    e.d = d
    e.rank = rank
    e.node = node
    i = h.size
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _lt(e, h.items[parent]):
            h.items[i] = h.items[parent]
            i = parent
        else:
            break
    h.items[i] = e
    return 0


cdef inline HeapEntry _heap_pop(Heap* h) nogil:
    cdef HeapEntry top = h.items[0]
    cdef HeapEntry last = h.items[h.size - 1]
    cdef Py_ssize_t i = 0, child
    h.size -= 1
    if h.size > 0:
        while True:
            child = 2 * i + 1
            if child >= h.size:
                break
            if child + 1 < h.size and _lt(h.items[child + 1], h.items[child]):
                child += 1
            if _lt(h.items[child], last):
                h.items[i] = h.items[child]
                i = child
            else:
                break
        h.items[i] = last
    return top


def k_nearest_sources(indptr, adj, weights, source_nodes, k, radius=float("inf")):
    """Per node, the k nearest distinct sources (see pure.k_nearest_sources)."""
    cdef long long[::1] c_indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef long long[::1] c_adj = np.ascontiguousarray(adj, dtype=np.int64)
    cdef double[::1] c_w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef long long[::1] c_src = np.ascontiguousarray(source_nodes, dtype=np.int64)
    cdef Py_ssize_t n = c_indptr.shape[0] - 1
    cdef int kk = int(k)
    cdef double rad = float(radius)

    count_arr = np.zeros(n, dtype=np.int32)
    out_src_arr = np.full((n, kk), -1, dtype=np.int64)
    out_dist_arr = np.full((n, kk), np.inf, dtype=np.float64)
    cdef int[::1] count = count_arr
    cdef long long[:, ::1] out_src = out_src_arr
    cdef double[:, ::1] out_dist = out_dist_arr

    cdef Heap h
    h.cap = 1024
    h.size = 0
    h.items = <HeapEntry*> malloc(sizeof(HeapEntry) * h.cap)
    if h.items == NULL:
        raise MemoryError()

    cdef Py_ssize_t r, e
    cdef long long node, nxt
    cdef int c, i
    cdef bint seen
    cdef double d, nd
    cdef HeapEntry top
    try:
        with nogil:
            for r in range(c_src.shape[0]):
                if _heap_push(&h, 0.0, r, c_src[r]) < 0:
                    with gil:
                        raise MemoryError()
            while h.size > 0:
                top = _heap_pop(&h)
                d = top.d
                node = top.node
                if d > rad:
                    break
                c = count[node]
                if c >= kk:
                    continue
                seen = False
                for i in range(c):
                    if out_src[node, i] == top.rank:
                        seen = True
                        break
                if seen:
                    continue
                out_src[node, c] = top.rank
                out_dist[node, c] = d
                count[node] = c + 1
                for e in range(c_indptr[node], c_indptr[node + 1]):
                    nxt = c_adj[e]
                    nd = d + c_w[e]
                    if nd > rad:
                        continue
                    if count[nxt] >= kk:
                        continue
                    if _heap_push(&h, nd, top.rank, nxt) < 0:
                        with gil:
                            raise MemoryError()
    finally:
        free(h.items)
    return count_arr, out_src_arr, out_dist_arr


def bounded_dists(indptr, adj, weights, source_node, radius):
    """Single-source Dijkstra truncated at radius; inf beyond."""
    cdef long long[::1] c_indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef long long[::1] c_adj = np.ascontiguousarray(adj, dtype=np.int64)
    cdef double[::1] c_w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = c_indptr.shape[0] - 1
    cdef double rad = float(radius)
    cdef long long src = int(source_node)

    dist_arr = np.full(n, np.inf, dtype=np.float64)
    cdef double[::1] dist = dist_arr
    dist[src] = 0.0

    cdef Heap h
    h.cap = 1024
    h.size = 0
    h.items = <HeapEntry*> malloc(sizeof(HeapEntry) * h.cap)
    if h.items == NULL:
        raise MemoryError()

    cdef Py_ssize_t e
    cdef long long node, nxt
    cdef double d, nd
    cdef HeapEntry top
    try:
        with nogil:
            if _heap_push(&h, 0.0, 0, src) < 0:
                with gil:
                    raise MemoryError()
            while h.size > 0:
                top = _heap_pop(&h)
                d = top.d
                node = top.node
                if d > dist[node]:
                    continue
                if d > rad:
                    break
                for e in range(c_indptr[node], c_indptr[node + 1]):
                    nxt = c_adj[e]
                    nd = d + c_w[e]
                    if nd <= rad and nd < dist[nxt]:
                        dist[nxt] = nd
                        if _heap_push(&h, nd, 0, nxt) < 0:
                            with gil:
                                raise MemoryError()
    finally:
        free(h.items)
    dist_arr[dist_arr > rad] = np.inf
    return dist_arr


def raptor_arrivals(
    n_stops,
    pat_indptr,
    pat_stops,
    pat_trip_indptr,
    times_offset,
    trip_arr,
    trip_dep,
    pattern_active,
    stop_pat_indptr,
    stop_pat,
    stop_pat_pos,
    tr_indptr,
    tr_to,
    tr_sec,
    origin,
    depart,
    max_rounds,
    horizon,
):
    """Round-based earliest arrival (see pure.raptor_arrivals)."""
    cdef long long[::1] c_pi = np.ascontiguousarray(pat_indptr, dtype=np.int64)
    cdef long long[::1] c_ps = np.ascontiguousarray(pat_stops, dtype=np.int64)
    cdef long long[::1] c_pti = np.ascontiguousarray(pat_trip_indptr, dtype=np.int64)
    cdef long long[::1] c_off = np.ascontiguousarray(times_offset, dtype=np.int64)
    cdef long long[::1] c_ta = np.ascontiguousarray(trip_arr, dtype=np.int64)
    cdef long long[::1] c_td = np.ascontiguousarray(trip_dep, dtype=np.int64)
    cdef unsigned char[::1] c_act = np.ascontiguousarray(pattern_active, dtype=np.uint8)
    cdef long long[::1] c_spi = np.ascontiguousarray(stop_pat_indptr, dtype=np.int64)
    cdef long long[::1] c_sp = np.ascontiguousarray(stop_pat, dtype=np.int64)
    cdef long long[::1] c_spp = np.ascontiguousarray(stop_pat_pos, dtype=np.int64)
    cdef long long[::1] c_ti = np.ascontiguousarray(tr_indptr, dtype=np.int64)
    cdef long long[::1] c_tt = np.ascontiguousarray(tr_to, dtype=np.int64)
    cdef long long[::1] c_ts = np.ascontiguousarray(tr_sec, dtype=np.int64)

    cdef Py_ssize_t ns = int(n_stops)
    cdef Py_ssize_t n_patterns = c_pi.shape[0] - 1
    cdef long long c_origin = int(origin)
    cdef long long c_depart = int(depart)
    cdef long long c_horizon = int(horizon)
    cdef int rounds = int(max_rounds)

    tau_arr = np.full(ns, C_INF, dtype=np.int64)
    cdef long long[::1] tau_best = tau_arr
    tau_prev_arr = np.empty(ns, dtype=np.int64)
    cdef long long[::1] tau_prev = tau_prev_arr
    marked_arr = np.zeros(ns, dtype=np.uint8)
    cdef unsigned char[::1] marked = marked_arr
    min_pos_arr = np.empty(n_patterns, dtype=np.int64)
    cdef long long[::1] min_pos = min_pos_arr
    updated_arr = np.empty(ns, dtype=np.int64)
    cdef long long[::1] ride_touched = updated_arr
    rho_arr = np.full(ns, C_INF, dtype=np.int64)
    cdef long long[::1] rho = rho_arr

    cdef Py_ssize_t s, e, p, i, u
    cdef Py_ssize_t n_touched
    cdef long long pos, base, length, n_trips, off, t, cand
    cdef long long s_i, arr, reach, t2, s2, v
    cdef bint any_marked
    cdef int rnd

    with nogil:
        tau_best[c_origin] = c_depart
        marked[c_origin] = 1
        for e in range(c_ti[c_origin], c_ti[c_origin + 1]):
            t2 = c_depart + c_ts[e]
            s2 = c_tt[e]
            if t2 <= c_horizon and t2 < tau_best[s2]:
                tau_best[s2] = t2
                marked[s2] = 1
        for s in range(ns):
            tau_prev[s] = tau_best[s]

        for rnd in range(rounds):
            for p in range(n_patterns):
                min_pos[p] = -1
            any_marked = False
            for s in range(ns):
                if marked[s] == 0:
                    continue
                any_marked = True
                for e in range(c_spi[s], c_spi[s + 1]):
                    p = c_sp[e]
                    if c_act[p] == 0:
                        continue
                    pos = c_spp[e]
                    if pos >= c_pi[p + 1] - c_pi[p] - 1:
                        continue
                    if min_pos[p] < 0 or pos < min_pos[p]:
                        min_pos[p] = pos
            if not any_marked:
                break
            for s in range(ns):
                marked[s] = 0

            n_touched = 0
            for p in range(n_patterns):
                pos = min_pos[p]
                if pos < 0:
                    continue
                base = c_pi[p]
                length = c_pi[p + 1] - base
                n_trips = c_pti[p + 1] - c_pti[p]
                off = c_off[p]
                t = -1
                for i in range(pos, length):
                    s_i = c_ps[base + i]
                    if t >= 0:
                        arr = c_ta[off + t * length + i]
                        if arr <= c_horizon and arr < rho[s_i]:
                            if rho[s_i] == C_INF:
                                ride_touched[n_touched] = s_i
                                n_touched += 1
                            rho[s_i] = arr
                    reach = tau_prev[s_i]
                    if reach < C_INF:
                        cand = t if t >= 0 else n_trips
                        while cand > 0 and c_td[off + (cand - 1) * length + i] >= reach:
                            cand -= 1
                        if cand < n_trips and c_td[off + cand * length + i] >= reach:
                            t = cand

            for u in range(n_touched):
                s = ride_touched[u]
                v = rho[s]
                if v < tau_best[s]:
                    tau_best[s] = v
                    marked[s] = 1
                for e in range(c_ti[s], c_ti[s + 1]):
                    t2 = v + c_ts[e]
                    s2 = c_tt[e]
                    if t2 <= c_horizon and t2 < tau_best[s2]:
                        tau_best[s2] = t2
                        marked[s2] = 1
                rho[s] = C_INF
            for s in range(ns):
                tau_prev[s] = tau_best[s]

    return tau_arr
