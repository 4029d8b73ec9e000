"""Pure-Python routing kernels.

These are the fallback implementations of the hot inner loops; the compiled
extension (_speedups) mirrors them operation-for-operation so both produce
bit-identical outputs. All graph inputs are CSR arrays; all times are int64
seconds with INF = 2**62 as the unreachable sentinel.
"""

from __future__ import annotations

import heapq

import numpy as np

INF = 2**62

BACKEND = "pure"


def k_nearest_sources(indptr, adj, weights, source_nodes, k, radius=float("inf")):
    """Multi-label Dijkstra: per node, the k nearest distinct sources.

    source_nodes[r] is the graph node of source rank r (several sources may
    share a node). Labels pop in (dist, rank, node) order, so per node the
    accepted list is sorted by (dist, rank) and is exactly the k smallest
    over distinct sources.

    Returns (count int32[n], src int64[n,k], dist float64[n,k]).
    """
    n = len(indptr) - 1
    count = np.zeros(n, dtype=np.int32)
    out_src = np.full((n, k), -1, dtype=np.int64)
    out_dist = np.full((n, k), np.inf, dtype=np.float64)

    heap: list[tuple[float, int, int]] = []
    for rank, node in enumerate(source_nodes):
        heapq.heappush(heap, (0.0, rank, int(node)))

    while heap:
        d, rank, node = heapq.heappop(heap)
        if d > radius:
            break
        c = count[node]
        if c >= k:
            continue
        seen = False
        for i in range(c):
            if out_src[node, i] == rank:
                seen = True
                break
        if seen:
            continue
        out_src[node, c] = rank
        out_dist[node, c] = d
        count[node] = c + 1
        for e in range(indptr[node], indptr[node + 1]):
            nxt = int(adj[e])
            nd = d + float(weights[e])
            if nd > radius:
                continue
            if count[nxt] >= k:
                continue
            heapq.heappush(heap, (nd, rank, nxt))
    return count, out_src, out_dist


def bounded_dists(indptr, adj, weights, source_node, radius):
    """Single-source Dijkstra truncated at radius; inf beyond."""
    n = len(indptr) - 1
    dist = np.full(n, np.inf, dtype=np.float64)
    dist[source_node] = 0.0
    heap = [(0.0, int(source_node))]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist[node]:
            continue
        if d > radius:
            break
        for e in range(indptr[node], indptr[node + 1]):
            nxt = int(adj[e])
            nd = d + float(weights[e])
            if nd <= radius and nd < dist[nxt]:
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    dist[dist > radius] = np.inf
    return dist


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
    """Round-based earliest-arrival search over a flattened timetable.

    Round k holds the earliest arrivals using at most k boardings; after
    each round one foot transfer may follow a ride (no chained transfers).

    Ride-phase arrivals (rho) are tracked per round separately from the
    overall labels: a ride arrival that is worse than an earlier foot
    arrival at the same stop still relays foot transfers, because walking
    twice in a row is not allowed.

    Returns int64[n_stops] arrival times, INF where unreachable within
    `horizon` (absolute seconds cap).
    """
    tau_best = np.full(n_stops, INF, dtype=np.int64)
    tau_best[origin] = depart

    marked = np.zeros(n_stops, dtype=np.uint8)
    marked[origin] = 1
    # initial foot relaxation from the origin
    for e in range(tr_indptr[origin], tr_indptr[origin + 1]):
        t = depart + int(tr_sec[e])
        s2 = int(tr_to[e])
        if t <= horizon and t < tau_best[s2]:
            tau_best[s2] = t
            marked[s2] = 1
    tau_prev = tau_best.copy()

    n_patterns = len(pat_indptr) - 1
    min_pos = np.full(n_patterns, -1, dtype=np.int64)
    rho = np.full(n_stops, INF, dtype=np.int64)

    for _ in range(max_rounds):
        # collect patterns serving marked stops
        min_pos[:] = -1
        any_marked = False
        for s in range(n_stops):
            if not marked[s]:
                continue
            any_marked = True
            for e in range(stop_pat_indptr[s], stop_pat_indptr[s + 1]):
                p = int(stop_pat[e])
                if not pattern_active[p]:
                    continue
                pos = int(stop_pat_pos[e])
                if pos >= pat_indptr[p + 1] - pat_indptr[p] - 1:
                    continue  # boarding at the terminus is pointless
                if min_pos[p] < 0 or pos < min_pos[p]:
                    min_pos[p] = pos
        if not any_marked:
            break
        marked[:] = 0

        ride_touched: list[int] = []
        for p in range(n_patterns):
            pos0 = min_pos[p]
            if pos0 < 0:
                continue
            base = int(pat_indptr[p])
            length = int(pat_indptr[p + 1]) - base
            n_trips = int(pat_trip_indptr[p + 1]) - int(pat_trip_indptr[p])
            off = int(times_offset[p])
            t = -1
            for i in range(pos0, length):
                s_i = int(pat_stops[base + i])
                if t >= 0:
                    arr = int(trip_arr[off + t * length + i])
                    if arr <= horizon and arr < rho[s_i]:
                        if rho[s_i] == INF:
                            ride_touched.append(s_i)
                        rho[s_i] = arr
                # hop on an earlier catchable trip at this stop
                reach = tau_prev[s_i]
                if reach < INF:
                    cand = t if t >= 0 else n_trips
                    while cand > 0 and int(trip_dep[off + (cand - 1) * length + i]) >= reach:
                        cand -= 1
                    if cand < n_trips and int(trip_dep[off + cand * length + i]) >= reach:
                        t = cand

        # fold ride arrivals into the labels, then one foot transfer each
        for s in ride_touched:
            v = int(rho[s])
            if v < tau_best[s]:
                tau_best[s] = v
                marked[s] = 1
            for e in range(tr_indptr[s], tr_indptr[s + 1]):
                t2 = v + int(tr_sec[e])
                s2 = int(tr_to[e])
                if t2 <= horizon and t2 < tau_best[s2]:
                    tau_best[s2] = t2
                    marked[s2] = 1
            rho[s] = INF
        tau_prev = tau_best.copy()

    return tau_best
