"""Time-dependent earliest-arrival transit routing and matrix construction.

The search is round-based (one boarding per round) over a flattened
timetable: trips are instantiated for day offsets 0..3 relative to the
reference day so overnight queries roll into the following days. Foot
transfers connect stops within a walking threshold on the street graph; at
most one foot transfer may follow each ride, never two in a row. Arrivals
beyond 24 h after departure are unreachable.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EntryUnreachable, MalformedRow, UnknownStop
from .gtfs import TransitNetwork
from .osm import StreetGraph
from .walk import DEFAULT_WALK_SPEED, WalkTable, walk_time

INF = _kernels.INF
UNREACHABLE = 0xFFFFFFFF

TRANSFER_THRESHOLD_M = 300.0
MIN_TRANSFER_S = 60
HORIZON_S = 86400
MAX_TRANSFERS = 4
DAY_INSTANCES = 4
SAMPLING_MINUTES = (0, 15, 30, 45)

MATRIX_HEADER = b"TSMAT v1\n"


@dataclass
class Leg:
    kind: str  # "walk" | "ride"
    line_id: str | None
    board_stop: str
    alight_stop: str
    depart: int
    arrive: int
    trip_id: str | None = None


@dataclass
class Journey:
    depart_at: int
    legs: list[Leg] = field(default_factory=list)

    @property
    def duration(self) -> int:
        if not self.legs:
            return 0
        return self.legs[-1].arrive - self.legs[0].depart


@dataclass
class TravelTimeMatrix:
    stop_ids: list[str]
    poi_ids: list[str]
    data: np.ndarray  # uint32 (24, n_stops, n_pois); UNREACHABLE sentinel
    mode_mask: tuple[str, ...] | None = None  # None = all modes
    sampling_minutes: tuple[int, ...] = SAMPLING_MINUTES

    def __post_init__(self):
        self._stop_idx = {s: i for i, s in enumerate(self.stop_ids)}
        self._poi_idx = {p: i for i, p in enumerate(self.poi_ids)}

    def get(self, hour: int, stop_id: str, poi_id: str) -> int:
        return int(self.data[hour, self._stop_idx[stop_id], self._poi_idx[poi_id]])

    def reachable(self, hour: int, stop_id: str, poi_id: str) -> bool:
        return self.get(hour, stop_id, poi_id) != UNREACHABLE


class Timetable:
    """Flattened pattern/trip arrays for the search kernels."""

    def __init__(self, network: TransitNetwork, day_instances: int = DAY_INSTANCES):
        self.stop_ids = sorted(network.stops)
        self.stop_index = {s: i for i, s in enumerate(self.stop_ids)}
        self.network = network

        # group day-instantiated trips into patterns of identical stop
        # sequence per line, split so trips within a pattern never overtake
        groups: dict[tuple[str, tuple[int, ...]], list[tuple[int, str, int, list[int], list[int]]]] = {}
        for tid in sorted(network.trips):
            trip = network.trips[tid]
            seq_idx = tuple(self.stop_index[s] for s, _, _ in trip.sequence)
            arrs = [a for _, a, _ in trip.sequence]
            deps = [d for _, _, d in trip.sequence]
            days = {w % 7 for w in trip.service_days}
            for offset in range(day_instances):
                if (network.reference_day + offset) % 7 not in days:
                    continue
                shift = offset * 86400
                key = (trip.line_id, seq_idx)
                groups.setdefault(key, []).append(
                    (deps[0] + shift, tid, offset,
                     [a + shift for a in arrs], [d + shift for d in deps])
                )

        # each pattern: stops + trips sorted by first departure; overtaking
        # instances spill into sibling patterns with the same stops
        patterns: list[dict] = []
        for (line_id, seq_idx) in sorted(groups):
            instances = sorted(groups[(line_id, seq_idx)])
            layers: list[list[tuple[int, str, int, list[int], list[int]]]] = []
            for inst in instances:
                placed = False
                for layer in layers:
                    prev = layer[-1]
                    if all(a >= b for a, b in zip(inst[3], prev[3])) and all(
                        a >= b for a, b in zip(inst[4], prev[4])
                    ):
                        layer.append(inst)
                        placed = True
                        break
                if not placed:
                    layers.append([inst])
            for layer in layers:
                patterns.append({"line": line_id, "stops": seq_idx, "trips": layer})

        self.patterns = patterns
        n_pat = len(patterns)
        self.pat_indptr = np.zeros(n_pat + 1, dtype=np.int64)
        self.pat_trip_indptr = np.zeros(n_pat + 1, dtype=np.int64)
        self.times_offset = np.zeros(n_pat, dtype=np.int64)
        self.pattern_line = [p["line"] for p in patterns]

        total_stops = sum(len(p["stops"]) for p in patterns)
        total_times = sum(len(p["stops"]) * len(p["trips"]) for p in patterns)
        self.pat_stops = np.zeros(total_stops, dtype=np.int64)
        self.trip_arr = np.zeros(total_times, dtype=np.int64)
        self.trip_dep = np.zeros(total_times, dtype=np.int64)
        self.trip_meta: list[list[tuple[str, int]]] = []  # per pattern: (trip_id, day_offset)

        s_cur = 0
        t_cur = 0
        for p_i, p in enumerate(patterns):
            self.pat_indptr[p_i] = s_cur
            length = len(p["stops"])
            self.pat_stops[s_cur : s_cur + length] = p["stops"]
            self.times_offset[p_i] = t_cur
            meta = []
            for _, tid, offset, arrs, deps in p["trips"]:
                self.trip_arr[t_cur : t_cur + length] = arrs
                self.trip_dep[t_cur : t_cur + length] = deps
                t_cur += length
                meta.append((tid, offset))
            self.trip_meta.append(meta)
            s_cur += length
        self.pat_indptr[n_pat] = s_cur
        trip_counts = np.array([len(p["trips"]) for p in patterns], dtype=np.int64)
        self.pat_trip_indptr = np.concatenate(([0], np.cumsum(trip_counts)))

        # stop -> (pattern, position) adjacency
        n_stops = len(self.stop_ids)
        entries: list[list[tuple[int, int]]] = [[] for _ in range(n_stops)]
        for p_i, p in enumerate(patterns):
            for pos, s in enumerate(p["stops"]):
                entries[s].append((p_i, pos))
        self.stop_pat_indptr = np.zeros(n_stops + 1, dtype=np.int64)
        flat: list[tuple[int, int]] = []
        for s in range(n_stops):
            self.stop_pat_indptr[s] = len(flat)
            flat.extend(entries[s])
        self.stop_pat_indptr[n_stops] = len(flat)
        self.stop_pat = np.array([p for p, _ in flat], dtype=np.int64)
        self.stop_pat_pos = np.array([pos for _, pos in flat], dtype=np.int64)

    def pattern_mask(self, mode_mask: tuple[str, ...] | None) -> np.ndarray:
        active = np.ones(len(self.patterns), dtype=np.uint8)
        if mode_mask is None:
            return active
        allowed = set(mode_mask)
        for p_i, line_id in enumerate(self.pattern_line):
            if self.network.lines[line_id].mode not in allowed:
                active[p_i] = 0
        return active


def build_transfers(
    stop_nodes: dict[str, int],
    graph: StreetGraph,
    stop_ids: list[str],
    threshold_m: float = TRANSFER_THRESHOLD_M,
    speed: float = DEFAULT_WALK_SPEED,
    min_transfer_s: int = MIN_TRANSFER_S,
):
    """Foot transfer CSR: stops within walking threshold on the graph.

    Transfer cost is max(ceil(dist/speed), min_transfer_s) seconds.
    """
    n = len(stop_ids)
    indptr, adj, w = graph.csr
    node_of = {sid: graph.index_of[stop_nodes[sid]] for sid in stop_ids if sid in stop_nodes}
    by_node: dict[int, list[int]] = {}
    for i, sid in enumerate(stop_ids):
        if sid in node_of:
            by_node.setdefault(node_of[sid], []).append(i)

    pairs: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    for node in sorted(by_node):
        dist = _kernels.bounded_dists(indptr, adj, w, node, threshold_m)
        for other_node in sorted(by_node):
            d = float(dist[other_node])
            if not math.isfinite(d):
                continue
            sec = max(walk_time(d, speed), min_transfer_s)
            for i in by_node[node]:
                for j in by_node[other_node]:
                    if i != j:
                        pairs[i].append((j, sec))

    tr_indptr = np.zeros(n + 1, dtype=np.int64)
    flat_to: list[int] = []
    flat_sec: list[int] = []
    for i in range(n):
        tr_indptr[i] = len(flat_to)
        for j, sec in sorted(pairs[i]):
            flat_to.append(j)
            flat_sec.append(sec)
    tr_indptr[n] = len(flat_to)
    return tr_indptr, np.array(flat_to, dtype=np.int64), np.array(flat_sec, dtype=np.int64)


class TransitRouter:
    def __init__(
        self,
        network: TransitNetwork,
        graph: StreetGraph,
        stop_nodes: dict[str, int],
        *,
        transfer_threshold_m: float = TRANSFER_THRESHOLD_M,
        min_transfer_s: int = MIN_TRANSFER_S,
        default_speed: float = DEFAULT_WALK_SPEED,
        horizon_s: int = HORIZON_S,
        sampling_minutes: tuple[int, ...] = SAMPLING_MINUTES,
    ):
        self.network = network
        self.graph = graph
        self.stop_nodes = stop_nodes
        self.default_speed = default_speed
        self.horizon_s = horizon_s
        self.sampling_minutes = tuple(sampling_minutes)
        self.timetable = Timetable(network)
        self.stop_ids = self.timetable.stop_ids
        self.stop_index = self.timetable.stop_index
        self.tr_indptr, self.tr_to, self.tr_sec = build_transfers(
            stop_nodes, graph, self.stop_ids, transfer_threshold_m, default_speed, min_transfer_s
        )
        self._mask_cache: dict[tuple[str, ...] | None, np.ndarray] = {}

    def _mask(self, mode_mask: tuple[str, ...] | None) -> np.ndarray:
        key = tuple(sorted(mode_mask)) if mode_mask is not None else None
        if key not in self._mask_cache:
            self._mask_cache[key] = self.timetable.pattern_mask(key)
        return self._mask_cache[key]

    def arrivals(
        self,
        origin_idx: int,
        depart_at: int,
        max_transfers: int = MAX_TRANSFERS,
        mode_mask: tuple[str, ...] | None = None,
    ) -> np.ndarray:
        """Kernel search: int64 arrival per stop index, INF if unreachable."""
        tt = self.timetable
        return _kernels.raptor_arrivals(
            len(self.stop_ids),
            tt.pat_indptr, tt.pat_stops, tt.pat_trip_indptr, tt.times_offset,
            tt.trip_arr, tt.trip_dep, self._mask(mode_mask),
            tt.stop_pat_indptr, tt.stop_pat, tt.stop_pat_pos,
            self.tr_indptr, self.tr_to, self.tr_sec,
            origin_idx, depart_at, max_transfers + 1, depart_at + self.horizon_s,
        )

    def earliest_arrival(
        self,
        origin_stop: str,
        targets: set[str] | list[str],
        depart_at: int,
        max_transfers: int = MAX_TRANSFERS,
        mode_mask: tuple[str, ...] | None = None,
    ) -> dict[str, tuple[int, Journey]]:
        """Earliest arrival and journey per reachable target stop."""
        if origin_stop not in self.stop_index:
            raise UnknownStop(origin_stop)
        for t in targets:
            if t not in self.stop_index:
                raise UnknownStop(t)
        if not 0 <= depart_at < 2 * 86400:
            raise ValueError("depart_at out of range [0, 172800)")
        taus, parents = self._labeled_search(
            self.stop_index[origin_stop], depart_at, max_transfers + 1, self._mask(mode_mask)
        )
        out: dict[str, tuple[int, Journey]] = {}
        for t in sorted(targets):
            t_idx = self.stop_index[t]
            arrival = int(taus[-1][t_idx])
            if arrival >= INF:
                continue
            out[t] = (arrival, self._reconstruct(taus, parents, t_idx, depart_at))
        return out

    # -- labeled pure-python variant of the kernel (identical arithmetic,
    #    keeps parent pointers for journey reconstruction)

    def _labeled_search(self, origin: int, depart: int, max_rounds: int, active: np.ndarray):
        tt = self.timetable
        n = len(self.stop_ids)
        horizon = depart + self.horizon_s
        tau_best = np.full(n, INF, dtype=np.int64)
        tau_best[origin] = depart
        parent: list[dict[int, tuple]] = [{origin: ("origin",)}]
        marked = {origin}
        for e in range(self.tr_indptr[origin], self.tr_indptr[origin + 1]):
            t2 = depart + int(self.tr_sec[e])
            s2 = int(self.tr_to[e])
            if t2 <= horizon and t2 < tau_best[s2]:
                tau_best[s2] = t2
                parent[0][s2] = ("foot0", origin)
                marked.add(s2)
        taus = [tau_best.copy()]
        tau_prev = tau_best.copy()

        n_pat = len(tt.patterns)
        for _ in range(max_rounds):
            round_parent: dict[int, tuple] = {}
            min_pos: dict[int, int] = {}
            for s in sorted(marked):
                for e in range(tt.stop_pat_indptr[s], tt.stop_pat_indptr[s + 1]):
                    p = int(tt.stop_pat[e])
                    if not active[p]:
                        continue
                    pos = int(tt.stop_pat_pos[e])
                    if pos >= tt.pat_indptr[p + 1] - tt.pat_indptr[p] - 1:
                        continue
                    if p not in min_pos or pos < min_pos[p]:
                        min_pos[p] = pos
            if not marked:
                break
            marked = set()
            # ride-phase arrivals of this round with the rides behind them;
            # kept separately so a ride worse than the overall label still
            # relays one foot transfer (kernel does the same with rho)
            rho: dict[int, tuple[int, tuple]] = {}
            touched_order: list[int] = []
            for p in range(n_pat):
                if p not in min_pos:
                    continue
                base = int(tt.pat_indptr[p])
                length = int(tt.pat_indptr[p + 1]) - base
                n_trips = int(tt.pat_trip_indptr[p + 1] - tt.pat_trip_indptr[p])
                off = int(tt.times_offset[p])
                t = -1
                board_pos = -1
                for i in range(min_pos[p], length):
                    s_i = int(tt.pat_stops[base + i])
                    if t >= 0:
                        arr = int(tt.trip_arr[off + t * length + i])
                        if arr <= horizon and (s_i not in rho or arr < rho[s_i][0]):
                            if s_i not in rho:
                                touched_order.append(s_i)
                            rho[s_i] = (arr, ("ride", p, t, board_pos, i))
                    reach = int(tau_prev[s_i])
                    if reach < INF:
                        cand = t if t >= 0 else n_trips
                        while cand > 0 and int(tt.trip_dep[off + (cand - 1) * length + i]) >= reach:
                            cand -= 1
                        if cand < n_trips and int(tt.trip_dep[off + cand * length + i]) >= reach:
                            if cand != t:
                                t = cand
                                board_pos = i
            for s in touched_order:
                v, ride_info = rho[s]
                if v < tau_best[s]:
                    tau_best[s] = v
                    round_parent[s] = ride_info
                    marked.add(s)
                for e in range(self.tr_indptr[s], self.tr_indptr[s + 1]):
                    t2 = v + int(self.tr_sec[e])
                    s2 = int(self.tr_to[e])
                    if t2 <= horizon and t2 < tau_best[s2]:
                        tau_best[s2] = t2
                        round_parent[s2] = ("footride", s, v, ride_info)
                        marked.add(s2)
            taus.append(tau_best.copy())
            parent.append(round_parent)
            tau_prev = tau_best.copy()
        return taus, parent

    def _reconstruct(self, taus, parents, target: int, depart_at: int) -> Journey:
        # find the earliest round where the final value was reached
        final = int(taus[-1][target])
        r = 0
        while int(taus[r][target]) != final:
            r += 1
        raw: list[tuple] = []
        stop = target
        tt = self.timetable
        while True:
            while r > 0 and int(taus[r - 1][stop]) == int(taus[r][stop]):
                r -= 1
            info = parents[r].get(stop)
            assert info is not None, "broken parent chain"
            kind = info[0]
            if kind == "origin":
                break
            if kind == "foot0":
                _, origin = info
                raw.append(("foot", origin, stop, depart_at, int(taus[r][stop])))
                break
            if kind == "footride":
                _, s_from, ride_arr, ride_info = info
                raw.append(("foot", s_from, stop, ride_arr, int(taus[r][stop])))
                info = ride_info
            # ride leg (either a direct label improvement or the ride
            # behind a relayed foot transfer)
            _, p, t, board_pos, alight_pos = info
            raw.append(("ride", p, t, board_pos, alight_pos))
            stop = int(tt.pat_stops[tt.pat_indptr[p] + board_pos])
            r -= 1
        raw.reverse()

        legs: list[Leg] = []
        cursor = depart_at
        here = None
        for item in raw:
            if item[0] == "ride":
                _, p, t, board_pos, alight_pos = item
                base = int(tt.pat_indptr[p])
                length = int(tt.pat_indptr[p + 1]) - base
                off = int(tt.times_offset[p])
                board = self.stop_ids[int(tt.pat_stops[base + board_pos])]
                alight = self.stop_ids[int(tt.pat_stops[base + alight_pos])]
                dep = int(tt.trip_dep[off + t * length + board_pos])
                arr = int(tt.trip_arr[off + t * length + alight_pos])
                tid, _offset = tt.trip_meta[p][t]
                if cursor < dep:
                    # walking (possibly zero-length) plus waiting keeps legs
                    # contiguous in time
                    legs.append(Leg("walk", None, here or board, board, cursor, dep))
                legs.append(Leg("ride", tt.pattern_line[p], board, alight, dep, arr, trip_id=tid))
                cursor = arr
                here = alight
            else:
                _, s_from, s_to, start, arrive = item
                legs.append(Leg("walk", None, self.stop_ids[s_from], self.stop_ids[s_to], cursor, arrive))
                cursor = arrive
                here = self.stop_ids[s_to]
        return Journey(depart_at=depart_at, legs=legs)

    # -- matrix construction

    def _poi_adjacency(self, poi_ids: list[str], walk_table: WalkTable):
        adj_stop: list[int] = []
        adj_walk: list[int] = []
        poi_indptr = np.zeros(len(poi_ids) + 1, dtype=np.int64)
        for k, pid in enumerate(poi_ids):
            poi_indptr[k] = len(adj_stop)
            for sid, dist, _ in walk_table.poi_rows.get(pid, []):
                adj_stop.append(self.stop_index[sid])
                adj_walk.append(walk_time(dist, self.default_speed))
        poi_indptr[len(poi_ids)] = len(adj_stop)
        return (
            np.array(adj_stop, dtype=np.int64),
            np.array(adj_walk, dtype=np.int64),
            poi_indptr,
        )

    def matrix_rows(
        self,
        stop_indices: list[int],
        poi_ids: list[str],
        walk_table: WalkTable,
        mode_mask: tuple[str, ...] | None = None,
        max_transfers: int = MAX_TRANSFERS,
        workers: int = 1,
        progress=None,
    ) -> np.ndarray:
        """uint32 (24, len(stop_indices), n_pois) duration block."""
        n_pois = len(poi_ids)
        adj_stop_arr, adj_walk_arr, poi_indptr = self._poi_adjacency(poi_ids, walk_table)
        has_adj = poi_indptr[:-1] < poi_indptr[1:]
        reduce_at = poi_indptr[:-1][has_adj]
        data = np.full((24, len(stop_indices), n_pois), UNREACHABLE, dtype=np.uint32)

        def run_stop(slot: int) -> None:
            s = stop_indices[slot]
            for h in range(24):
                sums = np.zeros(n_pois, dtype=np.int64)
                counts = np.zeros(n_pois, dtype=np.int64)
                for minute in self.sampling_minutes:
                    depart = h * 3600 + minute * 60
                    arr = self.arrivals(s, depart, max_transfers, mode_mask)
                    best = np.full(n_pois, INF, dtype=np.int64)
                    if len(adj_stop_arr):
                        totals = arr[adj_stop_arr] + adj_walk_arr
                        best[has_adj] = np.minimum.reduceat(totals, reduce_at)
                    reachable = best < INF
                    dur = best - depart
                    sums[reachable] += dur[reachable]
                    counts[reachable] += 1
                served = counts > 0
                vals = np.full(n_pois, UNREACHABLE, dtype=np.uint32)
                vals[served] = ((sums[served] + counts[served] // 2) // counts[served]).astype(np.uint32)
                data[h, slot, :] = vals
            if progress is not None:
                progress(s)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run_stop, range(len(stop_indices))))
        else:
            for slot in range(len(stop_indices)):
                run_stop(slot)
        return data

    def build_matrix(
        self,
        pois: list,
        walk_table: WalkTable,
        mode_mask: tuple[str, ...] | None = None,
        max_transfers: int = MAX_TRANSFERS,
        workers: int = 1,
        progress=None,
    ) -> TravelTimeMatrix:
        """Hour-bucketed stop->POI durations, averaged over the sampling
        minutes; the final walking leg uses the default speed."""
        poi_ids = sorted(p.poi_id for p in pois)
        data = self.matrix_rows(
            list(range(len(self.stop_ids))), poi_ids, walk_table,
            mode_mask, max_transfers, workers, progress,
        )
        return TravelTimeMatrix(
            stop_ids=list(self.stop_ids),
            poi_ids=poi_ids,
            data=data,
            mode_mask=tuple(sorted(mode_mask)) if mode_mask is not None else None,
            sampling_minutes=self.sampling_minutes,
        )

    def explain(
        self,
        matrix: TravelTimeMatrix,
        walk_table: WalkTable,
        stop_id: str,
        poi_id: str,
        hour: int,
        max_transfers: int = MAX_TRANSFERS,
    ) -> Journey:
        """Journey behind a matrix entry: the first reachable sample of the
        hour, ending with the final walking leg to the POI."""
        if not matrix.reachable(hour, stop_id, poi_id):
            raise EntryUnreachable(f"{stop_id} -> {poi_id} at hour {hour}")
        adjacent = [
            (sid, walk_time(dist, self.default_speed))
            for sid, dist, _ in walk_table.poi_rows.get(poi_id, [])
        ]
        origin = self.stop_index[stop_id]
        for minute in self.sampling_minutes:
            depart = hour * 3600 + minute * 60
            arr = self.arrivals(origin, depart, max_transfers, matrix.mode_mask)
            best: tuple[int, str, int] | None = None
            for sid, wsec in adjacent:
                a = int(arr[self.stop_index[sid]])
                if a >= INF:
                    continue
                cand = (a + wsec, sid, wsec)
                if best is None or cand < best:
                    best = cand
            if best is None:
                continue
            total, alight_sid, wsec = best
            result = self.earliest_arrival(stop_id, {alight_sid}, depart, max_transfers, matrix.mode_mask)
            journey = result[alight_sid][1] if alight_sid in result else Journey(depart_at=depart)
            if wsec > 0 or alight_sid != stop_id:
                start = journey.legs[-1].arrive if journey.legs else depart
                journey.legs.append(
                    Leg("walk", None, alight_sid, poi_id, start, start + wsec)
                )
            return journey
        raise EntryUnreachable(f"{stop_id} -> {poi_id} at hour {hour}: no reachable sample")


# ---------------------------------------------------------------------------
# TSMAT v1 persistence: header, one JSON meta line, then raw uint32 LE data.

def save_matrix(matrix: TravelTimeMatrix, path) -> None:
    meta = {
        "hours": 24,
        "stops": matrix.stop_ids,
        "pois": matrix.poi_ids,
        "mode_mask": list(matrix.mode_mask) if matrix.mode_mask is not None else None,
        "sampling_minutes": list(matrix.sampling_minutes),
    }
    with open(path, "wb") as fh:
        fh.write(MATRIX_HEADER)
        fh.write(json.dumps(meta, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        fh.write(matrix.data.astype("<u4").tobytes())


def load_matrix(path) -> TravelTimeMatrix:
    with open(path, "rb") as fh:
        header = fh.readline()
        if header != MATRIX_HEADER:
            raise MalformedRow(str(path), [f"{path}: bad TSMAT header"])
        meta = json.loads(fh.readline())
        raw = fh.read()
    shape = (meta["hours"], len(meta["stops"]), len(meta["pois"]))
    expected = shape[0] * shape[1] * shape[2] * 4
    if len(raw) != expected:
        raise MalformedRow(str(path), [f"{path}: payload size {len(raw)} != {expected}"])
    data = np.frombuffer(raw, dtype="<u4").reshape(shape).copy()
    return TravelTimeMatrix(
        stop_ids=meta["stops"],
        poi_ids=meta["pois"],
        data=data,
        mode_mask=tuple(meta["mode_mask"]) if meta["mode_mask"] is not None else None,
        sampling_minutes=tuple(meta["sampling_minutes"]),
    )


def export_matrix_csv(matrix: TravelTimeMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("hour,stop_id,poi_id,seconds\n")
        for h in range(24):
            for i, sid in enumerate(matrix.stop_ids):
                for j, pid in enumerate(matrix.poi_ids):
                    v = int(matrix.data[h, i, j])
                    fh.write(f"{h},{sid},{pid},{'' if v == UNREACHABLE else v}\n")
