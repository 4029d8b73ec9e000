"""Walking-network queries: per-entity N closest stops and walk times.

Distances are exact network shortest paths between snapped nodes, computed
with one multi-source multi-label Dijkstra over the street graph. Entities
in a component without any stop are reported as unreachable.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import MalformedRow, NonPositiveSpeed
from .osm import StreetGraph

DEFAULT_N_STOPS = 3
DEFAULT_WALK_SPEED = 1.2  # m/s, conventional pedestrian planning value
DEFAULT_POI_RADIUS_M = 500.0
DEFAULT_RESIDENCE_RADIUS_M = 1600.0
RADIUS_STOP_CAP = 64  # per-node label cap in the radius pass

WALK_HEADER = b"TSWALK v1\n"


def walk_time(distance_m: float, speed_ms: float) -> int:
    """Whole seconds to walk a distance, rounded up."""
    if speed_ms <= 0:
        raise NonPositiveSpeed(f"walking speed must be positive, got {speed_ms}")
    if distance_m <= 0:
        return 0
    return int(math.ceil(distance_m / speed_ms))


@dataclass
class WalkTable:
    """Stop access rows per residence and per POI.

    Residences carry their N closest stops, extended with every stop
    within the residence access radius. POIs carry every stop within the
    POI access radius (falling back to the single nearest stop when none
    is in range). The within-radius parts are grow-only sets: adding a
    stop can never remove an access option that was in range before, which
    keeps scores monotone under zero-dwell stop insertion. The N-closest
    guarantee covers residences beyond walking range of any stop.

    Rows are ordered by (distance, stop_id); each entry is
    (stop_id, walk_distance_m, walk_time_at_unit_speed_s); the two numbers
    coincide because unit speed is 1 m/s.
    """

    n: int
    residence_rows: dict[str, list[tuple[str, float, float]]] = field(default_factory=dict)
    poi_rows: dict[str, list[tuple[str, float, float]]] = field(default_factory=dict)
    unreachable_residences: list[str] = field(default_factory=list)


def nearest_stop_rows(
    graph: StreetGraph,
    stop_nodes: dict[str, int],
    entity_nodes: dict[str, int | None],
    n: int,
    radius: float = float("inf"),
) -> dict[str, list[tuple[str, float, float]]]:
    """For each entity, its n nearest stops by network walking distance."""
    if n < 1:
        raise ValueError("n must be >= 1")
    stop_ids = sorted(stop_nodes)
    indptr, adj, w = graph.csr
    sources = np.array([graph.index_of[stop_nodes[s]] for s in stop_ids], dtype=np.int64)
    if len(sources) == 0:
        return {eid: [] for eid in entity_nodes}
    count, src, dist = _kernels.k_nearest_sources(indptr, adj, w, sources, n, radius)
    rows: dict[str, list[tuple[str, float, float]]] = {}
    for eid, node in entity_nodes.items():
        if node is None:
            rows[eid] = []
            continue
        idx = graph.index_of[node]
        entries = []
        for slot in range(int(count[idx])):
            d = float(dist[idx, slot])
            entries.append((stop_ids[int(src[idx, slot])], d, d))
        rows[eid] = entries
    return rows


def radius_stop_rows(
    graph: StreetGraph,
    stop_nodes: dict[str, int],
    entity_nodes: dict[str, int | None],
    radius_m: float,
) -> dict[str, list[tuple[str, float, float]]]:
    """All stops within walking radius per entity, nearest as fallback.

    One bounded Dijkstra per entity node; distances at stop nodes."""
    stop_ids = sorted(stop_nodes)
    indptr, adj, w = graph.csr
    stop_idx = [(sid, graph.index_of[stop_nodes[sid]]) for sid in stop_ids]
    fallback = nearest_stop_rows(graph, stop_nodes, entity_nodes, 1)
    rows: dict[str, list[tuple[str, float, float]]] = {}
    cache: dict[int, list[tuple[float, str]]] = {}
    for eid, node in entity_nodes.items():
        if node is None:
            rows[eid] = []
            continue
        n_idx = graph.index_of[node]
        if n_idx not in cache:
            dist = _kernels.bounded_dists(indptr, adj, w, n_idx, radius_m)
            cache[n_idx] = sorted(
                (float(dist[s_i]), sid) for sid, s_i in stop_idx if math.isfinite(dist[s_i])
            )
        found = cache[n_idx]
        if found:
            rows[eid] = [(sid, d, d) for d, sid in found]
        else:
            rows[eid] = fallback[eid]
    return rows


def _merge_rows(primary, extra):
    """Union of row lists, re-sorted by (distance, stop_id)."""
    seen = {}
    for sid, d, _ in primary + extra:
        if sid not in seen or d < seen[sid]:
            seen[sid] = d
    return [(sid, d, d) for d, sid in sorted((d, sid) for sid, d in seen.items())]


def closest_stops(
    graph: StreetGraph,
    stop_nodes: dict[str, int],
    residence_nodes: dict[str, int | None],
    poi_nodes: dict[str, int | None],
    n: int = DEFAULT_N_STOPS,
    poi_radius_m: float = DEFAULT_POI_RADIUS_M,
    residence_radius_m: float = DEFAULT_RESIDENCE_RADIUS_M,
) -> WalkTable:
    table = WalkTable(n=n)
    nearest = nearest_stop_rows(graph, stop_nodes, residence_nodes, n)
    in_radius = nearest_stop_rows(
        graph, stop_nodes, residence_nodes, RADIUS_STOP_CAP, radius=residence_radius_m
    )
    table.residence_rows = {
        rid: _merge_rows(nearest[rid], in_radius[rid]) for rid in nearest
    }
    table.poi_rows = radius_stop_rows(graph, stop_nodes, poi_nodes, poi_radius_m)
    table.unreachable_residences = sorted(
        rid for rid, row in table.residence_rows.items() if not row
    )
    return table


# ---------------------------------------------------------------------------
# persistence

def _pack_rows(rows: dict[str, list[tuple[str, float, float]]]) -> bytes:
    out = [struct.pack("<I", len(rows))]
    for eid in sorted(rows):
        eb = eid.encode("utf-8")
        entries = rows[eid]
        out.append(struct.pack("<H", len(eb)))
        out.append(eb)
        out.append(struct.pack("<H", len(entries)))
        for sid, dist, unit in entries:
            sb = sid.encode("utf-8")
            out.append(struct.pack("<H", len(sb)))
            out.append(sb)
            out.append(struct.pack("<d", dist))
    return b"".join(out)


class _Cursor:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def take_str(self) -> str:
        (ln,) = self.take("<H")
        s = self.data[self.pos : self.pos + ln].decode("utf-8")
        self.pos += ln
        return s


def _unpack_rows(cur: _Cursor) -> dict[str, list[tuple[str, float, float]]]:
    (n_entities,) = cur.take("<I")
    rows: dict[str, list[tuple[str, float, float]]] = {}
    for _ in range(n_entities):
        eid = cur.take_str()
        (n_entries,) = cur.take("<H")
        entries = []
        for _ in range(n_entries):
            sid = cur.take_str()
            (dist,) = cur.take("<d")
            entries.append((sid, dist, dist))
        rows[eid] = entries
    return rows


def save_walk_table(table: WalkTable, path) -> None:
    payload = b"".join([
        WALK_HEADER,
        struct.pack("<I", table.n),
        _pack_rows(table.residence_rows),
        _pack_rows(table.poi_rows),
    ])
    Path(path).write_bytes(payload)


def load_walk_table(path) -> WalkTable:
    data = Path(path).read_bytes()
    if not data.startswith(WALK_HEADER):
        raise MalformedRow(str(path), [f"{path}: bad TSWALK header"])
    cur = _Cursor(data, len(WALK_HEADER))
    (n,) = cur.take("<I")
    table = WalkTable(n=n)
    table.residence_rows = _unpack_rows(cur)
    table.poi_rows = _unpack_rows(cur)
    table.unreachable_residences = sorted(
        rid for rid, row in table.residence_rows.items() if not row
    )
    return table


def export_walk_csv(table: WalkTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("entity_kind,entity_id,rank,stop_id,distance_m\n")
        for kind, rows in (("residence", table.residence_rows), ("poi", table.poi_rows)):
            for eid in sorted(rows):
                for rank, (sid, dist, _) in enumerate(rows[eid]):
                    fh.write(f"{kind},{eid},{rank},{sid},{dist:.3f}\n")


def walkmap(table: WalkTable) -> dict[str, float | None]:
    """Residence -> distance to its nearest stop (None when unreachable)."""
    return {
        rid: (rows[0][1] if rows else None)
        for rid, rows in sorted(table.residence_rows.items())
    }
