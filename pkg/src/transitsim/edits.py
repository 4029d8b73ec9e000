"""Interactive what-if editing on a cloned overlay with localized rescoring.

An overlay copies entity state from an immutable base dataset. Applying an
edit mutates only the overlay, rebuilds the cheap derived tables (walk
table always; router and matrix only when the timetable or stop geometry
changed), and computes the dirty region: the residences whose score inputs
may have changed. Rescoring recomputes exactly those residences; reverting
discards everything.

The dirty region is derived from exact diffs of the relation tables
(walk-table rows, sampled POI sets, changed matrix entries restricted to
each residence's stops), which makes it a sound superset of the truly
affected residences by construction. A newly added stop qualifies for the
paper-style fast path (only its own matrix row is computed) when it has
zero dwell, no confirmed time overrides, no other stop within the foot
transfer threshold, and leaves every POI's nearest-stop rows unchanged;
any other transit edit rebuilds the matrix on the overlay timetable.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .dataset import Dataset
from .errors import (
    NonMonotoneConfirmedTimes,
    RemoveLastStopOfLine,
    TransitSimError,
    UnknownEntity,
    UnsnappablePosition,
)
from .geo import haversine_m
from .gtfs import Line, Stop, TransitNetwork, TripEvent
from .osm import Poi, Residence, snap
from .profiles import (
    MissingSpecificPoi,
    ProfileEvaluator,
    ScenarioDefinition,
    ScoreSurface,
    aggregate,
    home_area_dists,
    poi_node_dist_arrays,
)
from .router import TransitRouter, TravelTimeMatrix
from .walk import closest_stops

SPEED_WARN_KMH = 80.0


@dataclass
class Edit:
    kind: str  # add_poi | add_stop | add_residence | move | remove
    data: dict

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, **self.data}, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(line: str) -> "Edit":
        doc = json.loads(line)
        kind = doc.pop("kind")
        return Edit(kind=kind, data=doc)


def add_poi(category_id: str, lat: float, lon: float, name: str | None = None,
            poi_id: str | None = None) -> Edit:
    return Edit("add_poi", {
        "category_id": category_id, "lat": lat, "lon": lon,
        "name": name, "poi_id": poi_id,
    })


def add_residence(lat: float, lon: float, weight: float = 1.0,
                  residence_id: str | None = None) -> Edit:
    return Edit("add_residence", {
        "lat": lat, "lon": lon, "weight": weight, "residence_id": residence_id,
    })


def add_stop(line_id: str, position: int, lat: float, lon: float,
             name: str | None = None, stop_id: str | None = None,
             dwell: int = 0, confirmed_times: dict | None = None) -> Edit:
    return Edit("add_stop", {
        "line_id": line_id, "position": position, "lat": lat, "lon": lon,
        "name": name, "stop_id": stop_id, "dwell": dwell,
        "confirmed_times": confirmed_times,
    })


def move(entity: str, entity_id: str, lat: float, lon: float) -> Edit:
    return Edit("move", {"entity": entity, "entity_id": entity_id, "lat": lat, "lon": lon})


def remove(entity: str, entity_id: str) -> Edit:
    return Edit("remove", {"entity": entity, "entity_id": entity_id})


def save_edit_script(edits: list[Edit], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in edits:
            fh.write(e.to_json() + "\n")


def load_edit_script(path) -> list[Edit]:
    with open(path, encoding="utf-8") as fh:
        return [Edit.from_json(line) for line in fh if line.strip()]


@dataclass
class DirtyRegion:
    residences: set[str] = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)


def max_implied_speed_kmh(
    trips: dict[str, TripEvent],
    positions: dict[str, tuple[float, float]],
    stop_id: str,
) -> float:
    """Fastest crow-fly speed any trip implies on legs touching a stop.

    Zero-time legs over a nonzero distance count as infinitely fast."""
    worst = 0.0
    for trip in trips.values():
        seq = trip.sequence
        for i, (sid, arr, dep) in enumerate(seq):
            if sid != stop_id:
                continue
            for j in (i - 1, i + 1):
                if not 0 <= j < len(seq):
                    continue
                other, o_arr, o_dep = seq[j]
                dt = (arr - o_dep) if j < i else (o_arr - dep)
                dist = haversine_m(*positions[sid], *positions[other])
                if dt <= 0:
                    if dist > 1.0:
                        worst = float("inf")
                    continue
                worst = max(worst, dist / dt * 3.6)
    return worst


def interpolate_insertion(
    trips: dict[str, TripEvent],
    line_id: str,
    before: str,
    after: str,
    new_stop: Stop,
    stop_positions: dict[str, tuple[float, float]],
    dwell: int = 0,
) -> dict[str, tuple[int, int]]:
    """Proposed (arrival, departure) per trip for inserting a stop between
    two pattern neighbors, linear in along-line distance; reverse-direction
    trips are proposed on their own leg."""
    lat_x, lon_x = new_stop.lat, new_stop.lon
    proposals: dict[str, tuple[int, int]] = {}
    for tid in sorted(trips):
        trip = trips[tid]
        if trip.line_id != line_id:
            continue
        seq_ids = [s for s, _, _ in trip.sequence]
        for i in range(len(seq_ids) - 1):
            a, b = seq_ids[i], seq_ids[i + 1]
            if (a, b) not in ((before, after), (after, before)):
                continue
            lat_a, lon_a = stop_positions[a]
            lat_b, lon_b = stop_positions[b]
            d_ax = haversine_m(lat_a, lon_a, lat_x, lon_x)
            d_xb = haversine_m(lat_x, lon_x, lat_b, lon_b)
            ratio = d_ax / (d_ax + d_xb) if d_ax + d_xb > 0 else 0.5
            dep_a = trip.sequence[i][2]
            arr_b = trip.sequence[i + 1][1]
            t = dep_a + int((arr_b - dep_a) * ratio + 0.5)
            proposals[tid] = (t, t + dwell)
            break
    return proposals


def apply_insertion(
    trips: dict[str, TripEvent],
    line_id: str,
    before: str,
    after: str,
    new_stop_id: str,
    times: dict[str, tuple[int, int]],
    dwell: int,
) -> dict[str, TripEvent]:
    """Patched trips with the new stop spliced in; downstream times shift
    by the dwell. Raises NonMonotoneConfirmedTimes on bad overrides."""
    out = dict(trips)
    for tid, (arr_x, dep_x) in times.items():
        trip = trips[tid]
        seq_ids = [s for s, _, _ in trip.sequence]
        for i in range(len(seq_ids) - 1):
            a, b = seq_ids[i], seq_ids[i + 1]
            if (a, b) not in ((before, after), (after, before)):
                continue
            if arr_x > dep_x:
                raise NonMonotoneConfirmedTimes(f"{tid}: arrival after departure at inserted stop")
            if not (trip.sequence[i][2] <= arr_x and dep_x - dwell <= trip.sequence[i + 1][1]):
                raise NonMonotoneConfirmedTimes(
                    f"{tid}: confirmed times outside the bracketing interval"
                )
            seq = list(trip.sequence)
            shifted = [(s, arr + dwell, dep + dwell) for s, arr, dep in seq[i + 1:]]
            new_seq = seq[: i + 1] + [(new_stop_id, arr_x, dep_x)] + shifted
            for (s1, a1, d1), (s2, a2, d2) in zip(new_seq, new_seq[1:]):
                if not (a1 <= d1 <= a2 <= d2):
                    raise NonMonotoneConfirmedTimes(f"{tid}: non-monotone patched times at {s2}")
            out[tid] = TripEvent(tid, trip.line_id, new_seq, set(trip.service_days))
            break
    return out


class ScenarioOverlay:
    """Cloned edit layer over an immutable base dataset."""

    def __init__(self, base: Dataset, scenario: ScenarioDefinition, overlay_id: str = "overlay"):
        self.base = base
        self.scenario = scenario
        self.overlay_id = overlay_id
        self.version = 0
        self.edits: list[Edit] = []
        self._edit_seq = 0
        self._reset_to_base()

    def _reset_to_base(self) -> None:
        b = self.base
        self.network = TransitNetwork(
            stops=dict(b.network.stops),
            trips=dict(b.network.trips),
            lines={lid: Line(l.line_id, list(l.pattern), l.mode) for lid, l in b.network.lines.items()},
            reference_date=b.network.reference_date,
            reference_day=b.network.reference_day,
        )
        self.pois = list(b.pois)
        self.residences = list(b.residences)
        self.stop_nodes = dict(b.stop_nodes)
        self.walk = b.walk
        self.matrix = b.matrix
        self.router: TransitRouter = b.router
        self.poi_dist_arrays = dict(b.poi_dist_arrays)
        self.dirty: set[str] = set()
        base_surfaces = b.score(self.scenario)
        self.surfaces = {
            g: ScoreSurface(s.scenario_id, g, dict(s.values)) for g, s in base_surfaces.items()
        }

    # -- state accessors

    def stop_positions(self) -> dict[str, tuple[float, float]]:
        return {sid: (s.lat, s.lon) for sid, s in self.network.stops.items()}

    def residence_by_id(self) -> dict[str, Residence]:
        return {r.residence_id: r for r in self.residences}

    def poi_by_id(self) -> dict[str, Poi]:
        return {p.poi_id: p for p in self.pois}

    def evaluator(self) -> ProfileEvaluator:
        dists = home_area_dists(
            self.poi_dist_arrays,
            self.base.graph,
            {r.residence_id: r.snapped_node for r in self.residences},
        )
        return ProfileEvaluator(
            self.matrix,
            self.walk,
            self.pois,
            home_radius_m=self.base.defaults["home_radius_m"],
            poi_node_dists=dists,
            roundtrip_factor=self.base.defaults["roundtrip_walk_factor"],
        )

    def _snap(self, lat: float, lon: float) -> int:
        node = snap(lat, lon, self.base.graph, radius_m=self.base.defaults["snap_radius_m"])
        if node is None:
            raise UnsnappablePosition(f"({lat}, {lon}) has no street node within snap radius")
        return node

    def _next_id(self, prefix: str) -> str:
        self._edit_seq += 1
        return f"{prefix}{self._edit_seq:03d}"

    def propose_insertion(self, line_id: str, position: int, lat: float, lon: float, dwell: int = 0):
        """Schedule proposal for the UI confirmation dialog."""
        line = self.network.lines.get(line_id)
        if line is None:
            raise UnknownEntity("line", line_id)
        if not 1 <= position <= len(line.pattern) - 1:
            raise TransitSimError(f"insertion position must be 1..{len(line.pattern) - 1}")
        node = self._snap(lat, lon)
        idx = self.base.graph.index_of[node]
        stop = Stop("?", "?", float(self.base.graph.lats[idx]), float(self.base.graph.lons[idx]))
        return interpolate_insertion(
            {t: tr for t, tr in self.network.trips.items() if tr.line_id == line_id},
            line_id, line.pattern[position - 1], line.pattern[position],
            stop, self.stop_positions(), dwell,
        )

    # -- sampling snapshots for the dirty diff

    def _sampling_state(self, evaluator: ProfileEvaluator) -> dict:
        state: dict[tuple[str, int, str], tuple] = {}
        for profile in self.scenario.profiles:
            for e_i, entry in enumerate(profile.entries):
                if entry.visits_per_week <= 0:
                    continue
                for res in self.residences:
                    rid = res.residence_id
                    try:
                        sampled = tuple(
                            evaluator.sample_pois(entry, rid, profile.walking_speed)
                        )
                    except (TransitSimError, MissingSpecificPoi):
                        sampled = ()
                    state[(profile.group_id, e_i, rid)] = sampled
        return state

    # -- the edit operations

    def apply(self, edit: Edit) -> DirtyRegion:
        pre_walk = self.walk
        pre_matrix = self.matrix
        pre_sampling = self._sampling_state(self.evaluator())
        pre_residences = {r.residence_id for r in self.residences}

        region = DirtyRegion()
        kind = edit.kind
        if kind == "add_poi":
            self._apply_add_poi(edit, region)
        elif kind == "add_residence":
            self._apply_add_residence(edit, region)
        elif kind == "add_stop":
            self._apply_add_stop(edit, region)
        elif kind == "move":
            self._apply_move(edit, region)
        elif kind == "remove":
            self._apply_remove(edit, region)
        else:
            raise TransitSimError(f"unknown edit kind {kind!r}")

        self._rebuild_derived(edit, region, pre_walk)
        self._compute_dirty(edit, region, pre_walk, pre_matrix, pre_sampling, pre_residences)

        self.dirty |= region.residences
        self.edits.append(edit)
        self.version += 1
        return region

    def _apply_add_poi(self, edit: Edit, region: DirtyRegion) -> None:
        d = edit.data
        pid = d.get("poi_id") or self._next_id("edit-poi-")
        if pid in self.poi_by_id():
            raise TransitSimError(f"poi id {pid!r} already exists")
        node = self._snap(d["lat"], d["lon"])
        self.pois = self.pois + [Poi(
            poi_id=pid, category_id=d["category_id"], lat=d["lat"], lon=d["lon"],
            name=d.get("name") or pid, snapped_node=node,
        )]
        edit.data = {**d, "poi_id": pid}

    def _apply_add_residence(self, edit: Edit, region: DirtyRegion) -> None:
        d = edit.data
        rid = d.get("residence_id") or self._next_id("edit-res-")
        if rid in self.residence_by_id():
            raise TransitSimError(f"residence id {rid!r} already exists")
        node = self._snap(d["lat"], d["lon"])
        self.residences = self.residences + [Residence(
            residence_id=rid, lat=d["lat"], lon=d["lon"],
            est_population_weight=d.get("weight", 1.0), snapped_node=node,
        )]
        edit.data = {**d, "residence_id": rid}
        region.residences.add(rid)

    def _apply_add_stop(self, edit: Edit, region: DirtyRegion) -> None:
        d = edit.data
        line = self.network.lines.get(d["line_id"])
        if line is None:
            raise UnknownEntity("line", d["line_id"])
        position = d["position"]
        if not 1 <= position <= len(line.pattern) - 1:
            raise TransitSimError(f"insertion position must be 1..{len(line.pattern) - 1}")
        sid = d.get("stop_id") or self._next_id("edit-stop-")
        if sid in self.network.stops:
            raise TransitSimError(f"stop id {sid!r} already exists")
        node = self._snap(d["lat"], d["lon"])
        idx = self.base.graph.index_of[node]
        stop = Stop(sid, d.get("name") or sid,
                    float(self.base.graph.lats[idx]), float(self.base.graph.lons[idx]),
                    served_lines={line.line_id})
        before, after = line.pattern[position - 1], line.pattern[position]
        dwell = int(d.get("dwell", 0))
        line_trips = {t: tr for t, tr in self.network.trips.items() if tr.line_id == line.line_id}
        proposal = interpolate_insertion(
            line_trips, line.line_id, before, after, stop, self.stop_positions(), dwell
        )
        if not proposal:
            raise TransitSimError(
                f"no trip of {line.line_id} serves the segment {before}-{after}"
            )
        times = dict(proposal)
        confirmed = d.get("confirmed_times") or {}
        for tid, pair in confirmed.items():
            if tid not in times:
                raise UnknownEntity("trip", tid)
            times[tid] = (int(pair[0]), int(pair[1]))
        patched = apply_insertion(
            self.network.trips, line.line_id, before, after, sid, times, dwell
        )
        stops = dict(self.network.stops)
        stops[sid] = stop
        lines = dict(self.network.lines)
        new_pattern = list(line.pattern)
        new_pattern.insert(position, sid)
        lines[line.line_id] = Line(line.line_id, new_pattern, line.mode)
        self.network = TransitNetwork(
            stops=stops, trips=patched, lines=lines,
            reference_date=self.network.reference_date,
            reference_day=self.network.reference_day,
        )
        self.stop_nodes = {**self.stop_nodes, sid: node}
        edit.data = {**d, "stop_id": sid, "dwell": dwell}

    def _apply_move(self, edit: Edit, region: DirtyRegion) -> None:
        d = edit.data
        entity, eid = d["entity"], d["entity_id"]
        if entity == "poi":
            by_id = self.poi_by_id()
            if eid not in by_id:
                raise UnknownEntity("poi", eid)
            node = self._snap(d["lat"], d["lon"])
            old = by_id[eid]
            self.pois = [
                p if p.poi_id != eid else Poi(eid, old.category_id, d["lat"], d["lon"], old.name, node)
                for p in self.pois
            ]
        elif entity == "residence":
            by_id = self.residence_by_id()
            if eid not in by_id:
                raise UnknownEntity("residence", eid)
            node = self._snap(d["lat"], d["lon"])
            old = by_id[eid]
            self.residences = [
                r if r.residence_id != eid
                else Residence(eid, d["lat"], d["lon"], old.est_population_weight, node)
                for r in self.residences
            ]
            region.residences.add(eid)
        elif entity == "stop":
            if eid not in self.network.stops:
                raise UnknownEntity("stop", eid)
            node = self._snap(d["lat"], d["lon"])
            idx = self.base.graph.index_of[node]
            old = self.network.stops[eid]
            moved = Stop(eid, old.name, float(self.base.graph.lats[idx]),
                         float(self.base.graph.lons[idx]),
                         served_lines=set(old.served_lines),
                         hourly_frequency=list(old.hourly_frequency))
            stops = dict(self.network.stops)
            stops[eid] = moved
            self.network = TransitNetwork(
                stops=stops, trips=self.network.trips, lines=self.network.lines,
                reference_date=self.network.reference_date,
                reference_day=self.network.reference_day,
            )
            self.stop_nodes = {**self.stop_nodes, eid: node}
            region.warnings.extend(self._implausible_speeds(eid))
        else:
            raise TransitSimError(f"unknown entity kind {entity!r}")

    def _apply_remove(self, edit: Edit, region: DirtyRegion) -> None:
        d = edit.data
        entity, eid = d["entity"], d["entity_id"]
        if entity == "poi":
            if eid not in self.poi_by_id():
                raise UnknownEntity("poi", eid)
            self.pois = [p for p in self.pois if p.poi_id != eid]
            self.poi_dist_arrays.pop(eid, None)
        elif entity == "residence":
            if eid not in self.residence_by_id():
                raise UnknownEntity("residence", eid)
            self.residences = [r for r in self.residences if r.residence_id != eid]
            for surface in self.surfaces.values():
                surface.values.pop(eid, None)
            self.dirty.discard(eid)
        elif entity == "stop":
            if eid not in self.network.stops:
                raise UnknownEntity("stop", eid)
            for line in self.network.lines.values():
                if eid in line.pattern and len(line.pattern) <= 2:
                    raise RemoveLastStopOfLine(
                        f"removing {eid} would leave line {line.line_id} without a usable pattern"
                    )
            stops = {s: st for s, st in self.network.stops.items() if s != eid}
            lines = {
                lid: Line(lid, [s for s in l.pattern if s != eid], l.mode)
                for lid, l in self.network.lines.items()
            }
            trips = {}
            for tid, trip in self.network.trips.items():
                if all(s != eid for s, _, _ in trip.sequence):
                    trips[tid] = trip
                    continue
                seq = [(s, a, dd) for s, a, dd in trip.sequence if s != eid]
                if len(seq) >= 2:
                    trips[tid] = TripEvent(tid, trip.line_id, seq, set(trip.service_days))
            self.network = TransitNetwork(
                stops=stops, trips=trips, lines=lines,
                reference_date=self.network.reference_date,
                reference_day=self.network.reference_day,
            )
            self.stop_nodes = {s: n for s, n in self.stop_nodes.items() if s != eid}
        else:
            raise TransitSimError(f"unknown entity kind {entity!r}")

    def _implausible_speeds(self, stop_id: str) -> list[str]:
        worst = max_implied_speed_kmh(self.network.trips, self.stop_positions(), stop_id)
        if worst > SPEED_WARN_KMH:
            return [f"moved stop {stop_id} implies up to {worst:.0f} km/h between stops"]
        return []

    # -- derived tables

    def _transit_changed(self, edit: Edit) -> bool:
        return edit.kind == "add_stop" or (
            edit.kind in ("move", "remove") and edit.data.get("entity") == "stop"
        )

    def _rebuild_derived(self, edit: Edit, region: DirtyRegion, pre_walk) -> None:
        b = self.base
        transit_changed = self._transit_changed(edit)
        if transit_changed:
            self.router = TransitRouter(
                self.network, b.graph, self.stop_nodes,
                transfer_threshold_m=b.defaults["transfer_threshold_m"],
                min_transfer_s=b.defaults["min_transfer_s"],
                default_speed=b.defaults["walk_speed_ms"],
                horizon_s=b.defaults["horizon_s"],
                sampling_minutes=tuple(b.defaults["sampling_minutes"]),
            )
        self.walk = closest_stops(
            b.graph,
            self.stop_nodes,
            {r.residence_id: r.snapped_node for r in self.residences},
            {p.poi_id: p.snapped_node for p in self.pois},
            n=b.defaults["n_closest_stops"],
            poi_radius_m=b.defaults["poi_access_radius_m"],
            residence_radius_m=b.defaults["residence_access_radius_m"],
        )
        # home-area distance maps for added/moved POIs
        if edit.kind == "add_poi" or (edit.kind == "move" and edit.data.get("entity") == "poi"):
            pid = edit.data["poi_id"] if edit.kind == "add_poi" else edit.data["entity_id"]
            poi = self.poi_by_id()[pid]
            fresh = poi_node_dist_arrays(b.graph, [poi], b.defaults["home_radius_m"])
            self.poi_dist_arrays = {**self.poi_dist_arrays, **fresh}

        poi_changed = edit.kind == "add_poi" or (
            edit.kind in ("move", "remove") and edit.data.get("entity") == "poi"
        )
        if transit_changed or poi_changed:
            if self._fast_row_patch_applies(edit, pre_walk):
                self._patch_matrix_with_new_row(edit)
            else:
                self.matrix = self.router.build_matrix(
                    self.pois, self.walk,
                    mode_mask=self.base.matrix.mode_mask,
                    max_transfers=b.defaults["max_transfers"],
                    workers=b.defaults["workers"],
                )

    def _fast_row_patch_applies(self, edit: Edit, pre_walk) -> bool:
        if edit.kind != "add_stop":
            return False
        if edit.data.get("dwell", 0) != 0 or edit.data.get("confirmed_times"):
            return False
        # no other stop within foot-transfer range of the new stop
        sid = edit.data["stop_id"]
        node = self.stop_nodes[sid]
        indptr, adj, w = self.base.graph.csr
        dist = _kernels.bounded_dists(
            indptr, adj, w, self.base.graph.index_of[node],
            self.base.defaults["transfer_threshold_m"],
        )
        for other, o_node in self.stop_nodes.items():
            if other != sid and np.isfinite(dist[self.base.graph.index_of[o_node]]):
                return False
        # every POI's nearest-stop rows must be unchanged
        return self.walk.poi_rows == pre_walk.poi_rows

    def _patch_matrix_with_new_row(self, edit: Edit) -> None:
        sid = edit.data["stop_id"]
        old = self.matrix
        insert_at = bisect_left(old.stop_ids, sid)
        row = self.router.matrix_rows(
            [self.router.stop_index[sid]], old.poi_ids, self.walk,
            old.mode_mask, self.base.defaults["max_transfers"],
        )
        data = np.insert(old.data, insert_at, row[:, 0, :], axis=1)
        stop_ids = list(old.stop_ids)
        stop_ids.insert(insert_at, sid)
        self.matrix = TravelTimeMatrix(
            stop_ids=stop_ids, poi_ids=list(old.poi_ids), data=data,
            mode_mask=old.mode_mask, sampling_minutes=old.sampling_minutes,
        )

    # -- dirty region

    def _compute_dirty(self, edit, region, pre_walk, pre_matrix, pre_sampling, pre_residences) -> None:
        post_sampling = self._sampling_state(self.evaluator())
        current = {r.residence_id for r in self.residences}

        # (1) walk rows changed
        for rid in current:
            if pre_walk.residence_rows.get(rid) != self.walk.residence_rows.get(rid):
                region.residences.add(rid)
        # (2) sampled POI sets changed
        for key, sampled in post_sampling.items():
            rid = key[2]
            if rid in region.residences or rid not in current:
                continue
            if pre_sampling.get(key, ()) != sampled:
                region.residences.add(rid)
        # (3) matrix entries changed for pairs a residence actually uses
        if self.matrix is not pre_matrix:
            changed_sp, changed_pois = _matrix_diff(pre_matrix, self.matrix)
            if changed_sp or changed_pois:
                stops_of: dict[str, set[str]] = {
                    rid: {s for s, _, _ in rows}
                    for rid, rows in self.walk.residence_rows.items()
                }
                for key, sampled in post_sampling.items():
                    rid = key[2]
                    if rid in region.residences or rid not in current:
                        continue
                    used_pois = {pid for pid, _ in sampled}
                    if used_pois & changed_pois:
                        region.residences.add(rid)
                        continue
                    for s in stops_of.get(rid, ()):
                        if any((s, pid) in changed_sp for pid in used_pois):
                            region.residences.add(rid)
                            break
        region.residences &= current


def _matrix_diff(old: TravelTimeMatrix, new: TravelTimeMatrix):
    """((stop_id, poi_id) pairs with changed entries, poi ids added/removed)."""
    changed_sp: set[tuple[str, str]] = set()
    changed_pois: set[str] = set(old.poi_ids) ^ set(new.poi_ids)
    common_pois = [p for p in new.poi_ids if p in set(old.poi_ids)]
    common_stops = [s for s in new.stop_ids if s in set(old.stop_ids)]
    old_s = {s: i for i, s in enumerate(old.stop_ids)}
    new_s = {s: i for i, s in enumerate(new.stop_ids)}
    old_p = {p: i for i, p in enumerate(old.poi_ids)}
    new_p = {p: i for i, p in enumerate(new.poi_ids)}
    for p in common_pois:
        oc = old.data[:, :, old_p[p]]
        nc = new.data[:, :, new_p[p]]
        for s in common_stops:
            if not np.array_equal(oc[:, old_s[s]], nc[:, new_s[s]]):
                changed_sp.add((s, p))
    return changed_sp, changed_pois


def rescore(overlay: ScenarioOverlay) -> dict[str, dict[str, float | None]]:
    """Recompute weekly times for the dirty residences only; returns the
    patch per group (and AGGREGATE) that was merged into the surfaces."""
    if not overlay.dirty:
        overlay.version += 1
        return {}
    evaluator = overlay.evaluator()
    scenario = overlay.scenario
    current = {r.residence_id for r in overlay.residences}
    todo = sorted(overlay.dirty & current)
    patch: dict[str, dict[str, float | None]] = {g: {} for g in overlay.surfaces}
    from .errors import Unserved

    for profile in scenario.profiles:
        surface = overlay.surfaces[profile.group_id]
        for rid in todo:
            try:
                value = evaluator.weekly_time(profile, rid)
            except Unserved:
                value = None
            surface.values[rid] = value
            patch[profile.group_id][rid] = value
    agg = aggregate(scenario, overlay.surfaces, todo)
    for rid in todo:
        overlay.surfaces["AGGREGATE"].values[rid] = agg.values[rid]
        patch["AGGREGATE"][rid] = agg.values[rid]
    overlay.dirty = set()
    overlay.version += 1
    return patch


def revert(overlay: ScenarioOverlay) -> None:
    overlay.edits = []
    overlay._reset_to_base()
    overlay.version += 1


def full_recompute(overlay: ScenarioOverlay) -> dict[str, ScoreSurface]:
    """From-scratch recomputation of the overlay's current entity state:
    fresh router, walk table, matrix, home areas, and all residences
    rescored. The incremental path must match this exactly."""
    b = overlay.base
    router = TransitRouter(
        overlay.network, b.graph, overlay.stop_nodes,
        transfer_threshold_m=b.defaults["transfer_threshold_m"],
        min_transfer_s=b.defaults["min_transfer_s"],
        default_speed=b.defaults["walk_speed_ms"],
        horizon_s=b.defaults["horizon_s"],
        sampling_minutes=tuple(b.defaults["sampling_minutes"]),
    )
    walk = closest_stops(
        b.graph,
        overlay.stop_nodes,
        {r.residence_id: r.snapped_node for r in overlay.residences},
        {p.poi_id: p.snapped_node for p in overlay.pois},
        n=b.defaults["n_closest_stops"],
        poi_radius_m=b.defaults["poi_access_radius_m"],
        residence_radius_m=b.defaults["residence_access_radius_m"],
    )
    matrix = router.build_matrix(
        overlay.pois, walk,
        mode_mask=b.matrix.mode_mask,
        max_transfers=b.defaults["max_transfers"],
        workers=b.defaults["workers"],
    )
    arrays = poi_node_dist_arrays(b.graph, overlay.pois, b.defaults["home_radius_m"])
    dists = home_area_dists(
        arrays, b.graph, {r.residence_id: r.snapped_node for r in overlay.residences}
    )
    evaluator = ProfileEvaluator(
        matrix, walk, overlay.pois,
        home_radius_m=b.defaults["home_radius_m"],
        poi_node_dists=dists,
        roundtrip_factor=b.defaults["roundtrip_walk_factor"],
    )
    rids = sorted(r.residence_id for r in overlay.residences)
    return evaluator.evaluate(overlay.scenario, rids)
