"""Mobility profile evaluation: expected travel times per residence.

A profile entry says how often a demographic group visits a POI category
per week, with hourly likelihood weights, a POI sampling strategy, and a
walking speed. Evaluation composes the hour-bucketed travel-time matrix,
the residence walk table, and the sampling rules into one weekly per-visit
travel time per residence (the visit-weighted mean over categories), plus
a census-share-weighted aggregate over groups.

Conventions for partial reachability, applied uniformly: weighted means
renormalize over the reachable/served part (hour weights over reachable
hours, sampled POIs over ones reachable from the chosen stop, category
times over served categories, group shares over served groups). A
residence is Unserved only when nothing at all is reachable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import yaml

from .errors import (
    AllWeightsZero,
    EmptyCategory,
    MissingSpecificPoi,
    ProfileValidationError,
    Unserved,
)
from .router import UNREACHABLE, TravelTimeMatrix
from .walk import DEFAULT_WALK_SPEED, WalkTable, walk_time

HOME_RADIUS_M = 8000.0
ROUNDTRIP_FACTOR = 2  # walking legs per visit (out and back)

UNSERVED = None  # surface sentinel


@dataclass
class ProfileEntry:
    category: str
    visits_per_week: float
    hourly: list[float]  # 24 weights
    sampling: str = "near"  # near | random | specific
    near_k: int = 1
    specific_poi: str | None = None


@dataclass
class MobilityProfile:
    group_id: str
    group_name: str
    walking_speed: float
    entries: list[ProfileEntry] = field(default_factory=list)


@dataclass
class ScenarioDefinition:
    scenario_id: str
    name: str
    profiles: list[MobilityProfile]
    demographic_shares: dict[str, float]
    mode_mask: tuple[str, ...] | None = None


@dataclass
class ScoreSurface:
    scenario_id: str
    group_id: str  # group id or "AGGREGATE"
    values: dict[str, float | None]  # residence_id -> seconds or Unserved

    def served(self) -> dict[str, float]:
        return {k: v for k, v in self.values.items() if v is not None}


def validate_scenario(scenario: ScenarioDefinition, poi_ids: set[str] | None = None) -> None:
    if not scenario.profiles:
        raise ProfileValidationError("scenario has no groups")
    ids = [p.group_id for p in scenario.profiles]
    if len(set(ids)) != len(ids):
        raise ProfileValidationError("duplicate group ids")
    share_sum = sum(scenario.demographic_shares.get(g, 0.0) for g in ids)
    if abs(share_sum - 1.0) > 1e-9:
        raise ProfileValidationError(f"demographic shares sum to {share_sum}, expected 1")
    for profile in scenario.profiles:
        if profile.walking_speed <= 0:
            raise ProfileValidationError(f"{profile.group_id}: walking speed must be positive")
        usable = False
        for entry in profile.entries:
            if entry.visits_per_week < 0:
                raise ProfileValidationError(
                    f"{profile.group_id}/{entry.category}: negative visits_per_week"
                )
            if len(entry.hourly) != 24 or any(w < 0 for w in entry.hourly):
                raise ProfileValidationError(
                    f"{profile.group_id}/{entry.category}: hourly must be 24 non-negative weights"
                )
            if entry.visits_per_week > 0:
                usable = True
                if not any(w > 0 for w in entry.hourly):
                    raise ProfileValidationError(
                        f"{profile.group_id}/{entry.category}: all hourly weights zero"
                    )
            if entry.sampling == "specific":
                if not entry.specific_poi:
                    raise ProfileValidationError(
                        f"{profile.group_id}/{entry.category}: specific sampling needs a POI"
                    )
                if poi_ids is not None and entry.specific_poi not in poi_ids:
                    raise MissingSpecificPoi(entry.specific_poi)
            elif entry.sampling not in ("near", "random"):
                raise ProfileValidationError(
                    f"{profile.group_id}/{entry.category}: unknown sampling {entry.sampling!r}"
                )
        if not usable:
            raise ProfileValidationError(f"{profile.group_id}: no entry with visits_per_week > 0")


def expected_poi_time(
    entry: ProfileEntry, stop_id: str, poi_id: str, matrix: TravelTimeMatrix
) -> float | None:
    """Likelihood-weighted ride time over the reachable hours, or None.

    Weights are normalized over the hours where the matrix entry is
    reachable, so scaling all weights by a constant changes nothing.
    """
    if not any(w > 0 for w in entry.hourly):
        raise AllWeightsZero(f"{entry.category}: all hourly weights zero")
    num = 0.0
    den = 0.0
    for h in range(24):
        w = entry.hourly[h]
        if w <= 0:
            continue
        t = matrix.get(h, stop_id, poi_id)
        if t == UNREACHABLE:
            continue
        num += w * t
        den += w
    if den == 0.0:
        return None
    return num / den


class ProfileEvaluator:
    """Evaluates profiles against one dataset (matrix + walk + POIs)."""

    def __init__(
        self,
        matrix: TravelTimeMatrix,
        walk: WalkTable,
        pois: list,
        home_radius_m: float = HOME_RADIUS_M,
        poi_node_dists: dict[str, dict[str, float]] | None = None,
        roundtrip_factor: int = ROUNDTRIP_FACTOR,
    ):
        self.matrix = matrix
        self.walk = walk
        self.pois_by_category: dict[str, list] = {}
        self.poi_by_id = {}
        for p in sorted(pois, key=lambda p: p.poi_id):
            self.poi_by_id[p.poi_id] = p
            self.pois_by_category.setdefault(p.category_id, []).append(p)
        self.home_radius_m = home_radius_m
        # poi_id -> residence_id -> network meters (for Random home areas)
        self.poi_residence_dists = poi_node_dists or {}
        self.roundtrip_factor = roundtrip_factor

    def _fixed_choice(self, entry: ProfileEntry, residence_id: str) -> list[str]:
        """Stop-independent POI choices (specific and random sampling)."""
        if entry.sampling == "specific":
            if entry.specific_poi not in self.poi_by_id:
                raise MissingSpecificPoi(entry.specific_poi or "<unset>")
            return [entry.specific_poi]
        category = self.pois_by_category.get(entry.category, [])
        if not category:
            raise EmptyCategory(entry.category)
        chosen = []
        for p in category:
            dists = self.poi_residence_dists.get(p.poi_id)
            if dists is None:
                chosen.append(p.poi_id)  # no distance map: whole category
            elif dists.get(residence_id, math.inf) <= self.home_radius_m:
                chosen.append(p.poi_id)
        return sorted(chosen)

    def _near_choice(
        self, entry: ProfileEntry, residence_id: str, walking_speed: float
    ) -> tuple[str, list[str], float] | None:
        """Joint stop+POI choice for near sampling: per candidate stop the
        near_k category POIs with the smallest expected times, then the
        stop minimizing round-trip walk plus their mean.

        Returns (stop_id, chosen poi ids, per-visit seconds) or None."""
        category = self.pois_by_category.get(entry.category, [])
        if not category:
            raise EmptyCategory(entry.category)
        rows = self.walk.residence_rows.get(residence_id) or []
        k = max(1, entry.near_k)
        best: tuple[int, float, str, tuple[str, ...]] | None = None
        for stop_id, dist_m, _unit in rows:
            leg = self.roundtrip_factor * walk_time(dist_m, walking_speed)
            ranked: list[tuple[float, str]] = []
            for p in category:
                t = expected_poi_time(entry, stop_id, p.poi_id, self.matrix)
                if t is not None:
                    ranked.append((t, p.poi_id))
            if not ranked:
                continue
            ranked.sort()
            top = ranked[:k]
            total = leg + sum(t for t, _ in top) / len(top)
            cand = (-len(top), total, stop_id, tuple(sorted(pid for _, pid in top)))
            if best is None or cand[:3] < best[:3]:
                best = cand
        if best is None:
            return None
        return best[2], list(best[3]), best[1]

    def sample_pois(
        self, entry: ProfileEntry, residence_id: str, walking_speed: float = DEFAULT_WALK_SPEED
    ) -> list[tuple[str, float]]:
        """(poi_id, weight) choices for one entry and residence.

        Near sampling is tied to the stop choice, so the walking speed of
        the group enters through the stop's walk leg."""
        if entry.sampling in ("specific", "random"):
            chosen = self._fixed_choice(entry, residence_id)
            if not chosen:
                return []
            weight = 1.0 / len(chosen)
            return [(pid, weight) for pid in chosen]
        choice = self._near_choice(entry, residence_id, walking_speed)
        if choice is None:
            return []
        _, chosen, _ = choice
        weight = 1.0 / len(chosen)
        return [(pid, weight) for pid in chosen]

    def category_time(
        self, entry: ProfileEntry, residence_id: str, walking_speed: float
    ) -> float | None:
        """Per-visit travel time for one entry: best stop by total
        (round-trip walk + expected ride over the chosen POIs),
        renormalized over the POIs reachable from that stop. None when
        unserved."""
        rows = self.walk.residence_rows.get(residence_id) or []
        if not rows:
            return None
        try:
            if entry.sampling == "near":
                choice = self._near_choice(entry, residence_id, walking_speed)
                return None if choice is None else choice[2]
            chosen = self._fixed_choice(entry, residence_id)
        except (EmptyCategory, MissingSpecificPoi):
            # category emptied or target removed by an edit: unserved here,
            # config-time validation still reports these upfront
            return None
        if not chosen:
            return None
        weight = 1.0 / len(chosen)
        best: tuple[int, float, str] | None = None  # (-coverage, total, stop_id)
        for stop_id, dist_m, _unit in rows:
            leg = self.roundtrip_factor * walk_time(dist_m, walking_speed)
            num = 0.0
            den = 0.0
            covered = 0
            for poi_id in chosen:
                t = expected_poi_time(entry, stop_id, poi_id, self.matrix)
                if t is None:
                    continue
                num += weight * t
                den += weight
                covered += 1
            if covered == 0:
                continue
            total = leg + num / den
            cand = (-covered, total, stop_id)
            if best is None or cand < best:
                best = cand
        if best is None:
            return None
        return best[1]

    def weekly_time(self, profile: MobilityProfile, residence_id: str) -> float:
        """Visit-weighted mean travel time per visit over a typical week.

        Raises Unserved when the residence has no reachable stop or no
        served category.
        """
        rows = self.walk.residence_rows.get(residence_id)
        if not rows:
            raise Unserved(residence_id)
        num = 0.0
        den = 0.0
        for entry in profile.entries:
            if entry.visits_per_week <= 0:
                continue
            t = self.category_time(entry, residence_id, profile.walking_speed)
            if t is None:
                continue
            num += entry.visits_per_week * t
            den += entry.visits_per_week
        if den == 0.0:
            raise Unserved(residence_id)
        return num / den

    def group_surface(
        self, scenario: ScenarioDefinition, profile: MobilityProfile, residence_ids: list[str]
    ) -> ScoreSurface:
        values: dict[str, float | None] = {}
        for rid in residence_ids:
            try:
                values[rid] = self.weekly_time(profile, rid)
            except Unserved:
                values[rid] = UNSERVED
        return ScoreSurface(scenario.scenario_id, profile.group_id, values)

    def evaluate(
        self, scenario: ScenarioDefinition, residence_ids: list[str]
    ) -> dict[str, ScoreSurface]:
        """All group surfaces plus the share-weighted AGGREGATE."""
        surfaces = {
            p.group_id: self.group_surface(scenario, p, residence_ids)
            for p in scenario.profiles
        }
        surfaces["AGGREGATE"] = aggregate(scenario, surfaces, residence_ids)
        return surfaces


def aggregate(
    scenario: ScenarioDefinition,
    group_surfaces: dict[str, ScoreSurface],
    residence_ids: list[str],
) -> ScoreSurface:
    """Share-weighted mean over served groups; Unserved only if all are."""
    values: dict[str, float | None] = {}
    for rid in residence_ids:
        num = 0.0
        den = 0.0
        for profile in scenario.profiles:
            share = scenario.demographic_shares.get(profile.group_id, 0.0)
            v = group_surfaces[profile.group_id].values.get(rid)
            if v is None:
                continue
            num += share * v
            den += share
        values[rid] = (num / den) if den > 0 else UNSERVED
    return ScoreSurface(scenario.scenario_id, "AGGREGATE", values)


def poi_node_dist_arrays(
    graph, pois: list, radius_m: float = HOME_RADIUS_M
) -> dict[str, "object"]:
    """Per POI: network distance to every graph node up to the home-area
    radius (inf beyond). One bounded Dijkstra per POI."""
    from . import _kernels

    indptr, adj, w = graph.csr
    out = {}
    for p in sorted(pois, key=lambda p: p.poi_id):
        if p.snapped_node is None:
            out[p.poi_id] = None
            continue
        out[p.poi_id] = _kernels.bounded_dists(
            indptr, adj, w, graph.index_of[p.snapped_node], radius_m
        )
    return out


def home_area_dists(
    arrays: dict, graph, residence_nodes: dict[str, int | None]
) -> dict[str, dict[str, float]]:
    """Project per-node distance arrays onto residences (id-keyed)."""
    out: dict[str, dict[str, float]] = {}
    for pid, dist in arrays.items():
        row: dict[str, float] = {}
        if dist is not None:
            for rid, node in residence_nodes.items():
                if node is None:
                    continue
                d = float(dist[graph.index_of[node]])
                if math.isfinite(d):
                    row[rid] = d
        out[pid] = row
    return out


def poi_home_areas(
    graph,
    pois: list,
    residence_nodes: dict[str, int | None],
    radius_m: float = HOME_RADIUS_M,
) -> dict[str, dict[str, float]]:
    """Network distance poi -> residence up to the home-area radius.

    Feeds Random sampling: a residence belongs to a POI's home area when
    the walking-network distance between their snapped nodes is within the
    radius.
    """
    return home_area_dists(poi_node_dist_arrays(graph, pois, radius_m), graph, residence_nodes)


# ---------------------------------------------------------------------------
# scenario / profile config (YAML)

def parse_scenario(doc: dict, source: str = "<config>") -> ScenarioDefinition:
    if not isinstance(doc, dict) or "groups" not in doc:
        raise ProfileValidationError(f"{source}: top-level 'groups' list required")
    profiles = []
    shares = {}
    for g in doc["groups"]:
        entries = []
        for e in g.get("entries", []):
            hourly = e.get("hourly", {})
            if isinstance(hourly, dict):
                vec = [0.0] * 24
                for k, v in hourly.items():
                    h = int(k)
                    if not 0 <= h <= 23:
                        raise ProfileValidationError(f"{source}: hour {h} out of range")
                    vec[h] = float(v)
            else:
                vec = [float(x) for x in hourly]
                if len(vec) != 24:
                    raise ProfileValidationError(f"{source}: hourly vector must have 24 values")
            entries.append(ProfileEntry(
                category=e["category"],
                visits_per_week=float(e.get("visits_per_week", 0.0)),
                hourly=vec,
                sampling=e.get("sampling", "near"),
                near_k=int(e.get("near_k", 1)),
                specific_poi=e.get("specific_poi"),
            ))
        profiles.append(MobilityProfile(
            group_id=g["group_id"],
            group_name=g.get("group_name", g["group_id"]),
            walking_speed=float(g.get("walking_speed", 1.2)),
            entries=entries,
        ))
        shares[g["group_id"]] = float(g.get("share", 0.0))
    mode_mask = doc.get("mode_mask", "all")
    mask = None if mode_mask in ("all", None) else tuple(sorted(mode_mask))
    scenario = ScenarioDefinition(
        scenario_id=doc.get("scenario_id", "default"),
        name=doc.get("name", doc.get("scenario_id", "default")),
        profiles=profiles,
        demographic_shares=shares,
        mode_mask=mask,
    )
    validate_scenario(scenario)
    return scenario


def load_scenario(path) -> ScenarioDefinition:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(yaml.safe_load(fh), source=str(path))


def dump_scenario(scenario: ScenarioDefinition) -> str:
    doc = {
        "scenario_id": scenario.scenario_id,
        "name": scenario.name,
        "mode_mask": list(scenario.mode_mask) if scenario.mode_mask is not None else "all",
        "groups": [
            {
                "group_id": p.group_id,
                "group_name": p.group_name,
                "walking_speed": p.walking_speed,
                "share": scenario.demographic_shares.get(p.group_id, 0.0),
                "entries": [
                    {
                        "category": e.category,
                        "visits_per_week": e.visits_per_week,
                        "sampling": e.sampling,
                        "near_k": e.near_k,
                        "specific_poi": e.specific_poi,
                        "hourly": {h: w for h, w in enumerate(e.hourly) if w > 0},
                    }
                    for e in p.entries
                ],
            }
            for p in scenario.profiles
        ],
    }
    return yaml.safe_dump(doc, sort_keys=True)


def export_surface_csv(surface: ScoreSurface, residences, path) -> None:
    pos = {r.residence_id: (r.lat, r.lon) for r in residences}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("residence_id,lat,lon,seconds\n")
        for rid in sorted(surface.values):
            lat, lon = pos.get(rid, (0.0, 0.0))
            v = surface.values[rid]
            fh.write(f"{rid},{lat:.7f},{lon:.7f},{'' if v is None else f'{v:.3f}'}\n")


def surface_geojson(surface: ScoreSurface, residences) -> dict:
    pos = {r.residence_id: (r.lat, r.lon) for r in residences}
    features = []
    for rid in sorted(surface.values):
        lat, lon = pos.get(rid, (0.0, 0.0))
        v = surface.values[rid]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "properties": {"residence_id": rid, "seconds": v},
        })
    return {"type": "FeatureCollection", "features": features}
