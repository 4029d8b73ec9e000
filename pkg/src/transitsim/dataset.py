"""Region dataset: the bundle of ingested data and derived tables.

On disk a region is a directory:

    network/   TSNET v1 ndjson files (gtfs_ingest output)
    streets/   TSGEO v1 ndjson files (osm_ingest output)
    walk.bin   TSWALK v1 walk table
    matrix.bin TSMAT v1 travel-time matrix
    config/    defaults.yaml, categories.yaml, scenario *.yaml files

The in-memory Dataset is immutable once loaded; edit overlays copy from it
and never write back.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import gtfs, osm, profiles, router as router_mod, walk as walk_mod
from .errors import MissingFile
from .osm import POICategory, Poi, Residence, StreetGraph, snap
from .profiles import ProfileEvaluator, ScenarioDefinition, ScoreSurface
from .router import TransitRouter, TravelTimeMatrix
from .walk import WalkTable

DEFAULTS = {
    "n_closest_stops": 3,
    "walk_speed_ms": 1.2,
    "transfer_threshold_m": 300.0,
    "min_transfer_s": 60,
    "snap_radius_m": 500.0,
    "poi_access_radius_m": 500.0,
    "residence_access_radius_m": 1600.0,
    "home_radius_m": 8000.0,
    "roundtrip_walk_factor": 2,
    "sampling_minutes": [0, 15, 30, 45],
    "max_transfers": 4,
    "horizon_s": 86400,
    "workers": 1,
}


def load_defaults(path: Path | None) -> dict:
    config = dict(DEFAULTS)
    if path is not None and Path(path).exists():
        with open(path, encoding="utf-8") as fh:
            overrides = yaml.safe_load(fh) or {}
        unknown = set(overrides) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown defaults keys: {sorted(unknown)}")
        config.update(overrides)
    return config


@dataclass
class Dataset:
    root: Path
    network: gtfs.TransitNetwork
    graph: StreetGraph
    pois: list[Poi]
    residences: list[Residence]
    categories: list[POICategory]
    stop_nodes: dict[str, int]
    walk: WalkTable
    matrix: TravelTimeMatrix
    defaults: dict
    version: str
    _router: TransitRouter | None = field(default=None, repr=False)
    _poi_dist_arrays: dict | None = field(default=None, repr=False)
    _surface_cache: dict = field(default_factory=dict, repr=False)

    @property
    def router(self) -> TransitRouter:
        if self._router is None:
            self._router = TransitRouter(
                self.network,
                self.graph,
                self.stop_nodes,
                transfer_threshold_m=self.defaults["transfer_threshold_m"],
                min_transfer_s=self.defaults["min_transfer_s"],
                default_speed=self.defaults["walk_speed_ms"],
                horizon_s=self.defaults["horizon_s"],
                sampling_minutes=tuple(self.defaults["sampling_minutes"]),
            )
        return self._router

    @property
    def poi_dist_arrays(self) -> dict:
        if self._poi_dist_arrays is None:
            self._poi_dist_arrays = profiles.poi_node_dist_arrays(
                self.graph, self.pois, self.defaults["home_radius_m"]
            )
        return self._poi_dist_arrays

    def residence_nodes(self) -> dict[str, int | None]:
        return {r.residence_id: r.snapped_node for r in self.residences}

    def evaluator(self) -> ProfileEvaluator:
        dists = profiles.home_area_dists(
            self.poi_dist_arrays, self.graph, self.residence_nodes()
        )
        return ProfileEvaluator(
            self.matrix,
            self.walk,
            self.pois,
            home_radius_m=self.defaults["home_radius_m"],
            poi_node_dists=dists,
            roundtrip_factor=self.defaults["roundtrip_walk_factor"],
        )

    def score(self, scenario: ScenarioDefinition) -> dict[str, ScoreSurface]:
        """All group surfaces plus AGGREGATE, cached per scenario id."""
        key = scenario.scenario_id
        if key not in self._surface_cache:
            rids = sorted(r.residence_id for r in self.residences)
            self._surface_cache[key] = self.evaluator().evaluate(scenario, rids)
        return self._surface_cache[key]


# ---------------------------------------------------------------------------
# pipeline steps (used by the CLI and the service)

def ingest_gtfs(data_dir, gtfs_zip) -> gtfs.TransitNetwork:
    network = gtfs.parse_gtfs(gtfs_zip)
    gtfs.save_network(network, Path(data_dir) / "network")
    return network


def ingest_osm(data_dir, osm_path, categories_path, bbox, residence_csv=None, population=None):
    data_dir = Path(data_dir)
    categories = osm.load_categories(categories_path)
    graph, pois, residences = osm.extract(osm_path, categories, bbox)
    if residence_csv is not None:
        residences = osm.load_residence_csv(residence_csv, graph)
    kept = [r for r in residences if r.snapped_node is not None]
    if population is not None:
        osm.rescale_population(kept, population)
    osm.save_streets(graph, pois, kept, data_dir / "streets")
    config_dir = data_dir / "config"
    config_dir.mkdir(parents=True, exist_ok=True)
    (config_dir / "categories.yaml").write_text(osm.dump_categories(categories), encoding="utf-8")
    return graph, pois, kept


def build_walk(data_dir, defaults: dict | None = None) -> WalkTable:
    data_dir = Path(data_dir)
    defaults = defaults or load_defaults(data_dir / "config" / "defaults.yaml")
    network = gtfs.load_network(data_dir / "network")
    graph, pois, residences = osm.load_streets(data_dir / "streets")
    stop_nodes = {}
    for sid in sorted(network.stops):
        s = network.stops[sid]
        node = snap(s.lat, s.lon, graph, radius_m=defaults["snap_radius_m"])
        if node is not None:
            stop_nodes[sid] = node
    table = walk_mod.closest_stops(
        graph,
        stop_nodes,
        {r.residence_id: r.snapped_node for r in residences},
        {p.poi_id: p.snapped_node for p in pois},
        n=defaults["n_closest_stops"],
        poi_radius_m=defaults["poi_access_radius_m"],
        residence_radius_m=defaults["residence_access_radius_m"],
    )
    walk_mod.save_walk_table(table, data_dir / "walk.bin")
    return table


def build_matrix(data_dir, mode_mask=None, defaults: dict | None = None, progress=None) -> TravelTimeMatrix:
    data_dir = Path(data_dir)
    defaults = defaults or load_defaults(data_dir / "config" / "defaults.yaml")
    dataset = load_dataset(data_dir, require_matrix=False)
    matrix = dataset.router.build_matrix(
        dataset.pois,
        dataset.walk,
        mode_mask=mode_mask,
        max_transfers=defaults["max_transfers"],
        workers=defaults["workers"],
        progress=progress,
    )
    router_mod.save_matrix(matrix, data_dir / "matrix.bin")
    return matrix


def _stop_nodes_for(network, graph, snap_radius) -> dict[str, int]:
    out = {}
    for sid in sorted(network.stops):
        s = network.stops[sid]
        node = snap(s.lat, s.lon, graph, radius_m=snap_radius)
        if node is not None:
            out[sid] = node
    return out


def load_dataset(data_dir, require_matrix: bool = True) -> Dataset:
    data_dir = Path(data_dir)
    defaults = load_defaults(data_dir / "config" / "defaults.yaml")
    network = gtfs.load_network(data_dir / "network")
    graph, pois, residences = osm.load_streets(data_dir / "streets")
    categories_path = data_dir / "config" / "categories.yaml"
    categories = osm.load_categories(categories_path) if categories_path.exists() else []
    walk_path = data_dir / "walk.bin"
    if not walk_path.exists():
        raise MissingFile(str(walk_path))
    walk = walk_mod.load_walk_table(walk_path)
    matrix_path = data_dir / "matrix.bin"
    if matrix_path.exists():
        matrix = router_mod.load_matrix(matrix_path)
        digest = hashlib.sha256(matrix_path.read_bytes()).hexdigest()[:12]
    elif require_matrix:
        raise MissingFile(str(matrix_path))
    else:
        matrix = None
        digest = "nomatrix"
    return Dataset(
        root=data_dir,
        network=network,
        graph=graph,
        pois=pois,
        residences=residences,
        categories=categories,
        stop_nodes=_stop_nodes_for(network, graph, defaults["snap_radius_m"]),
        walk=walk,
        matrix=matrix,
        defaults=defaults,
        version=digest,
    )


def validate_dataset(data_dir) -> tuple[int, list[str]]:
    """Integrity checks; returns (error_count, report_lines)."""
    data_dir = Path(data_dir)
    lines: list[str] = []
    errors = 0

    def note(msg: str) -> None:
        lines.append(msg)

    def fail(msg: str) -> None:
        nonlocal errors
        errors += 1
        lines.append(f"ERROR: {msg}")

    try:
        dataset = load_dataset(data_dir, require_matrix=False)
    except Exception as exc:
        return 1, [f"ERROR: cannot load dataset: {exc}"]

    net = dataset.network
    note(f"network: {len(net.stops)} stops, {len(net.lines)} lines, {len(net.trips)} trips")
    for trip in net.trips.values():
        for sid, _, _ in trip.sequence:
            if sid not in net.stops:
                fail(f"trip {trip.trip_id} references unknown stop {sid}")
        for (s1, a1, d1), (s2, a2, d2) in zip(trip.sequence, trip.sequence[1:]):
            if not (a1 <= d1 <= a2 <= d2):
                fail(f"trip {trip.trip_id} has non-monotone times at {s2}")
    for line in net.lines.values():
        union = set()
        for trip in net.trips.values():
            if trip.line_id == line.line_id:
                union.update(s for s, _, _ in trip.sequence)
        if set(line.pattern) != union:
            fail(f"line {line.line_id} pattern does not match its trips")

    report = dataset.graph.component_report()
    note(
        f"street graph: {len(dataset.graph)} nodes, {len(dataset.graph.edges)} edges, "
        f"{report['component_count']} components "
        f"({report['nodes_outside_largest']} nodes outside largest)"
    )
    unsnapped_stops = sorted(set(net.stops) - set(dataset.stop_nodes))
    if unsnapped_stops:
        note(f"warning: {len(unsnapped_stops)} stops beyond snap radius: {unsnapped_stops[:10]}")
    note(f"pois: {len(dataset.pois)}; residences: {len(dataset.residences)}")

    freq = gtfs.stop_frequency_index(net, net.reference_day)
    total = sum(sum(v) for v in freq.values())
    brute = 0
    for trip in net.trips.values():
        days = {w % 7 for w in trip.service_days}
        for _, _, dep in trip.sequence:
            if (net.reference_day - dep // 86400) % 7 in days:
                brute += 1
    if total != brute:
        fail(f"frequency index total {total} != departure events {brute}")
    else:
        note(f"departure events on reference day: {total}")

    if dataset.walk.unreachable_residences:
        note(
            f"warning: {len(dataset.walk.unreachable_residences)} residences "
            f"without reachable stop: {dataset.walk.unreachable_residences[:10]}"
        )
    missing_rows = [
        r.residence_id for r in dataset.residences
        if r.residence_id not in dataset.walk.residence_rows
    ]
    if missing_rows:
        fail(f"walk table missing rows for {len(missing_rows)} residences")

    if dataset.matrix is not None:
        m = dataset.matrix
        if m.stop_ids != sorted(set(m.stop_ids)):
            fail("matrix stop ids not sorted/unique")
        if set(m.poi_ids) - {p.poi_id for p in dataset.pois}:
            fail("matrix references unknown POIs")
        note(f"matrix: {len(m.stop_ids)} stops x {len(m.poi_ids)} pois x 24 hours")
    else:
        note("matrix: not built")

    note(f"validation finished: {errors} errors")
    return errors, lines
