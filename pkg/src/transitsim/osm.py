"""OSM extraction: walkable street graph, categorized POIs, residences.

Input is OSM XML. Ways tagged with a walkable highway value become
undirected graph edges (one per consecutive node pair, haversine length);
building footprints become residences at their centroid with the footprint
area as population weight; POIs are selected by per-category tag matchers.
"""

from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import EmptyGraph, MalformedRow, MalformedXml, MissingFile
from .geo import GridIndex, haversine_m, polygon_area_m2

SNAP_RADIUS_M = 500.0

WALKABLE_HIGHWAYS = {
    "footway", "path", "pedestrian", "residential", "living_street",
    "service", "unclassified", "tertiary", "secondary", "primary",
    "steps", "track",
}

RESIDENTIAL_BUILDINGS = {
    "residential", "apartments", "house", "detached", "semidetached_house", "terrace",
}


@dataclass
class POICategory:
    category_id: str
    name: str
    matcher: list[str]  # "key=value" selectors
    sampling_default: str = "near"  # near | random | specific

    def matches(self, tags: dict[str, str]) -> bool:
        for selector in self.matcher:
            key, _, value = selector.partition("=")
            if tags.get(key) == value:
                return True
        return False


@dataclass
class Poi:
    poi_id: str
    category_id: str
    lat: float
    lon: float
    name: str
    snapped_node: int | None = None


@dataclass
class Residence:
    residence_id: str
    lat: float
    lon: float
    est_population_weight: float = 1.0
    snapped_node: int | None = None


class StreetGraph:
    """Undirected walkable graph with dense node indexing and CSR adjacency."""

    def __init__(self, node_ids: list[int], lats, lons, edges: list[tuple[int, int, float]]):
        self.node_ids = list(node_ids)
        self.lats = np.asarray(lats, dtype=np.float64)
        self.lons = np.asarray(lons, dtype=np.float64)
        self.index_of = {nid: i for i, nid in enumerate(self.node_ids)}
        # (u_idx, v_idx, length_m, walkable); deduplicated, u < v
        self.edges = edges
        self._csr = None
        self._spatial = None
        self._components = None

    def __len__(self) -> int:
        return len(self.node_ids)

    @property
    def csr(self):
        """(indptr, adj, weights) arrays for the undirected graph."""
        if self._csr is None:
            n = len(self.node_ids)
            deg = np.zeros(n + 1, dtype=np.int64)
            for u, v, _ in self.edges:
                deg[u + 1] += 1
                deg[v + 1] += 1
            indptr = np.cumsum(deg)
            adj = np.zeros(indptr[-1], dtype=np.int64)
            w = np.zeros(indptr[-1], dtype=np.float64)
            cursor = indptr[:-1].copy()
            for u, v, length in self.edges:
                adj[cursor[u]] = v
                w[cursor[u]] = length
                cursor[u] += 1
                adj[cursor[v]] = u
                w[cursor[v]] = length
                cursor[v] += 1
            self._csr = (indptr, adj, w)
        return self._csr

    @property
    def spatial(self) -> GridIndex:
        if self._spatial is None:
            idx = GridIndex(cell_m=250.0)
            for i, nid in enumerate(self.node_ids):
                idx.add(float(self.lats[i]), float(self.lons[i]), nid)
            self._spatial = idx
        return self._spatial

    @property
    def components(self) -> np.ndarray:
        """Node index -> component label; label 0 is the largest component."""
        if self._components is None:
            n = len(self.node_ids)
            parent = list(range(n))

            def find(a: int) -> int:
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                return a

            for u, v, _ in self.edges:
                ra, rb = find(u), find(v)
                if ra != rb:
                    parent[rb] = ra
            roots = [find(i) for i in range(n)]
            sizes: dict[int, int] = {}
            for r in roots:
                sizes[r] = sizes.get(r, 0) + 1
            order = sorted(sizes, key=lambda r: (-sizes[r], r))
            label_of = {r: i for i, r in enumerate(order)}
            self._components = np.array([label_of[r] for r in roots], dtype=np.int64)
        return self._components

    def component_report(self) -> dict:
        comps = self.components
        _, counts = np.unique(comps, return_counts=True)
        return {
            "component_count": int(len(counts)),
            "largest_size": int(counts.max()) if len(counts) else 0,
            "nodes_outside_largest": int(len(comps) - counts.max()) if len(counts) else 0,
        }


def snap(lat: float, lon: float, graph: StreetGraph, radius_m: float = SNAP_RADIUS_M) -> int | None:
    """Nearest walkable node id within radius, ties by smallest node id."""
    hit = graph.spatial.nearest(lat, lon, max_dist_m=radius_m)
    if hit is None:
        return None
    return hit[0]


def _centroid(points: list[tuple[float, float]]) -> tuple[float, float]:
    lat = sum(p[0] for p in points) / len(points)
    lon = sum(p[1] for p in points) / len(points)
    return lat, lon


def _is_residential_building(tags: dict[str, str]) -> bool:
    b = tags.get("building")
    if b in RESIDENTIAL_BUILDINGS:
        return True
    return b == "yes" and "addr:housenumber" in tags


def _way_is_walkable(tags: dict[str, str]) -> bool:
    hw = tags.get("highway")
    if hw in WALKABLE_HIGHWAYS:
        return True
    return hw == "cycleway" and tags.get("foot") == "yes"


def extract(
    osm_xml,
    category_config: list[POICategory],
    bbox: tuple[float, float, float, float],
) -> tuple[StreetGraph, list[Poi], list[Residence]]:
    """Parse OSM XML (path, bytes, or file-like) inside bbox.

    bbox is (min_lat, min_lon, max_lat, max_lon). Returns the walkable
    street graph, matched POIs, and residences; POIs/residences are snapped
    to the graph, entities beyond the snap radius get snapped_node=None and
    are dropped by callers that need routable entities.
    """
    min_lat, min_lon, max_lat, max_lon = bbox
    if min_lat >= max_lat or min_lon >= max_lon:
        raise ValueError("degenerate bbox")

    if isinstance(osm_xml, (str, Path)):
        stream = open(osm_xml, "rb")
    elif isinstance(osm_xml, bytes):
        stream = io.BytesIO(osm_xml)
    else:
        stream = osm_xml

    nodes: dict[int, tuple[float, float]] = {}
    node_tags: dict[int, dict[str, str]] = {}
    ways: dict[int, tuple[list[int], dict[str, str]]] = {}
    relations: dict[int, tuple[list[tuple[str, int]], dict[str, str]]] = {}

    try:
        for _, elem in ET.iterparse(stream, events=("end",)):
            tag = elem.tag
            if tag == "node":
                nid = int(elem.attrib["id"])
                lat = float(elem.attrib["lat"])
                lon = float(elem.attrib["lon"])
                tags = {t.attrib["k"]: t.attrib["v"] for t in elem.findall("tag")}
                nodes[nid] = (lat, lon)
                if tags:
                    node_tags[nid] = tags
                elem.clear()
            elif tag == "way":
                wid = int(elem.attrib["id"])
                nds = [int(nd.attrib["ref"]) for nd in elem.findall("nd")]
                tags = {t.attrib["k"]: t.attrib["v"] for t in elem.findall("tag")}
                ways[wid] = (nds, tags)
                elem.clear()
            elif tag == "relation":
                rid = int(elem.attrib["id"])
                members = [
                    (m.attrib.get("role", ""), int(m.attrib["ref"]))
                    for m in elem.findall("member")
                    if m.attrib.get("type") == "way"
                ]
                tags = {t.attrib["k"]: t.attrib["v"] for t in elem.findall("tag")}
                relations[rid] = (members, tags)
                elem.clear()
    except ET.ParseError as exc:
        raise MalformedXml(f"line {exc.position[0]}, column {exc.position[1]}")
    except (KeyError, ValueError) as exc:
        raise MalformedXml(f"bad attribute: {exc}")
    finally:
        if isinstance(osm_xml, (str, Path)):
            stream.close()

    def in_bbox(nid: int) -> bool:
        if nid not in nodes:
            return False
        lat, lon = nodes[nid]
        return min_lat <= lat <= max_lat and min_lon <= lon <= max_lon

    # ---- street graph
    kept_nodes: list[int] = []
    seen: set[int] = set()
    edge_set: dict[tuple[int, int], float] = {}
    for wid in sorted(ways):
        nds, tags = ways[wid]
        if not _way_is_walkable(tags):
            continue
        for a, b in zip(nds, nds[1:]):
            if not (in_bbox(a) and in_bbox(b)) or a == b:
                continue
            for nid in (a, b):
                if nid not in seen:
                    seen.add(nid)
                    kept_nodes.append(nid)
            key = (min(a, b), max(a, b))
            if key not in edge_set:
                lat_a, lon_a = nodes[a]
                lat_b, lon_b = nodes[b]
                edge_set[key] = haversine_m(lat_a, lon_a, lat_b, lon_b)
    if not edge_set:
        raise EmptyGraph("no walkable ways in bbox")

    kept_nodes.sort()
    idx_of = {nid: i for i, nid in enumerate(kept_nodes)}
    lats = [nodes[nid][0] for nid in kept_nodes]
    lons = [nodes[nid][1] for nid in kept_nodes]
    edges = [(idx_of[a], idx_of[b], length) for (a, b), length in sorted(edge_set.items())]
    graph = StreetGraph(kept_nodes, lats, lons, edges)

    # ---- POIs from category matchers (nodes and way centroids)
    pois: list[Poi] = []
    for nid in sorted(node_tags):
        if not in_bbox(nid):
            continue
        tags = node_tags[nid]
        for cat in category_config:
            if cat.matches(tags):
                lat, lon = nodes[nid]
                pois.append(Poi(
                    poi_id=f"n{nid}", category_id=cat.category_id, lat=lat, lon=lon,
                    name=tags.get("name", f"{cat.name} n{nid}"),
                ))
                break
    for wid in sorted(ways):
        nds, tags = ways[wid]
        if not tags:
            continue
        pts = [nodes[n] for n in nds if n in nodes]
        if not pts:
            continue
        lat, lon = _centroid(pts)
        if not (min_lat <= lat <= max_lat and min_lon <= lon <= max_lon):
            continue
        for cat in category_config:
            if cat.matches(tags):
                pois.append(Poi(
                    poi_id=f"w{wid}", category_id=cat.category_id, lat=lat, lon=lon,
                    name=tags.get("name", f"{cat.name} w{wid}"),
                ))
                break

    # ---- residences from building footprints (ways, then relations)
    residences: list[Residence] = []
    for wid in sorted(ways):
        nds, tags = ways[wid]
        if not _is_residential_building(tags):
            continue
        ring = [nodes[n] for n in nds if n in nodes]
        if len(ring) < 3:
            continue
        if nds[0] == nds[-1]:
            ring = ring[:-1]
        lat, lon = _centroid(ring)
        if not (min_lat <= lat <= max_lat and min_lon <= lon <= max_lon):
            continue
        residences.append(Residence(
            residence_id=f"w{wid}", lat=lat, lon=lon,
            est_population_weight=polygon_area_m2([nodes[n] for n in nds if n in nodes]),
        ))
    for rid in sorted(relations):
        members, tags = relations[rid]
        if not _is_residential_building(tags):
            continue
        pts: list[tuple[float, float]] = []
        for role, wid in members:
            if role not in ("outer", ""):
                continue
            if wid in ways:
                pts.extend(nodes[n] for n in ways[wid][0] if n in nodes)
        if len(pts) < 3:
            continue
        lat, lon = _centroid(pts)
        if not (min_lat <= lat <= max_lat and min_lon <= lon <= max_lon):
            continue
        residences.append(Residence(
            residence_id=f"r{rid}", lat=lat, lon=lon,
            est_population_weight=polygon_area_m2(pts),
        ))

    for p in pois:
        p.snapped_node = snap(p.lat, p.lon, graph)
    for r in residences:
        r.snapped_node = snap(r.lat, r.lon, graph)
    return graph, pois, residences


def load_residence_csv(path, graph: StreetGraph) -> list[Residence]:
    """External residence override: CSV with header id,lat,lon,weight."""
    out: list[Residence] = []
    offenses: list[str] = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "lat", "lon", "weight"}
        if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
            raise MalformedRow(str(path), [f"{path}: header must contain id,lat,lon,weight"])
        for line_no, row in enumerate(reader, start=2):
            try:
                lat = float(row["lat"])
                lon = float(row["lon"])
                weight = float(row["weight"])
            except (TypeError, ValueError):
                offenses.append(f"{path}:{line_no}: non-numeric lat/lon/weight")
                continue
            if weight < 0:
                offenses.append(f"{path}:{line_no}: negative weight")
                continue
            out.append(Residence(
                residence_id=row["id"], lat=lat, lon=lon,
                est_population_weight=weight, snapped_node=snap(lat, lon, graph),
            ))
    if offenses:
        raise MalformedRow(str(path), offenses)
    return out


def rescale_population(residences: list[Residence], total_population: float) -> None:
    """Scale residence weights so they sum to a census population total."""
    current = sum(r.est_population_weight for r in residences)
    if current <= 0 or total_population <= 0:
        return
    factor = total_population / current
    for r in residences:
        r.est_population_weight *= factor


# ---------------------------------------------------------------------------
# Category config (YAML)

def load_categories(path) -> list[POICategory]:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return parse_categories(doc, source=str(path))


def parse_categories(doc: dict, source: str = "<config>") -> list[POICategory]:
    if not isinstance(doc, dict) or "categories" not in doc:
        raise MalformedRow(source, [f"{source}: top-level 'categories' list required"])
    cats: list[POICategory] = []
    names: set[str] = set()
    offenses: list[str] = []
    for i, entry in enumerate(doc["categories"]):
        cid = entry.get("category_id")
        name = entry.get("name", cid)
        matcher = entry.get("match", [])
        sampling = entry.get("sampling_default", "near")
        if not cid:
            offenses.append(f"{source}: categories[{i}]: missing category_id")
            continue
        if not matcher:
            offenses.append(f"{source}: category {cid!r}: empty matcher")
            continue
        if name in names:
            offenses.append(f"{source}: duplicate category name {name!r}")
            continue
        if sampling not in ("near", "random", "specific"):
            offenses.append(f"{source}: category {cid!r}: bad sampling_default {sampling!r}")
            continue
        names.add(name)
        cats.append(POICategory(category_id=cid, name=name, matcher=list(matcher), sampling_default=sampling))
    if offenses:
        raise MalformedRow(source, offenses)
    return cats


def dump_categories(categories: list[POICategory]) -> str:
    doc = {"categories": [
        {
            "category_id": c.category_id,
            "name": c.name,
            "match": c.matcher,
            "sampling_default": c.sampling_default,
        }
        for c in categories
    ]}
    return yaml.safe_dump(doc, sort_keys=True)


# ---------------------------------------------------------------------------
# TSGEO v1 persistence

GEO_HEADER = "TSGEO v1"


def _dump_geo(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(GEO_HEADER + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def _load_geo(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != GEO_HEADER:
            raise MalformedRow(str(path), [f"{path}: bad header {header!r}"])
        return [json.loads(line) for line in fh if line.strip()]


def save_streets(graph: StreetGraph, pois: list[Poi], residences: list[Residence], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _dump_geo(directory / "nodes.ndjson", (
        {"id": nid, "lat": float(graph.lats[i]), "lon": float(graph.lons[i])}
        for i, nid in enumerate(graph.node_ids)
    ))
    _dump_geo(directory / "edges.ndjson", (
        {"u": graph.node_ids[u], "v": graph.node_ids[v], "len": length, "walk": True}
        for u, v, length in graph.edges
    ))
    _dump_geo(directory / "pois.ndjson", (
        {"poi_id": p.poi_id, "category_id": p.category_id, "lat": p.lat, "lon": p.lon,
         "name": p.name, "snapped_node": p.snapped_node}
        for p in sorted(pois, key=lambda p: p.poi_id)
    ))
    _dump_geo(directory / "residences.ndjson", (
        {"residence_id": r.residence_id, "lat": r.lat, "lon": r.lon,
         "weight": r.est_population_weight, "snapped_node": r.snapped_node}
        for r in sorted(residences, key=lambda r: r.residence_id)
    ))


def load_streets(directory) -> tuple[StreetGraph, list[Poi], list[Residence]]:
    directory = Path(directory)
    for name in ("nodes.ndjson", "edges.ndjson", "pois.ndjson", "residences.ndjson"):
        if not (directory / name).exists():
            raise MissingFile(str(directory / name))
    node_recs = _load_geo(directory / "nodes.ndjson")
    node_ids = [r["id"] for r in node_recs]
    idx_of = {nid: i for i, nid in enumerate(node_ids)}
    lats = [r["lat"] for r in node_recs]
    lons = [r["lon"] for r in node_recs]
    edges = [
        (idx_of[r["u"]], idx_of[r["v"]], r["len"])
        for r in _load_geo(directory / "edges.ndjson")
    ]
    graph = StreetGraph(node_ids, lats, lons, edges)
    pois = [
        Poi(poi_id=r["poi_id"], category_id=r["category_id"], lat=r["lat"], lon=r["lon"],
            name=r["name"], snapped_node=r["snapped_node"])
        for r in _load_geo(directory / "pois.ndjson")
    ]
    residences = [
        Residence(residence_id=r["residence_id"], lat=r["lat"], lon=r["lon"],
                  est_population_weight=r["weight"], snapped_node=r["snapped_node"])
        for r in _load_geo(directory / "residences.ndjson")
    ]
    return graph, pois, residences
