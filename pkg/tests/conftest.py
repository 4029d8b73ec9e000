from __future__ import annotations

import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
MINICITY = FIXTURES / "minicity"


@pytest.fixture(scope="session")
def minicity_dir() -> Path:
    return MINICITY


@pytest.fixture(scope="session")
def manifest() -> dict:
    with open(MINICITY / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def minicity_network():
    from transitsim.gtfs import parse_gtfs

    return parse_gtfs(MINICITY / "gtfs.zip")


@pytest.fixture(scope="session")
def minicity_streets():
    from transitsim.osm import extract, load_categories

    cats = load_categories(MINICITY / "categories.yaml")
    return extract(MINICITY / "map.osm", cats, bbox=(47.49, 8.79, 47.53, 8.84))


@pytest.fixture(scope="session")
def minicity_categories():
    from transitsim.osm import load_categories

    return load_categories(MINICITY / "categories.yaml")


@pytest.fixture(scope="session")
def minicity_bundle(minicity_network, minicity_streets):
    from types import SimpleNamespace

    from transitsim.osm import snap
    from transitsim.router import TransitRouter
    from transitsim.walk import closest_stops

    graph, pois, residences = minicity_streets
    stop_nodes = {
        sid: snap(s.lat, s.lon, graph) for sid, s in minicity_network.stops.items()
    }
    router = TransitRouter(minicity_network, graph, stop_nodes)
    walk = closest_stops(
        graph,
        stop_nodes,
        {r.residence_id: r.snapped_node for r in residences},
        {p.poi_id: p.snapped_node for p in pois},
        n=3,
    )
    return SimpleNamespace(
        network=minicity_network,
        graph=graph,
        pois=pois,
        residences=residences,
        stop_nodes=stop_nodes,
        router=router,
        walk=walk,
    )


@pytest.fixture(scope="session")
def minicity_matrix(minicity_bundle):
    return minicity_bundle.router.build_matrix(minicity_bundle.pois, minicity_bundle.walk)


@pytest.fixture(scope="session")
def minicity_oracle(minicity_bundle):
    from oracles import TimeExpandedOracle

    return TimeExpandedOracle(
        minicity_bundle.network, minicity_bundle.graph, minicity_bundle.stop_nodes
    )


@pytest.fixture(scope="session")
def oracle_cache():
    """Shared (origin, depart) -> arrivals cache across oracle consumers."""
    return {}


@pytest.fixture(scope="session")
def minicity_dataset(tmp_path_factory):
    """Full on-disk minicity dataset built through the pipeline steps."""
    from transitsim import dataset as ds

    root = tmp_path_factory.mktemp("minicity_data")
    ds.ingest_gtfs(root, MINICITY / "gtfs.zip")
    ds.ingest_osm(
        root, MINICITY / "map.osm", MINICITY / "categories.yaml",
        bbox=(47.49, 8.79, 47.53, 8.84),
    )
    ds.build_walk(root)
    ds.build_matrix(root)
    return ds.load_dataset(root)


@pytest.fixture(scope="session")
def minicity_scenario(minicity_dir):
    from transitsim.profiles import load_scenario

    return load_scenario(minicity_dir / "profiles.yaml")
