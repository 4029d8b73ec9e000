from __future__ import annotations

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from transitsim.errors import NonPositiveSpeed
from transitsim.osm import StreetGraph, snap
from transitsim.walk import (
    closest_stops,
    export_walk_csv,
    load_walk_table,
    nearest_stop_rows,
    save_walk_table,
    walk_time,
    walkmap,
)


def line_graph(n: int, spacing: float = 100.0) -> StreetGraph:
    """Straight street with n nodes, constant spacing, ids 0..n-1."""
    lats = [47.5] * n
    lons = [8.8 + i * 0.001 for i in range(n)]
    edges = [(i, i + 1, spacing) for i in range(n - 1)]
    return StreetGraph(list(range(n)), lats, lons, edges)


def scipy_matrix(graph: StreetGraph):
    n = len(graph)
    rows, cols, vals = [], [], []
    for u, v, w in graph.edges:
        rows += [u, v]
        cols += [v, u]
        vals += [w, w]
    return csr_matrix((vals, (rows, cols)), shape=(n, n))


class TestWalkTime:
    def test_zero_distance(self):
        assert walk_time(0.0, 1.2) == 0

    def test_exact(self):
        assert walk_time(1000.0, 1.25) == 800

    def test_rounds_up(self):
        assert walk_time(100.0, 1.2) == 84  # 83.33 -> 84

    def test_zero_speed(self):
        with pytest.raises(NonPositiveSpeed):
            walk_time(100.0, 0.0)


class TestClosestStops:
    def test_residence_at_stop(self):
        g = line_graph(5)
        rows = nearest_stop_rows(g, {"S1": 0, "S2": 4}, {"r": 0}, n=2)
        assert rows["r"][0] == ("S1", 0.0, 0.0)
        assert rows["r"][1][0] == "S2"

    def test_equidistant_tie_breaks_by_stop_id(self):
        g = line_graph(3)  # A - B - C, residence at B
        rows = nearest_stop_rows(g, {"SC": 2, "SA": 0}, {"r": 1}, n=2)
        assert [e[0] for e in rows["r"]] == ["SA", "SC"]
        assert rows["r"][0][1] == rows["r"][1][1] == 100.0

    def test_unreachable_residence_listed(self):
        # two disconnected segments; stop only on the first
        lats = [47.5] * 4
        lons = [8.8, 8.801, 8.9, 8.901]
        g = StreetGraph([0, 1, 2, 3], lats, lons, [(0, 1, 100.0), (2, 3, 100.0)])
        table = closest_stops(g, {"S1": 0}, {"ra": 1, "rb": 2}, {}, n=3)
        assert table.unreachable_residences == ["rb"]
        assert table.residence_rows["ra"][0][0] == "S1"

    def test_matches_per_source_dijkstra(self, minicity_streets, minicity_network):
        # residence rows = the 3 nearest stops plus every stop within the
        # access radius, ordered by (distance, stop id)
        graph, pois, residences = minicity_streets
        stop_nodes = {
            sid: snap(s.lat, s.lon, graph)
            for sid, s in minicity_network.stops.items()
        }
        res_nodes = {r.residence_id: r.snapped_node for r in residences}
        table = closest_stops(graph, stop_nodes, res_nodes, {}, n=3, residence_radius_m=1600.0)

        mat = scipy_matrix(graph)
        stop_ids = sorted(stop_nodes)
        src_idx = [graph.index_of[stop_nodes[s]] for s in stop_ids]
        dist = dijkstra(mat, directed=False, indices=src_idx)
        for rid, node in res_nodes.items():
            col = graph.index_of[node]
            pairs = sorted((dist[k, col], stop_ids[k]) for k in range(len(stop_ids)))
            keep = [(d, sid) for i, (d, sid) in enumerate(pairs) if i < 3 or d <= 1600.0]
            expect = [(sid, d) for d, sid in keep]
            got = [(sid, d) for sid, d, _ in table.residence_rows[rid]]
            assert [g[0] for g in got] == [e[0] for e in expect], rid
            np.testing.assert_allclose(
                [g[1] for g in got], [e[1] for e in expect], rtol=0, atol=1e-6
            )

    def test_poi_rows_radius_with_nearest_fallback(self, minicity_streets, minicity_network):
        graph, pois, _ = minicity_streets
        stop_nodes = {
            sid: snap(s.lat, s.lon, graph)
            for sid, s in minicity_network.stops.items()
        }
        poi_nodes = {p.poi_id: p.snapped_node for p in pois}
        table = closest_stops(graph, stop_nodes, {}, poi_nodes, poi_radius_m=500.0)
        mat = scipy_matrix(graph)
        stop_ids = sorted(stop_nodes)
        src_idx = [graph.index_of[stop_nodes[s]] for s in stop_ids]
        dist = dijkstra(mat, directed=False, indices=src_idx)
        for pid, node in poi_nodes.items():
            col = graph.index_of[node]
            pairs = sorted((dist[k, col], stop_ids[k]) for k in range(len(stop_ids)))
            within = [(sid, d) for d, sid in pairs if d <= 500.0]
            if not within:
                within = [(pairs[0][1], pairs[0][0])]
            got = [(sid, d) for sid, d, _ in table.poi_rows[pid]]
            assert [g[0] for g in got] == [e[0] for e in within], pid

    def test_distance_at_least_crowfly(self, minicity_streets, minicity_network):
        from transitsim.geo import haversine_m

        graph, _, residences = minicity_streets
        stop_nodes = {
            sid: snap(s.lat, s.lon, graph) for sid, s in minicity_network.stops.items()
        }
        res_nodes = {r.residence_id: r.snapped_node for r in residences}
        table = closest_stops(graph, stop_nodes, res_nodes, {}, n=3)
        pos = {r.residence_id: (r.lat, r.lon) for r in residences}
        node_pos = {nid: (graph.lats[i], graph.lons[i]) for nid, i in graph.index_of.items()}
        for rid, rows in table.residence_rows.items():
            rlat, rlon = node_pos[res_nodes[rid]]
            for sid, dist, _ in rows:
                slat, slon = node_pos[stop_nodes[sid]]
                assert dist >= haversine_m(rlat, rlon, slat, slon) - 1e-6

    def test_monotone_under_stop_addition(self):
        g = line_graph(10)
        before = nearest_stop_rows(g, {"S1": 0}, {"r": 7}, n=1)
        after = nearest_stop_rows(g, {"S1": 0, "S2": 9}, {"r": 7}, n=1)
        assert after["r"][0][1] <= before["r"][0][1]

    def test_pure_and_compiled_agree(self, minicity_streets, minicity_network):
        from transitsim._kernels import _speedups, pure

        graph, _, residences = minicity_streets
        indptr, adj, w = graph.csr
        stop_nodes = {
            sid: snap(s.lat, s.lon, graph) for sid, s in minicity_network.stops.items()
        }
        sources = np.array(
            [graph.index_of[stop_nodes[s]] for s in sorted(stop_nodes)], dtype=np.int64
        )
        c1, s1, d1 = pure.k_nearest_sources(indptr, adj, w, sources, 3)
        c2, s2, d2 = _speedups.k_nearest_sources(indptr, adj, w, sources, 3)
        assert (c1 == c2).all()
        assert (s1 == s2).all()
        assert (d1 == d2).all()


class TestPersistence:
    def test_roundtrip(self, tmp_path, minicity_streets, minicity_network):
        graph, pois, residences = minicity_streets
        stop_nodes = {
            sid: snap(s.lat, s.lon, graph) for sid, s in minicity_network.stops.items()
        }
        table = closest_stops(
            graph,
            stop_nodes,
            {r.residence_id: r.snapped_node for r in residences},
            {p.poi_id: p.snapped_node for p in pois},
            n=3,
        )
        save_walk_table(table, tmp_path / "walk.bin")
        again = load_walk_table(tmp_path / "walk.bin")
        assert again.n == table.n
        assert again.residence_rows == table.residence_rows
        assert again.poi_rows == table.poi_rows
        export_walk_csv(table, tmp_path / "walk.csv")
        first = (tmp_path / "walk.csv").read_text().splitlines()[0]
        assert first == "entity_kind,entity_id,rank,stop_id,distance_m"

    def test_walkmap(self):
        g = line_graph(5)
        table = closest_stops(g, {"S1": 0}, {"r1": 2, "r2": 4}, {}, n=1)
        wm = walkmap(table)
        assert wm == {"r1": 200.0, "r2": 400.0}
