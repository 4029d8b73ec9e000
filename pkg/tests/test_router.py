from __future__ import annotations

import numpy as np
import pytest

from oracles import TimeExpandedOracle, oracle_matrix, poi_nearest_stops
from transitsim.errors import EntryUnreachable, UnknownStop
from transitsim.gtfs import Line, Stop, TransitNetwork, TripEvent
from transitsim.osm import StreetGraph
from transitsim.router import (
    UNREACHABLE,
    TransitRouter,
    export_matrix_csv,
    load_matrix,
    save_matrix,
)
from transitsim.walk import closest_stops


def tiny_setup(trip_times=None, extra_line=False):
    """3 stops on a straight 1 km street, one bus line X->Y->Z."""
    n = 11  # nodes every 100 m
    lats = [47.5] * n
    lons = [8.8 + i * 0.0013 for i in range(n)]
    edges = [(i, i + 1, 100.0) for i in range(n - 1)]
    graph = StreetGraph(list(range(n)), lats, lons, edges)

    stops = {
        "X": Stop("X", "X", 47.5, lons[0]),
        "Y": Stop("Y", "Y", 47.5, lons[5]),
        "Z": Stop("Z", "Z", 47.5, lons[10]),
    }
    stop_nodes = {"X": 0, "Y": 5, "Z": 10}
    trips = {}
    times = trip_times or [(8 * 3600, 8 * 3600 + 600, 8 * 3600 + 1200)]
    for k, (t0, t1, t2) in enumerate(times):
        tid = f"T{k}"
        trips[tid] = TripEvent(
            tid, "L1", [("X", t0, t0), ("Y", t1, t1), ("Z", t2, t2)], set(range(7))
        )
    lines = {"L1": Line("L1", ["X", "Y", "Z"], "bus")}
    if extra_line:
        lines["L2"] = Line("L2", ["Z", "X"], "tram")
        trips["TT"] = TripEvent(
            "TT", "L2", [("Z", 9 * 3600, 9 * 3600), ("X", 9 * 3600 + 900, 9 * 3600 + 900)],
            set(range(7)),
        )
    network = TransitNetwork(stops=stops, trips=trips, lines=lines, reference_date="2025-09-01")
    router = TransitRouter(network, graph, stop_nodes)
    return network, graph, stop_nodes, router


class TestEarliestArrival:
    def test_identity(self):
        _, _, _, router = tiny_setup()
        res = router.earliest_arrival("X", {"X"}, 7 * 3600)
        arrival, journey = res["X"]
        assert arrival == 7 * 3600
        assert journey.legs == []
        assert journey.duration == 0

    def test_simple_ride(self):
        _, _, _, router = tiny_setup()
        res = router.earliest_arrival("X", {"Z"}, 7 * 3600)
        arrival, journey = res["Z"]
        assert arrival == 8 * 3600 + 1200
        kinds = [leg.kind for leg in journey.legs]
        assert kinds == ["walk", "ride"]  # waiting leg, then the bus
        assert journey.legs[-1].line_id == "L1"
        assert journey.duration == arrival - 7 * 3600

    def test_depart_after_last_trip_rolls_to_next_day(self):
        _, _, _, router = tiny_setup()
        # departing at 09:00, the next day's 08:00 trip fits in the horizon
        res = router.earliest_arrival("X", {"Z"}, 9 * 3600)
        assert res["Z"][0] == 8 * 3600 + 1200 + 86400
        # departing one second past 08:00 it does not (arrival > depart+24h)
        res = router.earliest_arrival("X", {"Z"}, 8 * 3600 + 1)
        assert "Z" not in res

    def test_unknown_stop(self):
        _, _, _, router = tiny_setup()
        with pytest.raises(UnknownStop):
            router.earliest_arrival("nope", {"X"}, 0)

    def test_mode_mask(self):
        _, _, _, router = tiny_setup(extra_line=True)
        res = router.earliest_arrival("Z", {"X"}, 8 * 3600, mode_mask=("bus",))
        # tram excluded: the only way back is the next day's bus? no bus Z->X
        assert "X" not in res
        res = router.earliest_arrival("Z", {"X"}, 8 * 3600, mode_mask=("bus", "tram"))
        assert res["X"][0] == 9 * 3600 + 900

    def test_fifo_departing_later_never_arrives_earlier(self):
        _, _, _, router = tiny_setup(
            trip_times=[
                (8 * 3600, 8 * 3600 + 600, 8 * 3600 + 1200),
                (9 * 3600, 9 * 3600 + 500, 9 * 3600 + 1000),
            ]
        )
        last = -1
        for depart in range(6 * 3600, 10 * 3600, 900):
            res = router.earliest_arrival("X", {"Z"}, depart)
            arr = res["Z"][0] if "Z" in res else 10**12
            assert arr >= last or arr == 10**12
            if arr < 10**12:
                assert arr >= depart
                last = max(last, depart)

    def test_walk_only_transfer_reaches_nearby_stop(self):
        # Y is 500 m from X? nodes 0..10 at 100 m: X at 0, Y at 5 -> 500 m
        # beyond 300 m threshold, so no foot transfer; Z unreachable by foot
        _, _, _, router = tiny_setup()
        res = router.earliest_arrival("X", {"Y"}, 23 * 3600 * 2)  # late 2nd day
        # depart_at near end of window: only rides considered; next trip is
        # outside the horizon? depart 46:00h, horizon +24h, trip day 3 at 8:00
        # (=56:00h) is within horizon
        assert "Y" in res


class TestMinicityOptimality:
    def test_sample_queries_match_oracle(self, minicity_bundle, minicity_oracle, oracle_cache):
        router = minicity_bundle.router
        targets = set(router.stop_ids)
        for origin in ["SA01", "SA05", "SB03"]:
            for depart in range(0, 86400, 900):
                got = router.earliest_arrival(origin, targets, depart)
                key = (origin, depart)
                if key not in oracle_cache:
                    oracle_cache[key] = minicity_oracle.query(origin, depart)
                expect = oracle_cache[key]
                got_times = {t: a for t, (a, _) in got.items()}
                assert got_times == expect, f"{origin} @ {depart}"

    def test_kernel_matches_labeled_search(self, minicity_bundle):
        router = minicity_bundle.router
        for origin in ["SA03", "SB08"]:
            for depart in [0, 7 * 3600 + 300, 23 * 3600 + 2700]:
                idx = router.stop_index[origin]
                kernel = router.arrivals(idx, depart)
                taus, _ = router._labeled_search(
                    idx, depart, 5, router._mask(None)
                )
                assert (kernel == taus[-1]).all()

    def test_pure_and_compiled_raptor_agree(self, minicity_bundle):
        from transitsim._kernels import _speedups, pure

        router = minicity_bundle.router
        tt = router.timetable
        args_static = (
            len(router.stop_ids),
            tt.pat_indptr, tt.pat_stops, tt.pat_trip_indptr, tt.times_offset,
            tt.trip_arr, tt.trip_dep, router._mask(None),
            tt.stop_pat_indptr, tt.stop_pat, tt.stop_pat_pos,
            router.tr_indptr, router.tr_to, router.tr_sec,
        )
        for origin in range(0, 20, 3):
            for depart in [0, 30600, 61200, 85500]:
                a = pure.raptor_arrivals(*args_static, origin, depart, 5, depart + 86400)
                b = _speedups.raptor_arrivals(*args_static, origin, depart, 5, depart + 86400)
                assert (a == b).all()


class TestJourneys:
    def replay_ok(self, network, journey):
        for leg in journey.legs:
            assert leg.arrive >= leg.depart
            if leg.kind != "ride":
                continue
            trip = network.trips[leg.trip_id]
            stop_ids = [s for s, _, _ in trip.sequence]
            bi = stop_ids.index(leg.board_stop)
            ai = stop_ids.index(leg.alight_stop, bi)
            assert bi < ai
            shift = leg.depart - trip.sequence[bi][2]
            assert shift % 86400 == 0  # day-instance offset
            assert trip.sequence[ai][1] + shift == leg.arrive
        for a, b in zip(journey.legs, journey.legs[1:]):
            assert a.arrive == b.depart  # contiguous in time

    def test_replay_against_timetable(self, minicity_bundle):
        router = minicity_bundle.router
        network = minicity_bundle.network
        checked = 0
        for origin in ["SA01", "SB05", "SA09"]:
            for depart in [6 * 3600, 12 * 3600 + 600, 22 * 3600]:
                res = router.earliest_arrival(origin, set(router.stop_ids), depart)
                for target, (arrival, journey) in res.items():
                    if journey.legs:
                        assert journey.legs[0].depart == depart
                        assert journey.legs[-1].arrive == arrival
                    self.replay_ok(network, journey)
                    checked += 1
        assert checked > 50


class TestMatrix:
    def test_minicity_matrix_sample_matches_oracle(
        self, minicity_bundle, minicity_matrix, minicity_oracle, oracle_cache
    ):
        adjacency = poi_nearest_stops(
            minicity_bundle.graph, minicity_bundle.stop_nodes, minicity_bundle.pois
        )
        sample_pois = {p: adjacency[p] for p in list(sorted(adjacency))[:4]}
        expect = oracle_matrix(minicity_oracle, sample_pois, query_cache=oracle_cache)
        for (hour, stop, poi), val in expect.items():
            got = minicity_matrix.get(hour, stop, poi)
            assert got == val, (hour, stop, poi)

    def test_poi_at_origin_is_zero(self, minicity_bundle, minicity_matrix):
        # POI n9007 sits at stop SA06's node (offset a few meters)
        walk_rows = minicity_bundle.walk.poi_rows["n9007"]
        assert walk_rows[0][0] == "SA06" and walk_rows[0][1] == 0.0
        for hour in range(24):
            assert minicity_matrix.get(hour, "SA06", "n9007") == 0

    def test_entries_at_least_final_walk(self, minicity_bundle, minicity_matrix):
        from transitsim.walk import walk_time

        m = minicity_matrix
        for j, pid in enumerate(m.poi_ids):
            rows = minicity_bundle.walk.poi_rows[pid]
            if not rows:
                continue
            lower = min(walk_time(d, 1.2) for _, d, _ in rows)
            vals = m.data[:, :, j]
            assert (vals[vals != UNREACHABLE] >= lower).all() or lower == 0

    def test_mode_mask_excluding_bus_unreachable(self, minicity_bundle):
        router = minicity_bundle.router
        matrix = router.build_matrix(
            minicity_bundle.pois, minicity_bundle.walk, mode_mask=("tram",)
        )
        # bus-only town: only walk-only entries remain (origin adjacent to poi)
        data = matrix.data
        reachable = data != UNREACHABLE
        from transitsim.walk import walk_time

        for j, pid in enumerate(matrix.poi_ids):
            adj = {
                sid: walk_time(d, 1.2) for sid, d, _ in minicity_bundle.walk.poi_rows[pid]
            }
            for i, sid in enumerate(matrix.stop_ids):
                if reachable[:, i, j].any():
                    # must be explainable by walking alone (direct or one
                    # foot transfer to an adjacent stop)
                    direct = sid in adj
                    s_idx = router.stop_index[sid]
                    via = False
                    for e in range(router.tr_indptr[s_idx], router.tr_indptr[s_idx + 1]):
                        if router.stop_ids[int(router.tr_to[e])] in adj:
                            via = True
                    assert direct or via, (sid, pid)

    def test_monotone_under_trip_addition(self):
        network, graph, stop_nodes, router = tiny_setup()
        pois = []
        walk = closest_stops(graph, stop_nodes, {}, {}, n=3)

        # add one extra earlier trip and rebuild: entries never increase
        more = dict(network.trips)
        more["EXTRA"] = TripEvent(
            "EXTRA", "L1",
            [("X", 6 * 3600, 6 * 3600), ("Y", 6 * 3600 + 600, 6 * 3600 + 600),
             ("Z", 6 * 3600 + 1200, 6 * 3600 + 1200)],
            set(range(7)),
        )
        net2 = TransitNetwork(
            stops=network.stops, trips=more, lines=network.lines, reference_date="2025-09-01"
        )
        router2 = TransitRouter(net2, graph, stop_nodes)
        for depart in range(0, 86400, 3600):
            a1 = router.arrivals(router.stop_index["X"], depart)
            a2 = router2.arrivals(router2.stop_index["X"], depart)
            assert (a2 <= a1).all()


class TestExplain:
    def test_explain_duration_matches_first_sample(self, minicity_bundle, minicity_matrix):
        router = minicity_bundle.router
        walk = minicity_bundle.walk
        stop, poi, hour = "SA01", "n9010", 7
        assert minicity_matrix.reachable(hour, stop, poi)
        journey = router.explain(minicity_matrix, walk, stop, poi, hour)
        # duration must equal the first reachable sample's duration
        for minute in router.sampling_minutes:
            depart = hour * 3600 + minute * 60
            arr = router.arrivals(router.stop_index[stop], depart)
            from transitsim.walk import walk_time as wt

            best = None
            for sid, dist, _ in walk.poi_rows[poi]:
                a = int(arr[router.stop_index[sid]])
                if a < 2**61:
                    cand = a + wt(dist, 1.2) - depart
                    best = cand if best is None else min(best, cand)
            if best is not None:
                assert journey.duration == best
                break

    def test_unreachable_entry(self, minicity_bundle):
        router = minicity_bundle.router
        matrix = router.build_matrix(
            minicity_bundle.pois, minicity_bundle.walk, mode_mask=("tram",)
        )
        with pytest.raises(EntryUnreachable):
            router.explain(matrix, minicity_bundle.walk, "SA01", "n9012", 7)


class TestMatrixPersistence:
    def test_roundtrip(self, minicity_matrix, tmp_path):
        save_matrix(minicity_matrix, tmp_path / "m.bin")
        again = load_matrix(tmp_path / "m.bin")
        assert again.stop_ids == minicity_matrix.stop_ids
        assert again.poi_ids == minicity_matrix.poi_ids
        assert (again.data == minicity_matrix.data).all()
        assert again.sampling_minutes == minicity_matrix.sampling_minutes

    def test_csv_export(self, minicity_matrix, tmp_path):
        export_matrix_csv(minicity_matrix, tmp_path / "m.csv")
        head = (tmp_path / "m.csv").read_text().splitlines()
        assert head[0] == "hour,stop_id,poi_id,seconds"
        assert len(head) == 1 + 24 * 20 * 12
