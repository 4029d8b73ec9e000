from __future__ import annotations

import io
import zipfile

import pytest

from transitsim.errors import DanglingReference, MalformedRow, MissingFile
from transitsim.gtfs import (
    load_network,
    parse_gtfs,
    parse_hhmmss,
    save_network,
    stop_frequency_index,
)


def make_zip(files: dict[str, str]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name, content in files.items():
            zf.writestr(name, content)
    return buf.getvalue()


BASE_FILES = {
    "stops.txt": (
        "stop_id,stop_name,stop_lat,stop_lon\n"
        "S1,First,47.0,8.0\n"
        "S2,Second,47.001,8.0\n"
        "S3,Third,47.002,8.0\n"
    ),
    "routes.txt": "route_id,route_short_name,route_type\nR1,1,3\n",
    "trips.txt": "route_id,service_id,trip_id\nR1,wk,T1\n",
    "stop_times.txt": (
        "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
        "T1,07:10:00,07:10:00,S1,1\n"
        "T1,07:40:00,07:41:00,S2,2\n"
        "T1,08:05:00,08:05:00,S3,3\n"
    ),
    "calendar.txt": (
        "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n"
        "wk,1,1,1,1,1,0,0,20250901,20260101\n"
    ),
}


def variant(**overrides) -> bytes:
    files = dict(BASE_FILES)
    files.update(overrides)
    return make_zip(files)


class TestParseBasics:
    def test_small_feed(self):
        net = parse_gtfs(variant())
        assert set(net.stops) == {"S1", "S2", "S3"}
        assert set(net.trips) == {"T1"}
        assert net.lines["R1"].pattern == ["S1", "S2", "S3"]
        assert net.lines["R1"].mode == "bus"
        assert net.reference_date == "2025-09-01"
        assert net.trips["T1"].service_days == {0, 1, 2, 3, 4}

    def test_missing_file(self):
        files = {"stops.txt": BASE_FILES["stops.txt"]}
        with pytest.raises(MissingFile) as exc:
            parse_gtfs(make_zip(files))
        assert exc.value.name == "routes.txt"

    def test_malformed_coordinates(self):
        bad = BASE_FILES["stops.txt"].replace("47.0,8.0", "91.5,8.0")
        with pytest.raises(MalformedRow) as exc:
            parse_gtfs(variant(**{"stops.txt": bad}))
        assert "out of range" in exc.value.report()

    def test_non_utf8(self):
        files = dict(BASE_FILES)
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w") as zf:
            for name, content in files.items():
                if name == "stops.txt":
                    zf.writestr(name, content.encode("utf-16"))
                else:
                    zf.writestr(name, content)
        with pytest.raises(MalformedRow):
            parse_gtfs(buf.getvalue())

    def test_bom_accepted(self):
        files = dict(BASE_FILES)
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w") as zf:
            for name, content in files.items():
                zf.writestr(name, ("﻿" + content).encode("utf-8"))
        net = parse_gtfs(buf.getvalue())
        assert len(net.stops) == 3

    def test_dangling_stop_reference(self):
        bad = BASE_FILES["stop_times.txt"].replace("S3,3", "S9,3")
        with pytest.raises(DanglingReference):
            parse_gtfs(variant(**{"stop_times.txt": bad}))

    def test_dangling_route_reference(self):
        bad = "route_id,service_id,trip_id\nR9,wk,T1\n"
        with pytest.raises(DanglingReference):
            parse_gtfs(variant(**{"trips.txt": bad}))

    def test_arrival_after_departure_rejected(self):
        bad = BASE_FILES["stop_times.txt"].replace("07:40:00,07:41:00", "07:42:00,07:41:00")
        with pytest.raises(MalformedRow):
            parse_gtfs(variant(**{"stop_times.txt": bad}))

    def test_single_stop_trip_rejected(self):
        bad = "trip_id,arrival_time,departure_time,stop_id,stop_sequence\nT1,07:10:00,07:10:00,S1,1\n"
        with pytest.raises(MalformedRow):
            parse_gtfs(variant(**{"stop_times.txt": bad}))

    def test_never_active_service_dropped(self):
        # service window ends before the reference week begins
        cal = (
            "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n"
            "wk,1,1,1,1,1,0,0,20250901,20260101\n"
            "dead,0,0,0,0,0,0,0,20250901,20260101\n"
        )
        trips = "route_id,service_id,trip_id\nR1,wk,T1\nR1,dead,T2\n"
        st = BASE_FILES["stop_times.txt"] + (
            "T2,09:10:00,09:10:00,S1,1\nT2,09:20:00,09:20:00,S2,2\n"
        )
        net = parse_gtfs(variant(**{"calendar.txt": cal, "trips.txt": trips, "stop_times.txt": st}))
        assert set(net.trips) == {"T1"}

    def test_calendar_dates_exceptions(self):
        # remove Monday 2025-09-01, add Saturday 2025-09-06
        files = dict(BASE_FILES)
        files["calendar_dates.txt"] = (
            "service_id,date,exception_type\nwk,20250901,2\nwk,20250906,1\n"
        )
        net = parse_gtfs(make_zip(files))
        assert net.trips["T1"].service_days == {1, 2, 3, 4, 5}

    def test_overnight_times_retained(self):
        st = (
            "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
            "T1,23:50:00,23:50:00,S1,1\n"
            "T1,24:10:00,24:10:00,S2,2\n"
            "T1,25:05:00,25:05:00,S3,3\n"
        )
        net = parse_gtfs(variant(**{"stop_times.txt": st}))
        assert net.trips["T1"].sequence[1][1] == 24 * 3600 + 600
        assert net.trips["T1"].sequence[2][1] > 86400

    def test_frequencies_expansion(self):
        files = dict(BASE_FILES)
        files["frequencies.txt"] = (
            "trip_id,start_time,end_time,headway_secs\nT1,06:00:00,07:00:00,1800\n"
        )
        net = parse_gtfs(make_zip(files))
        assert set(net.trips) == {"T1#0", "T1#1"}
        first = net.trips["T1#0"].sequence
        assert first[0][2] == 6 * 3600
        # travel profile preserved: 30 min to S2, arrival one minute before departure
        assert first[1][1] == 6 * 3600 + 30 * 60
        second = net.trips["T1#1"].sequence
        assert second[0][2] == 6 * 3600 + 1800


class TestFrequencyIndex:
    def test_bucketing(self):
        net = parse_gtfs(variant())
        freq = stop_frequency_index(net, 0)
        assert freq["S1"][7] == 1
        assert freq["S2"][7] == 1
        assert freq["S3"][8] == 1
        assert sum(sum(v) for v in freq.values()) == 3

    def test_queried_day_without_service(self):
        net = parse_gtfs(variant())
        freq = stop_frequency_index(net, 5)  # Saturday: no service
        assert all(all(x == 0 for x in v) for v in freq.values())

    def test_overnight_counted_on_following_day(self):
        st = (
            "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
            "T1,23:50:00,23:50:00,S1,1\n"
            "T1,24:10:00,24:10:00,S2,2\n"
            "T1,25:05:00,25:05:00,S3,3\n"
        )
        cal = (
            "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n"
            "wk,1,0,0,0,0,0,0,20250901,20260101\n"
        )
        net = parse_gtfs(variant(**{"stop_times.txt": st, "calendar.txt": cal}))
        monday = stop_frequency_index(net, 0)
        tuesday = stop_frequency_index(net, 1)
        assert monday["S1"][23] == 1
        assert monday["S2"][0] == 0  # past-midnight event excluded from Monday
        assert tuesday["S2"][0] == 1
        assert tuesday["S3"][1] == 1


class TestMinicity:
    def test_counts_match_manifest(self, minicity_network, manifest):
        g = manifest["gtfs"]
        assert len(minicity_network.stops) == g["stops"]
        assert len(minicity_network.lines) == g["routes"]
        assert len(minicity_network.trips) == g["trips"]

    def test_hourly_frequencies_match_manifest(self, minicity_network, manifest):
        expected = manifest["gtfs"]["hourly_departures"]
        for sid, stop in minicity_network.stops.items():
            assert stop.hourly_frequency == expected[sid], sid

    def test_departure_total_matches_manifest(self, minicity_network, manifest):
        freq = stop_frequency_index(minicity_network, 0)
        total = sum(sum(v) for v in freq.values())
        assert total == manifest["gtfs"]["total_departures_monday"]

    def test_line_patterns_cover_trip_stops(self, minicity_network):
        for line in minicity_network.lines.values():
            union = set()
            for trip in minicity_network.trips.values():
                if trip.line_id == line.line_id:
                    union |= {sid for sid, _, _ in trip.sequence}
            assert set(line.pattern) == union

    def test_roundtrip(self, minicity_network, tmp_path):
        save_network(minicity_network, tmp_path / "net")
        again = load_network(tmp_path / "net")
        assert again == minicity_network

    def test_parse_deterministic(self, minicity_dir):
        a = parse_gtfs(minicity_dir / "gtfs.zip")
        b = parse_gtfs(minicity_dir / "gtfs.zip")
        assert a == b
        assert list(a.stops) == list(b.stops)
        assert list(a.trips) == list(b.trips)


def test_parse_hhmmss():
    assert parse_hhmmss("07:10:00") == 25800
    assert parse_hhmmss("24:10:00") == 87000
    with pytest.raises(ValueError):
        parse_hhmmss("7:70:00")
