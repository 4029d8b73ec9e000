"""GTFS feed ingestion into a validated in-memory transit network.

Reads the five mandatory files (stops, routes, trips, stop_times, calendar)
from a zip archive, applies calendar_dates exceptions, expands
frequencies.txt into explicit trips, and anchors everything to a reference
week starting on the first Monday on/after the feed start date. Times are
seconds since midnight of a service day; values past 86400 are overnight
continuations and are kept as-is.
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
from collections.abc import Iterable
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

from .errors import DanglingReference, MalformedRow, MissingFile

MANDATORY_FILES = ["stops.txt", "routes.txt", "trips.txt", "stop_times.txt", "calendar.txt"]

SECONDS_PER_DAY = 86400

# GTFS route_type -> coarse mode tag (incl. common extended ranges)
_MODE_BY_TYPE = {
    0: "tram", 1: "subway", 2: "rail", 3: "bus", 4: "ferry",
    5: "tram", 6: "gondola", 7: "funicular", 11: "bus", 12: "rail",
}


def mode_for_route_type(route_type: int) -> str:
    if route_type in _MODE_BY_TYPE:
        return _MODE_BY_TYPE[route_type]
    if 100 <= route_type < 200:
        return "rail"
    if 200 <= route_type < 300:
        return "bus"
    if 400 <= route_type < 500:
        return "subway"
    if 700 <= route_type < 800:
        return "bus"
    if 900 <= route_type < 1000:
        return "tram"
    if route_type == 1000:
        return "ferry"
    return "other"


@dataclass
class Stop:
    stop_id: str
    name: str
    lat: float
    lon: float
    served_lines: set[str] = field(default_factory=set)
    hourly_frequency: list[int] = field(default_factory=lambda: [0] * 24)


@dataclass
class TripEvent:
    trip_id: str
    line_id: str
    # ordered (stop_id, arrival_s, departure_s)
    sequence: list[tuple[str, int, int]]
    service_days: set[int]  # weekday ints, Monday=0


@dataclass
class Line:
    line_id: str
    pattern: list[str]
    mode: str


@dataclass
class TransitNetwork:
    stops: dict[str, Stop]
    trips: dict[str, TripEvent]
    lines: dict[str, Line]
    reference_date: str  # ISO date of the reference Monday
    reference_day: int = 0  # weekday of the reference day (Monday)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransitNetwork):
            return NotImplemented
        return (
            self.reference_date == other.reference_date
            and self.reference_day == other.reference_day
            and self.stops == other.stops
            and self.trips == other.trips
            and self.lines == other.lines
        )


def parse_hhmmss(text: str) -> int:
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ValueError(f"bad time {text!r}")
    h, m, s = (int(p) for p in parts)
    if m < 0 or m > 59 or s < 0 or s > 59 or h < 0:
        raise ValueError(f"bad time {text!r}")
    return h * 3600 + m * 60 + s


def format_hhmmss(seconds: int) -> str:
    return f"{seconds // 3600:02d}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


def _parse_gtfs_date(text: str) -> date:
    text = text.strip()
    if len(text) != 8 or not text.isdigit():
        raise ValueError(f"bad date {text!r}")
    return date(int(text[:4]), int(text[4:6]), int(text[6:8]))


class _CsvFile:
    """One GTFS CSV file decoded as UTF-8 (optional BOM), with offenses."""

    def __init__(self, name: str, raw: bytes):
        self.name = name
        self.offenses: list[str] = []
        try:
            text = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise MalformedRow(name, [f"{name}: not valid UTF-8 ({exc.reason} at byte {exc.start})"])
        self.reader = csv.reader(io.StringIO(text, newline=""))
        try:
            self.header = next(self.reader)
        except StopIteration:
            raise MalformedRow(name, [f"{name}: empty file"])
        self.header = [h.strip() for h in self.header]
        self.index = {h: i for i, h in enumerate(self.header)}

    def require_columns(self, cols: list[str]) -> None:
        missing = [c for c in cols if c not in self.index]
        if missing:
            raise MalformedRow(self.name, [f"{self.name}: missing column {c!r}" for c in missing])

    def rows(self):
        """Yields (line_no, dict) pairs; short rows padded with ''."""
        for line_no, row in enumerate(self.reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < len(self.header):
                row = row + [""] * (len(self.header) - len(row))
            yield line_no, {h: row[i].strip() for h, i in self.index.items()}

    def offend(self, line_no: int, reason: str) -> None:
        self.offenses.append(f"{self.name}:{line_no}: {reason}")

    def raise_if_offended(self) -> None:
        if self.offenses:
            raise MalformedRow(self.name, self.offenses)


def _open_archive(archive) -> zipfile.ZipFile:
    if isinstance(archive, (str, Path)):
        return zipfile.ZipFile(archive, "r")
    if isinstance(archive, bytes):
        return zipfile.ZipFile(io.BytesIO(archive), "r")
    return zipfile.ZipFile(archive, "r")


def _merge_patterns(sequences: list[list[str]]) -> list[str]:
    """Deterministic merge of trip stop sequences into one line pattern.

    The result contains exactly the union of all stops. Order: start from
    the longest sequence (ties by content), then splice each remaining
    sequence's unseen stops right after their predecessor.
    """
    if not sequences:
        return []
    ordered = sorted(sequences, key=lambda s: (-len(s), s))
    pattern = list(dict.fromkeys(ordered[0]))
    known = set(pattern)
    for seq in ordered[1:]:
        prev = None
        for stop in seq:
            if stop in known:
                prev = stop
                continue
            if prev is None:
                pattern.insert(0, stop)
            else:
                pattern.insert(pattern.index(prev) + 1, stop)
            known.add(stop)
            prev = stop
    return pattern


def parse_gtfs(archive) -> TransitNetwork:
    """Parse a GTFS zip (path, bytes, or file-like) into a TransitNetwork.

    Raises MissingFile / MalformedRow / DanglingReference; each carries a
    report of the first 100 offenses.
    """
    with _open_archive(archive) as zf:
        names = {info.filename for info in zf.infolist()}
        for required in MANDATORY_FILES:
            if required not in names:
                raise MissingFile(required)

        def load(name: str) -> _CsvFile:
            return _CsvFile(name, zf.read(name))

        stops_csv = load("stops.txt")
        routes_csv = load("routes.txt")
        trips_csv = load("trips.txt")
        stop_times_csv = load("stop_times.txt")
        calendar_csv = load("calendar.txt")
        caldates_csv = load("calendar_dates.txt") if "calendar_dates.txt" in names else None
        freq_csv = load("frequencies.txt") if "frequencies.txt" in names else None

    # ---- stops
    stops_csv.require_columns(["stop_id", "stop_name", "stop_lat", "stop_lon"])
    stops: dict[str, Stop] = {}
    for line_no, row in stops_csv.rows():
        sid = row["stop_id"]
        if not sid:
            stops_csv.offend(line_no, "empty stop_id")
            continue
        if sid in stops:
            stops_csv.offend(line_no, f"duplicate stop_id {sid!r}")
            continue
        try:
            lat = float(row["stop_lat"])
            lon = float(row["stop_lon"])
        except ValueError:
            stops_csv.offend(line_no, "stop_lat/stop_lon not numeric")
            continue
        if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
            stops_csv.offend(line_no, f"coordinates out of range ({lat}, {lon})")
            continue
        stops[sid] = Stop(stop_id=sid, name=row["stop_name"], lat=lat, lon=lon)
    stops_csv.raise_if_offended()

    # ---- routes
    routes_csv.require_columns(["route_id", "route_type"])
    route_modes: dict[str, str] = {}
    for line_no, row in routes_csv.rows():
        rid = row["route_id"]
        if not rid:
            routes_csv.offend(line_no, "empty route_id")
            continue
        if rid in route_modes:
            routes_csv.offend(line_no, f"duplicate route_id {rid!r}")
            continue
        try:
            rtype = int(row["route_type"]) if row["route_type"] else 3
        except ValueError:
            routes_csv.offend(line_no, "route_type not an integer")
            continue
        route_modes[rid] = mode_for_route_type(rtype)
    routes_csv.raise_if_offended()

    # ---- calendar + exceptions
    calendar_csv.require_columns(
        ["service_id", "monday", "tuesday", "wednesday", "thursday",
         "friday", "saturday", "sunday", "start_date", "end_date"]
    )
    services: dict[str, dict] = {}
    day_cols = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
    for line_no, row in calendar_csv.rows():
        svc = row["service_id"]
        if not svc:
            calendar_csv.offend(line_no, "empty service_id")
            continue
        try:
            flags = [row[c] == "1" for c in day_cols]
            start = _parse_gtfs_date(row["start_date"])
            end = _parse_gtfs_date(row["end_date"])
        except ValueError as exc:
            calendar_csv.offend(line_no, str(exc))
            continue
        services[svc] = {"flags": flags, "start": start, "end": end, "added": set(), "removed": set()}
    calendar_csv.raise_if_offended()

    if caldates_csv is not None:
        caldates_csv.require_columns(["service_id", "date", "exception_type"])
        for line_no, row in caldates_csv.rows():
            svc = row["service_id"]
            try:
                day = _parse_gtfs_date(row["date"])
                etype = int(row["exception_type"])
            except ValueError as exc:
                caldates_csv.offend(line_no, str(exc))
                continue
            if etype not in (1, 2):
                caldates_csv.offend(line_no, f"exception_type must be 1 or 2, got {etype}")
                continue
            if svc not in services:
                # calendar_dates may define services not present in calendar.txt
                services[svc] = {
                    "flags": [False] * 7,
                    "start": day,
                    "end": day,
                    "added": set(),
                    "removed": set(),
                }
            entry = services[svc]
            entry["start"] = min(entry["start"], day)
            entry["end"] = max(entry["end"], day)
            (entry["added"] if etype == 1 else entry["removed"]).add(day)
        caldates_csv.raise_if_offended()

    if not services:
        raise MalformedRow("calendar.txt", ["calendar.txt: defines no services"])

    feed_start = min(entry["start"] for entry in services.values())
    reference_monday = feed_start + timedelta(days=(7 - feed_start.weekday()) % 7)

    def active_weekdays(svc: str) -> set[int]:
        entry = services[svc]
        days = set()
        for w in range(7):
            d = reference_monday + timedelta(days=w)
            if d in entry["removed"]:
                continue
            if d in entry["added"]:
                days.add(w)
                continue
            if entry["start"] <= d <= entry["end"] and entry["flags"][d.weekday()]:
                days.add(w)
        return days

    # ---- trips
    trips_csv.require_columns(["route_id", "service_id", "trip_id"])
    trip_line: dict[str, str] = {}
    trip_days: dict[str, set[int]] = {}
    dangling: list[str] = []
    for line_no, row in trips_csv.rows():
        tid = row["trip_id"]
        if not tid:
            trips_csv.offend(line_no, "empty trip_id")
            continue
        if tid in trip_line:
            trips_csv.offend(line_no, f"duplicate trip_id {tid!r}")
            continue
        rid = row["route_id"]
        svc = row["service_id"]
        if rid not in route_modes:
            dangling.append(f"trips.txt:{line_no}: route {rid!r}")
            continue
        if svc not in services:
            dangling.append(f"trips.txt:{line_no}: service {svc!r}")
            continue
        trip_line[tid] = rid
        trip_days[tid] = active_weekdays(svc)
    trips_csv.raise_if_offended()
    if dangling:
        raise DanglingReference("route/service", dangling)

    # ---- stop_times
    stop_times_csv.require_columns(["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"])
    raw_seqs: dict[str, list[tuple[int, str, int, int]]] = {}
    for line_no, row in stop_times_csv.rows():
        tid = row["trip_id"]
        if tid not in trip_line:
            dangling.append(f"stop_times.txt:{line_no}: trip {tid!r}")
            continue
        sid = row["stop_id"]
        if sid not in stops:
            dangling.append(f"stop_times.txt:{line_no}: stop {sid!r}")
            continue
        try:
            seq_no = int(row["stop_sequence"])
            arr = parse_hhmmss(row["arrival_time"])
            dep = parse_hhmmss(row["departure_time"])
        except ValueError as exc:
            stop_times_csv.offend(line_no, str(exc))
            continue
        if arr > dep:
            stop_times_csv.offend(line_no, f"arrival after departure at stop {sid!r}")
            continue
        raw_seqs.setdefault(tid, []).append((seq_no, sid, arr, dep))
    stop_times_csv.raise_if_offended()
    if dangling:
        raise DanglingReference("trip/stop", dangling)

    trips: dict[str, TripEvent] = {}
    for tid in sorted(raw_seqs):
        entries = sorted(raw_seqs[tid])
        seq = [(sid, arr, dep) for _, sid, arr, dep in entries]
        if len(seq) < 2:
            stop_times_csv.offend(0, f"trip {tid!r} has fewer than 2 stops")
            continue
        ok = all(seq[i][2] <= seq[i + 1][1] for i in range(len(seq) - 1))
        if not ok:
            stop_times_csv.offend(0, f"trip {tid!r} has non-monotone times")
            continue
        trips[tid] = TripEvent(
            trip_id=tid, line_id=trip_line[tid], sequence=seq, service_days=trip_days[tid]
        )
    stop_times_csv.raise_if_offended()

    # ---- frequencies.txt expansion into explicit trips
    if freq_csv is not None:
        freq_csv.require_columns(["trip_id", "start_time", "end_time", "headway_secs"])
        expansions: dict[str, list[tuple[int, int, int]]] = {}
        for line_no, row in freq_csv.rows():
            tid = row["trip_id"]
            if tid not in trips:
                dangling.append(f"frequencies.txt:{line_no}: trip {tid!r}")
                continue
            try:
                start = parse_hhmmss(row["start_time"])
                end = parse_hhmmss(row["end_time"])
                headway = int(row["headway_secs"])
            except ValueError as exc:
                freq_csv.offend(line_no, str(exc))
                continue
            if headway <= 0 or end <= start:
                freq_csv.offend(line_no, "headway must be positive and end_time after start_time")
                continue
            expansions.setdefault(tid, []).append((start, end, headway))
        freq_csv.raise_if_offended()
        if dangling:
            raise DanglingReference("trip", dangling)
        for tid in sorted(expansions):
            template = trips.pop(tid)
            base = template.sequence[0][2]
            counter = 0
            for start, end, headway in sorted(expansions[tid]):
                t = start
                while t < end:
                    shift = t - base
                    seq = [(sid, arr + shift, dep + shift) for sid, arr, dep in template.sequence]
                    new_id = f"{tid}#{counter}"
                    trips[new_id] = TripEvent(
                        trip_id=new_id,
                        line_id=template.line_id,
                        sequence=seq,
                        service_days=set(template.service_days),
                    )
                    counter += 1
                    t += headway

    # drop trips whose service never activates in the reference week
    trips = {tid: t for tid, t in sorted(trips.items()) if t.service_days}

    # ---- lines from surviving trips
    by_line: dict[str, list[TripEvent]] = {}
    for t in trips.values():
        by_line.setdefault(t.line_id, []).append(t)
    lines: dict[str, Line] = {}
    for lid in sorted(by_line):
        seqs = [[sid for sid, _, _ in t.sequence] for t in sorted(by_line[lid], key=lambda t: t.trip_id)]
        lines[lid] = Line(line_id=lid, pattern=_merge_patterns(seqs), mode=route_modes[lid])

    network = TransitNetwork(
        stops=dict(sorted(stops.items())),
        trips=trips,
        lines=lines,
        reference_date=reference_monday.isoformat(),
        reference_day=0,
    )
    _annotate_stops(network)
    return network


def _annotate_stops(network: TransitNetwork) -> None:
    """Fill served_lines and reference-day hourly frequencies on stops."""
    for stop in network.stops.values():
        stop.served_lines = set()
        stop.hourly_frequency = [0] * 24
    for line in network.lines.values():
        for sid in line.pattern:
            network.stops[sid].served_lines.add(line.line_id)
    freq = stop_frequency_index(network, network.reference_day)
    for sid, slots in freq.items():
        network.stops[sid].hourly_frequency = slots


def stop_frequency_index(network: TransitNetwork, day: int) -> dict[str, list[int]]:
    """Departures per stop per hour slot for one weekday.

    Slot h counts departures in [3600*h, 3600*(h+1)) of the queried day.
    Departures at t >= 86400 on a trip active on day D belong to day
    D + t//86400, slot (t//3600) % 24.
    """
    out = {sid: [0] * 24 for sid in network.stops}
    for trip in network.trips.values():
        days = {w % 7 for w in trip.service_days}
        for sid, _, dep in trip.sequence:
            offset = dep // SECONDS_PER_DAY
            if (day - offset) % 7 in days:
                out[sid][(dep // 3600) % 24] += 1
    return out


# ---------------------------------------------------------------------------
# TSNET v1 persistence: one newline-delimited record file per entity kind,
# each starting with the version header line.

NETWORK_HEADER = "TSNET v1"
_NETWORK_FILES = ("meta.ndjson", "stops.ndjson", "lines.ndjson", "trips.ndjson")


def _dump_records(path: Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(NETWORK_HEADER + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def _load_records(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != NETWORK_HEADER:
            raise MalformedRow(str(path), [f"{path}: bad header {header!r}"])
        return [json.loads(line) for line in fh if line.strip()]


def save_network(network: TransitNetwork, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _dump_records(
        directory / "meta.ndjson",
        [{
            "reference_date": network.reference_date,
            "reference_day": network.reference_day,
            "stop_count": len(network.stops),
            "trip_count": len(network.trips),
            "line_count": len(network.lines),
        }],
    )
    _dump_records(
        directory / "stops.ndjson",
        ({
            "stop_id": s.stop_id,
            "name": s.name,
            "lat": s.lat,
            "lon": s.lon,
            "served_lines": sorted(s.served_lines),
            "hourly_frequency": s.hourly_frequency,
        } for s in (network.stops[k] for k in sorted(network.stops))),
    )
    _dump_records(
        directory / "lines.ndjson",
        ({
            "line_id": l.line_id,
            "pattern": l.pattern,
            "mode": l.mode,
        } for l in (network.lines[k] for k in sorted(network.lines))),
    )
    _dump_records(
        directory / "trips.ndjson",
        ({
            "trip_id": t.trip_id,
            "line_id": t.line_id,
            "sequence": [[sid, arr, dep] for sid, arr, dep in t.sequence],
            "service_days": sorted(t.service_days),
        } for t in (network.trips[k] for k in sorted(network.trips))),
    )


def load_network(directory) -> TransitNetwork:
    directory = Path(directory)
    for name in _NETWORK_FILES:
        if not (directory / name).exists():
            raise MissingFile(str(directory / name))
    meta = _load_records(directory / "meta.ndjson")[0]
    stops = {
        r["stop_id"]: Stop(
            stop_id=r["stop_id"],
            name=r["name"],
            lat=r["lat"],
            lon=r["lon"],
            served_lines=set(r["served_lines"]),
            hourly_frequency=list(r["hourly_frequency"]),
        )
        for r in _load_records(directory / "stops.ndjson")
    }
    lines = {
        r["line_id"]: Line(line_id=r["line_id"], pattern=list(r["pattern"]), mode=r["mode"])
        for r in _load_records(directory / "lines.ndjson")
    }
    trips = {
        r["trip_id"]: TripEvent(
            trip_id=r["trip_id"],
            line_id=r["line_id"],
            sequence=[(sid, arr, dep) for sid, arr, dep in r["sequence"]],
            service_days=set(r["service_days"]),
        )
        for r in _load_records(directory / "trips.ndjson")
    }
    return TransitNetwork(
        stops=stops,
        trips=trips,
        lines=lines,
        reference_date=meta["reference_date"],
        reference_day=meta["reference_day"],
    )
