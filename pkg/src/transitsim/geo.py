"""Geodesic helpers and a uniform grid index for nearest-node queries."""

from __future__ import annotations

import math

EARTH_RADIUS_M = 6371000.0


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters between two WGS84 points."""
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def project_local(lat: float, lon: float, lat0: float, lon0: float) -> tuple[float, float]:
    """Sinusoidal projection centered on (lat0, lon0); near-equal-area locally.

    Returns planar (x, y) in meters. Adequate for county-scale extents.
    """
    x = EARTH_RADIUS_M * math.radians(lon - lon0) * math.cos(math.radians(lat))
    y = EARTH_RADIUS_M * math.radians(lat - lat0)
    return x, y


def polygon_area_m2(points: list[tuple[float, float]]) -> float:
    """Shoelace area of a lat/lon ring, in square meters (absolute value)."""
    if len(points) < 3:
        return 0.0
    lat0 = sum(p[0] for p in points) / len(points)
    lon0 = sum(p[1] for p in points) / len(points)
    xy = [project_local(lat, lon, lat0, lon0) for lat, lon in points]
    s = 0.0
    for i in range(len(xy)):
        x1, y1 = xy[i]
        x2, y2 = xy[(i + 1) % len(xy)]
        s += x1 * y2 - x2 * y1
    return abs(s) / 2.0


class GridIndex:
    """Uniform lat/lon cell grid answering exact nearest-point queries.

    Exactness contract: ``nearest`` returns the same (point, distance) as a
    linear haversine scan over all indexed points, ties broken by smallest
    key. Ring expansion stops only once the conservative lower bound for the
    next ring exceeds the best distance found so far, so the result never
    depends on cell geometry.
    """

    def __init__(self, cell_m: float = 250.0):
        self.cell_m = cell_m
        self._cells: dict[tuple[int, int], list[tuple[float, float, object]]] = {}
        self._max_abs_lat = 0.0
        self._lat_deg = cell_m / (EARTH_RADIUS_M * math.pi / 180.0)
        self._lon_deg = self._lat_deg  # refined as points arrive
        self._bounds: list[int] | None = None  # min_i, max_i, min_j, max_j
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def _key(self, lat: float, lon: float) -> tuple[int, int]:
        return (int(math.floor(lat / self._lat_deg)), int(math.floor(lon / self._lon_deg)))

    def add(self, lat: float, lon: float, item: object) -> None:
        if abs(lat) > self._max_abs_lat:
            self._max_abs_lat = min(abs(lat), 89.0)
            self._lon_deg = self._lat_deg / max(math.cos(math.radians(self._max_abs_lat)), 1e-6)
            if self._n:
                self._rebuild()
        i, j = self._key(lat, lon)
        self._cells.setdefault((i, j), []).append((lat, lon, item))
        if self._bounds is None:
            self._bounds = [i, i, j, j]
        else:
            b = self._bounds
            b[0] = min(b[0], i)
            b[1] = max(b[1], i)
            b[2] = min(b[2], j)
            b[3] = max(b[3], j)
        self._n += 1

    def _rebuild(self) -> None:
        old = [entry for bucket in self._cells.values() for entry in bucket]
        self._cells = {}
        self._bounds = None
        n = self._n
        self._n = 0
        for lat, lon, item in old:
            self.add(lat, lon, item)
        self._n = n

    def _ring_lower_bound_m(self, ring: int) -> float:
        # Any point in a cell at Chebyshev ring k lies at least (k-1) whole
        # cells away along lat or lon; both cell axes span >= cell_m ground
        # meters by construction.
        if ring <= 1:
            return 0.0
        return (ring - 1) * self.cell_m

    def nearest(self, lat: float, lon: float, max_dist_m: float = float("inf")):
        """Exact nearest indexed point within ``max_dist_m``.

        Returns (item, distance_m) or None. Ties broken by smallest item.
        """
        if self._n == 0:
            return None
        ci, cj = self._key(lat, lon)
        b = self._bounds
        assert b is not None
        last_ring = max(ci - b[0], b[1] - ci, cj - b[2], b[3] - cj, 0)
        best: tuple[float, object] | None = None
        ring = 0
        while ring <= last_ring:
            lb = self._ring_lower_bound_m(ring)
            if lb > max_dist_m:
                break
            if best is not None and lb > best[0]:
                break
            for i, j in self._ring_cells(ci, cj, ring):
                bucket = self._cells.get((i, j))
                if not bucket:
                    continue
                for plat, plon, item in bucket:
                    d = haversine_m(lat, lon, plat, plon)
                    if d > max_dist_m:
                        continue
                    cand = (d, item)
                    if best is None or cand < best:
                        best = cand
            ring += 1
        if best is None:
            return None
        return best[1], best[0]

    @staticmethod
    def _ring_cells(ci: int, cj: int, ring: int):
        if ring == 0:
            yield ci, cj
            return
        for j in range(cj - ring, cj + ring + 1):
            yield ci - ring, j
            yield ci + ring, j
        for i in range(ci - ring + 1, ci + ring):
            yield i, cj - ring
            yield i, cj + ring
