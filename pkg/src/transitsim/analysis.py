"""Spatial aggregation and comparison of score surfaces.

Hex binning uses flat-top hexagons in axial coordinates over a local
sinusoidal projection anchored at the whole-degree corner below the data,
so cell ids are stable for a given dataset. Resolution r halves the hex
edge per level starting from 3200 m at r=0 down to 25 m at r=7.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import EmptyViewport, UniverseMismatch
from .geo import EARTH_RADIUS_M, haversine_m, project_local

HEX_BASE_EDGE_M = 3200.0
MAX_RESOLUTION = 7

CAR_SPEED_KMH = 30.0
CAR_DETOUR_FACTOR = 1.3


def hex_edge_m(resolution: int) -> float:
    if not 0 <= resolution <= MAX_RESOLUTION:
        raise ValueError(f"resolution must be 0..{MAX_RESOLUTION}")
    return HEX_BASE_EDGE_M / (2 ** resolution)


@dataclass
class HexGrid:
    resolution: int
    anchor: tuple[float, float]  # projection origin (lat0, lon0)
    # (q, r) -> (mean seconds over served, residence count, served count)
    cells: dict[tuple[int, int], tuple[float | None, int, int]] = field(default_factory=dict)


@dataclass
class DiffSurface:
    label_a: str
    label_b: str
    # residence -> signed seconds (a - b); excluded residences absent
    values: dict[str, float] = field(default_factory=dict)
    excluded: int = 0

    def suggested_range(self) -> float:
        if not self.values:
            return 0.0
        return max(abs(v) for v in self.values.values())


def _axial_round(qf: float, rf: float) -> tuple[int, int]:
    # cube rounding
    x, z = qf, rf
    y = -x - z
    rx, ry, rz = round(x), round(y), round(z)
    dx, dy, dz = abs(rx - x), abs(ry - y), abs(rz - z)
    if dx > dy and dx > dz:
        rx = -ry - rz
    elif dy > dz:
        ry = -rx - rz
    else:
        rz = -rx - ry
    return int(rx), int(rz)


def hex_cell(x: float, y: float, edge: float) -> tuple[int, int]:
    """Axial (q, r) of the flat-top hexagon containing planar point (x, y)."""
    qf = (2.0 / 3.0 * x) / edge
    rf = (-1.0 / 3.0 * x + math.sqrt(3.0) / 3.0 * y) / edge
    return _axial_round(qf, rf)


def hex_center(q: int, r: int, edge: float) -> tuple[float, float]:
    x = edge * 1.5 * q
    y = edge * (math.sqrt(3.0) / 2.0 * q + math.sqrt(3.0) * r)
    return x, y


def grid_anchor(residences) -> tuple[float, float]:
    lat0 = math.floor(min(r.lat for r in residences))
    lon0 = math.floor(min(r.lon for r in residences))
    return float(lat0), float(lon0)


def hex_aggregate(surface, residences, resolution: int) -> HexGrid:
    """Bin residences into hexes; cell mean is over served values only."""
    edge = hex_edge_m(resolution)
    anchor = grid_anchor(residences)
    sums: dict[tuple[int, int], float] = {}
    served: dict[tuple[int, int], int] = {}
    counts: dict[tuple[int, int], int] = {}
    for res in residences:
        if res.residence_id not in surface.values:
            continue
        x, y = project_local(res.lat, res.lon, anchor[0], anchor[1])
        cell = hex_cell(x, y, edge)
        counts[cell] = counts.get(cell, 0) + 1
        v = surface.values[res.residence_id]
        if v is None:
            continue
        sums[cell] = sums.get(cell, 0.0) + v
        served[cell] = served.get(cell, 0) + 1
    cells: dict[tuple[int, int], tuple[float | None, int, int]] = {}
    for cell in sorted(counts):
        n_served = served.get(cell, 0)
        mean = sums[cell] / n_served if n_served else None
        cells[cell] = (mean, counts[cell], n_served)
    return HexGrid(resolution=resolution, anchor=anchor, cells=cells)


def normalize_view(values: list[float]) -> tuple[float, float, "_AffineScale"]:
    """Affine [min, max] -> [0, 1] map for the served values in view."""
    if not values:
        raise EmptyViewport("no served values in viewport")
    lo = min(values)
    hi = max(values)
    return lo, hi, _AffineScale(lo, hi)


class _AffineScale:
    def __init__(self, lo: float, hi: float):
        self.lo = lo
        self.hi = hi

    def __call__(self, v: float) -> float:
        if self.hi == self.lo:
            return 0.5
        return (v - self.lo) / (self.hi - self.lo)


def diff(surface_a, surface_b, label_a: str = "a", label_b: str = "b") -> DiffSurface:
    """Per-residence signed difference a - b over the shared universe."""
    if set(surface_a.values) != set(surface_b.values):
        raise UniverseMismatch(
            f"{label_a} and {label_b} cover different residence sets"
        )
    out = DiffSurface(label_a=label_a, label_b=label_b)
    for rid in sorted(surface_a.values):
        va = surface_a.values[rid]
        vb = surface_b.values[rid]
        if va is None or vb is None:
            out.excluded += 1
            continue
        out.values[rid] = va - vb
    return out


def car_baseline_surface(scenario, evaluator, residences):
    """Crow-fly car travel per visit, with the same sampling and visit
    weighting as the transit evaluation. A labeled approximation: constant
    30 km/h with a 1.3 detour factor, no parking or access time."""
    from .profiles import ScoreSurface

    speed_ms = CAR_SPEED_KMH / 3.6
    values: dict[str, float | None] = {}
    for res in sorted(residences, key=lambda r: r.residence_id):
        num = 0.0
        den = 0.0
        for profile in scenario.profiles:
            share = scenario.demographic_shares.get(profile.group_id, 0.0)
            g_num = 0.0
            g_den = 0.0
            for entry in profile.entries:
                if entry.visits_per_week <= 0:
                    continue
                try:
                    sampled = evaluator.sample_pois(entry, res.residence_id, profile.walking_speed)
                except Exception:
                    sampled = []
                if not sampled:
                    continue
                t = 0.0
                for pid, weight in sampled:
                    poi = evaluator.poi_by_id[pid]
                    d = haversine_m(res.lat, res.lon, poi.lat, poi.lon) * CAR_DETOUR_FACTOR
                    t += weight * (d / speed_ms)
                g_num += entry.visits_per_week * t
                g_den += entry.visits_per_week
            if g_den > 0:
                num += share * (g_num / g_den)
                den += share
        values[res.residence_id] = (num / den) if den > 0 else None
    return ScoreSurface(scenario.scenario_id, "CAR", values)


def hex_geojson(grid: HexGrid) -> dict:
    """Hex polygons with mean/count properties (WGS84 rings)."""
    edge = hex_edge_m(grid.resolution)
    lat0, lon0 = grid.anchor
    features = []
    for (q, r), (mean, count, served) in sorted(grid.cells.items()):
        cx, cy = hex_center(q, r, edge)
        ring = []
        for k in range(6):
            ang = math.pi / 3.0 * k
            x = cx + edge * math.cos(ang)
            y = cy + edge * math.sin(ang)
            lat = lat0 + math.degrees(y / EARTH_RADIUS_M)
            lon = lon0 + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat))))
            ring.append([lon, lat])
        ring.append(ring[0])
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {"q": q, "r": r, "mean_s": mean, "count": count, "served": served},
        })
    return {"type": "FeatureCollection", "features": features}
