"""Monolithic brute-force reference for the profile math.

One deliberately unstructured function recomputes a residence's weekly
travel time straight from the raw inputs (matrix array, walk rows, POI
list), mirroring the documented semantics with literal loops. It shares no
evaluation code with the package; only data containers are read.
"""

from __future__ import annotations

import math

UNREACHABLE32 = 0xFFFFFFFF


def brute_force_weekly_time(
    profile,
    residence_id: str,
    matrix,
    walk,
    pois,
    poi_residence_dists,
    home_radius_m: float = 8000.0,
    roundtrip_factor: int = 2,
):
    """Returns weekly per-visit seconds or None (unserved)."""

    stop_pos = {s: i for i, s in enumerate(matrix.stop_ids)}
    poi_pos = {p: i for i, p in enumerate(matrix.poi_ids)}
    data = matrix.data

    def exp_time(entry, stop_id, poi_id):
        num = 0.0
        den = 0.0
        for h in range(24):
            wgt = entry.hourly[h]
            if wgt <= 0:
                continue
            val = int(data[h, stop_pos[stop_id], poi_pos[poi_id]])
            if val == UNREACHABLE32:
                continue
            num += wgt * val
            den += wgt
        if den == 0.0:
            return None
        return num / den

    walk_rows = walk.residence_rows.get(residence_id) or []
    if not walk_rows:
        return None

    def leg_seconds(dist_m):
        if dist_m <= 0:
            return 0
        return roundtrip_factor * int(math.ceil(dist_m / profile.walking_speed))

    total_num = 0.0
    total_den = 0.0
    for entry in profile.entries:
        if entry.visits_per_week <= 0:
            continue

        members = sorted(p.poi_id for p in pois if p.category_id == entry.category)
        cat_time = None
        if entry.sampling == "near":
            # joint choice: per stop the near_k smallest expected times,
            # then the stop minimizing walk legs plus their mean
            best = None
            for stop_id, dist_m, _unit in walk_rows:
                ranked = []
                for pid in members:
                    t = exp_time(entry, stop_id, pid)
                    if t is not None:
                        ranked.append((t, pid))
                if not ranked:
                    continue
                ranked.sort()
                top = ranked[: max(1, entry.near_k)]
                total = leg_seconds(dist_m) + sum(t for t, _ in top) / len(top)
                cand = (-len(top), total, stop_id)
                if best is None or cand < best:
                    best = cand
            cat_time = None if best is None else best[1]
        else:
            if entry.sampling == "specific":
                present = any(p.poi_id == entry.specific_poi for p in pois)
                sampled = [entry.specific_poi] if present else []
            else:  # random
                sampled = []
                for pid in members:
                    d = poi_residence_dists.get(pid, {}).get(residence_id)
                    if d is not None and d <= home_radius_m:
                        sampled.append(pid)
            if sampled:
                wgt = 1.0 / len(sampled)
                best = None
                for stop_id, dist_m, _unit in walk_rows:
                    num = 0.0
                    den = 0.0
                    covered = 0
                    for pid in sampled:
                        t = exp_time(entry, stop_id, pid)
                        if t is None:
                            continue
                        num += wgt * t
                        den += wgt
                        covered += 1
                    if covered == 0:
                        continue
                    cand = (-covered, leg_seconds(dist_m) + num / den, stop_id)
                    if best is None or cand < best:
                        best = cand
                cat_time = None if best is None else best[1]
        if cat_time is None:
            continue

        total_num += entry.visits_per_week * cat_time
        total_den += entry.visits_per_week

    if total_den == 0.0:
        return None
    return total_num / total_den
