#!/usr/bin/env python3
"""Writes the bundled scenario files under scenarios/.

The three pilot areas are modeled as synthetic street grids, not real map
data:

  mandaluyong     narrow, heavily congested grid. Every street is narrow
                  and daytime congestion is 5x, so with sensitivities
                  motorcycle 0, motorlance 1/6, ambulance 1 the clinic ->
                  hospital run takes 180 s / 300 s / 900 s. Demand of
                  10 requests/hour keeps the motorlance fleet about 50%
                  busy; the rate is synthetic.
  smokey_mountain low-infrastructure grid: slow unpaved lanes and one wide
                  main road along the edge, moderate congestion.
  iloilo          wide, fast, nearly uncongested grid.
"""

import json
import math
from pathlib import Path

SENSITIVITY = {"motorcycle": 0.0, "motorlance": 1.0 / 6.0, "ambulance": 1.0}


def hourly(day, night, day_hours=range(6, 22)):
    return [day if h in day_hours else night for h in range(24)]


def grid(rows, cols, spacing_m, lat0, lon0, speed_for, width_for):
    dlat = spacing_m / 111_194.93
    dlon = dlat / math.cos(math.radians(lat0))
    nid = lambda r, c: r * cols + c + 1
    nodes = [{"id": nid(r, c), "lat": round(lat0 + r * dlat, 7), "lon": round(lon0 + c * dlon, 7)}
             for r in range(rows) for c in range(cols)]
    edges = []
    eid = 1
    for r in range(rows):
        for c in range(cols):
            for (r2, c2) in ((r, c + 1), (r + 1, c)):
                if r2 < rows and c2 < cols:
                    a, b = (r, c), (r2, c2)
                    edges.append({"id": eid, "from": nid(*a), "to": nid(*b), "length_m": spacing_m,
                                  "free_flow_mps": speed_for(a, b), "width": width_for(a, b)})
                    eid += 1
    return nodes, edges, nid


def mandaluyong():
    nodes, edges, nid = grid(7, 7, 240.0, 14.5770, 121.0330, lambda a, b: 8.0, lambda a, b: "narrow")
    return {
        "name": "mandaluyong",
        "description": "Synthetic narrow-street grid, peak congestion factor 5 from 06:00 to 22:00.",
        "directed": False,
        "nodes": nodes,
        "edges": edges,
        "profile": {"hourly": {"narrow": hourly(5.0, 2.0), "wide": hourly(5.0, 2.0)},
                    "sensitivity": SENSITIVITY},
        "scenario": {
            "fleet": [{"vehicle": "motorlance", "count": 3, "depot": nid(0, 0)}],
            "facilities": [{"id": "F1", "node": nid(3, 3), "name": "City medical center"},
                           {"id": "F2", "node": nid(6, 6), "name": "District hospital"}],
            "demand": {"rate_per_hour": 10.0},
            "horizon_s": 8 * 3600,
            "start_time_s": 8 * 3600,
            "seed": 1,
            "on_scene_service_s": 300,
            "dispatcher_present": False,
            "dispatch": {"confirmation_window_s": 15, "notify_contacts": True, "nearest_k_considered": 3},
            "landmarks": {"clinic": nid(0, 0), "hospital": nid(3, 3)},
        },
    }


def smokey_mountain():
    main_road = lambda a, b: a[0] == 0 and b[0] == 0
    nodes, edges, nid = grid(5, 8, 200.0, 14.6310, 120.9610,
                             lambda a, b: 11.0 if main_road(a, b) else 5.0,
                             lambda a, b: "wide" if main_road(a, b) else "narrow")
    return {
        "name": "smokey_mountain",
        "description": "Synthetic low-infrastructure grid: unpaved narrow lanes, one wide main road.",
        "directed": False,
        "nodes": nodes,
        "edges": edges,
        "profile": {"hourly": {"narrow": hourly(3.0, 1.5), "wide": hourly(2.5, 1.2)},
                    "sensitivity": SENSITIVITY},
        "scenario": {
            "fleet": [{"vehicle": "motorlance", "count": 2, "depot": nid(2, 0)}],
            "facilities": [{"id": "F1", "node": nid(0, 7), "name": "Tondo health center"}],
            "demand": {"rate_per_hour": 1.5},
            "horizon_s": 8 * 3600,
            "start_time_s": 8 * 3600,
            "seed": 1,
            "on_scene_service_s": 300,
            "dispatcher_present": False,
            "dispatch": {"confirmation_window_s": 15},
            "landmarks": {"clinic": nid(2, 0), "hospital": nid(0, 7)},
        },
    }


def iloilo():
    nodes, edges, nid = grid(7, 7, 300.0, 10.7000, 122.5500, lambda a, b: 11.1, lambda a, b: "wide")
    return {
        "name": "iloilo",
        "description": "Synthetic wide-road grid with almost no congestion.",
        "directed": False,
        "nodes": nodes,
        "edges": edges,
        "profile": {"hourly": {"narrow": hourly(1.1, 1.0), "wide": hourly(1.1, 1.0)},
                    "sensitivity": SENSITIVITY},
        "scenario": {
            "fleet": [{"vehicle": "motorlance", "count": 3, "depot": nid(3, 3)}],
            "facilities": [{"id": "F1", "node": nid(0, 3), "name": "Provincial hospital"},
                           {"id": "F2", "node": nid(6, 3), "name": "Medical city"}],
            "demand": {"rate_per_hour": 2.0},
            "horizon_s": 8 * 3600,
            "start_time_s": 8 * 3600,
            "seed": 1,
            "on_scene_service_s": 300,
            "dispatcher_present": False,
            "dispatch": {"confirmation_window_s": 15},
            "landmarks": {"clinic": nid(3, 3), "hospital": nid(0, 3)},
        },
    }


def main():
    out = Path(__file__).resolve().parent.parent / "scenarios"
    out.mkdir(exist_ok=True)
    for doc in (mandaluyong(), smokey_mountain(), iloilo()):
        (out / f"{doc['name']}.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
