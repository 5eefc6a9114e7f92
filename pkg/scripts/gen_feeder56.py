"""Regenerate the bundled 56-bus radial feeder dataset.

Topology and magnitudes are patterned after a southern-California 12.35 kV
distribution feeder: a main trunk with short laterals, segment impedances
of a few tenths of an ohm, and residential/commercial spot loads summing
to roughly 3.8 MW.  Deterministic; run from the repo root:

    python scripts/gen_feeder56.py
"""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "crowdgrid" / "data"

BASE_MVA = 1.0
BASE_KV = 12.35
Z_BASE = BASE_KV**2 / BASE_MVA  # ohm

# trunk runs 1-2-...-16; laterals hang off trunk buses
LATERALS = {
    3: [17, 18, 19],
    4: [20, 21],
    5: [22, 23, 24, 25],
    6: [26, 27],
    7: [28, 29, 30],
    8: [31, 32],
    9: [33, 34, 35, 36],
    10: [37, 38],
    11: [39, 40, 41],
    12: [42, 43, 44],
    13: [45, 46, 47, 48],
    14: [49, 50, 51],
    15: [52, 53, 54],
    16: [55, 56],
}


def main():
    rng = np.random.default_rng(56)
    lines = []
    # trunk segments: heavier conductor, x/r ~ 1.6
    for child in range(2, 17):
        r_ohm = rng.uniform(0.032, 0.088)
        lines.append({
            "child": child, "parent": child - 1,
            "r": round(r_ohm / Z_BASE, 8),
            "x": round(r_ohm * rng.uniform(1.4, 1.8) / Z_BASE, 8),
        })
    # laterals: lighter conductor, x/r ~ 0.8
    for head, tail in LATERALS.items():
        prev = head
        for child in tail:
            r_ohm = rng.uniform(0.06, 0.18)
            lines.append({
                "child": child, "parent": prev,
                "r": round(r_ohm / Z_BASE, 8),
                "x": round(r_ohm * rng.uniform(0.7, 0.9) / Z_BASE, 8),
            })
            prev = child

    buses = [{"id": 1, "kind": "substation-gen"}]
    for i in range(2, 57):
        buses.append({"id": i, "kind": "crowdsourcee"})

    feeder = {
        "base_mva": BASE_MVA,
        "base_kv": BASE_KV,
        "v_min": 0.9025,
        "v_max": 1.1025,
        "buses": buses,
        "lines": sorted(lines, key=lambda ln: ln["child"]),
    }

    # spot peaks: trunk buses carry larger commercial load, laterals residential
    peaks = {}
    for i in range(2, 57):
        if i <= 16:
            peaks[str(i)] = round(float(rng.uniform(0.08, 0.20)), 4)
        else:
            peaks[str(i)] = round(float(rng.uniform(0.03, 0.10)), 4)

    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "sce56.json").write_text(json.dumps(feeder, indent=1) + "\n")
    (OUT / "sce56_peaks.json").write_text(json.dumps(peaks, indent=1) + "\n")
    total = sum(peaks.values())
    print(f"wrote {OUT}/sce56.json (56 buses, {len(lines)} lines), "
          f"peak load {total:.3f} MW")


if __name__ == "__main__":
    main()
