"""Driver stress aggregation into a quad-tree map.

Georeferenced valence/arousal samples (five-point scales, (3,3) neutral)
collected along a drive are combined spatially: leaves split as samples pile
up, every populated leaf becomes one colored cell.  The output is GeoJSON
you can drop onto any map viewer.
"""

import math
import random

from situfuse import GeoPosition, StressSample, color_for, export_geojson
from situfuse.stressmap import tree_from_samples

rng = random.Random(3)

print("== a simulated drive: calm on the straight, tense near the junction ==")
samples = []
for k in range(4000):
    t = k / 4000.0
    # a loop through town, roughly 4 km across
    lat = 49.23 + 0.018 * math.sin(2 * math.pi * t)
    lon = 6.98 + 0.028 * math.cos(2 * math.pi * t)
    near_junction = abs(t - 0.25) < 0.05 or abs(t - 0.75) < 0.05
    if near_junction:
        valence = rng.choice([3, 4, 4, 5])
        arousal = rng.choice([1, 1, 2, 3])
    else:
        valence = rng.choice([1, 2, 2, 3])
        arousal = rng.choice([3, 4, 4, 5])
    samples.append(
        StressSample(
            position=GeoPosition(lat + rng.gauss(0, 3e-5), lon + rng.gauss(0, 3e-5)),
            timestamp=1_700_000_000_000 + k * 1000,
            valence=valence,
            arousal=arousal,
        )
    )

tree = tree_from_samples(samples, capacity=32, max_depth=10)
cells = tree.cells(min_count=3)
print(f"{tree.count} samples -> {len(cells)} map cells")

print("\n== the five worst cells ==")
for cell in sorted(cells, key=lambda c: (c.mean_valence, -c.mean_arousal))[-5:]:
    print(
        f"cell {cell.cell} color {cell.color}: {cell.count} samples,"
        f" mean valence {cell.mean_valence:.2f}, mean arousal {cell.mean_arousal:.2f}"
    )

print("\n== color matrix corners ==")
for v, a, label in ((1.0, 5.0, "pleased + calm"), (5.0, 1.0, "unhappy + frenzied"), (3.0, 3.0, "neutral")):
    cell_v, cell_a, color = color_for(v, a)
    print(f"({v}, {a}) {label:>20s} -> cell ({cell_v}, {cell_a}) color {color}")

path = "stress_map_demo.geojson"
with open(path, "w", encoding="utf-8") as fp:
    fp.write(export_geojson(cells))
print(f"\nwrote {path} ({len(cells)} polygons)")
