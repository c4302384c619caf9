"""Quad-tree aggregation of georeferenced driver stress samples.

Valence and arousal are five-point self-assessment scales: arousal runs from
1 (excited, frenzied) to 5 (calm, sleepy), valence from 1 (happy, pleased)
to 5 (unhappy, melancholic); (3, 3) is the neutral point.  Samples collected
along a drive are combined spatially in a quad tree; every populated leaf
becomes one colored map cell.

The 5x5 interpretation matrix that turns a cell's mean valence/arousal into
a color is deliberately data, not code: semantics of the scales are not
fixed here, so the matrix ships as a JSON config with a documented default
(green at the calm-pleasant corner, red at the frenzied-unpleasant corner,
gray at neutral).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, NamedTuple

from .geo import GeoPosition

DEFAULT_CAPACITY = 16
DEFAULT_MAX_DEPTH = 12


class OutOfBounds(ValueError):
    pass


@dataclass(frozen=True)
class StressSample:
    position: GeoPosition
    timestamp: int
    valence: int
    arousal: int

    def __post_init__(self):
        if self.valence not in (1, 2, 3, 4, 5) or self.arousal not in (1, 2, 3, 4, 5):
            raise ValueError(f"scales are 1..5: ({self.valence}, {self.arousal})")


class Bounds(NamedTuple):
    """Latitude/longitude rectangle, min corner inclusive."""

    lat_min: float
    lon_min: float
    lat_max: float
    lon_max: float

    def contains(self, p: GeoPosition) -> bool:
        return self.lat_min <= p.lat <= self.lat_max and self.lon_min <= p.lon <= self.lon_max

    def mid(self) -> tuple[float, float]:
        return (self.lat_min + self.lat_max) / 2.0, (self.lon_min + self.lon_max) / 2.0


@dataclass(frozen=True)
class StressCell:
    bounds: Bounds
    mean_valence: float
    mean_arousal: float
    count: int
    cell: tuple[int, int]
    color: str


class _Node:
    __slots__ = ("bounds", "depth", "count", "sum_valence", "sum_arousal", "children", "samples")

    def __init__(self, bounds: Bounds, depth: int):
        self.bounds = bounds
        self.depth = depth
        self.count = 0
        # Scales are small integers, so the sums stay exact no matter the
        # insertion order.
        self.sum_valence = 0
        self.sum_arousal = 0
        self.children: list[_Node] | None = None
        self.samples: list[StressSample] = []


class StressQuadTree:
    """Count/sum aggregation per node; leaves split at the capacity limit."""

    def __init__(
        self,
        bounds: Bounds,
        capacity: int = DEFAULT_CAPACITY,
        max_depth: int = DEFAULT_MAX_DEPTH,
    ):
        if bounds.lat_min >= bounds.lat_max or bounds.lon_min >= bounds.lon_max:
            raise ValueError(f"degenerate bounds {bounds}")
        if capacity < 1 or max_depth < 0:
            raise ValueError("capacity must be >= 1 and max_depth >= 0")
        self.capacity = capacity
        self.max_depth = max_depth
        self._root = _Node(bounds, 0)

    @property
    def bounds(self) -> Bounds:
        return self._root.bounds

    @property
    def count(self) -> int:
        return self._root.count

    def insert(self, sample: StressSample) -> None:
        if not self._root.bounds.contains(sample.position):
            raise OutOfBounds(f"{sample.position} outside {self._root.bounds}")
        node = self._root
        while True:
            node.count += 1
            node.sum_valence += sample.valence
            node.sum_arousal += sample.arousal
            if node.children is not None:
                node = node.children[self._quadrant(node, sample.position)]
                continue
            node.samples.append(sample)
            if len(node.samples) > self.capacity and node.depth < self.max_depth:
                self._split(node)
            return

    @staticmethod
    def _quadrant(node: _Node, p: GeoPosition) -> int:
        # Z-order of children: SW, SE, NW, NE; points on a split line go to
        # the upper half so assignment is unambiguous.
        mid_lat, mid_lon = node.bounds.mid()
        return (2 if p.lat >= mid_lat else 0) + (1 if p.lon >= mid_lon else 0)

    def _split(self, node: _Node) -> None:
        b = node.bounds
        mid_lat, mid_lon = b.mid()
        node.children = [
            _Node(Bounds(b.lat_min, b.lon_min, mid_lat, mid_lon), node.depth + 1),
            _Node(Bounds(b.lat_min, mid_lon, mid_lat, b.lon_max), node.depth + 1),
            _Node(Bounds(mid_lat, b.lon_min, b.lat_max, mid_lon), node.depth + 1),
            _Node(Bounds(mid_lat, mid_lon, b.lat_max, b.lon_max), node.depth + 1),
        ]
        samples, node.samples = node.samples, []
        for sample in samples:
            child = node.children[self._quadrant(node, sample.position)]
            child.count += 1
            child.sum_valence += sample.valence
            child.sum_arousal += sample.arousal
            child.samples.append(sample)
        for child in node.children:
            if len(child.samples) > self.capacity and child.depth < self.max_depth:
                self._split(child)

    def cells(self, min_count: int = 1, matrix: "StressMatrix | None" = None) -> list[StressCell]:
        """One cell per populated leaf, in Z-order."""
        matrix = matrix or StressMatrix.default()
        out: list[StressCell] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.children is not None:
                stack.extend(reversed(node.children))
                continue
            if node.count >= min_count and node.count > 0:
                mean_v = node.sum_valence / node.count
                mean_a = node.sum_arousal / node.count
                v_round, a_round, color = color_for(mean_v, mean_a, matrix)
                out.append(
                    StressCell(
                        bounds=node.bounds,
                        mean_valence=mean_v,
                        mean_arousal=mean_a,
                        count=node.count,
                        cell=(v_round, a_round),
                        color=color,
                    )
                )
        return out

    def audit(self) -> bool:
        """Structural check: every inner node's sums equal its children's."""
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.children is None:
                if node.count != len(node.samples):
                    return False
                if node.sum_valence != sum(s.valence for s in node.samples):
                    return False
                if node.sum_arousal != sum(s.arousal for s in node.samples):
                    return False
                continue
            if node.count != sum(c.count for c in node.children):
                return False
            if node.sum_valence != sum(c.sum_valence for c in node.children):
                return False
            if node.sum_arousal != sum(c.sum_arousal for c in node.children):
                return False
            stack.extend(node.children)
        return True


class StressMatrix:
    """5x5 cell-to-color mapping, loaded from JSON config."""

    _default: "StressMatrix | None" = None

    def __init__(self, cells: dict[tuple[int, int], str]):
        missing = {(v, a) for v in range(1, 6) for a in range(1, 6)} - set(cells)
        if missing:
            raise ValueError(f"matrix incomplete, missing cells: {sorted(missing)}")
        self._cells = dict(cells)

    def __getitem__(self, cell: tuple[int, int]) -> str:
        return self._cells[cell]

    @classmethod
    def from_json(cls, text: str) -> "StressMatrix":
        data = json.loads(text)
        return cls(
            {(c["valence"], c["arousal"]): c["color"] for c in data["cells"]}
        )

    @classmethod
    def from_file(cls, path) -> "StressMatrix":
        with open(path, "r", encoding="utf-8") as fp:
            return cls.from_json(fp.read())

    @classmethod
    def default(cls) -> "StressMatrix":
        if cls._default is None:
            text = resources.files("situfuse.data").joinpath("stress_matrix.json").read_text()
            cls._default = cls.from_json(text)
        return cls._default


def round_to_scale(value: float) -> int:
    """Round a mean to the 1..5 scale, halves rounding away from neutral 3."""
    if not (1.0 <= value <= 5.0):
        raise ValueError(f"mean out of scale range: {value}")
    if value >= 3.0:
        result = math.floor(value + 0.5)  # halves go up, away from 3
    else:
        result = math.ceil(value - 0.5)  # halves go down, away from 3
    return min(5, max(1, result))


def color_for(
    mean_valence: float, mean_arousal: float, matrix: StressMatrix | None = None
) -> tuple[int, int, str]:
    """Matrix cell (valence, arousal) and its color for a pair of means."""
    matrix = matrix or StressMatrix.default()
    v = round_to_scale(mean_valence)
    a = round_to_scale(mean_arousal)
    return v, a, matrix[(v, a)]


def tree_from_samples(
    samples: Iterable[StressSample],
    capacity: int = DEFAULT_CAPACITY,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> StressQuadTree:
    """A tree whose bounds snugly cover the given samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot bound an empty sample set")
    lats = [s.position.lat for s in samples]
    lons = [s.position.lon for s in samples]
    pad = 1e-4  # keep the bounds non-degenerate for co-located samples
    bounds = Bounds(min(lats) - pad, min(lons) - pad, max(lats) + pad, max(lons) + pad)
    tree = StressQuadTree(bounds, capacity=capacity, max_depth=max_depth)
    for s in samples:
        tree.insert(s)
    return tree


def export_geojson(cells: Iterable[StressCell]) -> str:
    """Stress cells as a FeatureCollection of rectangle polygons."""
    features = []
    for c in cells:
        b = c.bounds
        ring = [
            [b.lon_min, b.lat_min],
            [b.lon_max, b.lat_min],
            [b.lon_max, b.lat_max],
            [b.lon_min, b.lat_max],
            [b.lon_min, b.lat_min],
        ]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "count": c.count,
                    "mean_valence": c.mean_valence,
                    "mean_arousal": c.mean_arousal,
                    "color": c.color,
                },
            }
        )
    return json.dumps({"type": "FeatureCollection", "features": features})
