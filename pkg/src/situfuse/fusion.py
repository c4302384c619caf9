"""Situation fusion: normalize, cluster by course, deduplicate, merge, link.

Several sources usually report the same physical road user (its own awareness
message, an infrastructure camera, the test vehicle's sensors).  Sensor error
makes those reports unequal, so duplicates can only be recognized by
similarity: position, course, speed and classification all within thresholds
chosen from the expected sensor error.

To avoid comparing every pair, observations are bucketed by course on a fixed
10-degree grid and each observation is compared only against buckets within
its dynamic course range, which widens as the object slows down (a slow
object's course estimate is noisy).  Objects below the speed floor are
treated as course-less and compared against everything.  The reach always
covers the similarity course threshold, so bucketing is a pure optimization:
the resulting groups are exactly the connected components of the pairwise
similarity relation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .geo import (
    EARTH_RADIUS_M,
    GeoPosition,
    LocalPoint,
    from_local_enu,
    haversine_distance,
    initial_bearing,
    normalize_course,
    to_local_enu,
)
from .messages import (
    CpmExtract,
    MapTopology,
    ObjectClassification,
    ObservationSource,
    SignalPhase,
    StationId,
    TrafficObjectObservation,
    observation_from_cam,
    observations_from_cpm,
)
from .situation import (
    FusedObject,
    ProvenanceEntry,
    SignalizedLane,
    SignalizedTopology,
    SituationRecord,
)
from .aggregators import backend_dedup, environment_for
from .store import RawSlice, RawSpat, SituationStore

DEFAULT_WINDOW_MS = 500
DEFAULT_RADIUS_M = 300.0
VUT_FIX_TOLERANCE_MS = 2000

_BIN_DEG = 10.0
_N_BINS = 36


class NoVutFix(LookupError):
    """No VUT position fix close enough to the requested timestamp."""


class EmptyGroup(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityThresholds:
    """Two observations of the same object differ at most by these amounts."""

    max_position_m: float = 2.5
    max_course_deg: float = 15.0
    max_speed_ms: float = 1.5

    def __post_init__(self):
        if min(self.max_position_m, self.max_course_deg, self.max_speed_ms) <= 0:
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class CourseClusterConfig:
    """Dynamic course range per object speed.

    Below the speed floor the course is unreliable and the range is the full
    circle; above it the range shrinks inversely with speed between the two
    clamps.
    """

    speed_floor_ms: float = 1.5
    width_speed_product: float = 450.0  # deg * m/s
    min_width_deg: float = 10.0
    max_width_deg: float = 45.0

    def width_for(self, speed: float) -> float:
        if speed < self.speed_floor_ms:
            return 360.0
        return min(self.max_width_deg, max(self.min_width_deg, self.width_speed_product / speed))


@dataclass
class DedupStats:
    """Work counters filled by dedup when requested."""

    observations: int = 0
    comparisons: int = 0

    @property
    def brute_force_comparisons(self) -> int:
        return self.observations * (self.observations - 1) // 2


def is_similar(
    a: TrafficObjectObservation, b: TrafficObjectObservation, th: SimilarityThresholds | None = None
) -> bool:
    """Symmetric pairwise check whether two observations may be the same object."""
    th = th or SimilarityThresholds()
    if abs(a.speed - b.speed) > th.max_speed_ms:
        return False
    d = abs(a.course - b.course) % 360.0
    if min(d, 360.0 - d) > th.max_course_deg:
        return False
    if (
        a.classification != b.classification
        and a.classification != ObjectClassification.UNKNOWN
        and b.classification != ObjectClassification.UNKNOWN
    ):
        return False
    return haversine_distance(a.position, b.position) <= th.max_position_m


def cluster_by_course(
    obs: Sequence[TrafficObjectObservation], cfg: CourseClusterConfig | None = None
) -> list[list[TrafficObjectObservation]]:
    """Partition observations into course buckets plus one slow bucket.

    Buckets sit on the fixed fine grid; the per-speed dynamic range decides
    how far across neighbouring buckets an observation is compared during
    dedup.
    """
    cfg = cfg or CourseClusterConfig()
    slow: list[TrafficObjectObservation] = []
    bins: dict[int, list[TrafficObjectObservation]] = {}
    for o in obs:
        if o.speed < cfg.speed_floor_ms:
            slow.append(o)
        else:
            bins.setdefault(int(o.course // _BIN_DEG) % _N_BINS, []).append(o)
    clusters = [bucket for _, bucket in sorted(bins.items())]
    if slow:
        clusters.append(slow)
    return clusters


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _observation_arrays(obs: Sequence[TrafficObjectObservation]):
    lat = np.array([o.position.lat for o in obs])
    lon = np.array([o.position.lon for o in obs])
    course = np.array([o.course for o in obs])
    speed = np.array([o.speed for o in obs])
    cls = np.array([int(o.classification) for o in obs])
    return lat, lon, course, speed, cls


def _similar_pairs_mask(idx_i, idx_j, arrays, th: SimilarityThresholds):
    """Vectorized is_similar over index pairs; same formulas as the scalar path."""
    lat, lon, course, speed, cls = arrays
    ok = np.abs(speed[idx_i] - speed[idx_j]) <= th.max_speed_ms

    d = np.abs(course[idx_i] - course[idx_j]) % 360.0
    ok &= np.minimum(d, 360.0 - d) <= th.max_course_deg

    unknown = int(ObjectClassification.UNKNOWN)
    ok &= (
        (cls[idx_i] == cls[idx_j]) | (cls[idx_i] == unknown) | (cls[idx_j] == unknown)
    )

    # Haversine only where everything else already matches.
    sub = np.nonzero(ok)[0]
    if sub.size:
        i, j = idx_i[sub], idx_j[sub]
        phi1 = np.radians(lat[i])
        phi2 = np.radians(lat[j])
        dphi = np.radians(lat[j] - lat[i])
        dlam = np.radians(lon[j] - lon[i])
        h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
        dist = 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))
        keep = dist <= th.max_position_m
        mask = np.zeros(len(idx_i), dtype=bool)
        mask[sub[keep]] = True
        return mask
    return np.zeros(len(idx_i), dtype=bool)


def _candidate_pairs(
    obs: Sequence[TrafficObjectObservation],
    th: SimilarityThresholds,
    cfg: CourseClusterConfig,
):
    """Index pairs (i < j) that must be similarity-checked.

    Completeness argument: a similar pair has a course difference within
    max_course_deg, and every object's scan span covers
    max(own width, max_course_deg), so the pair is always generated by at
    least one side.  Slow objects are checked against everything.
    """
    lat, lon, course, speed, cls = _observation_arrays(obs)
    slow = speed < cfg.speed_floor_ms
    width = np.where(
        slow,
        360.0,
        np.clip(cfg.width_speed_product / np.maximum(speed, 1e-9), cfg.min_width_deg, cfg.max_width_deg),
    )
    reach = np.maximum(width, th.max_course_deg)
    span = (np.floor(reach / _BIN_DEG) + 1).astype(int)

    fast_idx = np.nonzero(~slow)[0]
    slow_idx = np.nonzero(slow)[0]

    pairs_i: list[np.ndarray] = []
    pairs_j: list[np.ndarray] = []

    # slow x everything (each slow-slow pair once)
    for k, s in enumerate(slow_idx):
        partner = np.concatenate([slow_idx[k + 1 :], fast_idx])
        if partner.size:
            pairs_i.append(np.full(partner.size, s))
            pairs_j.append(partner)

    if fast_idx.size:
        bins = ((course[fast_idx] // _BIN_DEG).astype(int)) % _N_BINS
        by_bin = {int(b): fast_idx[bins == b] for b in np.unique(bins)}
        # Bin distance on the ring never exceeds half the circle.
        max_span = min(int(span[fast_idx].max()), _N_BINS // 2)
        for b, members in sorted(by_bin.items()):
            if members.size > 1:
                ii, jj = np.triu_indices(members.size, k=1)
                pairs_i.append(members[ii])
                pairs_j.append(members[jj])
        for off in range(1, max_span + 1):
            for b, members in sorted(by_bin.items()):
                c = (b + off) % _N_BINS
                # Scanning every bin forward visits each unordered bin pair at
                # circular distance `off` exactly once, except antipodal pairs.
                if 2 * off == _N_BINS and b >= c:
                    continue
                other = by_bin.get(c)
                if other is None:
                    continue
                gi = np.repeat(members, other.size)
                gj = np.tile(other, members.size)
                within = np.maximum(span[gi], span[gj]) >= off
                gi, gj = gi[within], gj[within]
                if gi.size:
                    pairs_i.append(np.minimum(gi, gj))
                    pairs_j.append(np.maximum(gi, gj))

    if not pairs_i:
        empty = np.zeros(0, dtype=int)
        return empty, empty, (lat, lon, course, speed, cls)

    idx_i = np.concatenate(pairs_i)
    idx_j = np.concatenate(pairs_j)

    # Exact angular gate with the per-pair dynamic reach (slow objects have a
    # full-circle reach, so slow-involved pairs always pass).
    d = np.abs(course[idx_i] - course[idx_j]) % 360.0
    d = np.minimum(d, 360.0 - d)
    pass_gate = d <= np.maximum(reach[idx_i], reach[idx_j])
    return idx_i[pass_gate], idx_j[pass_gate], (lat, lon, course, speed, cls)


def dedup(
    obs: Sequence[TrafficObjectObservation],
    th: SimilarityThresholds | None = None,
    cfg: CourseClusterConfig | None = None,
    stats: DedupStats | None = None,
) -> list[FusedObject]:
    """Merge all observations of the same physical object into one record.

    Groups are the connected components of the similarity relation; course
    bucketing only prunes pairs that can never be similar.  Output is ordered
    by fused position (lat, lon, then course).
    """
    th = th or SimilarityThresholds()
    cfg = cfg or CourseClusterConfig()
    if stats is not None:
        stats.observations = len(obs)
    if not obs:
        return []

    idx_i, idx_j, arrays = _candidate_pairs(obs, th, cfg)
    if stats is not None:
        stats.comparisons = int(len(idx_i))

    uf = _UnionFind(len(obs))
    if len(idx_i):
        similar = _similar_pairs_mask(idx_i, idx_j, arrays, th)
        for a, b in zip(idx_i[similar].tolist(), idx_j[similar].tolist()):
            uf.union(a, b)

    groups: dict[int, list[TrafficObjectObservation]] = {}
    for k, o in enumerate(obs):
        groups.setdefault(uf.find(k), []).append(o)

    fused = [merge_group(g) for g in groups.values()]
    fused.sort(key=lambda f: (f.position.lat, f.position.lon, f.course))
    return fused


def merge_group(group: Sequence[TrafficObjectObservation]) -> FusedObject:
    """Collapse one similarity group into a single object.

    A self-report knows its own kinematics best, so a CAM wins outright, then
    the VUT's own sensors; otherwise detections are averaged (positions on
    the local plane, courses circularly).
    """
    if not group:
        raise EmptyGroup("cannot merge an empty group")
    members = sorted(
        group, key=lambda o: (o.timestamp, int(o.source), o.reporter, o.object_id)
    )
    if len(members) == 1:
        only = members[0]
        return FusedObject(
            fused_id=only.object_id,
            classification=only.classification,
            position=only.position,
            speed=only.speed,
            course=only.course,
            provenance=(ProvenanceEntry(only.source, only.reporter, only.object_id),),
        )

    def newest(source: ObservationSource):
        candidates = [o for o in members if o.source is source]
        if not candidates:
            return None
        return max(candidates, key=lambda o: (o.timestamp, -o.reporter, -o.object_id))

    winner = newest(ObservationSource.CAM_SELF_REPORT) or newest(ObservationSource.VUT_LOCAL_SENSOR)
    if winner is not None:
        position, speed, course = winner.position, winner.speed, winner.course
        rep_id = winner.object_id
    else:
        origin = members[0].position
        pts = [to_local_enu(origin, o.position) for o in members]
        east = sum(p.east for p in pts) / len(pts)
        north = sum(p.north for p in pts) / len(pts)
        position = from_local_enu(origin, LocalPoint(east, north))
        speed = sum(o.speed for o in members) / len(members)
        sin_sum = sum(math.sin(math.radians(o.course)) for o in members)
        cos_sum = sum(math.cos(math.radians(o.course)) for o in members)
        course = normalize_course(math.degrees(math.atan2(sin_sum, cos_sum)))
        rep_id = min(o.object_id for o in members)

    non_unknown = {o.classification for o in members} - {ObjectClassification.UNKNOWN}
    classification = min(non_unknown) if non_unknown else ObjectClassification.UNKNOWN

    provenance = tuple(
        sorted(
            ProvenanceEntry(o.source, o.reporter, o.object_id)
            for o in members
        )
    )
    return FusedObject(
        fused_id=rep_id,
        classification=classification,
        position=position,
        speed=speed,
        course=course,
        provenance=provenance,
    )


# --- window query and linking -----------------------------------------------


def query_window(
    vut: StationId,
    t: int,
    store: SituationStore,
    window_ms: int = DEFAULT_WINDOW_MS,
    radius_m: float = DEFAULT_RADIUS_M,
) -> RawSlice:
    """All raw data around the VUT at time t; fails without a nearby VUT fix."""
    fix = store.vut_fix_near(vut, t, VUT_FIX_TOLERANCE_MS)
    if fix is None:
        raise NoVutFix(f"no GNSS fix of VUT {vut} within {VUT_FIX_TOLERANCE_MS} ms of {t}")
    return store.query_raw(t - window_ms, t + window_ms, fix.extract.gnss, radius_m)


def join_topology(
    topo: MapTopology, spats: Sequence[RawSpat], t: int
) -> SignalizedTopology:
    """Attach to each lane the phase of its signal group nearest to t."""
    by_group: dict[int, RawSpat] = {}
    for s in spats:
        if s.spat.intersection_id != topo.intersection_id:
            continue
        kept = by_group.get(s.spat.signal_group)
        if kept is None or (
            (abs(s.generation_time - t), -s.generation_time)
            < (abs(kept.generation_time - t), -kept.generation_time)
        ):
            by_group[s.spat.signal_group] = s
    lanes = tuple(
        SignalizedLane(
            lane_id=lane.lane_id,
            signal_group=lane.signal_group,
            polyline=lane.polyline,
            ingress=lane.ingress,
            phase=(
                by_group[lane.signal_group].spat.phase
                if lane.signal_group in by_group
                else SignalPhase.UNKNOWN
            ),
        )
        for lane in topo.lanes
    )
    return SignalizedTopology(intersection_id=topo.intersection_id, lanes=lanes)


def _point_segment_distance(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay)
    u = ((px - ax) * dx + (py - ay) * dy) / seg2
    u = min(1.0, max(0.0, u))
    return math.hypot(px - (ax + u * dx), py - (ay + u * dy))


def lane_distance_m(position: GeoPosition, polyline: Sequence[GeoPosition]) -> float:
    """Minimum distance from a position to a lane centerline."""
    origin = polyline[0]
    p = to_local_enu(origin, position)
    pts = [to_local_enu(origin, q) for q in polyline]
    return min(
        _point_segment_distance(p, pts[k], pts[k + 1]) for k in range(len(pts) - 1)
    )


def link_lanes(objects, topology, max_lateral_m: float = 2.0):
    """Assign each object the nearest lane within the lateral tolerance."""
    if topology is None:
        return list(objects)
    linked = []
    for obj in objects:
        best = None
        for lane in topology.lanes:
            d = lane_distance_m(obj.position, lane.polyline)
            if d <= max_lateral_m and (best is None or (d, lane.lane_id) < best):
                best = (d, lane.lane_id)
        linked.append(replace(obj, lane_id=best[1]) if best else obj)
    return linked


# --- situation assembly -------------------------------------------------------


def _vut_observation(store: SituationStore, vut: StationId, fix) -> TrafficObjectObservation:
    """The VUT's own position vector as a traffic object.

    The sensor extract has no heading, so the course is derived from the
    previous GNSS fix when the vehicle has moved far enough for the bearing
    to mean anything.
    """
    extract = fix.extract
    course = 0.0
    previous = store.vut_fixes(vut, extract.timestamp - VUT_FIX_TOLERANCE_MS, extract.timestamp - 1)
    if previous:
        last = previous[-1]
        if haversine_distance(last.extract.gnss, extract.gnss) > 0.5:
            course = initial_bearing(last.extract.gnss, extract.gnss)
    return TrafficObjectObservation(
        object_id=vut,
        classification=ObjectClassification.PASSENGER_CAR,
        position=extract.gnss,
        speed=extract.speed,
        course=course,
        timestamp=extract.timestamp,
        source=ObservationSource.VUT_LOCAL_SENSOR,
        reporter=vut,
    )


def _nearest_topology(store: SituationStore, center: GeoPosition, radius_m: float):
    best = None
    for topo in store.topologies():
        d = min(
            min(haversine_distance(center, p) for p in lane.polyline) for lane in topo.lanes
        )
        if d <= radius_m and (best is None or d < best[0]):
            best = (d, topo)
    return best[1] if best else None


def fuse_situation(
    vut: StationId,
    t: int,
    store: SituationStore,
    th: SimilarityThresholds | None = None,
    cfg: CourseClusterConfig | None = None,
    window_ms: int = DEFAULT_WINDOW_MS,
    radius_m: float = DEFAULT_RADIUS_M,
    max_lateral_m: float = 2.0,
    persist: bool = True,
) -> SituationRecord:
    """Build (and normally persist) the situation for a VUT and timestamp.

    Rerunning on identical store content produces an identical record except
    for the situation identifier.
    """
    fix = store.vut_fix_near(vut, t, VUT_FIX_TOLERANCE_MS)
    if fix is None:
        raise NoVutFix(f"no GNSS fix of VUT {vut} within {VUT_FIX_TOLERANCE_MS} ms of {t}")
    center = fix.extract.gnss

    window = store.query_raw(t - window_ms, t + window_ms, center, radius_m)

    unique_cams = backend_dedup(window.cams)
    unique_cpms = backend_dedup(window.cpm_detections)

    observations: list[TrafficObjectObservation] = []
    for raw in unique_cams:
        observations.append(observation_from_cam(raw.cam))
    for raw in unique_cpms:
        extract = CpmExtract(
            originator=raw.originator,
            generation_time=raw.generation_time,
            detections=(raw.detection,),
        )
        observations.extend(observations_from_cpm(extract))
    observations.append(_vut_observation(store, vut, fix))

    objects = dedup(observations, th, cfg)

    topo = _nearest_topology(store, center, radius_m)
    topology = join_topology(topo, backend_dedup(window.spats), t) if topo else None
    objects = link_lanes(objects, topology, max_lateral_m)

    driver = None
    driver_rows = [r for r in window.driver_rows if r.station == vut]
    if driver_rows:
        nearest = min(driver_rows, key=lambda r: (abs(r.sample.timestamp - t), -r.sample.timestamp))
        driver = nearest.sample

    hazards = tuple(
        sorted(
            (r.event for r in backend_dedup(window.hazard_rows)),
            key=lambda h: (h.timestamp, h.source, int(h.kind)),
        )
    )

    environment = environment_for(t, center, store.environment_candidates(t))

    record = SituationRecord(
        situation_id=0,
        center=center,
        radius_m=radius_m,
        timestamp=t,
        vut=vut,
        objects=tuple(objects),
        topology=topology,
        vut_sensor=fix.extract,
        driver=driver,
        hazards=hazards,
        environment=environment,
    )
    if persist:
        sid = store.persist_situation(record)
        record = replace(record, situation_id=sid)
    return record
