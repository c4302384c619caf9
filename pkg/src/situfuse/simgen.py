"""Deterministic scenario generation and fusion scoring.

A scenario plants constant-velocity road users around an intersection,
then renders the message streams a real deployment would produce: awareness
self-reports from cooperative vehicles, camera detections of everything in
range, sensor and driver records from the vehicle under test.  All emission
clocks are aligned to the scenario start, all noise comes from one seeded
generator, so a config maps to byte-identical batches every time.

Scoring compares a fused situation against the ground truth by greedy
nearest-neighbour matching at the situation timestamp.  Greedy is adequate
for the sparse scenes generated here; it can mis-assign in dense clusters
tighter than the match radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geo import (
    GeoPosition,
    LocalPoint,
    course_to_unit_vector,
    from_local_enu,
    haversine_distance,
    normalize_course,
)
from .messages import (
    CamExtract,
    CpmDetection,
    DoorState,
    DriverStateSample,
    ExteriorLight,
    ObjectClassification,
    StationId,
    VutSensorExtract,
)
from .situation import SituationRecord
from . import wire

DEFAULT_START_MS = 1_700_000_000_000

VUT_OBJECT_ID = 0
CAMERA_STATION = 500
CAMERA_TRACK_OFFSET = 1000
VEHICLE_STATION_OFFSET = 200


@dataclass(frozen=True)
class NoiseSpec:
    position_m: float = 0.5
    course_deg: float = 2.0
    speed_ms: float = 0.2


@dataclass(frozen=True)
class MessageRates:
    cam_hz: float = 1.0
    cpm_hz: float = 1.0
    vut_hz: float = 5.0
    driver_hz: float = 1.0

    def __post_init__(self):
        for name in ("cam_hz", "cpm_hz", "vut_hz", "driver_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 1
    duration_s: float = 10.0
    center: GeoPosition = GeoPosition(49.234, 6.9826)
    vehicle_count: int = 10
    pedestrian_count: int = 4
    cooperative_fraction: float = 0.5
    camera_radius_m: float = 300.0
    vut_station: StationId = 100
    cam_noise: NoiseSpec = NoiseSpec()
    cpm_noise: NoiseSpec = NoiseSpec()
    vut_noise: NoiseSpec = NoiseSpec(position_m=0.1, course_deg=1.0, speed_ms=0.1)
    rates: MessageRates = MessageRates()
    spawn_radius_m: float = 100.0
    start_time_ms: int = DEFAULT_START_MS

    def __post_init__(self):
        if not (0.0 <= self.cooperative_fraction <= 1.0):
            raise ValueError(f"cooperative fraction out of [0,1]: {self.cooperative_fraction}")
        if self.duration_s <= 0 or self.camera_radius_m <= 0:
            raise ValueError("duration and camera radius must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        kwargs = dict(data)
        if "center" in kwargs:
            kwargs["center"] = GeoPosition(**kwargs["center"])
        for key in ("cam_noise", "cpm_noise", "vut_noise"):
            if key in kwargs:
                kwargs[key] = NoiseSpec(**kwargs[key])
        if "rates" in kwargs:
            kwargs["rates"] = MessageRates(**kwargs["rates"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "duration_s": self.duration_s,
            "center": {"lat": self.center.lat, "lon": self.center.lon},
            "vehicle_count": self.vehicle_count,
            "pedestrian_count": self.pedestrian_count,
            "cooperative_fraction": self.cooperative_fraction,
            "camera_radius_m": self.camera_radius_m,
            "vut_station": self.vut_station,
            "cam_noise": vars(self.cam_noise),
            "cpm_noise": vars(self.cpm_noise),
            "vut_noise": vars(self.vut_noise),
            "rates": vars(self.rates),
            "spawn_radius_m": self.spawn_radius_m,
            "start_time_ms": self.start_time_ms,
        }


@dataclass(frozen=True)
class TrajectorySegment:
    t_start_ms: int
    duration_ms: int
    position: GeoPosition  # at t_start
    speed: float
    course: float


@dataclass(frozen=True)
class TruthObject:
    object_id: int
    classification: ObjectClassification
    cooperative: bool
    station: StationId | None
    segments: tuple[TrajectorySegment, ...]

    def state_at(self, t_ms: int) -> tuple[GeoPosition, float, float]:
        """(position, speed, course) under piecewise constant velocity."""
        seg = self.segments[0]
        for candidate in self.segments:
            if candidate.t_start_ms <= t_ms:
                seg = candidate
        dt = (t_ms - seg.t_start_ms) / 1000.0
        east, north = course_to_unit_vector(seg.course)
        pos = from_local_enu(
            seg.position, LocalPoint(east * seg.speed * dt, north * seg.speed * dt)
        )
        return pos, seg.speed, seg.course


@dataclass(frozen=True)
class GroundTruth:
    start_time_ms: int
    duration_ms: int
    vut_station: StationId
    objects: tuple[TruthObject, ...]

    def object_by_id(self, object_id: int) -> TruthObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)

    def to_dict(self) -> dict:
        return {
            "start_time_ms": self.start_time_ms,
            "duration_ms": self.duration_ms,
            "vut_station": self.vut_station,
            "objects": [
                {
                    "object_id": o.object_id,
                    "classification": int(o.classification),
                    "cooperative": o.cooperative,
                    "station": o.station,
                    "segments": [
                        {
                            "t_start_ms": s.t_start_ms,
                            "duration_ms": s.duration_ms,
                            "lat": s.position.lat,
                            "lon": s.position.lon,
                            "speed": s.speed,
                            "course": s.course,
                        }
                        for s in o.segments
                    ],
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(
            start_time_ms=data["start_time_ms"],
            duration_ms=data["duration_ms"],
            vut_station=data["vut_station"],
            objects=tuple(
                TruthObject(
                    object_id=o["object_id"],
                    classification=ObjectClassification.from_code(o["classification"]),
                    cooperative=o["cooperative"],
                    station=o["station"],
                    segments=tuple(
                        TrajectorySegment(
                            t_start_ms=s["t_start_ms"],
                            duration_ms=s["duration_ms"],
                            position=GeoPosition(s["lat"], s["lon"]),
                            speed=s["speed"],
                            course=s["course"],
                        )
                        for s in o["segments"]
                    ),
                )
                for o in data["objects"]
            ),
        )


def _emission_instants(start_ms: int, duration_ms: int, rate_hz: float) -> list[int]:
    period = max(1, round(1000.0 / rate_hz))
    return list(range(start_ms, start_ms + duration_ms + 1, period))


def _noisy_state(rng, pos: GeoPosition, speed: float, course: float, noise: NoiseSpec):
    de, dn = rng.normal(0.0, noise.position_m, size=2)
    noisy_pos = from_local_enu(pos, LocalPoint(de, dn))
    noisy_speed = max(0.0, speed + rng.normal(0.0, noise.speed_ms))
    noisy_course = normalize_course(course + rng.normal(0.0, noise.course_deg))
    return noisy_pos, noisy_speed, noisy_course


def _spawn_objects(cfg: ScenarioConfig, rng) -> list[TruthObject]:
    objects = []

    def spawn_position() -> GeoPosition:
        angle = rng.uniform(0.0, 2.0 * math.pi)
        radius = cfg.spawn_radius_m * math.sqrt(rng.uniform(0.0, 1.0))
        return from_local_enu(
            cfg.center, LocalPoint(radius * math.sin(angle), radius * math.cos(angle))
        )

    duration_ms = round(cfg.duration_s * 1000)

    def segment(position, speed, course):
        return (
            TrajectorySegment(
                t_start_ms=cfg.start_time_ms,
                duration_ms=duration_ms,
                position=position,
                speed=speed,
                course=course,
            ),
        )

    # The VUT drives one of the four approaches.
    vut_course = float(rng.choice([0.0, 90.0, 180.0, 270.0]))
    objects.append(
        TruthObject(
            object_id=VUT_OBJECT_ID,
            classification=ObjectClassification.PASSENGER_CAR,
            cooperative=True,
            station=cfg.vut_station,
            segments=segment(spawn_position(), rng.uniform(5.0, 12.0), vut_course),
        )
    )

    cooperative_n = round(cfg.vehicle_count * cfg.cooperative_fraction)
    for k in range(cfg.vehicle_count):
        oid = 1 + k
        course = normalize_course(float(rng.choice([0.0, 90.0, 180.0, 270.0])) + rng.normal(0.0, 5.0))
        cooperative = k < cooperative_n
        objects.append(
            TruthObject(
                object_id=oid,
                classification=ObjectClassification.PASSENGER_CAR,
                cooperative=cooperative,
                station=VEHICLE_STATION_OFFSET + oid if cooperative else None,
                segments=segment(spawn_position(), rng.uniform(3.0, 14.0), course),
            )
        )
    for k in range(cfg.pedestrian_count):
        oid = 1 + cfg.vehicle_count + k
        objects.append(
            TruthObject(
                object_id=oid,
                classification=ObjectClassification.PEDESTRIAN,
                cooperative=False,
                station=None,
                segments=segment(spawn_position(), rng.uniform(0.5, 2.0), rng.uniform(0.0, 360.0)),
            )
        )
    return objects


def _default_vut_extract(t: int, gnss: GeoPosition, speed: float) -> VutSensorExtract:
    return VutSensorExtract(
        timestamp=t,
        brake_actuated=False,
        abs_active=False,
        panic_braking=False,
        clutch_pressed=False,
        gear=3,
        door_positions=(DoorState.CLOSED,) * 4,
        exterior_lights=ExteriorLight.LOW_BEAM,
        gnss=gnss,
        speed=speed,
        accel_longitudinal=0.0,
        accel_lateral=0.0,
        rain_intensity=0,
        wiper_active=False,
        yaw_rate=0.0,
        steering_wheel_angle=0.0,
        steering_wheel_velocity=0.0,
    )


def generate(cfg: ScenarioConfig) -> tuple[GroundTruth, list[wire.BatchEnvelope]]:
    """Ground truth plus the batches every remote station would transmit."""
    rng = np.random.default_rng(cfg.seed)
    duration_ms = round(cfg.duration_s * 1000)
    objects = _spawn_objects(cfg, rng)
    truth = GroundTruth(
        start_time_ms=cfg.start_time_ms,
        duration_ms=duration_ms,
        vut_station=cfg.vut_station,
        objects=tuple(objects),
    )

    per_station: dict[int, list[wire.AbsoluteRecord]] = {}

    def emit(station: int, record: wire.AbsoluteRecord) -> None:
        per_station.setdefault(station, []).append(record)

    # Cooperative self-reports, the VUT included.
    for t in _emission_instants(cfg.start_time_ms, duration_ms, cfg.rates.cam_hz):
        for obj in objects:
            if not obj.cooperative:
                continue
            pos, speed, course = obj.state_at(t)
            npos, nspeed, ncourse = _noisy_state(rng, pos, speed, course, cfg.cam_noise)
            cam = CamExtract(
                originator=obj.station,
                generation_time=t,
                position=npos,
                speed=nspeed,
                course=ncourse,
                classification=obj.classification,
            )
            emit(obj.station, wire.AbsoluteRecord(
                wire.RecordKind.CAM_EXTRACT, t, npos, wire.pack_cam(cam)
            ))

    # Camera detections of everything in range.
    for t in _emission_instants(cfg.start_time_ms, duration_ms, cfg.rates.cpm_hz):
        for obj in objects:
            pos, speed, course = obj.state_at(t)
            if haversine_distance(cfg.center, pos) > cfg.camera_radius_m:
                continue
            npos, nspeed, ncourse = _noisy_state(rng, pos, speed, course, cfg.cpm_noise)
            detection = CpmDetection(
                object_id=CAMERA_TRACK_OFFSET + obj.object_id,
                classification=obj.classification,
                position=npos,
                speed=nspeed,
                course=ncourse,
            )
            emit(CAMERA_STATION, wire.AbsoluteRecord(
                wire.RecordKind.CPM_DETECTION,
                t,
                npos,
                wire.pack_cpm_detection(CAMERA_STATION, detection),
            ))

    # VUT sensor extracts.
    vut = objects[0]
    for t in _emission_instants(cfg.start_time_ms, duration_ms, cfg.rates.vut_hz):
        pos, speed, course = vut.state_at(t)
        npos, nspeed, _ = _noisy_state(rng, pos, speed, course, cfg.vut_noise)
        extract = _default_vut_extract(t, npos, nspeed)
        emit(cfg.vut_station, wire.AbsoluteRecord(
            wire.RecordKind.VUT_SENSOR, t, npos, wire.pack_vut_sensor(extract)
        ))

    # Driver samples, georeferenced at the VUT.
    for t in _emission_instants(cfg.start_time_ms, duration_ms, cfg.rates.driver_hz):
        pos, _, _ = vut.state_at(t)
        sample = DriverStateSample(
            timestamp=t,
            valence=int(rng.integers(1, 6)),
            arousal=int(rng.integers(1, 6)),
            heart_rate_bpm=int(rng.integers(55, 100)),
            self_reported=False,
        )
        emit(cfg.vut_station, wire.AbsoluteRecord(
            wire.RecordKind.DRIVER_STATE, t, pos, wire.pack_driver_state(sample)
        ))

    envelopes: list[wire.BatchEnvelope] = []
    for station in sorted(per_station):
        records = sorted(per_station[station], key=lambda r: r.time_ms)
        envelopes.extend(wire.plan_batches(records, station))
    return truth, envelopes


@dataclass(frozen=True)
class ScoreResult:
    precision: float
    recall: float
    duplicate_rate: float
    fused_count: int
    truth_in_area: int
    matched: int


def score(
    gt: GroundTruth, fused: SituationRecord, match_radius_m: float = 3.0
) -> ScoreResult:
    """Greedy nearest-neighbour match of fused objects to truth positions."""
    truth_positions = {}
    for obj in gt.objects:
        pos, _, _ = obj.state_at(fused.timestamp)
        if haversine_distance(fused.center, pos) <= fused.radius_m:
            truth_positions[obj.object_id] = pos

    candidates = []
    for fi, fobj in enumerate(fused.objects):
        for tid, tpos in truth_positions.items():
            d = haversine_distance(fobj.position, tpos)
            if d <= match_radius_m:
                candidates.append((d, fi, tid))
    candidates.sort()
    used_fused: set[int] = set()
    used_truth: set[int] = set()
    for _, fi, tid in candidates:
        if fi in used_fused or tid in used_truth:
            continue
        used_fused.add(fi)
        used_truth.add(tid)

    fused_count = len(fused.objects)
    truth_count = len(truth_positions)
    matched = len(used_fused)
    precision = matched / fused_count if fused_count else 1.0
    recall = matched / truth_count if truth_count else 1.0
    duplicate_rate = (fused_count - matched) / truth_count if truth_count else 0.0
    return ScoreResult(
        precision=precision,
        recall=recall,
        duplicate_rate=duplicate_rate,
        fused_count=fused_count,
        truth_in_area=truth_count,
        matched=matched,
    )
