"""Situation storage on an embedded relational engine (sqlite).

Raw aggregated data and fused situations live in separate table families.
Raw tables are append-only; re-ingesting a message that is already present
(same message key) is silently skipped, so ingestion is idempotent.  A
situation is written in a single transaction: either all of its child rows
land or none do.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass, field

from .geo import GeoPosition, haversine_distance
from .messages import (
    CamExtract,
    CpmDetection,
    DoorState,
    DriverStateSample,
    EnvironmentSample,
    ExteriorLight,
    HazardEvent,
    HazardKind,
    MapLane,
    MapTopology,
    ObjectClassification,
    ObservationSource,
    SignalPhase,
    SpatExtract,
    StationId,
    VutSensorExtract,
)
from .situation import (
    FusedObject,
    ProvenanceEntry,
    SignalizedLane,
    SignalizedTopology,
    SituationRecord,
)
from . import wire


class StorageFailure(Exception):
    pass


# --- raw row types ----------------------------------------------------------


@dataclass(frozen=True)
class RawCam:
    cam: CamExtract
    reporter: StationId
    receive_time: int


@dataclass(frozen=True)
class RawCpmDetection:
    originator: StationId
    generation_time: int
    detection: CpmDetection
    reporter: StationId
    receive_time: int


@dataclass(frozen=True)
class RawSpat:
    spat: SpatExtract
    generation_time: int
    position: GeoPosition
    reporter: StationId
    receive_time: int


@dataclass(frozen=True)
class RawVutSensor:
    station: StationId
    extract: VutSensorExtract
    reporter: StationId
    receive_time: int


@dataclass(frozen=True)
class RawDriverState:
    station: StationId
    sample: DriverStateSample
    position: GeoPosition
    reporter: StationId
    receive_time: int


@dataclass(frozen=True)
class RawEnvironment:
    sample: EnvironmentSample
    reporter: StationId
    receive_time: int


@dataclass(frozen=True)
class RawHazard:
    event: HazardEvent
    reporter: StationId
    receive_time: int


RawRow = (
    RawCam | RawCpmDetection | RawSpat | RawVutSensor | RawDriverState | RawEnvironment | RawHazard
)


@dataclass
class RawSlice:
    """Everything the store returned for one time window and area."""

    cams: list[RawCam] = field(default_factory=list)
    cpm_detections: list[RawCpmDetection] = field(default_factory=list)
    spats: list[RawSpat] = field(default_factory=list)
    vut_rows: list[RawVutSensor] = field(default_factory=list)
    driver_rows: list[RawDriverState] = field(default_factory=list)
    environment_rows: list[RawEnvironment] = field(default_factory=list)
    hazard_rows: list[RawHazard] = field(default_factory=list)

    def __len__(self) -> int:
        return (
            len(self.cams)
            + len(self.cpm_detections)
            + len(self.spats)
            + len(self.vut_rows)
            + len(self.driver_rows)
            + len(self.environment_rows)
            + len(self.hazard_rows)
        )


def rows_from_envelope(env: wire.BatchEnvelope, receive_time: int) -> list[RawRow]:
    """Materialize a decoded envelope into absolute, typed raw rows."""
    rows: list[RawRow] = []
    station = env.meta.station
    for rec in wire.absolute_records(env):
        t, pos = rec.time_ms, rec.position
        if rec.kind is wire.RecordKind.CAM_EXTRACT:
            rows.append(RawCam(wire.unpack_cam(rec.payload, t, pos), station, receive_time))
        elif rec.kind is wire.RecordKind.CPM_DETECTION:
            originator, det = wire.unpack_cpm_detection(rec.payload, pos)
            rows.append(RawCpmDetection(originator, t, det, station, receive_time))
        elif rec.kind is wire.RecordKind.SPAT:
            rows.append(RawSpat(wire.unpack_spat(rec.payload), t, pos, station, receive_time))
        elif rec.kind is wire.RecordKind.VUT_SENSOR:
            rows.append(
                RawVutSensor(station, wire.unpack_vut_sensor(rec.payload, t, pos), station, receive_time)
            )
        elif rec.kind is wire.RecordKind.DRIVER_STATE:
            rows.append(
                RawDriverState(station, wire.unpack_driver_state(rec.payload, t), pos, station, receive_time)
            )
        elif rec.kind is wire.RecordKind.ENVIRONMENT:
            rows.append(RawEnvironment(wire.unpack_environment(rec.payload, t, pos), station, receive_time))
        elif rec.kind is wire.RecordKind.HAZARD:
            rows.append(RawHazard(wire.unpack_hazard(rec.payload, t, pos), station, receive_time))
    return rows


_SCHEMA = """
CREATE TABLE IF NOT EXISTS raw_cam (
    originator INTEGER NOT NULL,
    generation_time INTEGER NOT NULL,
    lat REAL NOT NULL, lon REAL NOT NULL,
    speed REAL NOT NULL, course REAL NOT NULL,
    classification INTEGER NOT NULL,
    reporter INTEGER NOT NULL, receive_time INTEGER NOT NULL,
    UNIQUE (originator, generation_time)
);
CREATE TABLE IF NOT EXISTS raw_cpm_detection (
    originator INTEGER NOT NULL,
    generation_time INTEGER NOT NULL,
    object_id INTEGER NOT NULL,
    classification INTEGER NOT NULL,
    lat REAL NOT NULL, lon REAL NOT NULL,
    speed REAL NOT NULL, course REAL NOT NULL,
    reporter INTEGER NOT NULL, receive_time INTEGER NOT NULL,
    UNIQUE (originator, generation_time, object_id)
);
CREATE TABLE IF NOT EXISTS raw_spat (
    intersection_id INTEGER NOT NULL,
    signal_group INTEGER NOT NULL,
    phase INTEGER NOT NULL,
    change_time INTEGER NOT NULL,
    generation_time INTEGER NOT NULL,
    lat REAL NOT NULL, lon REAL NOT NULL,
    reporter INTEGER NOT NULL, receive_time INTEGER NOT NULL,
    UNIQUE (intersection_id, signal_group, generation_time)
);
CREATE TABLE IF NOT EXISTS raw_vut_sensor (
    station INTEGER NOT NULL,
    timestamp_ms INTEGER NOT NULL,
    brake_actuated INTEGER, abs_active INTEGER, panic_braking INTEGER,
    clutch_pressed INTEGER, gear INTEGER,
    door_fl INTEGER, door_fr INTEGER, door_rl INTEGER, door_rr INTEGER,
    exterior_lights INTEGER,
    lat REAL NOT NULL, lon REAL NOT NULL,
    speed REAL NOT NULL,
    accel_longitudinal REAL, accel_lateral REAL,
    rain_intensity INTEGER, wiper_active INTEGER,
    yaw_rate REAL, steering_wheel_angle REAL, steering_wheel_velocity REAL,
    reporter INTEGER NOT NULL, receive_time INTEGER NOT NULL,
    UNIQUE (station, timestamp_ms)
);
CREATE TABLE IF NOT EXISTS raw_driver (
    station INTEGER NOT NULL,
    timestamp_ms INTEGER NOT NULL,
    valence INTEGER NOT NULL, arousal INTEGER NOT NULL,
    heart_rate INTEGER, self_reported INTEGER NOT NULL,
    lat REAL NOT NULL, lon REAL NOT NULL,
    reporter INTEGER NOT NULL, receive_time INTEGER NOT NULL,
    UNIQUE (station, timestamp_ms)
);
CREATE TABLE IF NOT EXISTS raw_environment (
    station INTEGER NOT NULL,
    timestamp_ms INTEGER NOT NULL,
    validity_s INTEGER NOT NULL,
    center_lat REAL NOT NULL, center_lon REAL NOT NULL, radius_m REAL NOT NULL,
    temperature_c REAL, precipitation_mm_h REAL, wind_speed_ms REAL,
    wind_direction REAL, illuminance_lux REAL, visibility_m REAL,
    pressure_hpa REAL, humidity_pct REAL, cloudiness_pct REAL,
    reporter INTEGER NOT NULL, receive_time INTEGER NOT NULL,
    UNIQUE (station, timestamp_ms)
);
CREATE TABLE IF NOT EXISTS raw_hazard (
    source INTEGER NOT NULL,
    kind INTEGER NOT NULL,
    timestamp_ms INTEGER NOT NULL,
    lat REAL NOT NULL, lon REAL NOT NULL,
    reporter INTEGER NOT NULL, receive_time INTEGER NOT NULL,
    UNIQUE (source, kind, timestamp_ms)
);
CREATE TABLE IF NOT EXISTS map_topology (
    intersection_id INTEGER NOT NULL,
    lane_id INTEGER NOT NULL,
    signal_group INTEGER NOT NULL,
    ingress INTEGER NOT NULL,
    polyline TEXT NOT NULL,
    UNIQUE (intersection_id, lane_id)
);
CREATE TABLE IF NOT EXISTS situation (
    situation_id INTEGER PRIMARY KEY AUTOINCREMENT,
    vut_station INTEGER NOT NULL,
    timestamp_ms INTEGER NOT NULL,
    center_lat REAL NOT NULL, center_lon REAL NOT NULL,
    radius_m REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS fused_object (
    situation_id INTEGER NOT NULL REFERENCES situation(situation_id),
    seq INTEGER NOT NULL,
    fused_id INTEGER NOT NULL,
    classification INTEGER NOT NULL,
    lat REAL NOT NULL, lon REAL NOT NULL,
    speed REAL NOT NULL, course REAL NOT NULL,
    lane_id INTEGER,
    PRIMARY KEY (situation_id, seq)
);
CREATE TABLE IF NOT EXISTS provenance (
    situation_id INTEGER NOT NULL REFERENCES situation(situation_id),
    seq INTEGER NOT NULL,
    entry_seq INTEGER NOT NULL,
    source INTEGER NOT NULL,
    reporter INTEGER NOT NULL,
    source_object_id INTEGER NOT NULL,
    PRIMARY KEY (situation_id, seq, entry_seq)
);
CREATE TABLE IF NOT EXISTS topology_lane (
    situation_id INTEGER NOT NULL REFERENCES situation(situation_id),
    intersection_id INTEGER NOT NULL,
    lane_id INTEGER NOT NULL,
    signal_group INTEGER NOT NULL,
    ingress INTEGER NOT NULL,
    phase INTEGER NOT NULL,
    polyline TEXT NOT NULL,
    PRIMARY KEY (situation_id, lane_id)
);
CREATE TABLE IF NOT EXISTS vut_sensor (
    situation_id INTEGER PRIMARY KEY REFERENCES situation(situation_id),
    timestamp_ms INTEGER NOT NULL,
    brake_actuated INTEGER, abs_active INTEGER, panic_braking INTEGER,
    clutch_pressed INTEGER, gear INTEGER,
    door_fl INTEGER, door_fr INTEGER, door_rl INTEGER, door_rr INTEGER,
    exterior_lights INTEGER,
    lat REAL NOT NULL, lon REAL NOT NULL,
    speed REAL NOT NULL,
    accel_longitudinal REAL, accel_lateral REAL,
    rain_intensity INTEGER, wiper_active INTEGER,
    yaw_rate REAL, steering_wheel_angle REAL, steering_wheel_velocity REAL
);
CREATE TABLE IF NOT EXISTS driver_state (
    situation_id INTEGER PRIMARY KEY REFERENCES situation(situation_id),
    timestamp_ms INTEGER NOT NULL,
    valence INTEGER NOT NULL, arousal INTEGER NOT NULL,
    heart_rate INTEGER, self_reported INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS hazard (
    situation_id INTEGER NOT NULL REFERENCES situation(situation_id),
    entry_seq INTEGER NOT NULL,
    kind INTEGER NOT NULL,
    timestamp_ms INTEGER NOT NULL,
    lat REAL NOT NULL, lon REAL NOT NULL,
    source INTEGER NOT NULL,
    PRIMARY KEY (situation_id, entry_seq)
);
CREATE TABLE IF NOT EXISTS environment (
    situation_id INTEGER PRIMARY KEY REFERENCES situation(situation_id),
    timestamp_ms INTEGER NOT NULL,
    validity_s INTEGER NOT NULL,
    center_lat REAL NOT NULL, center_lon REAL NOT NULL, radius_m REAL NOT NULL,
    temperature_c REAL, precipitation_mm_h REAL, wind_speed_ms REAL,
    wind_direction REAL, illuminance_lux REAL, visibility_m REAL,
    pressure_hpa REAL, humidity_pct REAL, cloudiness_pct REAL
);
"""

RAW_TABLES = (
    "raw_cam",
    "raw_cpm_detection",
    "raw_spat",
    "raw_vut_sensor",
    "raw_driver",
    "raw_environment",
    "raw_hazard",
)


def _polyline_json(polyline: tuple[GeoPosition, ...]) -> str:
    return json.dumps([[p.lat, p.lon] for p in polyline])


def _polyline_from_json(text: str) -> tuple[GeoPosition, ...]:
    return tuple(GeoPosition(lat, lon) for lat, lon in json.loads(text))


class SituationStore:
    """Single-writer storage; all access is serialized through one lock."""

    def __init__(self, path: str = ":memory:"):
        self._lock = threading.RLock()
        try:
            self._conn = sqlite3.connect(path, check_same_thread=False)
            self._conn.executescript(_SCHEMA)
            self._conn.commit()
        except sqlite3.Error as e:
            raise StorageFailure(f"cannot open store at {path}: {e}") from e

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- raw ingestion -----------------------------------------------------

    def insert_raw(self, rows) -> int:
        """Append raw rows, skipping already-present message keys.

        Returns the number of net-new rows.
        """
        with self._lock:
            before = self._conn.total_changes
            try:
                with self._conn:
                    for row in rows:
                        self._insert_one_raw(row)
            except sqlite3.Error as e:
                raise StorageFailure(str(e)) from e
            return self._conn.total_changes - before

    def insert_envelope(self, env: wire.BatchEnvelope, receive_time: int) -> int:
        return self.insert_raw(rows_from_envelope(env, receive_time))

    def _insert_one_raw(self, row: RawRow) -> None:
        c = self._conn
        if isinstance(row, RawCam):
            m = row.cam
            c.execute(
                "INSERT OR IGNORE INTO raw_cam VALUES (?,?,?,?,?,?,?,?,?)",
                (m.originator, m.generation_time, m.position.lat, m.position.lon,
                 m.speed, m.course, int(m.classification), row.reporter, row.receive_time),
            )
        elif isinstance(row, RawCpmDetection):
            d = row.detection
            c.execute(
                "INSERT OR IGNORE INTO raw_cpm_detection VALUES (?,?,?,?,?,?,?,?,?,?)",
                (row.originator, row.generation_time, d.object_id, int(d.classification),
                 d.position.lat, d.position.lon, d.speed, d.course,
                 row.reporter, row.receive_time),
            )
        elif isinstance(row, RawSpat):
            s = row.spat
            c.execute(
                "INSERT OR IGNORE INTO raw_spat VALUES (?,?,?,?,?,?,?,?,?)",
                (s.intersection_id, s.signal_group, int(s.phase), s.change_time,
                 row.generation_time, row.position.lat, row.position.lon,
                 row.reporter, row.receive_time),
            )
        elif isinstance(row, RawVutSensor):
            v = row.extract
            c.execute(
                "INSERT OR IGNORE INTO raw_vut_sensor VALUES "
                "(?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                (row.station, v.timestamp, v.brake_actuated, v.abs_active, v.panic_braking,
                 v.clutch_pressed, v.gear,
                 int(v.door_positions[0]), int(v.door_positions[1]),
                 int(v.door_positions[2]), int(v.door_positions[3]),
                 int(v.exterior_lights),
                 v.gnss.lat, v.gnss.lon, v.speed,
                 v.accel_longitudinal, v.accel_lateral,
                 v.rain_intensity, v.wiper_active,
                 v.yaw_rate, v.steering_wheel_angle, v.steering_wheel_velocity,
                 row.reporter, row.receive_time),
            )
        elif isinstance(row, RawDriverState):
            d = row.sample
            c.execute(
                "INSERT OR IGNORE INTO raw_driver VALUES (?,?,?,?,?,?,?,?,?,?)",
                (row.station, d.timestamp, d.valence, d.arousal, d.heart_rate_bpm,
                 d.self_reported, row.position.lat, row.position.lon,
                 row.reporter, row.receive_time),
            )
        elif isinstance(row, RawEnvironment):
            e = row.sample
            c.execute(
                "INSERT OR IGNORE INTO raw_environment VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                (row.reporter, e.timestamp, e.validity_duration_s,
                 e.area_center.lat, e.area_center.lon, e.area_radius_m,
                 e.temperature_c, e.precipitation_mm_h, e.wind_speed_ms, e.wind_direction,
                 e.illuminance_lux, e.visibility_m, e.pressure_hpa,
                 e.humidity_pct, e.cloudiness_pct,
                 row.reporter, row.receive_time),
            )
        elif isinstance(row, RawHazard):
            h = row.event
            c.execute(
                "INSERT OR IGNORE INTO raw_hazard VALUES (?,?,?,?,?,?,?)",
                (h.source, int(h.kind), h.timestamp, h.position.lat, h.position.lon,
                 row.reporter, row.receive_time),
            )
        else:
            raise StorageFailure(f"unknown raw row type {type(row).__name__}")

    # -- raw queries ---------------------------------------------------------

    def query_raw(
        self,
        t_min: int,
        t_max: int,
        center: GeoPosition,
        radius_m: float,
        kinds: set[wire.RecordKind] | None = None,
    ) -> RawSlice:
        """All raw rows inside [t_min, t_max] (inclusive) and the given circle."""
        if t_min > t_max:
            raise ValueError(f"t_min {t_min} > t_max {t_max}")
        if kinds is None:
            kinds = set(wire.RecordKind)

        def in_area(lat: float, lon: float) -> bool:
            return haversine_distance(center, GeoPosition(lat, lon)) <= radius_m

        out = RawSlice()
        with self._lock:
            c = self._conn
            if wire.RecordKind.CAM_EXTRACT in kinds:
                for r in c.execute(
                    "SELECT * FROM raw_cam WHERE generation_time BETWEEN ? AND ?"
                    " ORDER BY generation_time, originator",
                    (t_min, t_max),
                ):
                    if in_area(r[2], r[3]):
                        out.cams.append(_row_to_cam(r))
            if wire.RecordKind.CPM_DETECTION in kinds:
                for r in c.execute(
                    "SELECT * FROM raw_cpm_detection WHERE generation_time BETWEEN ? AND ?"
                    " ORDER BY generation_time, originator, object_id",
                    (t_min, t_max),
                ):
                    if in_area(r[4], r[5]):
                        out.cpm_detections.append(_row_to_cpm(r))
            if wire.RecordKind.SPAT in kinds:
                for r in c.execute(
                    "SELECT * FROM raw_spat WHERE generation_time BETWEEN ? AND ?"
                    " ORDER BY generation_time, intersection_id, signal_group",
                    (t_min, t_max),
                ):
                    if in_area(r[5], r[6]):
                        out.spats.append(_row_to_spat(r))
            if wire.RecordKind.VUT_SENSOR in kinds:
                for r in c.execute(
                    "SELECT * FROM raw_vut_sensor WHERE timestamp_ms BETWEEN ? AND ?"
                    " ORDER BY timestamp_ms, station",
                    (t_min, t_max),
                ):
                    if in_area(r[12], r[13]):
                        out.vut_rows.append(_row_to_vut(r))
            if wire.RecordKind.DRIVER_STATE in kinds:
                for r in c.execute(
                    "SELECT * FROM raw_driver WHERE timestamp_ms BETWEEN ? AND ?"
                    " ORDER BY timestamp_ms, station",
                    (t_min, t_max),
                ):
                    if in_area(r[6], r[7]):
                        out.driver_rows.append(_row_to_driver(r))
            if wire.RecordKind.ENVIRONMENT in kinds:
                for r in c.execute(
                    "SELECT * FROM raw_environment WHERE timestamp_ms BETWEEN ? AND ?"
                    " ORDER BY timestamp_ms, station",
                    (t_min, t_max),
                ):
                    if in_area(r[3], r[4]):
                        out.environment_rows.append(_row_to_environment(r))
            if wire.RecordKind.HAZARD in kinds:
                for r in c.execute(
                    "SELECT * FROM raw_hazard WHERE timestamp_ms BETWEEN ? AND ?"
                    " ORDER BY timestamp_ms, source",
                    (t_min, t_max),
                ):
                    if in_area(r[3], r[4]):
                        out.hazard_rows.append(_row_to_hazard(r))
        return out

    def vut_fix_near(self, vut: StationId, t: int, tolerance_ms: int) -> RawVutSensor | None:
        """The VUT sensor row closest to t within the tolerance, or None."""
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM raw_vut_sensor WHERE station = ?"
                " AND timestamp_ms BETWEEN ? AND ?"
                " ORDER BY ABS(timestamp_ms - ?), timestamp_ms LIMIT 1",
                (vut, t - tolerance_ms, t + tolerance_ms, t),
            ).fetchone()
        return _row_to_vut(row) if row else None

    def vut_fixes(self, vut: StationId, t_min: int, t_max: int) -> list[RawVutSensor]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM raw_vut_sensor WHERE station = ?"
                " AND timestamp_ms BETWEEN ? AND ? ORDER BY timestamp_ms",
                (vut, t_min, t_max),
            ).fetchall()
        return [_row_to_vut(r) for r in rows]

    def environment_candidates(self, t: int) -> list[EnvironmentSample]:
        """Samples whose validity window contains t, regardless of area."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM raw_environment WHERE timestamp_ms <= ?"
                " AND timestamp_ms + validity_s * 1000 >= ? ORDER BY timestamp_ms, station",
                (t, t),
            ).fetchall()
        return [_row_to_environment(r).sample for r in rows]

    def driver_samples(self, station: StationId) -> list[RawDriverState]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM raw_driver WHERE station = ? ORDER BY timestamp_ms",
                (station,),
            ).fetchall()
        return [_row_to_driver(r) for r in rows]

    # -- static topology -----------------------------------------------------

    def put_topology(self, topo: MapTopology) -> None:
        with self._lock, self._conn:
            for lane in topo.lanes:
                self._conn.execute(
                    "INSERT OR REPLACE INTO map_topology VALUES (?,?,?,?,?)",
                    (topo.intersection_id, lane.lane_id, lane.signal_group,
                     lane.ingress, _polyline_json(lane.polyline)),
                )

    def topologies(self) -> list[MapTopology]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM map_topology ORDER BY intersection_id, lane_id"
            ).fetchall()
        by_intersection: dict[int, list[MapLane]] = {}
        for intersection_id, lane_id, group, ingress, polyline in rows:
            by_intersection.setdefault(intersection_id, []).append(
                MapLane(lane_id, group, _polyline_from_json(polyline), bool(ingress))
            )
        return [
            MapTopology(intersection_id=i, lanes=tuple(lanes))
            for i, lanes in sorted(by_intersection.items())
        ]

    # -- situations ------------------------------------------------------------

    def persist_situation(self, s: SituationRecord) -> int:
        """Atomically write a situation; returns its fresh identifier."""
        with self._lock:
            try:
                with self._conn:
                    cur = self._conn.execute(
                        "INSERT INTO situation (vut_station, timestamp_ms, center_lat,"
                        " center_lon, radius_m) VALUES (?,?,?,?,?)",
                        (s.vut, s.timestamp, s.center.lat, s.center.lon, s.radius_m),
                    )
                    sid = cur.lastrowid
                    self._insert_situation_children(sid, s)
            except sqlite3.Error as e:
                raise StorageFailure(str(e)) from e
            return sid

    def _insert_situation_children(self, sid: int, s: SituationRecord) -> None:
        c = self._conn
        for seq, obj in enumerate(s.objects):
            c.execute(
                "INSERT INTO fused_object VALUES (?,?,?,?,?,?,?,?,?)",
                (sid, seq, obj.fused_id, int(obj.classification),
                 obj.position.lat, obj.position.lon, obj.speed, obj.course, obj.lane_id),
            )
            for eseq, entry in enumerate(obj.provenance):
                c.execute(
                    "INSERT INTO provenance VALUES (?,?,?,?,?,?)",
                    (sid, seq, eseq, int(entry.source), entry.reporter, entry.object_id),
                )
        if s.topology is not None:
            for lane in s.topology.lanes:
                c.execute(
                    "INSERT INTO topology_lane VALUES (?,?,?,?,?,?,?)",
                    (sid, s.topology.intersection_id, lane.lane_id, lane.signal_group,
                     lane.ingress, int(lane.phase), _polyline_json(lane.polyline)),
                )
        if s.vut_sensor is not None:
            v = s.vut_sensor
            c.execute(
                "INSERT INTO vut_sensor VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                (sid, v.timestamp, v.brake_actuated, v.abs_active, v.panic_braking,
                 v.clutch_pressed, v.gear,
                 int(v.door_positions[0]), int(v.door_positions[1]),
                 int(v.door_positions[2]), int(v.door_positions[3]),
                 int(v.exterior_lights), v.gnss.lat, v.gnss.lon, v.speed,
                 v.accel_longitudinal, v.accel_lateral, v.rain_intensity, v.wiper_active,
                 v.yaw_rate, v.steering_wheel_angle, v.steering_wheel_velocity),
            )
        if s.driver is not None:
            d = s.driver
            c.execute(
                "INSERT INTO driver_state VALUES (?,?,?,?,?,?)",
                (sid, d.timestamp, d.valence, d.arousal, d.heart_rate_bpm, d.self_reported),
            )
        for eseq, h in enumerate(s.hazards):
            c.execute(
                "INSERT INTO hazard VALUES (?,?,?,?,?,?,?)",
                (sid, eseq, int(h.kind), h.timestamp, h.position.lat, h.position.lon, h.source),
            )
        if s.environment is not None:
            e = s.environment
            c.execute(
                "INSERT INTO environment VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                (sid, e.timestamp, e.validity_duration_s,
                 e.area_center.lat, e.area_center.lon, e.area_radius_m,
                 e.temperature_c, e.precipitation_mm_h, e.wind_speed_ms, e.wind_direction,
                 e.illuminance_lux, e.visibility_m, e.pressure_hpa,
                 e.humidity_pct, e.cloudiness_pct),
            )

    def load_situation(self, situation_id: int) -> SituationRecord | None:
        with self._lock:
            c = self._conn
            head = c.execute(
                "SELECT * FROM situation WHERE situation_id = ?", (situation_id,)
            ).fetchone()
            if head is None:
                return None
            sid, vut, timestamp, clat, clon, radius = head
            objects = []
            for row in c.execute(
                "SELECT seq, fused_id, classification, lat, lon, speed, course, lane_id"
                " FROM fused_object WHERE situation_id = ? ORDER BY seq",
                (sid,),
            ).fetchall():
                seq, fused_id, cls, lat, lon, speed, course, lane_id = row
                prov = tuple(
                    ProvenanceEntry(ObservationSource(src), reporter, obj_id)
                    for src, reporter, obj_id in c.execute(
                        "SELECT source, reporter, source_object_id FROM provenance"
                        " WHERE situation_id = ? AND seq = ? ORDER BY entry_seq",
                        (sid, seq),
                    )
                )
                objects.append(
                    FusedObject(
                        fused_id=fused_id,
                        classification=ObjectClassification.from_code(cls),
                        position=GeoPosition(lat, lon),
                        speed=speed,
                        course=course,
                        provenance=prov,
                        lane_id=lane_id,
                    )
                )
            lanes = c.execute(
                "SELECT intersection_id, lane_id, signal_group, ingress, phase, polyline"
                " FROM topology_lane WHERE situation_id = ? ORDER BY lane_id",
                (sid,),
            ).fetchall()
            topology = None
            if lanes:
                topology = SignalizedTopology(
                    intersection_id=lanes[0][0],
                    lanes=tuple(
                        SignalizedLane(
                            lane_id=lane_id,
                            signal_group=group,
                            polyline=_polyline_from_json(polyline),
                            ingress=bool(ingress),
                            phase=SignalPhase(phase),
                        )
                        for _, lane_id, group, ingress, phase, polyline in lanes
                    ),
                )
            vrow = c.execute(
                "SELECT * FROM vut_sensor WHERE situation_id = ?", (sid,)
            ).fetchone()
            vut_sensor = _row_to_vut_extract(vrow[1:]) if vrow else None
            drow = c.execute(
                "SELECT timestamp_ms, valence, arousal, heart_rate, self_reported"
                " FROM driver_state WHERE situation_id = ?",
                (sid,),
            ).fetchone()
            driver = (
                DriverStateSample(
                    timestamp=drow[0], valence=drow[1], arousal=drow[2],
                    heart_rate_bpm=drow[3], self_reported=bool(drow[4]),
                )
                if drow
                else None
            )
            hazards = tuple(
                HazardEvent(HazardKind(kind), ts, GeoPosition(lat, lon), source)
                for kind, ts, lat, lon, source in c.execute(
                    "SELECT kind, timestamp_ms, lat, lon, source FROM hazard"
                    " WHERE situation_id = ? ORDER BY entry_seq",
                    (sid,),
                )
            )
            erow = c.execute(
                "SELECT * FROM environment WHERE situation_id = ?", (sid,)
            ).fetchone()
            environment = _environment_from_columns(erow[1:]) if erow else None
        return SituationRecord(
            situation_id=sid,
            center=GeoPosition(clat, clon),
            radius_m=radius,
            timestamp=timestamp,
            vut=vut,
            objects=tuple(objects),
            topology=topology,
            vut_sensor=vut_sensor,
            driver=driver,
            hazards=hazards,
            environment=environment,
        )

    def list_situations(
        self,
        vut: StationId | None = None,
        t_min: int | None = None,
        t_max: int | None = None,
    ) -> list[tuple[int, StationId, int, GeoPosition, float]]:
        """(situation_id, vut, timestamp, center, radius) ordered by timestamp."""
        clauses, params = [], []
        if vut is not None:
            clauses.append("vut_station = ?")
            params.append(vut)
        if t_min is not None:
            clauses.append("timestamp_ms >= ?")
            params.append(t_min)
        if t_max is not None:
            clauses.append("timestamp_ms <= ?")
            params.append(t_max)
        where = (" WHERE " + " AND ".join(clauses)) if clauses else ""
        with self._lock:
            rows = self._conn.execute(
                "SELECT situation_id, vut_station, timestamp_ms, center_lat, center_lon,"
                f" radius_m FROM situation{where} ORDER BY timestamp_ms, situation_id",
                params,
            ).fetchall()
        return [(sid, v, t, GeoPosition(la, lo), r) for sid, v, t, la, lo, r in rows]

    def stats(self) -> dict[str, int]:
        """Row counts per raw table plus the situation total."""
        out = {}
        with self._lock:
            for table in RAW_TABLES + ("situation",):
                (n,) = self._conn.execute(f"SELECT COUNT(*) FROM {table}").fetchone()
                out[table] = n
        return out


# -- row mappers ------------------------------------------------------------


def _row_to_cam(r) -> RawCam:
    return RawCam(
        cam=CamExtract(
            originator=r[0], generation_time=r[1], position=GeoPosition(r[2], r[3]),
            speed=r[4], course=r[5], classification=ObjectClassification.from_code(r[6]),
        ),
        reporter=r[7],
        receive_time=r[8],
    )


def _row_to_cpm(r) -> RawCpmDetection:
    return RawCpmDetection(
        originator=r[0],
        generation_time=r[1],
        detection=CpmDetection(
            object_id=r[2], classification=ObjectClassification.from_code(r[3]),
            position=GeoPosition(r[4], r[5]), speed=r[6], course=r[7],
        ),
        reporter=r[8],
        receive_time=r[9],
    )


def _row_to_spat(r) -> RawSpat:
    return RawSpat(
        spat=SpatExtract(
            intersection_id=r[0], signal_group=r[1], phase=SignalPhase(r[2]), change_time=r[3],
        ),
        generation_time=r[4],
        position=GeoPosition(r[5], r[6]),
        reporter=r[7],
        receive_time=r[8],
    )


def _row_to_vut_extract(cols) -> VutSensorExtract:
    return VutSensorExtract(
        timestamp=cols[0],
        brake_actuated=bool(cols[1]),
        abs_active=bool(cols[2]),
        panic_braking=bool(cols[3]),
        clutch_pressed=bool(cols[4]),
        gear=cols[5],
        door_positions=tuple(DoorState(cols[6 + i]) for i in range(4)),
        exterior_lights=ExteriorLight(cols[10]),
        gnss=GeoPosition(cols[11], cols[12]),
        speed=cols[13],
        accel_longitudinal=cols[14],
        accel_lateral=cols[15],
        rain_intensity=cols[16],
        wiper_active=bool(cols[17]),
        yaw_rate=cols[18],
        steering_wheel_angle=cols[19],
        steering_wheel_velocity=cols[20],
    )


def _row_to_vut(r) -> RawVutSensor:
    return RawVutSensor(
        station=r[0], extract=_row_to_vut_extract(r[1:22]), reporter=r[22], receive_time=r[23]
    )


def _row_to_driver(r) -> RawDriverState:
    return RawDriverState(
        station=r[0],
        sample=DriverStateSample(
            timestamp=r[1], valence=r[2], arousal=r[3],
            heart_rate_bpm=r[4], self_reported=bool(r[5]),
        ),
        position=GeoPosition(r[6], r[7]),
        reporter=r[8],
        receive_time=r[9],
    )


def _environment_from_columns(cols) -> EnvironmentSample:
    return EnvironmentSample(
        timestamp=cols[0],
        validity_duration_s=cols[1],
        area_center=GeoPosition(cols[2], cols[3]),
        area_radius_m=cols[4],
        temperature_c=cols[5],
        precipitation_mm_h=cols[6],
        wind_speed_ms=cols[7],
        wind_direction=cols[8],
        illuminance_lux=cols[9],
        visibility_m=cols[10],
        pressure_hpa=cols[11],
        humidity_pct=cols[12],
        cloudiness_pct=cols[13],
    )


def _row_to_environment(r) -> RawEnvironment:
    return RawEnvironment(sample=_environment_from_columns(r[1:15]), reporter=r[15], receive_time=r[16])


def _row_to_hazard(r) -> RawHazard:
    return RawHazard(
        event=HazardEvent(
            kind=HazardKind(r[1]), timestamp=r[2], position=GeoPosition(r[3], r[4]), source=r[0],
        ),
        reporter=r[5],
        receive_time=r[6],
    )
