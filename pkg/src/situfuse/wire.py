"""Delta-compressed batch format between aggregator clients and the backend.

A batch carries one absolute meta block and many records that store only
small offsets from it, so a transmission stays compact even on poor links.

Envelope layout (all little-endian):

    magic    "KSB1"            4 bytes
    station  u32               aggregator client identity
    ref_time u64               ms since epoch
    ref_lat  i32               1e-7 degrees
    ref_lon  i32               1e-7 degrees
    count    u16               number of records
    records  count * record

Record layout:

    kind        u8             see RecordKind
    rel_time    u16            10 ms units after ref_time
    rel_lat     i16            1e-6 degree offset from ref_lat
    rel_lon     i16            1e-6 degree offset from ref_lon
    payload_len u16
    payload     payload_len bytes, fixed layout per kind

Payload layouts (field: encoding):

    CAM_EXTRACT    originator u32 | speed u16 (0.01 m/s) | course u16 (0.1 deg)
                   | classification u8
    CPM_DETECTION  originator u32 | object_id u32 | speed u16 | course u16
                   | classification u8
    SPAT           intersection u32 | signal_group u16 | phase u8
                   | change_time u64 (ms)
    VUT_SENSOR     flags u8 (bit0 brake, 1 abs, 2 panic, 3 clutch, 4 wiper)
                   | gear i8 | doors u8 (2 bits each: FL FR RL RR)
                   | lights u8 | speed u16 | accel_lon i16 (0.01 m/s^2)
                   | accel_lat i16 | rain u8 | yaw_rate i16 (0.1 deg/s)
                   | steer_angle i16 (0.1 deg) | steer_velocity i16 (0.1 deg/s)
    DRIVER_STATE   valence u8 | arousal u8 | heart_rate u16 (0 = absent)
                   | self_reported u8
    ENVIRONMENT    validity u16 (s) | radius u16 (m) | temperature i16 (0.1 C)
                   | precipitation u16 (0.1 mm/h) | wind_speed u16 (0.1 m/s)
                   | wind_dir u16 (0.1 deg) | illuminance u32 (lux)
                   | visibility u16 (m) | pressure u16 (0.1 hPa)
                   | humidity u8 (%) | cloudiness u8 (%)
    HAZARD         hazard_kind u8 | source u32

The record's absolute time/position and its payload together reconstruct the
original extract; per-kind pack/unpack helpers below do the mapping.  A batch
with an unknown kind, a bad payload, a bad magic or missing bytes is rejected
as a whole; silently skipping records would corrupt fusion statistics.

`.ksb` files and the ingest socket carry a sequence of frames, each
``u32 frame length | frame`` where the frame is one encoded envelope.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

from .geo import GeoPosition
from .messages import (
    CamExtract,
    CpmDetection,
    DoorState,
    DriverStateSample,
    EnvironmentSample,
    ExteriorLight,
    HazardEvent,
    HazardKind,
    ObjectClassification,
    SignalPhase,
    SpatExtract,
    StationId,
    VutSensorExtract,
)

MAGIC = b"KSB1"
HEADER = struct.Struct("<4sIQiiH")
RECORD_HEAD = struct.Struct("<BHhhH")

REL_TIME_UNIT_MS = 10
# positions: absolute 1e-7 deg, offsets 1e-6 deg (canonical float is
# round(deg * 1e7) / 1e7)
MAX_REL_TIME = 0xFFFF
MAX_REL_POS = 0x7FFF
MAX_RECORDS = 0xFFFF


class WireError(Exception):
    """Base class for all batch codec failures."""


class BadMagic(WireError):
    pass


class Truncated(WireError):
    pass


class TrailingData(WireError):
    pass


class UnknownKind(WireError):
    pass


class BadPayload(WireError):
    pass


class DeltaOverflow(WireError):
    """A record does not fit the relative time/position ranges."""


class RecordKind(enum.IntEnum):
    CAM_EXTRACT = 1
    CPM_DETECTION = 2
    SPAT = 3
    VUT_SENSOR = 4
    DRIVER_STATE = 5
    ENVIRONMENT = 6
    HAZARD = 7


_CAM = struct.Struct("<IHHB")
_CPM = struct.Struct("<IIHHB")
_SPAT = struct.Struct("<IHBQ")
_VUT = struct.Struct("<BbBBHhhBhhh")
_DRIVER = struct.Struct("<BBHB")
_ENV = struct.Struct("<HHhHHHIHHBB")
_HAZARD = struct.Struct("<BI")

PAYLOAD_SIZE = {
    RecordKind.CAM_EXTRACT: _CAM.size,
    RecordKind.CPM_DETECTION: _CPM.size,
    RecordKind.SPAT: _SPAT.size,
    RecordKind.VUT_SENSOR: _VUT.size,
    RecordKind.DRIVER_STATE: _DRIVER.size,
    RecordKind.ENVIRONMENT: _ENV.size,
    RecordKind.HAZARD: _HAZARD.size,
}


@dataclass(frozen=True)
class MetaBlock:
    """Absolute reference time, position and identity of a batch."""

    station: StationId
    ref_time: int
    ref_position: GeoPosition
    record_count: int

    def __post_init__(self):
        if not (0 <= self.station <= 0xFFFFFFFF):
            raise ValueError(f"station id out of u32 range: {self.station}")
        if not (0 <= self.ref_time <= 0xFFFFFFFFFFFFFFFF):
            raise ValueError(f"ref_time out of u64 range: {self.ref_time}")
        if not (0 <= self.record_count <= MAX_RECORDS):
            raise ValueError(f"record count out of range: {self.record_count}")
        # The reference position is the wire boundary: it must sit exactly on
        # the 1e-7 degree grid so encoding is lossless.
        for name, value in (("lat", self.ref_position.lat), ("lon", self.ref_position.lon)):
            if round(value * 1e7) / 1e7 != value:
                raise ValueError(f"ref {name} not on the 1e-7 degree grid: {value!r}")


@dataclass(frozen=True)
class DeltaRecord:
    """One record relative to its envelope's meta block."""

    kind: RecordKind
    rel_time: int
    rel_lat: int
    rel_lon: int
    payload: bytes

    def __post_init__(self):
        if not (0 <= self.rel_time <= MAX_REL_TIME):
            raise ValueError(f"rel_time out of range: {self.rel_time}")
        for name, value in (("rel_lat", self.rel_lat), ("rel_lon", self.rel_lon)):
            if abs(value) > MAX_REL_POS:
                raise ValueError(f"{name} out of range: {value}")


@dataclass(frozen=True)
class BatchEnvelope:
    meta: MetaBlock
    records: tuple[DeltaRecord, ...]

    def __post_init__(self):
        if self.meta.record_count != len(self.records):
            raise ValueError(
                f"meta count {self.meta.record_count} != {len(self.records)} records"
            )


@dataclass(frozen=True)
class AbsoluteRecord:
    """A record with its absolute time and position, before/after delta packing."""

    kind: RecordKind
    time_ms: int
    position: GeoPosition
    payload: bytes


# --- quantization helpers ------------------------------------------------


def _q(value: float, unit: float) -> int:
    return round(value / unit)


def _check_u16(value: int, what: str) -> int:
    if not (0 <= value <= 0xFFFF):
        raise BadPayload(f"{what} does not fit u16: {value}")
    return value


def _check_i16(value: int, what: str) -> int:
    if not (-0x8000 <= value <= 0x7FFF):
        raise BadPayload(f"{what} does not fit i16: {value}")
    return value


def _speed_u16(speed: float) -> int:
    return _check_u16(_q(speed, 0.01), "speed")


def _course_u16(course: float) -> int:
    c = _q(course, 0.1)
    if c == 3600:  # 359.96..360 rounds up; wrap to 0
        c = 0
    return _check_u16(c, "course")


def _unpack_course(raw: int) -> float:
    if raw >= 3600:
        raise BadPayload(f"course code out of range: {raw}")
    return raw * 0.1


# --- per-kind payload codecs ----------------------------------------------


def pack_cam(c: CamExtract) -> bytes:
    return _CAM.pack(c.originator, _speed_u16(c.speed), _course_u16(c.course), int(c.classification))


def unpack_cam(payload: bytes, generation_time: int, position: GeoPosition) -> CamExtract:
    originator, speed, course, cls = _CAM.unpack(payload)
    return CamExtract(
        originator=originator,
        generation_time=generation_time,
        position=position,
        speed=speed * 0.01,
        course=_unpack_course(course),
        classification=ObjectClassification.from_code(cls),
    )


def pack_cpm_detection(originator: StationId, d: CpmDetection) -> bytes:
    return _CPM.pack(
        originator, d.object_id, _speed_u16(d.speed), _course_u16(d.course), int(d.classification)
    )


def unpack_cpm_detection(payload: bytes, position: GeoPosition) -> tuple[StationId, CpmDetection]:
    originator, object_id, speed, course, cls = _CPM.unpack(payload)
    detection = CpmDetection(
        object_id=object_id,
        classification=ObjectClassification.from_code(cls),
        position=position,
        speed=speed * 0.01,
        course=_unpack_course(course),
    )
    return originator, detection


def pack_spat(s: SpatExtract) -> bytes:
    if not (0 <= s.change_time <= 0xFFFFFFFFFFFFFFFF):
        raise BadPayload(f"change_time out of u64 range: {s.change_time}")
    return _SPAT.pack(s.intersection_id, s.signal_group, int(s.phase), s.change_time)


def unpack_spat(payload: bytes) -> SpatExtract:
    intersection, group, phase, change = _SPAT.unpack(payload)
    return SpatExtract(
        intersection_id=intersection,
        signal_group=group,
        phase=SignalPhase(phase),
        change_time=change,
    )


def pack_vut_sensor(v: VutSensorExtract) -> bytes:
    flags = (
        (1 if v.brake_actuated else 0)
        | (2 if v.abs_active else 0)
        | (4 if v.panic_braking else 0)
        | (8 if v.clutch_pressed else 0)
        | (16 if v.wiper_active else 0)
    )
    doors = 0
    for i, d in enumerate(v.door_positions):
        doors |= (int(d) & 0x3) << (2 * i)
    return _VUT.pack(
        flags,
        v.gear,
        doors,
        int(v.exterior_lights) & 0x3F,
        _speed_u16(v.speed),
        _check_i16(_q(v.accel_longitudinal, 0.01), "accel_longitudinal"),
        _check_i16(_q(v.accel_lateral, 0.01), "accel_lateral"),
        v.rain_intensity,
        _check_i16(_q(v.yaw_rate, 0.1), "yaw_rate"),
        _check_i16(_q(v.steering_wheel_angle, 0.1), "steering_wheel_angle"),
        _check_i16(_q(v.steering_wheel_velocity, 0.1), "steering_wheel_velocity"),
    )


def unpack_vut_sensor(payload: bytes, timestamp: int, gnss: GeoPosition) -> VutSensorExtract:
    (flags, gear, doors, lights, speed, alon, alat, rain, yaw, sangle, svel) = _VUT.unpack(payload)
    try:
        door_states = tuple(DoorState((doors >> (2 * i)) & 0x3) for i in range(4))
    except ValueError as e:
        raise BadPayload(str(e)) from None
    return VutSensorExtract(
        timestamp=timestamp,
        brake_actuated=bool(flags & 1),
        abs_active=bool(flags & 2),
        panic_braking=bool(flags & 4),
        clutch_pressed=bool(flags & 8),
        gear=gear,
        door_positions=door_states,
        exterior_lights=ExteriorLight(lights & 0x3F),
        gnss=gnss,
        speed=speed * 0.01,
        accel_longitudinal=alon * 0.01,
        accel_lateral=alat * 0.01,
        rain_intensity=rain,
        wiper_active=bool(flags & 16),
        yaw_rate=yaw * 0.1,
        steering_wheel_angle=sangle * 0.1,
        steering_wheel_velocity=svel * 0.1,
    )


def pack_driver_state(d: DriverStateSample) -> bytes:
    hr = d.heart_rate_bpm if d.heart_rate_bpm is not None else 0
    return _DRIVER.pack(d.valence, d.arousal, _check_u16(hr, "heart_rate"), 1 if d.self_reported else 0)


def unpack_driver_state(payload: bytes, timestamp: int) -> DriverStateSample:
    valence, arousal, hr, self_rep = _DRIVER.unpack(payload)
    return DriverStateSample(
        timestamp=timestamp,
        valence=valence,
        arousal=arousal,
        heart_rate_bpm=hr if hr > 0 else None,
        self_reported=bool(self_rep),
    )


def pack_environment(e: EnvironmentSample) -> bytes:
    lux = _q(e.illuminance_lux, 1.0)
    if not (0 <= lux <= 0xFFFFFFFF):
        raise BadPayload(f"illuminance does not fit u32: {lux}")
    return _ENV.pack(
        _check_u16(e.validity_duration_s, "validity"),
        _check_u16(_q(e.area_radius_m, 1.0), "area_radius"),
        _check_i16(_q(e.temperature_c, 0.1), "temperature"),
        _check_u16(_q(e.precipitation_mm_h, 0.1), "precipitation"),
        _check_u16(_q(e.wind_speed_ms, 0.1), "wind_speed"),
        _course_u16(e.wind_direction),
        lux,
        _check_u16(_q(e.visibility_m, 1.0), "visibility"),
        _check_u16(_q(e.pressure_hpa, 0.1), "pressure"),
        _q(e.humidity_pct, 1.0),
        _q(e.cloudiness_pct, 1.0),
    )


def unpack_environment(payload: bytes, timestamp: int, area_center: GeoPosition) -> EnvironmentSample:
    (validity, radius, temp, precip, wind, wdir, lux, vis, pres, hum, cloud) = _ENV.unpack(payload)
    return EnvironmentSample(
        timestamp=timestamp,
        validity_duration_s=validity,
        area_center=area_center,
        area_radius_m=float(radius),
        temperature_c=temp * 0.1,
        precipitation_mm_h=precip * 0.1,
        wind_speed_ms=wind * 0.1,
        wind_direction=_unpack_course(wdir),
        illuminance_lux=float(lux),
        visibility_m=float(vis),
        pressure_hpa=pres * 0.1,
        humidity_pct=float(hum),
        cloudiness_pct=float(cloud),
    )


def pack_hazard(h: HazardEvent) -> bytes:
    return _HAZARD.pack(int(h.kind), h.source)


def unpack_hazard(payload: bytes, timestamp: int, position: GeoPosition) -> HazardEvent:
    kind, source = _HAZARD.unpack(payload)
    return HazardEvent(kind=HazardKind(kind), timestamp=timestamp, position=position, source=source)


def validate_payload(kind: RecordKind, payload: bytes, time_ms: int, position: GeoPosition) -> None:
    """Decode a payload purely for validation; raises BadPayload on anything off."""
    try:
        if kind is RecordKind.CAM_EXTRACT:
            unpack_cam(payload, time_ms, position)
        elif kind is RecordKind.CPM_DETECTION:
            unpack_cpm_detection(payload, position)
        elif kind is RecordKind.SPAT:
            unpack_spat(payload)
        elif kind is RecordKind.VUT_SENSOR:
            unpack_vut_sensor(payload, time_ms, position)
        elif kind is RecordKind.DRIVER_STATE:
            unpack_driver_state(payload, time_ms)
        elif kind is RecordKind.ENVIRONMENT:
            unpack_environment(payload, time_ms, position)
        elif kind is RecordKind.HAZARD:
            unpack_hazard(payload, time_ms, position)
    except BadPayload:
        raise
    except (struct.error, ValueError) as e:
        raise BadPayload(str(e)) from None


# --- envelope codec --------------------------------------------------------


def _abs_units(meta: MetaBlock) -> tuple[int, int]:
    return (round(meta.ref_position.lat * 1e7), round(meta.ref_position.lon * 1e7))


def record_time(meta: MetaBlock, r: DeltaRecord) -> int:
    return meta.ref_time + REL_TIME_UNIT_MS * r.rel_time


def record_position(meta: MetaBlock, r: DeltaRecord) -> GeoPosition:
    lat_u, lon_u = _abs_units(meta)
    return GeoPosition((lat_u + 10 * r.rel_lat) / 1e7, (lon_u + 10 * r.rel_lon) / 1e7)


def encode_batch(e: BatchEnvelope) -> bytes:
    """Serialize an envelope; deterministic for equal envelopes."""
    lat_u, lon_u = _abs_units(e.meta)
    out = bytearray(
        HEADER.pack(MAGIC, e.meta.station, e.meta.ref_time, lat_u, lon_u, len(e.records))
    )
    for r in e.records:
        # DeltaRecord's own invariants already bound the offsets; length is
        # re-checked so a hand-built record cannot lie about its payload.
        if len(r.payload) > 0xFFFF:
            raise DeltaOverflow(f"payload too large: {len(r.payload)}")
        out += RECORD_HEAD.pack(int(r.kind), r.rel_time, r.rel_lat, r.rel_lon, len(r.payload))
        out += r.payload
    return bytes(out)


def decode_batch(data: bytes) -> BatchEnvelope:
    """Parse and fully validate an envelope; inverse of :func:`encode_batch`."""
    view = memoryview(data)
    if len(view) < HEADER.size:
        if len(view) >= 4 and bytes(view[:4]) != MAGIC:
            raise BadMagic(f"bad magic {bytes(view[:4])!r}")
        raise Truncated(f"{len(view)} bytes is shorter than the {HEADER.size}-byte header")
    magic, station, ref_time, lat_u, lon_u, count = HEADER.unpack_from(view, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    try:
        ref_pos = GeoPosition(lat_u / 1e7, lon_u / 1e7)
    except ValueError as err:
        raise BadPayload(str(err)) from None
    meta = MetaBlock(station=station, ref_time=ref_time, ref_position=ref_pos, record_count=count)

    records = []
    offset = HEADER.size
    for _ in range(count):
        if len(view) - offset < RECORD_HEAD.size:
            raise Truncated(f"record head missing at offset {offset}")
        kind_code, rel_time, rel_lat, rel_lon, payload_len = RECORD_HEAD.unpack_from(view, offset)
        offset += RECORD_HEAD.size
        try:
            kind = RecordKind(kind_code)
        except ValueError:
            raise UnknownKind(f"unknown record kind {kind_code}") from None
        if payload_len != PAYLOAD_SIZE[kind]:
            raise BadPayload(
                f"kind {kind.name} expects {PAYLOAD_SIZE[kind]} payload bytes, got {payload_len}"
            )
        if len(view) - offset < payload_len:
            raise Truncated(f"payload missing at offset {offset}")
        payload = bytes(view[offset : offset + payload_len])
        offset += payload_len
        if abs(rel_lat) > MAX_REL_POS or abs(rel_lon) > MAX_REL_POS:
            raise BadPayload(f"relative offset out of range: ({rel_lat}, {rel_lon})")
        record = DeltaRecord(kind, rel_time, rel_lat, rel_lon, payload)
        try:
            position = record_position(meta, record)
        except ValueError as err:
            raise BadPayload(str(err)) from None
        validate_payload(kind, payload, record_time(meta, record), position)
        records.append(record)
    if offset != len(view):
        raise TrailingData(f"{len(view) - offset} bytes after the last record")
    return BatchEnvelope(meta=meta, records=tuple(records))


def absolute_records(e: BatchEnvelope) -> list[AbsoluteRecord]:
    """Reconstruct every record with absolute time and position."""
    return [
        AbsoluteRecord(r.kind, record_time(e.meta, r), record_position(e.meta, r), r.payload)
        for r in e.records
    ]


def plan_batches(records: Sequence[AbsoluteRecord], station: StationId) -> list[BatchEnvelope]:
    """Greedily pack time-sorted absolute records into envelopes.

    A new envelope starts whenever a record's time or position offset would
    overflow the relative ranges or the record count would exceed the u16
    counter.  The reference is always the first record of the envelope, so
    packing can never fail.
    """
    envelopes: list[BatchEnvelope] = []
    pending: list[DeltaRecord] = []
    ref_time = 0
    ref_lat_u = ref_lon_u = 0

    def close():
        nonlocal pending
        if pending:
            meta = MetaBlock(
                station=station,
                ref_time=ref_time,
                ref_position=GeoPosition(ref_lat_u / 1e7, ref_lon_u / 1e7),
                record_count=len(pending),
            )
            envelopes.append(BatchEnvelope(meta=meta, records=tuple(pending)))
            pending = []

    last_time = None
    for rec in records:
        if last_time is not None and rec.time_ms < last_time:
            raise ValueError("records must be time-sorted")
        last_time = rec.time_ms
        lat_u = round(rec.position.lat * 1e7)
        lon_u = round(rec.position.lon * 1e7)
        if not pending:
            ref_time, ref_lat_u, ref_lon_u = rec.time_ms, lat_u, lon_u
        rel_time = round((rec.time_ms - ref_time) / REL_TIME_UNIT_MS)
        rel_lat = round((lat_u - ref_lat_u) / 10)
        rel_lon = round((lon_u - ref_lon_u) / 10)
        fits = (
            len(pending) < MAX_RECORDS
            and 0 <= rel_time <= MAX_REL_TIME
            and abs(rel_lat) <= MAX_REL_POS
            and abs(rel_lon) <= MAX_REL_POS
        )
        if not fits:
            close()
            ref_time, ref_lat_u, ref_lon_u = rec.time_ms, lat_u, lon_u
            rel_time = rel_lat = rel_lon = 0
        pending.append(DeltaRecord(rec.kind, rel_time, rel_lat, rel_lon, rec.payload))
    close()
    return envelopes


# --- file and stream framing -----------------------------------------------

_FRAME_LEN = struct.Struct("<I")


def write_frames(fp: BinaryIO, envelopes: Iterable[BatchEnvelope]) -> int:
    """Append length-prefixed envelope frames to a binary stream."""
    n = 0
    for env in envelopes:
        frame = encode_batch(env)
        fp.write(_FRAME_LEN.pack(len(frame)))
        fp.write(frame)
        n += 1
    return n


def read_frames(fp: BinaryIO) -> list[BatchEnvelope]:
    """Read length-prefixed envelope frames until end of stream."""
    envelopes = []
    while True:
        head = fp.read(_FRAME_LEN.size)
        if not head:
            return envelopes
        if len(head) < _FRAME_LEN.size:
            raise Truncated("frame length prefix cut short")
        (length,) = _FRAME_LEN.unpack(head)
        frame = fp.read(length)
        if len(frame) < length:
            raise Truncated(f"frame of {length} bytes cut short at {len(frame)}")
        envelopes.append(decode_batch(frame))


def write_ksb(path, envelopes: Iterable[BatchEnvelope]) -> int:
    with open(path, "wb") as fp:
        return write_frames(fp, envelopes)


def read_ksb(path) -> list[BatchEnvelope]:
    with open(path, "rb") as fp:
        return read_frames(fp)
