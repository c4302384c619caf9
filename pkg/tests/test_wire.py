import io
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from situfuse.geo import GeoPosition
from situfuse.messages import (
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
    VutSensorExtract,
)
from situfuse import wire
from situfuse.wire import (
    AbsoluteRecord,
    BadMagic,
    BadPayload,
    BatchEnvelope,
    DeltaRecord,
    MetaBlock,
    RecordKind,
    TrailingData,
    Truncated,
    UnknownKind,
    WireError,
    decode_batch,
    encode_batch,
    plan_batches,
)

HEADER_SIZE = 26
RECORD_HEAD_SIZE = 9


def grid_position(rng, lat_center=49.234, lon_center=6.98, spread=0.02):
    lat = round((lat_center + rng.uniform(-spread, spread)) * 1e7) / 1e7
    lon = round((lon_center + rng.uniform(-spread, spread)) * 1e7) / 1e7
    return GeoPosition(lat, lon)


def random_payload(rng, kind: RecordKind) -> bytes:
    speed = rng.randrange(0, 4000) / 100.0
    course = rng.randrange(0, 3600) / 10.0
    cls = rng.choice(list(ObjectClassification))
    if kind is RecordKind.CAM_EXTRACT:
        return wire.pack_cam(
            CamExtract(rng.randrange(1, 2**32), 1, GeoPosition(0, 0), speed, course, cls)
        )
    if kind is RecordKind.CPM_DETECTION:
        det = CpmDetection(rng.randrange(0, 2**32), cls, GeoPosition(0, 0), speed, course)
        return wire.pack_cpm_detection(rng.randrange(1, 2**32), det)
    if kind is RecordKind.SPAT:
        return wire.pack_spat(
            SpatExtract(
                intersection_id=rng.randrange(0, 2**32),
                signal_group=rng.randrange(0, 2**16),
                phase=rng.choice(list(SignalPhase)),
                change_time=rng.randrange(0, 2**48),
            )
        )
    if kind is RecordKind.VUT_SENSOR:
        return wire.pack_vut_sensor(
            VutSensorExtract(
                timestamp=1,
                brake_actuated=rng.random() < 0.5,
                abs_active=rng.random() < 0.5,
                panic_braking=rng.random() < 0.5,
                clutch_pressed=rng.random() < 0.5,
                gear=rng.randrange(-1, 8),
                door_positions=tuple(rng.choice(list(DoorState)) for _ in range(4)),
                exterior_lights=ExteriorLight(rng.randrange(0, 64)),
                gnss=GeoPosition(0, 0),
                speed=speed,
                accel_longitudinal=rng.randrange(-1500, 1500) / 100.0,
                accel_lateral=rng.randrange(-1500, 1500) / 100.0,
                rain_intensity=rng.randrange(0, 8),
                wiper_active=rng.random() < 0.5,
                yaw_rate=rng.randrange(-3000, 3000) / 10.0,
                steering_wheel_angle=rng.randrange(-7800, 7800) / 10.0,
                steering_wheel_velocity=rng.randrange(-9000, 9000) / 10.0,
            )
        )
    if kind is RecordKind.DRIVER_STATE:
        return wire.pack_driver_state(
            DriverStateSample(
                timestamp=1,
                valence=rng.randrange(1, 6),
                arousal=rng.randrange(1, 6),
                heart_rate_bpm=rng.choice([None, rng.randrange(40, 200)]),
                self_reported=rng.random() < 0.5,
            )
        )
    if kind is RecordKind.ENVIRONMENT:
        return wire.pack_environment(
            EnvironmentSample(
                timestamp=1,
                validity_duration_s=rng.randrange(0, 2**16),
                area_center=GeoPosition(0, 0),
                area_radius_m=float(rng.randrange(0, 2**16)),
                temperature_c=rng.randrange(-400, 500) / 10.0,
                precipitation_mm_h=rng.randrange(0, 1000) / 10.0,
                wind_speed_ms=rng.randrange(0, 500) / 10.0,
                wind_direction=rng.randrange(0, 3600) / 10.0,
                illuminance_lux=float(rng.randrange(0, 130_000)),
                visibility_m=float(rng.randrange(0, 2**16)),
                pressure_hpa=rng.randrange(8000, 11000) / 10.0,
                humidity_pct=float(rng.randrange(0, 101)),
                cloudiness_pct=float(rng.randrange(0, 101)),
            )
        )
    return wire.pack_hazard(
        HazardEvent(
            kind=rng.choice(list(HazardKind)),
            timestamp=1,
            position=GeoPosition(0, 0),
            source=rng.randrange(1, 2**32),
        )
    )


def random_envelope(rng, max_records=8) -> BatchEnvelope:
    records = tuple(
        DeltaRecord(
            kind=(kind := rng.choice(list(RecordKind))),
            rel_time=rng.randrange(0, 2**16),
            rel_lat=rng.randrange(-32767, 32768),
            rel_lon=rng.randrange(-32767, 32768),
            payload=random_payload(rng, kind),
        )
        for _ in range(rng.randrange(0, max_records + 1))
    )
    meta = MetaBlock(
        station=rng.randrange(0, 2**32),
        ref_time=rng.randrange(0, 2**48),
        ref_position=grid_position(rng),
        record_count=len(records),
    )
    return BatchEnvelope(meta=meta, records=records)


def naive_size(envelope: BatchEnvelope) -> int:
    """Baseline that stores absolute u64 time + two i32 coordinates per record."""
    per_record = sum(1 + 8 + 4 + 4 + 2 + len(r.payload) for r in envelope.records)
    return 4 + 4 + 2 + per_record  # magic + station + count


def test_empty_envelope_is_header_only():
    env = BatchEnvelope(
        meta=MetaBlock(7, 1000, GeoPosition(49.234, 6.98), 0), records=()
    )
    assert len(encode_batch(env)) == HEADER_SIZE


def test_single_cam_record_size():
    payload = random_payload(random.Random(1), RecordKind.CAM_EXTRACT)
    env = BatchEnvelope(
        meta=MetaBlock(7, 1000, GeoPosition(49.234, 6.98), 1),
        records=(DeltaRecord(RecordKind.CAM_EXTRACT, 0, 0, 0, payload),),
    )
    assert len(encode_batch(env)) == HEADER_SIZE + RECORD_HEAD_SIZE + len(payload)
    assert len(payload) == 9


def test_encode_deterministic():
    rng = random.Random(3)
    env = random_envelope(rng)
    assert encode_batch(env) == encode_batch(env)


def test_round_trip_seeded_sample():
    rng = random.Random(11)
    for _ in range(500):
        env = random_envelope(rng)
        assert decode_batch(encode_batch(env)) == env


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**48), max_records=st.integers(0, 12))
def test_round_trip_property(seed, max_records):
    env = random_envelope(random.Random(seed), max_records=max_records)
    assert decode_batch(encode_batch(env)) == env


def test_meta_block_rejects_off_grid_reference():
    with pytest.raises(ValueError):
        MetaBlock(1, 0, GeoPosition(49.23400005, 6.98), 0)  # between 1e-7 steps


def test_delta_record_range_checks():
    with pytest.raises(ValueError):
        DeltaRecord(RecordKind.CAM_EXTRACT, -1, 0, 0, b"")
    with pytest.raises(ValueError):
        DeltaRecord(RecordKind.CAM_EXTRACT, 0, 32768, 0, b"")
    with pytest.raises(ValueError):
        DeltaRecord(RecordKind.CAM_EXTRACT, 0, 0, -32768, b"")


def test_decode_bad_magic():
    env = random_envelope(random.Random(5))
    data = bytearray(encode_batch(env))
    data[0:4] = b"XXXX"
    with pytest.raises(BadMagic):
        decode_batch(bytes(data))


def test_decode_truncations():
    env = random_envelope(random.Random(6), max_records=3)
    data = encode_batch(env)
    with pytest.raises(Truncated):
        decode_batch(data[:10])
    if len(env.records) > 0:
        with pytest.raises(Truncated):
            decode_batch(data[: HEADER_SIZE + 3])


def test_decode_unknown_kind():
    payload = random_payload(random.Random(7), RecordKind.CAM_EXTRACT)
    env = BatchEnvelope(
        meta=MetaBlock(7, 1000, GeoPosition(49.234, 6.98), 1),
        records=(DeltaRecord(RecordKind.CAM_EXTRACT, 0, 0, 0, payload),),
    )
    data = bytearray(encode_batch(env))
    data[HEADER_SIZE] = 99  # kind byte
    with pytest.raises(UnknownKind):
        decode_batch(bytes(data))


def test_decode_rejects_trailing_bytes():
    env = random_envelope(random.Random(8))
    with pytest.raises(TrailingData):
        decode_batch(encode_batch(env) + b"\x00")


def test_decode_rejects_wrong_payload_length():
    env = BatchEnvelope(
        meta=MetaBlock(7, 1000, GeoPosition(49.234, 6.98), 1),
        records=(DeltaRecord(RecordKind.HAZARD, 0, 0, 0, b"\x01\x01\x00\x00\x00"),),
    )
    data = bytearray(encode_batch(env))
    # rewrite payload_len of the first record
    struct.pack_into("<H", data, HEADER_SIZE + 7, 99)
    with pytest.raises(WireError):
        decode_batch(bytes(data))


def test_decode_rejects_bad_course_in_payload():
    bad = struct.pack("<IHHB", 1, 0, 3600, 5)  # course code out of range
    env_bytes = encode_batch(
        BatchEnvelope(
            meta=MetaBlock(7, 1000, GeoPosition(49.234, 6.98), 0), records=()
        )
    )
    data = bytearray(env_bytes)
    struct.pack_into("<H", data, 24, 1)  # record_count = 1
    data += struct.pack("<BHhhH", 1, 0, 0, 0, len(bad)) + bad
    with pytest.raises(BadPayload):
        decode_batch(bytes(data))


def test_payload_codecs_round_trip():
    rng = random.Random(13)
    t, pos = 123_456, GeoPosition(49.234, 6.98)
    for _ in range(200):
        cam = wire.unpack_cam(random_payload(rng, RecordKind.CAM_EXTRACT), t, pos)
        assert wire.unpack_cam(wire.pack_cam(cam), t, pos) == cam

        originator, det = wire.unpack_cpm_detection(
            random_payload(rng, RecordKind.CPM_DETECTION), pos
        )
        assert wire.unpack_cpm_detection(wire.pack_cpm_detection(originator, det), pos) == (
            originator,
            det,
        )

        spat = wire.unpack_spat(random_payload(rng, RecordKind.SPAT))
        assert wire.unpack_spat(wire.pack_spat(spat)) == spat

        vut = wire.unpack_vut_sensor(random_payload(rng, RecordKind.VUT_SENSOR), t, pos)
        assert wire.unpack_vut_sensor(wire.pack_vut_sensor(vut), t, pos) == vut

        drv = wire.unpack_driver_state(random_payload(rng, RecordKind.DRIVER_STATE), t)
        assert wire.unpack_driver_state(wire.pack_driver_state(drv), t) == drv

        env = wire.unpack_environment(random_payload(rng, RecordKind.ENVIRONMENT), t, pos)
        assert wire.unpack_environment(wire.pack_environment(env), t, pos) == env

        hz = wire.unpack_hazard(random_payload(rng, RecordKind.HAZARD), t, pos)
        assert wire.unpack_hazard(wire.pack_hazard(hz), t, pos) == hz


def random_absolute_records(rng, n, t0=1_700_000_000_000, spread_s=60, spread_deg=0.06):
    records = []
    t = t0
    for _ in range(n):
        t += rng.randrange(0, spread_s * 1000 // max(1, n))
        kind = rng.choice(list(RecordKind))
        records.append(
            AbsoluteRecord(
                kind=kind,
                time_ms=t,
                position=GeoPosition(
                    49.234 + rng.uniform(-spread_deg, spread_deg),
                    6.98 + rng.uniform(-spread_deg, spread_deg),
                ),
                payload=random_payload(rng, kind),
            )
        )
    return records


def test_plan_batches_single_area():
    rng = random.Random(17)
    records = random_absolute_records(rng, 40, spread_s=10, spread_deg=0.002)
    envelopes = plan_batches(records, station=42)
    assert len(envelopes) == 1
    assert envelopes[0].meta.station == 42
    assert envelopes[0].meta.ref_time == records[0].time_ms


def test_plan_batches_splits_on_position_overflow():
    t0 = 1_700_000_000_000
    a = AbsoluteRecord(
        RecordKind.CAM_EXTRACT, t0, GeoPosition(49.0, 7.0),
        random_payload(random.Random(1), RecordKind.CAM_EXTRACT),
    )
    b = AbsoluteRecord(
        RecordKind.CAM_EXTRACT, t0 + 10, GeoPosition(49.045, 7.0),  # ~5 km north
        random_payload(random.Random(2), RecordKind.CAM_EXTRACT),
    )
    assert len(plan_batches([a, b], station=1)) == 2


def test_plan_batches_splits_on_time_overflow():
    rng = random.Random(23)
    t0 = 1_700_000_000_000
    records = [
        AbsoluteRecord(
            RecordKind.HAZARD, t0 + k * 400_000, GeoPosition(49.0, 7.0),
            random_payload(rng, RecordKind.HAZARD),
        )
        for k in range(3)
    ]
    assert len(plan_batches(records, station=1)) == 2


def test_plan_batches_splits_on_record_count_overflow():
    rng = random.Random(53)
    payload = random_payload(rng, RecordKind.HAZARD)
    t0 = 1_700_000_000_000
    records = [
        AbsoluteRecord(RecordKind.HAZARD, t0 + k, GeoPosition(49.0, 7.0), payload)
        for k in range(65_536)
    ]
    envelopes = plan_batches(records, station=1)
    assert [len(e.records) for e in envelopes] == [65_535, 1]


def test_plan_batches_requires_sorted_input():
    rng = random.Random(29)
    records = random_absolute_records(rng, 5)
    with pytest.raises(ValueError):
        plan_batches(list(reversed(records)), station=1)


def test_plan_batches_reconstruction_resolution():
    rng = random.Random(31)
    for _ in range(30):
        records = random_absolute_records(rng, rng.randrange(1, 60))
        envelopes = plan_batches(records, station=9)
        rebuilt = [r for env in envelopes for r in wire.absolute_records(env)]
        assert len(rebuilt) == len(records)
        for original, back in zip(records, rebuilt):
            assert back.kind is original.kind
            assert back.payload == original.payload
            assert abs(back.time_ms - original.time_ms) <= 5
            assert abs(back.position.lat - original.position.lat) <= 1e-6
            assert abs(back.position.lon - original.position.lon) <= 1e-6


def test_compression_beats_naive_for_cam_batch():
    rng = random.Random(37)
    t0 = 1_700_000_000_000
    records = [
        AbsoluteRecord(
            RecordKind.CAM_EXTRACT,
            t0 + k * 100,
            GeoPosition(49.234 + rng.uniform(-0.002, 0.002), 6.98 + rng.uniform(-0.002, 0.002)),
            random_payload(rng, RecordKind.CAM_EXTRACT),
        )
        for k in range(50)
    ]
    envelopes = plan_batches(records, station=5)
    assert len(envelopes) == 1
    assert len(encode_batch(envelopes[0])) < 0.7 * naive_size(envelopes[0])


def test_fuzz_random_bytes_raise_only_wire_errors():
    rng = random.Random(41)
    for _ in range(5000):
        blob = rng.randbytes(rng.randrange(0, 120))
        try:
            decode_batch(blob)
        except WireError:
            pass


def test_ksb_file_round_trip(tmp_path):
    rng = random.Random(43)
    envelopes = [random_envelope(rng) for _ in range(10)]
    path = tmp_path / "batch.ksb"
    assert wire.write_ksb(path, envelopes) == 10
    assert wire.read_ksb(path) == envelopes


def test_frame_stream_truncation():
    rng = random.Random(47)
    env = random_envelope(rng)
    buffer = io.BytesIO()
    wire.write_frames(buffer, [env])
    data = buffer.getvalue()
    with pytest.raises(Truncated):
        wire.read_frames(io.BytesIO(data[:-3]))
