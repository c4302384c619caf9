"""Situation evaluation metrics.

For every traffic object in a situation, four values describe its relation
to the vehicle under test:

* distance: great-circle distance in metres;
* TTI pair: the milliseconds the object (TTI_OBJ) and the VUT (TTI_VUT) need
  to reach the intersection point of their straight constant-velocity paths,
  or -1 for both when those paths never cross in the future;
* RU (relative urgency): milliseconds to contact at the current closing
  rate; the slower the approach, the larger the value, with a MAX sentinel
  when the two are not closing at all.

The CSV export mirrors the evaluation table layout with exactly these
columns: ID, Classification, Lat, Lon, Speed, Course, Distance, TTI_OBJ,
TTI_VUT, RU.
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
    to_local_enu,
)
from .messages import (
    DriverStateSample,
    HazardEvent,
    HazardKind,
    ObjectClassification,
    ObservationSource,
)
from .situation import FusedObject, SituationRecord

# RU sentinel meaning "not closing"; rendered as the literal MAX in CSV.
RU_MAX = None

TTI_SPEED_FLOOR_MS = 0.1
RU_CLOSING_FLOOR_MS = 0.05

CSV_HEADER = "ID,Classification,Lat,Lon,Speed,Course,Distance,TTI_OBJ,TTI_VUT,RU"

_PARALLEL_EPS = 1e-9


class MissingVutState(LookupError):
    """The situation contains no object identifiable as the VUT."""


@dataclass(frozen=True)
class KinematicState:
    position: GeoPosition
    speed: float
    course: float

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"negative speed: {self.speed}")


@dataclass(frozen=True)
class EvaluationRow:
    object_id: int
    classification: ObjectClassification
    lat: float
    lon: float
    speed: float
    course: float
    distance_m: float
    tti_obj_ms: int
    tti_vut_ms: int
    ru: int | None  # None is the MAX sentinel


def compute_tti(
    vut: KinematicState,
    obj: KinematicState,
    speed_floor_ms: float = TTI_SPEED_FLOOR_MS,
) -> tuple[int, int]:
    """Milliseconds both parties need to reach their path intersection point.

    Returns (-1, -1) whenever that point does not exist in the future of
    both: parallel or anti-parallel courses, the crossing lying behind either
    party, or either of them practically standing still.  The -1 values are
    always paired.
    """
    if vut.speed < speed_floor_ms or obj.speed < speed_floor_ms:
        return (-1, -1)
    u_v = course_to_unit_vector(vut.course)
    u_o = course_to_unit_vector(obj.course)
    p_o = to_local_enu(vut.position, obj.position)

    det = u_o[0] * u_v[1] - u_o[1] * u_v[0]
    if abs(det) < _PARALLEL_EPS:
        return (-1, -1)
    dist_vut = (u_o[0] * p_o.north - u_o[1] * p_o.east) / det
    dist_obj = (u_v[0] * p_o.north - u_v[1] * p_o.east) / det
    if dist_vut < 0.0 or dist_obj < 0.0:
        return (-1, -1)
    return (
        round(1000.0 * dist_obj / obj.speed),
        round(1000.0 * dist_vut / vut.speed),
    )


def compute_ru(
    vut: KinematicState,
    obj: KinematicState,
    closing_floor_ms: float = RU_CLOSING_FLOOR_MS,
) -> int | None:
    """Milliseconds to contact at the current closing rate, or MAX (None).

    The closing rate is the negative time derivative of the inter-object
    distance under constant velocities; receding or parallel-moving objects
    are not closing and yield MAX.
    """
    r = to_local_enu(vut.position, obj.position)
    d = math.hypot(r.east, r.north)
    if d < 1e-9:
        return RU_MAX
    u_v = course_to_unit_vector(vut.course)
    u_o = course_to_unit_vector(obj.course)
    rel_east = obj.speed * u_o[0] - vut.speed * u_v[0]
    rel_north = obj.speed * u_o[1] - vut.speed * u_v[1]
    closing = -(r.east * rel_east + r.north * rel_north) / d
    if closing <= closing_floor_ms:
        return RU_MAX
    return max(1, round(1000.0 * d / closing))


def is_vut_object(obj: FusedObject, vut_station: int) -> bool:
    """Whether a fused object's provenance traces back to the VUT itself."""
    for entry in obj.provenance:
        if entry.source is ObservationSource.VUT_LOCAL_SENSOR:
            return True
        if entry.source is ObservationSource.CAM_SELF_REPORT and entry.object_id == vut_station:
            return True
    return False


def vut_state(s: SituationRecord) -> KinematicState:
    """The VUT's kinematic state taken from its fused object."""
    candidates = [o for o in s.objects if is_vut_object(o, s.vut)]
    if not candidates:
        raise MissingVutState(f"situation {s.situation_id} has no object of VUT {s.vut}")
    own_sensor = [
        o
        for o in candidates
        if any(e.source is ObservationSource.VUT_LOCAL_SENSOR for e in o.provenance)
    ]
    chosen = own_sensor[0] if own_sensor else candidates[0]
    return KinematicState(position=chosen.position, speed=chosen.speed, course=chosen.course)


def evaluate_situation(
    s: SituationRecord,
    tti_speed_floor_ms: float = TTI_SPEED_FLOOR_MS,
    ru_closing_floor_ms: float = RU_CLOSING_FLOOR_MS,
) -> list[EvaluationRow]:
    """One row per traffic object other than the VUT, ordered by object id."""
    vut = vut_state(s)
    rows = []
    for obj in s.objects:
        if is_vut_object(obj, s.vut):
            continue
        state = KinematicState(position=obj.position, speed=obj.speed, course=obj.course)
        tti_obj, tti_vut = compute_tti(vut, state, tti_speed_floor_ms)
        rows.append(
            EvaluationRow(
                object_id=obj.fused_id,
                classification=obj.classification,
                lat=obj.position.lat,
                lon=obj.position.lon,
                speed=obj.speed,
                course=obj.course,
                distance_m=haversine_distance(vut.position, obj.position),
                tti_obj_ms=tti_obj,
                tti_vut_ms=tti_vut,
                ru=compute_ru(vut, state, ru_closing_floor_ms),
            )
        )
    rows.sort(key=lambda r: r.object_id)
    return rows


def _fmt_coord(value: float) -> str:
    text = f"{value:.7f}".rstrip("0")
    return text[:-1] if text.endswith(".") else text


def rows_to_csv(rows) -> str:
    """Render evaluation rows in the fixed table layout."""
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                (
                    str(r.object_id),
                    r.classification.display_name,
                    _fmt_coord(r.lat),
                    _fmt_coord(r.lon),
                    f"{r.speed:.2f}",
                    f"{r.course:.1f}",
                    f"{r.distance_m:.2f}",
                    str(r.tti_obj_ms),
                    str(r.tti_vut_ms),
                    "MAX" if r.ru is None else str(r.ru),
                )
            )
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class HandoverSummary:
    min_tti_ms: int | None
    near_object_count: int
    hazard_count: int
    stress_cell: tuple[int, int] | None
    suitable: bool


def handover_summary(
    rows,
    driver: DriverStateSample | None = None,
    hazards: tuple[HazardEvent, ...] = (),
    min_tti_threshold_ms: int = 3000,
    near_distance_m: float = 25.0,
) -> HandoverSummary:
    """Condense a situation for the handover decision.

    A situation is unsuitable when any path intersection lies closer than the
    TTI threshold or a panic braking event is linked.
    """
    from .stressmap import color_for

    finite = [
        t for r in rows for t in (r.tti_obj_ms, r.tti_vut_ms) if t >= 0
    ]
    min_tti = min(finite) if finite else None
    panic = any(h.kind is HazardKind.PANIC_BRAKING for h in hazards)
    suitable = not panic and (min_tti is None or min_tti >= min_tti_threshold_ms)
    stress_cell = None
    if driver is not None:
        v_round, a_round, _ = color_for(float(driver.valence), float(driver.arousal))
        stress_cell = (v_round, a_round)
    return HandoverSummary(
        min_tti_ms=min_tti,
        near_object_count=sum(1 for r in rows if r.distance_m < near_distance_m),
        hazard_count=len(hazards),
        stress_cell=stress_cell,
        suitable=suitable,
    )


def trilaterate_vut(
    pairs: list[tuple[GeoPosition, float]], iterations: int = 50
) -> tuple[GeoPosition, list[float]]:
    """Back-derive an unknown observer position from (position, distance) pairs.

    Gauss-Newton least squares on the local plane; returns the estimate and
    the per-pair residuals (estimated minus reported distance, metres).
    Diagnostic only: with noisy published distances the residuals show how
    consistent the table is, not a ground truth.
    """
    if len(pairs) < 3:
        raise ValueError("trilateration needs at least 3 pairs")
    origin = pairs[0][0]
    pts = np.array([to_local_enu(origin, p) for p, _ in pairs])
    dists = np.array([d for _, d in pairs])
    x = pts.mean(axis=0)
    for _ in range(iterations):
        delta = pts - x
        current = np.hypot(delta[:, 0], delta[:, 1])
        current = np.maximum(current, 1e-9)
        residuals = current - dists
        jac = -delta / current[:, None]
        step, *_ = np.linalg.lstsq(jac, -residuals, rcond=None)
        x = x + step
        if np.hypot(*step) < 1e-10:
            break
    delta = pts - x
    final = np.hypot(delta[:, 0], delta[:, 1]) - dists
    return from_local_enu(origin, LocalPoint(float(x[0]), float(x[1]))), final.tolist()
