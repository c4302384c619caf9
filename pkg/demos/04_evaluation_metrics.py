"""Distance, time-to-intersection and relative urgency on hand-built geometry.

Three objects around a northbound observer show the whole metric contract:
a crossing pedestrian gets a finite TTI pair, a parallel vehicle gets the
paired -1 sentinel, a receding vehicle gets MAX urgency.
"""

from situfuse import GeoPosition, LocalPoint
from situfuse.geo import from_local_enu
from situfuse.messages import ObjectClassification, ObservationSource
from situfuse.metrics import evaluate_situation, handover_summary, rows_to_csv
from situfuse.situation import FusedObject, ProvenanceEntry, SituationRecord

ORIGIN = GeoPosition(49.234, 6.98)


def make(fid, east, north, speed, course, cls, vut=False):
    source = ObservationSource.VUT_LOCAL_SENSOR if vut else ObservationSource.CPM_DETECTION
    return FusedObject(
        fused_id=fid,
        classification=cls,
        position=from_local_enu(ORIGIN, LocalPoint(east, north)),
        speed=speed,
        course=course,
        provenance=(ProvenanceEntry(source, 500, fid),),
    )


situation = SituationRecord(
    situation_id=1,
    center=ORIGIN,
    radius_m=300.0,
    timestamp=1_700_000_000_000,
    vut=100,
    objects=(
        # the observer: northbound at 10 m/s, 100 m south of the junction
        make(0, 0.0, -100.0, 10.0, 0.0, ObjectClassification.PASSENGER_CAR, vut=True),
        # crossing pedestrian: 30 m west of the junction, walking east
        make(21, -30.0, 0.0, 1.5, 90.0, ObjectClassification.PEDESTRIAN),
        # parallel vehicle one lane over: same heading, never crosses
        make(22, 4.0, -80.0, 12.0, 0.0, ObjectClassification.PASSENGER_CAR),
        # receding vehicle well ahead, faster than the observer
        make(23, 0.0, 60.0, 16.0, 0.0, ObjectClassification.PASSENGER_CAR),
    ),
)

rows = evaluate_situation(situation)
print(rows_to_csv(rows))

print("reading the table:")
print(" - object 21 crosses our path: both TTI values are finite"
      " (20 s for the pedestrian, 10 s for us)")
print(" - object 22 runs parallel: no future intersection, the -1 pair")
print(" - object 23 pulls away: nothing to intersect and MAX urgency")

summary = handover_summary(rows)
print(
    f"\nhandover verdict: {'SUITABLE' if summary.suitable else 'UNSUITABLE'}"
    f" (min TTI {summary.min_tti_ms} ms, {summary.near_object_count} near objects)"
)
