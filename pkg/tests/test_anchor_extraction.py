"""
Tests for greedy anchor point clustering and visit sequences
"""
import pytest
from hypothesis import given, settings, strategies as st

from tripchain.core.geo import haversine_m
from tripchain.services.anchor_service import (
    AnchorService,
    ap_sequence,
    extract_anchor_points,
    merge_runs,
    tower_stay_durations,
)
from tests.factories import CENTER, make_record, offset_point, visits

DELTA = 500.0


def five_tower_trace():
    """A and C share a place, as do B and E; D stands alone; A outlasts B"""
    a, c = offset_point(0, 0), offset_point(200, 0)
    b, e = offset_point(2000, 0), offset_point(2300, 0)
    d = offset_point(0, 5000)
    return [
        make_record("A", "08:00:00", "12:00:00", a),
        make_record("B", "12:00:00", "15:00:00", b),
        make_record("C", "15:00:00", "16:00:00", c),
        make_record("D", "16:00:00", "18:00:00", d),
        make_record("E", "18:00:00", "19:00:00", e),
    ]


class TestAnchorExtraction:
    """Duration-ranked greedy clustering"""

    def test_five_tower_example(self):
        trace = five_tower_trace()
        anchors = extract_anchor_points(trace, DELTA)
        assert [sorted(ap.member_towers) for ap in anchors] == [["A", "C"], ["B", "E"], ["D"]]
        assert [ap.seed_tower for ap in anchors] == ["A", "B", "D"]
        assert [v.ap_id for v in ap_sequence(trace, anchors)] == [1, 2, 1, 3, 2]

    def test_anchor_location_is_seed_tower(self):
        trace = five_tower_trace()
        first = extract_anchor_points(trace, DELTA)[0]
        assert first.location == trace[0].location
        assert first.total_stay_s == 5 * 3600

    def test_tower_just_inside_roaming_distance_joins(self):
        near = offset_point(DELTA * 0.999999, 0)
        trace = [make_record("S", "08:00:00", "10:00:00"), make_record("N", "10:00:00", "11:00:00", near)]
        assert len(extract_anchor_points(trace, DELTA)) == 1
        far = offset_point(DELTA * 1.01, 0)
        trace[1] = make_record("N", "10:00:00", "11:00:00", far)
        assert len(extract_anchor_points(trace, DELTA)) == 2

    def test_duration_tie_goes_to_smaller_tower_id(self):
        trace = [
            make_record("T2", "08:00:00", "09:00:00", offset_point(300, 0)),
            make_record("T1", "09:00:00", "10:00:00"),
        ]
        (ap,) = extract_anchor_points(trace, DELTA)
        assert ap.seed_tower == "T1"

    def test_out_of_city_tower_never_joins_in_city_anchor(self):
        trace = [
            make_record("IN", "08:00:00", "10:00:00"),
            make_record("OUT", "10:00:00", "11:00:00", offset_point(100, 0), in_city=False),
        ]
        anchors = extract_anchor_points(trace, DELTA)
        assert [(sorted(ap.member_towers), ap.in_city) for ap in anchors] == [(["IN"], True), (["OUT"], False)]

    def test_ping_pong_collapses_to_one_visit(self):
        a, c = CENTER, offset_point(250, 0)
        trace = [
            make_record("A", "08:00:00", "08:20:00", a),
            make_record("C", "08:20:00", "08:40:00", c),
            make_record("A", "08:40:00", "09:00:00", a),
            make_record("C", "09:00:00", "09:30:00", c),
        ]
        anchors = extract_anchor_points(trace, DELTA)
        (visit,) = ap_sequence(trace, anchors)
        assert (visit.ap_id, visit.start_time, visit.end_time) == (1, 8 * 3600, int(9.5 * 3600))

    def test_short_anchor_points_dropped_and_runs_remerged(self):
        trace = [
            make_record("A", "08:00:00", "10:00:00"),
            make_record("B", "10:00:00", "10:05:00", offset_point(3000, 0)),
            make_record("A", "10:05:00", "12:00:00"),
        ]
        anchors = extract_anchor_points(trace, DELTA)
        sequence = ap_sequence(trace, anchors, min_ap_stay_s=600)
        assert [v.ap_id for v in sequence] == [1]

    def test_empty_trace(self):
        assert extract_anchor_points([], DELTA) == []
        assert tower_stay_durations([]) == {}

    def test_merge_runs_keeps_alternation(self):
        assert [v.ap_id for v in merge_runs(visits(1, 1, 2, 2, 1))] == [1, 2, 1]

    @given(
        positions=st.lists(
            st.tuples(st.floats(min_value=-3000, max_value=3000), st.floats(min_value=-3000, max_value=3000),
                      st.integers(min_value=1, max_value=30)),
            min_size=1, max_size=25,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_clustering_invariants(self, positions):
        """Partition of towers; members within the roaming distance of their seed;
        seeds taken in non-increasing duration order"""
        trace = []
        clock = 0
        for i, (x, y, minutes) in enumerate(positions):
            start, end = clock, clock + minutes * 60
            clock = end
            trace.append(make_record(f"T{i:02d}", f"{start // 3600:02d}:{start % 3600 // 60:02d}:00",
                                     f"{end // 3600:02d}:{end % 3600 // 60:02d}:00", offset_point(x, y)))
        anchors = extract_anchor_points(trace, DELTA)
        durations = tower_stay_durations(trace)

        members = [t for ap in anchors for t in ap.member_towers]
        assert sorted(members) == sorted(durations)
        locations = {r.tower_id: r.location for r in trace}
        for ap in anchors:
            for tower in ap.member_towers:
                assert haversine_m(locations[ap.seed_tower], locations[tower]) <= DELTA + 1e-6
        seed_durations = [durations[ap.seed_tower] for ap in anchors]
        assert seed_durations == sorted(seed_durations, reverse=True)
        assert [ap.ap_id for ap in anchors] == list(range(1, len(anchors) + 1))


class TestAnchorService:

    def test_extract_maps_every_tower(self):
        trace = five_tower_trace()
        service = AnchorService(DELTA)
        anchors = service.extract("u1", trace)
        assert anchors.tower_to_ap == {"A": 1, "C": 1, "B": 2, "E": 2, "D": 3}
        assert anchors.location_of(2) == trace[1].location
        assert [v.ap_id for v in service.sequence(trace, anchors)] == [1, 2, 1, 3, 2]
