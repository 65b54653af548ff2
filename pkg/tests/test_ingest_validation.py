"""
Tests for stay-record parsing, validation, city tagging and filtering
"""
from datetime import date, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from tripchain.core.config import build_study_config
from tripchain.core.error_handling import InputFormatError, RecordValidationError
from tripchain.models.records import CityDefinition, FormatSpec, GeoPoint, StayRecord
from tripchain.models.scenario import ScenarioSpec
from tripchain.services.ingest_service import (
    IngestService,
    build_user_days,
    detect_gap_days,
    filter_study_period,
    load_city_definition,
    observation_day_summary,
    parse_stay_records,
    serialize_stay_records,
    tag_city_membership,
    tower_spacing_summary,
)
from tripchain.services.synth_service import generate_population
from tests.factories import CENTER, make_record, offset_point, square_polygon, write_csv


class TestParsing:
    """Delimited input parsing and row-level validation"""

    def test_parses_rows_with_tower_column(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", [
            ("u1", "2019-05-01", "08:00:00", "09:30:00", 127.1, 35.8, "T1"),
            ("u1", "2019-05-01", "10:00:00", "24:00:00", 127.2, 35.9, "T2"),
        ])
        records = parse_stay_records(path)
        assert len(records) == 2
        assert records[0] == StayRecord("u1", date(2019, 5, 1), 28800, 34200, 127.1, 35.8, "T1")
        assert records[1].end_time == 86400

    def test_coordinates_identify_towers_without_tower_column(self, tmp_path):
        path = write_csv(
            tmp_path / "r.csv",
            [("u1", "2019-05-01", "08:00:00", "09:00:00", 127.1, 35.8)],
            header="user_id,date,start_time,end_time,lon,lat",
        )
        (record,) = parse_stay_records(path)
        assert record.tower_id == "127.1,35.8"

    def test_malformed_row_reports_line_and_reason(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", [
            ("u1", "2019-05-01", "08:00:00", "09:00:00", 127.1, 35.8, "T1"),
            ("u1", "2019-05-01", "10:00:00", "09:00:00", 127.1, 35.8, "T1"),
        ])
        with pytest.raises(InputFormatError) as exc_info:
            parse_stay_records(path)
        error = exc_info.value
        assert error.code == "IN_1101"
        assert error.details["rows"][0] == {"row": 3, "reason": "end_time precedes start_time"}

    @pytest.mark.parametrize("field,value,reason", [
        ("date", "2019/05/01", "date '2019/05/01' is not YYYY-MM-DD"),
        ("start_time", "8:00", "start_time is not a valid HH:MM:SS"),
        ("lon", "east", "lon is not a number in [-180, 180]"),
        ("lat", "95.0", "lat is not a number in [-90, 90]"),
    ])
    def test_row_reasons(self, tmp_path, field, value, reason):
        row = {"user_id": "u1", "date": "2019-05-01", "start_time": "08:00:00", "end_time": "09:00:00",
               "lon": "127.1", "lat": "35.8", "tower_id": "T1"}
        row[field] = value
        path = write_csv(tmp_path / "r.csv", [tuple(row.values())])
        with pytest.raises(InputFormatError) as exc_info:
            parse_stay_records(path)
        assert exc_info.value.details["rows"][0]["reason"] == reason

    def test_inconsistent_header(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", [("u1", "2019-05-01", "08:00:00")], header="user,day,start")
        with pytest.raises(InputFormatError) as exc_info:
            parse_stay_records(path)
        assert exc_info.value.error_key == "INPUT_HEADER_MISMATCH"

    @pytest.mark.parametrize("content", ["", "user_id,date,start_time,end_time,lon,lat,tower_id\n"])
    def test_empty_input(self, tmp_path, content):
        path = tmp_path / "r.csv"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(InputFormatError) as exc_info:
            parse_stay_records(path)
        assert exc_info.value.error_key == "INPUT_EMPTY"

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputFormatError) as exc_info:
            parse_stay_records(tmp_path / "absent.csv")
        assert exc_info.value.error_key == "INPUT_FILE_MISSING"

    def test_midnight_wrap_splits_record(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", [("u1", "2019-05-01", "23:00:00", "01:30:00", 127.1, 35.8, "T1")])
        records = parse_stay_records(path, FormatSpec(midnight_wrap=True))
        assert [(r.date, r.start_time, r.end_time) for r in records] == [
            (date(2019, 5, 1), 82800, 86400),
            (date(2019, 5, 2), 0, 5400),
        ]

    def test_tab_delimiter(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text(
            "user_id\tdate\tstart_time\tend_time\tlon\tlat\ttower_id\n"
            "u1\t2019-05-01\t08:00:00\t09:00:00\t127.1\t35.8\tT1\n",
            encoding="utf-8",
        )
        assert len(parse_stay_records(path, FormatSpec(delimiter="\\t"))) == 1

    def test_serialized_records_parse_back(self, tmp_path):
        records = [
            make_record("T1", "08:00:00", "09:00:00", in_city=None),
            make_record("T2", "22:00:00", "24:00:00", in_city=None),
        ]
        path = tmp_path / "out.csv"
        serialize_stay_records(records, path)
        assert parse_stay_records(path) == records

    def test_coordinate_only_file_round_trips(self, tmp_path):
        path = write_csv(
            tmp_path / "r.csv",
            [("u1", "2019-05-01", "08:00:00", "09:00:00", 127.1, 35.8),
             ("u1", "2019-05-01", "09:00:00", "10:00:00", 127.125, 35.85)],
            header="user_id,date,start_time,end_time,lon,lat",
        )
        records = parse_stay_records(path)
        assert "," in records[0].tower_id
        copy = tmp_path / "copy.csv"
        serialize_stay_records(records, copy)
        assert parse_stay_records(copy) == records

    def test_midnight_split_records_round_trip(self, tmp_path):
        path = write_csv(tmp_path / "r.csv", [
            ("u1", "2019-05-01", "20:00:00", "22:00:00", 127.1, 35.8, "T1"),
            ("u1", "2019-05-01", "23:00:00", "01:30:00", 127.1, 35.8, "T1"),
            ("u1", "2019-05-02", "23:30:00", "00:00:00", 127.2, 35.9, "T2"),
        ])
        records = parse_stay_records(path, FormatSpec(midnight_wrap=True))
        assert [(r.date.day, r.start_time, r.end_time) for r in records] == [
            (1, 72000, 79200), (1, 82800, 86400), (2, 0, 5400), (2, 84600, 86400),
        ]
        copy = tmp_path / "copy.csv"
        serialize_stay_records(records, copy)
        assert parse_stay_records(copy) == records


class TestUserDays:
    """Partitioning into sorted, overlap-checked user-day traces"""

    def test_overlap_names_both_records(self):
        records = [make_record("T1", "08:00:00", "10:00:00"), make_record("T2", "09:00:00", "11:00:00")]
        with pytest.raises(RecordValidationError) as exc_info:
            build_user_days(records)
        error = exc_info.value
        assert error.error_key == "VALIDATION_OVERLAP"
        assert error.details["first"] == ["08:00:00", "10:00:00", "T1"]
        assert error.details["second"] == ["09:00:00", "11:00:00", "T2"]

    def test_touching_records_are_not_overlapping(self):
        records = [make_record("T2", "10:00:00", "11:00:00"), make_record("T1", "08:00:00", "10:00:00")]
        (trace,) = build_user_days(records)
        assert [r.tower_id for r in trace.records] == ["T1", "T2"]

    def test_duplicates_dropped_and_counted(self):
        record = make_record("T1", "08:00:00", "09:00:00")
        stats = {}
        (trace,) = build_user_days([record, record, record], stats)
        assert len(trace.records) == 1
        assert stats["duplicates"] == 2

    @given(starts=st.lists(st.integers(min_value=0, max_value=23), min_size=1, max_size=10, unique=True))
    @settings(max_examples=50, deadline=None)
    def test_traces_sorted_by_start(self, starts):
        records = [make_record(f"T{h}", f"{h:02d}:00:00", f"{h:02d}:30:00") for h in starts]
        (trace,) = build_user_days(reversed(records))
        assert [r.start_time for r in trace.records] == sorted(h * 3600 for h in starts)

    def test_observation_day_summary(self):
        records = [
            make_record("T1", "08:00:00", "09:00:00", user_id="a", day=date(2019, 5, d)) for d in (1, 2, 3)
        ] + [make_record("T1", "08:00:00", "09:00:00", user_id="b", day=date(2019, 5, 1))]
        summary = observation_day_summary(build_user_days(records), gap_day_users=2)
        assert summary.users == 2
        assert summary.distribution == {1: 1, 3: 1}
        assert summary.median_days == 2.0
        assert summary.max_days == 3
        assert summary.gap_day_share == pytest.approx(0.5)


class TestCityAndPeriod:
    """City membership and study-period filtering"""

    def test_polygon_membership_counts_boundary_inside(self):
        city = CityDefinition(polygon=[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
        assert city.contains(0.5, 0.5, "x")
        assert city.contains(1.0, 0.5, "x")
        assert not city.contains(1.5, 0.5, "x")
        assert city.polygon[0] == city.polygon[-1]

    def test_tower_set_membership(self, tmp_path):
        path = tmp_path / "towers.txt"
        path.write_text("# in-city towers\nT1\n\nT2\n", encoding="utf-8")
        city = load_city_definition(path)
        assert city.mode == "towers"
        assert city.contains(0.0, 0.0, "T1")
        assert not city.contains(0.0, 0.0, "T9")

    def test_invalid_city_definitions(self, tmp_path):
        path = tmp_path / "bad.geojson"
        path.write_text('{"type": "Point", "coordinates": [0, 0]}', encoding="utf-8")
        with pytest.raises(InputFormatError) as exc_info:
            load_city_definition(path)
        assert exc_info.value.error_key == "INPUT_CITY_INVALID"

    def test_tagging(self):
        city = CityDefinition(polygon=square_polygon(1000.0))
        records = [make_record("T1", "08:00:00", "09:00:00", in_city=None),
                   make_record("T9", "10:00:00", "11:00:00", location=GeoPoint(128.0, 36.5), in_city=None)]
        assert [r.in_city for r in tag_city_membership(records, city)] == [True, False]

    def test_study_window_and_exclusions(self):
        config = build_study_config({
            "study_start": "2019-05-01",
            "study_end": "2019-05-10",
            "excluded_windows": "2019-05-05:2019-05-06",
        })
        records = [make_record("T1", "08:00:00", "09:00:00", day=date(2019, 5, d)) for d in (1, 5, 6, 7, 11)]
        assert [r.date.day for r in filter_study_period(records, config)] == [1, 7]

    @given(
        days=st.lists(st.integers(min_value=0, max_value=20), min_size=0, max_size=30),
        window=st.tuples(st.integers(0, 10), st.integers(10, 20)),
        excluded=st.tuples(st.integers(0, 20), st.integers(0, 5)),
    )
    @settings(max_examples=50, deadline=None)
    def test_study_period_filter_is_idempotent(self, days, window, excluded):
        base = date(2019, 5, 1)
        start, end = (base + timedelta(days=d) for d in window)
        ex_start = max(start, base + timedelta(days=excluded[0]))
        ex_end = min(end, ex_start + timedelta(days=excluded[1]))
        values = {"study_start": start.isoformat(), "study_end": end.isoformat()}
        if ex_start <= ex_end:
            values["excluded_windows"] = f"{ex_start.isoformat()}:{ex_end.isoformat()}"
        config = build_study_config(values)
        records = [make_record("T1", "08:00:00", "09:00:00", day=base + timedelta(days=d)) for d in days]
        once = filter_study_period(records, config)
        assert filter_study_period(once, config) == once
        assert all(start <= r.date <= end for r in once)

    def test_gap_days(self):
        contiguous = [make_record("T1", "08:00:00", "09:00:00", day=date(2019, 5, d)) for d in (1, 2, 3)]
        gapped = [make_record("T1", "08:00:00", "09:00:00", day=date(2019, 5, d)) for d in (1, 3)]
        assert not detect_gap_days(contiguous)
        assert detect_gap_days(gapped)

    def test_out_of_city_days_do_not_close_a_gap(self):
        records = [
            make_record("T1", "08:00:00", "09:00:00", day=date(2019, 5, 1)),
            make_record("X1", "08:00:00", "09:00:00", day=date(2019, 5, 2), in_city=False),
            make_record("T1", "08:00:00", "09:00:00", day=date(2019, 5, 3)),
        ]
        assert detect_gap_days(records)


class TestIngestService:

    def test_gap_day_users_excluded_by_default(self, tmp_path, city_file):
        rows = [
            ("a", "2019-05-01", "08:00:00", "09:00:00", CENTER.lon, CENTER.lat, "T1"),
            ("a", "2019-05-02", "08:00:00", "09:00:00", CENTER.lon, CENTER.lat, "T1"),
            ("b", "2019-05-01", "08:00:00", "09:00:00", CENTER.lon, CENTER.lat, "T1"),
            ("b", "2019-05-03", "08:00:00", "09:00:00", CENTER.lon, CENTER.lat, "T1"),
        ]
        path = write_csv(tmp_path / "r.csv", rows)
        city = load_city_definition(city_file)

        result = IngestService(build_study_config(), city).load(path)
        assert result.gap_day_users == ["b"]
        assert result.counts["users_kept"] == 1
        assert result.counts["user_days"] == 2

        kept = IngestService(build_study_config({"include_gap_day_users": "true"}), city).load(path)
        assert kept.counts["users_kept"] == 2

    def test_load_tags_deduplicates_and_sorts(self, tmp_path):
        rows = [
            ("b", "2019-05-01", "10:00:00", "11:00:00", 127.2, 35.9, "X1"),
            ("a", "2019-05-01", "09:00:00", "10:00:00", CENTER.lon, CENTER.lat, "T1"),
            ("a", "2019-05-01", "08:00:00", "09:00:00", CENTER.lon, CENTER.lat, "T1"),
            ("a", "2019-05-01", "08:00:00", "09:00:00", CENTER.lon, CENTER.lat, "T1"),
            ("b", "2019-05-01", "08:00:00", "09:00:00", CENTER.lon, CENTER.lat, "T1"),
        ]
        path = write_csv(tmp_path / "r.csv", rows)
        city = load_city_definition(_tower_list(tmp_path, "T1"))
        result = IngestService(build_study_config(), city).load(path)

        assert [(t.user_id, len(t.records)) for t in result.user_days] == [("a", 2), ("b", 2)]
        assert [r.start_time for r in result.user_days[0].records] == [28800, 32400]
        assert [r.in_city for r in result.user_days[1].records] == [True, False]
        assert result.counts["duplicates"] == 1
        assert result.counts["records_read"] == 5
        assert result.counts["records_kept"] == 4
        assert result.counts["towers"] == 2


    def test_column_path_matches_record_operations(self, tmp_path):
        spec = ScenarioSpec.model_validate({
            "seed": 11,
            "n_users": 12,
            "days_per_user": {3: 0.5, 5: 0.5},
            "mixture": {"A": 0.4, "A-B-A": 0.3, "*-A-B": 0.2, "A-B-*": 0.1},
            "ping_pong_rate": 0.3,
        })
        paths = generate_population(spec, out_dir=tmp_path / "corpus").paths
        city = load_city_definition(paths["city"])
        config = build_study_config({
            "study_start": "2019-05-01",
            "study_end": "2019-05-04",
            "excluded_windows": "2019-05-03:2019-05-03",
            "include_gap_day_users": "true",
        })
        result = IngestService(config, city).load(paths["records"])

        kept = filter_study_period(tag_city_membership(parse_stay_records(paths["records"]), city), config)
        assert result.user_days == build_user_days(kept)

        by_user = {}
        for record in kept:
            by_user.setdefault(record.user_id, []).append(record)
        assert result.gap_day_users == sorted(u for u, records in by_user.items() if detect_gap_days(records))
        assert result.gap_day_users
    def test_load_reports_overlap(self, tmp_path, city_file):
        path = write_csv(tmp_path / "r.csv", [
            ("a", "2019-05-01", "08:00:00", "10:00:00", CENTER.lon, CENTER.lat, "T1"),
            ("a", "2019-05-01", "09:30:00", "11:00:00", CENTER.lon, CENTER.lat, "T2"),
        ])
        with pytest.raises(RecordValidationError) as exc_info:
            IngestService(build_study_config(), load_city_definition(city_file)).load(path)
        assert exc_info.value.details["date"] == "2019-05-01"
        assert exc_info.value.details["second"] == ["09:30:00", "11:00:00", "T2"]

    def test_tower_spacing_summary(self):
        records = [
            make_record("T1", "08:00:00", "09:00:00"),
            make_record("T2", "09:00:00", "10:00:00", offset_point(300, 0)),
            make_record("T3", "10:00:00", "11:00:00", offset_point(300, 900)),
            make_record("T1", "11:00:00", "12:00:00"),
        ]
        spacing = tower_spacing_summary(records)
        assert spacing["median_m"] == pytest.approx(300.0, rel=1e-3)
        assert spacing["mean_m"] == pytest.approx(500.0, rel=1e-3)
        assert tower_spacing_summary(records[:1]) == {}


def _tower_list(tmp_path, *tower_ids):
    path = tmp_path / "towers.txt"
    path.write_text("\n".join(tower_ids) + "\n", encoding="utf-8")
    return path
