from datetime import date, datetime, timedelta, timezone
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from episodic.model import (
    Content,
    PersonRef,
    PlaceRef,
    RecordError,
    SourceKind,
    TimeSpec,
    W5hSummary,
    parse_timestamp,
    serialize_record,
    validate_record,
)

UTC = timezone.utc


def raw_bank(**over):
    raw = {
        "doc_id": "bank-1",
        "source": "BankTransaction",
        "when": "2019-03-14T19:32:00-04:00",
        "who": {"payer": ["p:alex"]},
        "where": {"id": "place:aurora", "name": "Cafe Aurora", "category": "Restaurant", "lat": 40.5, "lon": -74.4},
        "what": {"amount": "42.10", "category": "Restaurant"},
    }
    raw.update(over)
    return raw


def test_parse_timestamp_keeps_offset():
    dt, off = parse_timestamp("2019-03-14T19:32:00-04:00")
    assert dt == datetime(2019, 3, 14, 23, 32, tzinfo=UTC)
    assert off == -240


def test_parse_timestamp_z_and_naive_are_utc():
    assert parse_timestamp("2019-03-14T10:00:00Z") == (datetime(2019, 3, 14, 10, tzinfo=UTC), 0)
    assert parse_timestamp("2019-03-14T10:00:00") == (datetime(2019, 3, 14, 10, tzinfo=UTC), 0)


def test_local_day_covers_the_calendar_day():
    t = TimeSpec.local_day(date(2019, 3, 15), -240)
    assert t.local_start().isoformat() == "2019-03-15T00:00:00-04:00"
    assert t.local_end().isoformat() == "2019-03-15T23:59:59-04:00"
    assert t.local_dates() == {date(2019, 3, 15)}


def test_gap_is_zero_for_overlap_and_endpoint_distance_otherwise():
    a = TimeSpec.parse({"start": "2019-03-14T19:00:00Z", "end": "2019-03-14T20:00:00Z"})
    b = TimeSpec.parse("2019-03-14T19:30:00Z")
    c = TimeSpec.parse("2019-03-14T23:00:00Z")
    assert a.gap_seconds(b) == 0
    assert a.gap_seconds(c) == 3 * 3600
    assert c.gap_seconds(a) == 3 * 3600


def test_interval_rejects_reversed_bounds():
    with pytest.raises(ValueError):
        TimeSpec.parse({"start": "2019-03-14T20:00:00Z", "end": "2019-03-14T19:00:00Z"})


def test_place_geo_range_checked():
    with pytest.raises(ValueError):
        PlaceRef("x", "X", geo=(91.0, 0.0))


def test_validate_bank_record():
    rec = validate_record(raw_bank())
    assert rec.source is SourceKind.BANK_TRANSACTION
    assert rec.what.amount == Decimal("42.10")
    assert rec.where.geo == (40.5, -74.4)
    assert rec.who["payer"][0].canonical_id == "p:alex"
    assert rec.how == "BankTransaction"


def test_validate_missing_timestamp():
    raw = raw_bank()
    del raw["when"]
    with pytest.raises(RecordError) as err:
        validate_record(raw)
    assert err.value.codes == ["MissingTimestamp"]
    assert err.value.doc_id == "bank-1"


def test_validate_unknown_source():
    with pytest.raises(RecordError) as err:
        validate_record(raw_bank(source="Fax"))
    assert "UnknownSourceKind" in err.value.codes


def test_validate_malformed_geo():
    with pytest.raises(RecordError) as err:
        validate_record(raw_bank(where={"name": "Nowhere", "lat": 123.0, "lon": 0.0}))
    assert err.value.codes == ["MalformedGeo"]


def test_validate_reports_every_violation():
    raw = raw_bank(source="Fax", where={"lat": "north", "lon": 0}, extra=1)
    del raw["when"]
    with pytest.raises(RecordError) as err:
        validate_record(raw)
    assert set(err.value.codes) == {"UnknownField", "UnknownSourceKind", "MissingTimestamp", "MalformedGeo"}


def test_people_table_lookup_by_alias():
    alex = PersonRef("p:alex", "Alex Doe", frozenset({"alex@mail.example"}))
    rec = validate_record(
        {"doc_id": "m", "source": "Email", "when": "2019-03-14T10:00:00Z", "who": {"from": ["alex@mail.example"]}},
        people={"alex@mail.example": alex},
    )
    assert rec.who["from"] == (alex,)


def test_serialize_roundtrip():
    rec = validate_record(raw_bank())
    again = validate_record(
        {**serialize_record(rec), "who": {r: [p["id"] for p in ps] for r, ps in serialize_record(rec)["who"].items()}}
    )
    assert again.to_json() == rec.to_json()


def test_summary_union_covers_both():
    t1 = TimeSpec.parse("2019-03-14T19:00:00Z")
    t2 = TimeSpec.parse("2019-03-14T21:00:00Z")
    a = W5hSummary(who=frozenset({PersonRef("a")}), when=t1, how=frozenset({"bank"}))
    b = W5hSummary(who=frozenset({PersonRef("b")}), when=t2, where=frozenset({PlaceRef("x")}))
    u = a.union(b)
    assert u.covers(a) and u.covers(b)
    assert not a.covers(u)
    assert u.when.start == t1.start and u.when.end == t2.end


_ts = st.datetimes(
    min_value=datetime(2000, 1, 1), max_value=datetime(2030, 1, 1), timezones=st.just(UTC)
)


@given(_ts, _ts, st.integers(0, 10_000), st.integers(0, 10_000))
def test_gap_symmetric_and_zero_iff_overlap(s1, s2, d1, d2):
    a = TimeSpec(s1, s1 + timedelta(seconds=d1))
    b = TimeSpec(s2, s2 + timedelta(seconds=d2))
    assert a.gap_seconds(b) == b.gap_seconds(a)
    overlap = a.start <= b.end and b.start <= a.end
    assert (a.gap_seconds(b) == 0) == overlap
    h = a.hull(b)
    assert h.contains(a) and h.contains(b)


def test_content_get_ignores_unknown_fields():
    c = Content(subject="hi")
    assert c.get("subject") == "hi"
    assert c.get("nope") is None
