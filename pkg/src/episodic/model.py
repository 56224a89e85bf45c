"""Personal digital traces and the six contextual (W5H) dimensions.

Everything here is an immutable value. Timestamps are held in UTC; the offset
they were recorded with is kept alongside so local calendar dates and display
strings can be recovered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Any, Iterable, Mapping


class SourceKind(str, Enum):
    EMAIL = "Email"
    MESSAGE = "Message"
    SOCIAL_POST = "SocialPost"
    CALENDAR_ENTRY = "CalendarEntry"
    BANK_TRANSACTION = "BankTransaction"
    GPS_POINT = "GpsPoint"
    PHOTO = "Photo"

    @classmethod
    def parse(cls, value: str) -> "SourceKind":
        for kind in cls:
            if kind.value == value:
                return kind
        raise ValueError(f"unknown source kind {value!r}")


WHO_ROLES = ("from", "to", "cc", "tags", "author", "payer")
WHAT_FIELDS = ("subject", "body", "amount", "category", "media_ref")
DIMENSIONS = ("who", "what", "where", "when", "why", "how")


@dataclass(frozen=True, order=True)
class PersonRef:
    canonical_id: str
    display_name: str = ""
    aliases: frozenset[str] = field(default_factory=frozenset)

    def to_json(self) -> dict:
        return {"id": self.canonical_id, "name": self.display_name, "aliases": sorted(self.aliases)}


@dataclass(frozen=True, order=True)
class PlaceRef:
    canonical_id: str
    name: str = ""
    category: str | None = None
    geo: tuple[float, float] | None = None

    def __post_init__(self):
        if self.geo is not None:
            lat, lon = self.geo
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise ValueError(f"geo out of range: {self.geo}")

    def to_json(self) -> dict:
        out: dict[str, Any] = {"id": self.canonical_id, "name": self.name}
        if self.category is not None:
            out["category"] = self.category
        if self.geo is not None:
            out["lat"], out["lon"] = self.geo
        return out


def _tz(offset_minutes: int) -> timezone:
    return timezone(timedelta(minutes=offset_minutes))


def parse_timestamp(text: str) -> tuple[datetime, int]:
    """Parse an ISO-8601 timestamp into (UTC datetime, original offset in minutes).

    Timestamps without an offset are taken to be UTC.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    offset = dt.utcoffset() or timedelta(0)
    return dt.astimezone(timezone.utc), int(offset.total_seconds() // 60)


@dataclass(frozen=True)
class TimeSpec:
    """An instant (``start == end``) or a closed interval, in UTC."""

    start: datetime
    end: datetime
    offset_minutes: int = 0

    def __post_init__(self):
        if self.start.tzinfo is None or self.end.tzinfo is None:
            raise ValueError("TimeSpec requires timezone-aware datetimes")
        if self.start > self.end:
            raise ValueError("interval start after end")
        object.__setattr__(self, "start", self.start.astimezone(timezone.utc))
        object.__setattr__(self, "end", self.end.astimezone(timezone.utc))

    @classmethod
    def instant(cls, dt: datetime, offset_minutes: int | None = None) -> "TimeSpec":
        if offset_minutes is None:
            off = dt.utcoffset()
            offset_minutes = int(off.total_seconds() // 60) if off is not None else 0
        return cls(dt, dt, offset_minutes)

    @classmethod
    def local_day(cls, day: date, offset_minutes: int) -> "TimeSpec":
        """The whole local calendar day, 00:00:00 through 23:59:59."""
        start = datetime(day.year, day.month, day.day, tzinfo=_tz(offset_minutes))
        return cls(start, start + timedelta(days=1, seconds=-1), offset_minutes)

    @classmethod
    def parse(cls, value: Any) -> "TimeSpec":
        if isinstance(value, str):
            dt, off = parse_timestamp(value)
            return cls(dt, dt, off)
        if isinstance(value, Mapping) and "start" in value and "end" in value:
            s, off = parse_timestamp(value["start"])
            e, _ = parse_timestamp(value["end"])
            return cls(s, e, off)
        raise ValueError(f"not a timestamp or interval: {value!r}")

    @property
    def is_instant(self) -> bool:
        return self.start == self.end

    @property
    def start_ts(self) -> float:
        return self.start.timestamp()

    @property
    def end_ts(self) -> float:
        return self.end.timestamp()

    def local_start(self) -> datetime:
        return self.start.astimezone(_tz(self.offset_minutes))

    def local_end(self) -> datetime:
        return self.end.astimezone(_tz(self.offset_minutes))

    def local_dates(self) -> set[date]:
        """Calendar dates (in the recorded offset) touched by this time."""
        d0, d1 = self.local_start().date(), self.local_end().date()
        return {d0 + timedelta(days=i) for i in range((d1 - d0).days + 1)}

    def gap_seconds(self, other: "TimeSpec") -> float:
        """Distance between closest endpoints; 0 when the two overlap."""
        return max(0.0, max(self.start_ts, other.start_ts) - min(self.end_ts, other.end_ts))

    def hull(self, other: "TimeSpec") -> "TimeSpec":
        first = self if self.start <= other.start else other
        return TimeSpec(min(self.start, other.start), max(self.end, other.end), first.offset_minutes)

    def contains(self, other: "TimeSpec") -> bool:
        return self.start <= other.start and other.end <= self.end

    def to_json(self) -> Any:
        if self.is_instant:
            return self.local_start().isoformat()
        return {"start": self.local_start().isoformat(), "end": self.local_end().isoformat()}


def hull_of(times: Iterable[TimeSpec]) -> TimeSpec | None:
    out = None
    for t in times:
        out = t if out is None else out.hull(t)
    return out


@dataclass(frozen=True)
class Content:
    subject: str | None = None
    body: str | None = None
    amount: Decimal | None = None
    category: str | None = None
    media_ref: str | None = None

    def get(self, name: str):
        return getattr(self, name, None) if name in WHAT_FIELDS else None

    def to_json(self) -> dict:
        out: dict[str, Any] = {}
        for name in WHAT_FIELDS:
            v = getattr(self, name)
            if v is not None:
                out[name] = str(v) if isinstance(v, Decimal) else v
        return out


@dataclass(frozen=True)
class PdtRecord:
    doc_id: str
    source: SourceKind
    when: TimeSpec
    who: Mapping[str, tuple[PersonRef, ...]] = field(default_factory=dict)
    where: PlaceRef | None = None
    what: Content = field(default_factory=Content)
    how: str = ""
    group_id: str | None = None

    def people(self) -> set[PersonRef]:
        return {p for refs in self.who.values() for p in refs}

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "doc_id": self.doc_id,
            "source": self.source.value,
            "when": self.when.to_json(),
            "who": {role: [p.to_json() for p in refs] for role, refs in self.who.items()},
            "what": self.what.to_json(),
            "how": self.how,
        }
        if self.where is not None:
            out["where"] = self.where.to_json()
        if self.group_id is not None:
            out["group_id"] = self.group_id
        return out


@dataclass(frozen=True)
class W5hSummary:
    who: frozenset[PersonRef] = frozenset()
    where: frozenset[PlaceRef] = frozenset()
    when: TimeSpec | None = None
    what: frozenset[str] = frozenset()
    why: str | None = None
    how: frozenset[str] = frozenset()

    def union(self, other: "W5hSummary") -> "W5hSummary":
        when = self.when if other.when is None else (other.when if self.when is None else self.when.hull(other.when))
        return W5hSummary(
            who=self.who | other.who,
            where=self.where | other.where,
            when=when,
            what=self.what | other.what,
            why=self.why or other.why,
            how=self.how | other.how,
        )

    def covers(self, other: "W5hSummary") -> bool:
        """Per-dimension superset test."""
        if other.when is not None and (self.when is None or not self.when.contains(other.when)):
            return False
        if other.why is not None and self.why != other.why:
            return False
        return (
            self.who >= other.who
            and self.where >= other.where
            and self.what >= other.what
            and self.how >= other.how
        )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

MISSING_TIMESTAMP = "MissingTimestamp"
UNKNOWN_SOURCE_KIND = "UnknownSourceKind"
MALFORMED_GEO = "MalformedGeo"


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


class RecordError(ValueError):
    """Raised with every schema violation found in one raw record."""

    def __init__(self, violations: list[Violation], doc_id: str | None = None):
        self.violations = violations
        self.doc_id = doc_id
        super().__init__("; ".join(str(v) for v in violations))

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


_TOP_FIELDS = {"doc_id", "source", "when", "who", "where", "what", "how", "group_id"}


def _parse_person(raw: Any, people: Mapping[str, PersonRef] | None) -> PersonRef:
    if isinstance(raw, str):
        if people is not None and raw in people:
            return people[raw]
        return PersonRef(raw, raw, frozenset({raw}))
    if isinstance(raw, Mapping) and isinstance(raw.get("id"), str):
        if people is not None and raw["id"] in people and set(raw) == {"id"}:
            return people[raw["id"]]
        return PersonRef(raw["id"], str(raw.get("name", raw["id"])), frozenset(raw.get("aliases", ())))
    raise ValueError(f"bad person entry {raw!r}")


def parse_geo(lat: Any, lon: Any) -> tuple[float, float]:
    if isinstance(lat, bool) or isinstance(lon, bool):
        raise ValueError("geo coordinates must be numbers")
    lat, lon = float(lat), float(lon)
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise ValueError("geo coordinates must be finite")
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"longitude {lon} outside [-180, 180]")
    return lat, lon


def _parse_place(raw: Any, places: Mapping[str, PlaceRef] | None, doc_id: str, errors: list[Violation]):
    if isinstance(raw, str):
        if places is not None and raw in places:
            return places[raw]
        return PlaceRef(raw, raw)
    if not isinstance(raw, Mapping):
        errors.append(Violation("MalformedWhere", f"where must be a place id or object, got {raw!r}"))
        return None
    geo = None
    if "lat" in raw or "lon" in raw:
        try:
            geo = parse_geo(raw.get("lat"), raw.get("lon"))
        except (TypeError, ValueError) as exc:
            errors.append(Violation(MALFORMED_GEO, str(exc)))
            return None
    pid = raw.get("id") or f"place:{doc_id}"
    name = raw.get("name") or pid
    category = raw.get("category")
    return PlaceRef(str(pid), str(name), None if category is None else str(category), geo)


def validate_record(
    raw: Mapping[str, Any],
    people: Mapping[str, PersonRef] | None = None,
    places: Mapping[str, PlaceRef] | None = None,
) -> PdtRecord:
    """Turn one raw corpus record into a :class:`PdtRecord`.

    ``people`` maps person ids *and* aliases to :class:`PersonRef`; ``places``
    maps place ids to :class:`PlaceRef`. Unknown person strings become
    singleton people. Raises :class:`RecordError` listing every violation.
    """
    errors: list[Violation] = []
    if not isinstance(raw, Mapping):
        raise RecordError([Violation("NotAnObject", "record is not an object")])
    doc_id = raw.get("doc_id")
    if not isinstance(doc_id, str) or not doc_id:
        errors.append(Violation("MissingDocId", "doc_id must be a non-empty string"))
        doc_id = None
    for key in sorted(set(raw) - _TOP_FIELDS):
        errors.append(Violation("UnknownField", f"unexpected field {key!r}"))

    source = None
    try:
        source = SourceKind.parse(raw.get("source"))
    except (ValueError, TypeError):
        errors.append(Violation(UNKNOWN_SOURCE_KIND, f"unknown source {raw.get('source')!r}"))

    when = None
    if raw.get("when") in (None, ""):
        errors.append(Violation(MISSING_TIMESTAMP, "record has no timestamp"))
    else:
        try:
            when = TimeSpec.parse(raw["when"])
        except (ValueError, TypeError) as exc:
            errors.append(Violation("BadTimestamp", str(exc)))

    who: dict[str, tuple[PersonRef, ...]] = {}
    raw_who = raw.get("who") or {}
    if not isinstance(raw_who, Mapping):
        errors.append(Violation("MalformedWho", "who must map roles to person lists"))
    else:
        for role, entries in raw_who.items():
            if role not in WHO_ROLES:
                errors.append(Violation("UnknownRole", f"unknown who role {role!r}"))
                continue
            if isinstance(entries, (str, Mapping)):
                entries = [entries]
            try:
                refs = tuple(_parse_person(e, people) for e in entries)
            except (ValueError, TypeError) as exc:
                errors.append(Violation("MalformedWho", str(exc)))
                continue
            if refs:
                who[role] = refs

    where = None
    if raw.get("where") is not None:
        where = _parse_place(raw["where"], places, doc_id or "?", errors)

    what = Content()
    raw_what = raw.get("what") or {}
    if not isinstance(raw_what, Mapping):
        errors.append(Violation("MalformedWhat", "what must be an object"))
    else:
        kwargs: dict[str, Any] = {}
        for key, value in raw_what.items():
            if key not in WHAT_FIELDS:
                errors.append(Violation("UnknownField", f"unexpected what field {key!r}"))
            elif value is None:
                continue
            elif key == "amount":
                try:
                    if isinstance(value, bool):
                        raise InvalidOperation
                    kwargs[key] = Decimal(str(value))
                except InvalidOperation:
                    errors.append(Violation("BadAmount", f"amount {value!r} is not a decimal"))
            else:
                kwargs[key] = str(value)
        what = Content(**kwargs)

    how = raw.get("how")
    if how is None:
        how = source.value if source is not None else ""
    group_id = raw.get("group_id")

    if errors:
        raise RecordError(errors, doc_id)
    return PdtRecord(doc_id, source, when, who, where, what, str(how), None if group_id is None else str(group_id))


def serialize_record(record: PdtRecord) -> dict:
    return record.to_json()
