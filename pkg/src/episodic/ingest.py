"""Corpus loading and the preprocessing passes run before matching.

Passes run in a fixed order: relative dates, entity resolution, grouping,
stay-point visits. Each takes a :class:`Corpus` and returns a new one.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable

import numpy as np

from . import kernels
from .model import (
    PdtRecord,
    PersonRef,
    PlaceRef,
    RecordError,
    SourceKind,
    TimeSpec,
    hull_of,
    parse_geo,
    parse_timestamp,
    validate_record,
)
from .text import contains_phrase, fold, tokens

log = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
PEOPLE_FILE = "people.jsonl"
PLACES_FILE = "places.jsonl"
ALIASES_FILE = "aliases.tsv"
GPS_FILE = "gps.csv"
META_FILE = "corpus.json"

STAY_D_MAX_M = 200.0
STAY_T_MIN_MIN = 20.0
SNAP_RADIUS_M = 50.0
BURST_GAP_MIN = 30.0


class CorpusError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class QuarantineEntry:
    line: int
    doc_id: str | None
    errors: tuple[str, ...]

    def to_json(self) -> dict:
        return {"line": self.line, "doc_id": self.doc_id, "errors": list(self.errors)}


@dataclass(frozen=True)
class GpsFix:
    when: datetime
    offset_minutes: int
    lat: float
    lon: float


@dataclass(frozen=True)
class Visit:
    place: PlaceRef
    arrive: datetime
    depart: datetime
    point_count: int
    centroid: tuple[float, float]
    offset_minutes: int = 0

    @property
    def doc_id(self) -> str:
        return "gps:" + self.arrive.strftime("%Y%m%dT%H%M%SZ")


@dataclass(frozen=True)
class EvidenceUnit:
    """A record, or a group of records that counts as one document."""

    unit_id: str
    records: tuple[PdtRecord, ...]

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(r.doc_id for r in self.records)

    @property
    def when(self) -> TimeSpec:
        return hull_of(r.when for r in self.records)


@dataclass
class Corpus:
    records: dict[str, PdtRecord] = field(default_factory=dict)
    people: dict[str, PersonRef] = field(default_factory=dict)
    places: dict[str, PlaceRef] = field(default_factory=dict)
    visits: list[Visit] = field(default_factory=list)
    groups: dict[str, tuple[str, ...]] = field(default_factory=dict)
    points: list[GpsFix] = field(default_factory=list)
    aliases: list[tuple[str, str]] = field(default_factory=list)
    owner: str | None = None
    quarantine: list[QuarantineEntry] = field(default_factory=list)
    dates: dict[str, tuple[tuple[str, TimeSpec], ...]] = field(default_factory=dict)
    mentions: dict[str, tuple[PlaceRef, ...]] = field(default_factory=dict)
    digest: str = ""
    # ids declared in the person/place tables; preferred as canonical ids
    declared_people: frozenset[str] = frozenset()
    declared_places: frozenset[str] = frozenset()

    def units(self) -> list[EvidenceUnit]:
        grouped = {d for members in self.groups.values() for d in members}
        out = [EvidenceUnit(gid, tuple(self.records[d] for d in sorted(m))) for gid, m in self.groups.items()]
        out += [EvidenceUnit(d, (r,)) for d, r in self.records.items() if d not in grouped]
        return sorted(out, key=lambda u: u.unit_id)

    def owner_ref(self) -> PersonRef | None:
        if self.owner is None:
            return None
        return self.people.get(self.owner)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError("UnreadableFile", f"{path}: {exc}") from exc


def _jsonl(path: Path) -> list[tuple[int, dict]]:
    rows, errors = [], []
    for n, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(f"{path.name}:{n}: {exc}")
            continue
        if not isinstance(obj, dict):
            errors.append(f"{path.name}:{n}: expected an object")
            continue
        rows.append((n, obj))
    if errors:
        raise CorpusError("SchemaError", "; ".join(errors))
    return rows


CORPUS_FILES = (RECORDS_FILE, PEOPLE_FILE, PLACES_FILE, ALIASES_FILE, GPS_FILE, META_FILE)


def digest_texts(files: dict[str, str]) -> str:
    """Order-independent digest of corpus file contents keyed by file name."""
    h = hashlib.sha256()
    for name in CORPUS_FILES:
        if name not in files:
            continue
        lines = sorted(line.strip() for line in files[name].splitlines() if line.strip())
        h.update(name.encode())
        h.update(b"\0")
        h.update("\n".join(lines).encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()


def corpus_digest(path: str | Path) -> str:
    """Order-independent digest of a corpus directory's data files."""
    path = Path(path)
    return digest_texts({n: "\n".join(_read_lines(path / n)) for n in CORPUS_FILES if (path / n).exists()})


def read_alias_table(path: Path) -> list[tuple[str, str]]:
    out, errors = [], []
    for n, line in enumerate(_read_lines(path), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            errors.append(f"{path.name}:{n}: expected 'canonical_id<TAB>alias'")
            continue
        out.append((parts[0].strip(), parts[1].strip()))
    if errors:
        raise CorpusError("SchemaError", "; ".join(errors))
    return out


def read_gps(path: Path) -> list[GpsFix]:
    out, errors = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for n, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#") or row[0].strip() == "timestamp":
                continue
            try:
                if len(row) != 3:
                    raise ValueError("expected 'timestamp, lat, lon'")
                when, off = parse_timestamp(row[0])
                lat, lon = parse_geo(row[1].strip(), row[2].strip())
            except ValueError as exc:
                errors.append(f"{path.name}:{n}: {exc}")
                continue
            out.append(GpsFix(when, off, lat, lon))
    if errors:
        raise CorpusError("SchemaError", "; ".join(errors))
    return out


def load_corpus(path: str | Path) -> Corpus:
    """Read a corpus directory.

    Records that fail validation go to ``corpus.quarantine``; a repeated
    ``doc_id`` raises ``DuplicateDocId``. Malformed side tables raise
    ``SchemaError`` listing every bad line.
    """
    path = Path(path)
    if not path.is_dir():
        raise CorpusError("UnreadableFile", f"{path} is not a directory")
    records_path = path / RECORDS_FILE
    if not records_path.exists():
        raise CorpusError("UnreadableFile", f"{records_path} not found")

    people: dict[str, PersonRef] = {}
    if (path / PEOPLE_FILE).exists():
        for n, row in _jsonl(path / PEOPLE_FILE):
            if not isinstance(row.get("id"), str):
                raise CorpusError("SchemaError", f"{PEOPLE_FILE}:{n}: person needs an id")
            people[row["id"]] = PersonRef(row["id"], str(row.get("name") or row["id"]), frozenset(row.get("aliases", ())))

    places: dict[str, PlaceRef] = {}
    if (path / PLACES_FILE).exists():
        errors = []
        for n, row in _jsonl(path / PLACES_FILE):
            try:
                geo = parse_geo(row["lat"], row["lon"]) if "lat" in row or "lon" in row else None
                places[row["id"]] = PlaceRef(row["id"], str(row.get("name") or row["id"]), row.get("category"), geo)
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"{PLACES_FILE}:{n}: {exc}")
        if errors:
            raise CorpusError("SchemaError", "; ".join(errors))

    aliases = read_alias_table(path / ALIASES_FILE) if (path / ALIASES_FILE).exists() else []
    points = read_gps(path / GPS_FILE) if (path / GPS_FILE).exists() else []
    meta = {}
    if (path / META_FILE).exists():
        try:
            meta = json.loads((path / META_FILE).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusError("SchemaError", f"{META_FILE}: {exc}") from exc

    records: dict[str, PdtRecord] = {}
    first_line: dict[str, int] = {}
    quarantine: list[QuarantineEntry] = []
    for n, line in enumerate(_read_lines(records_path), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            quarantine.append(QuarantineEntry(n, None, (f"BadJson: {exc}",)))
            continue
        doc_id = raw.get("doc_id") if isinstance(raw, dict) else None
        if isinstance(doc_id, str) and doc_id in first_line:
            raise CorpusError("DuplicateDocId", f"doc_id {doc_id!r} on lines {first_line[doc_id]} and {n}")
        if isinstance(doc_id, str):
            first_line[doc_id] = n
        try:
            rec = validate_record(raw, people, places)
        except RecordError as exc:
            quarantine.append(QuarantineEntry(n, exc.doc_id, tuple(str(v) for v in exc.violations)))
            continue
        records[rec.doc_id] = rec

    # singleton people/places synthesized from records join the tables
    for rec in records.values():
        for p in rec.people():
            people.setdefault(p.canonical_id, p)
        if rec.where is not None:
            places.setdefault(rec.where.canonical_id, rec.where)
    declared_people = frozenset(people) if not (path / PEOPLE_FILE).exists() else frozenset(
        row["id"] for _, row in _jsonl(path / PEOPLE_FILE)
    )
    declared_places = frozenset(
        row["id"] for _, row in (_jsonl(path / PLACES_FILE) if (path / PLACES_FILE).exists() else [])
    )
    if quarantine:
        log.info("quarantined %d record(s) from %s", len(quarantine), records_path)
    return Corpus(
        records=dict(sorted(records.items())),
        people=people,
        places=places,
        points=points,
        aliases=aliases,
        owner=meta.get("owner"),
        quarantine=quarantine,
        digest=corpus_digest(path),
        declared_people=declared_people,
        declared_places=declared_places,
    )


# ---------------------------------------------------------------------------
# relative dates
# ---------------------------------------------------------------------------

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")
_DATE_RE = re.compile(
    r"\b(today|tonight|tomorrow|yesterday|(on|next|this)\s+(" + "|".join(WEEKDAYS) + r"))\b",
    re.IGNORECASE,
)


def resolve_phrase(phrase: str, anchor: date) -> date:
    """Absolute date for one supported relative phrase, seen from ``anchor``.

    ``on <weekday>`` is the first such weekday strictly after the anchor.
    ``this <weekday>`` is that weekday in the anchor's ISO week if it is not
    already past, otherwise the next one. ``next <weekday>`` is that weekday
    in the following ISO week.
    """
    words = phrase.lower().split()
    if words[0] in ("today", "tonight"):
        return anchor
    if words[0] == "tomorrow":
        return anchor + timedelta(days=1)
    if words[0] == "yesterday":
        return anchor - timedelta(days=1)
    kind, target = words[0], WEEKDAYS.index(words[-1])
    ahead = (target - anchor.weekday()) % 7
    if kind == "on":
        return anchor + timedelta(days=ahead or 7)
    if kind == "this":
        if target >= anchor.weekday():
            return anchor + timedelta(days=target - anchor.weekday())
        return anchor + timedelta(days=ahead)
    # next: same weekday in the following ISO week
    monday_next = anchor + timedelta(days=7 - anchor.weekday())
    return monday_next + timedelta(days=target)


def explicate_dates(record: PdtRecord) -> list[tuple[str, TimeSpec]]:
    """Relative date phrases in subject/body paired with absolute local days."""
    anchor = record.when.local_start().date()
    out: list[tuple[str, TimeSpec]] = []
    for text in (record.what.subject, record.what.body):
        for m in _DATE_RE.finditer(text or ""):
            phrase = " ".join(m.group(1).split())
            item = (phrase, TimeSpec.local_day(resolve_phrase(phrase, anchor), record.when.offset_minutes))
            if item not in out:
                out.append(item)
    return out


def annotate_dates(corpus: Corpus) -> Corpus:
    dates = {}
    for doc_id, rec in corpus.records.items():
        found = explicate_dates(rec)
        if found:
            dates[doc_id] = tuple(found)
    return replace(corpus, dates=dates)


# ---------------------------------------------------------------------------
# entity resolution
# ---------------------------------------------------------------------------


class _UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def classes(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for x in self.parent:
            out[self.find(x)].append(x)
        return out


def name_key(name: str) -> frozenset[str]:
    return frozenset(tokens(name))


def _canonical(members: list[str], declared: frozenset[str]) -> str:
    preferred = [m for m in members if m in declared]
    return min(preferred or members)


def _merge_people(classes, people, declared):
    mapping: dict[str, PersonRef] = {}
    for members in classes.values():
        cid = _canonical(members, declared)
        aliases = frozenset().union(*(people[m].aliases for m in members))
        ref = PersonRef(cid, people[cid].display_name, aliases)
        for m in members:
            mapping[m] = ref
    return mapping


def resolve_entities(corpus: Corpus, aliases: list[tuple[str, str]] | None = None) -> Corpus:
    """Match-merge people and places to a fixed point.

    People merge when they share an alias or their folded name token sets are
    equal. Places merge when folded names are equal or they lie less than
    :data:`SNAP_RADIUS_M` apart. Each class takes the smallest declared member
    id (falling back to the smallest id) so the result does not depend on
    record order, and running it again changes nothing.
    """
    aliases = corpus.aliases if aliases is None else aliases
    claimed: dict[str, str] = {}
    for cid, alias in aliases:
        if claimed.setdefault(alias, cid) != cid:
            raise CorpusError("ConflictingAlias", f"alias {alias!r} claimed by {claimed[alias]!r} and {cid!r}")

    people = dict(corpus.people)
    for rec in corpus.records.values():
        for p in rec.people():
            people.setdefault(p.canonical_id, p)
    extra: dict[str, set[str]] = defaultdict(set)
    for alias, cid in claimed.items():
        extra[cid].add(alias)
    for cid, more in extra.items():
        base = people.get(cid, PersonRef(cid, cid, frozenset()))
        people[cid] = replace(base, aliases=base.aliases | more)
    declared_people = corpus.declared_people | frozenset(extra)

    uf = _UnionFind(sorted(people))
    by_alias: dict[str, str] = {}
    by_name: dict[frozenset[str], str] = {}
    for pid in sorted(people):
        p = people[pid]
        for a in sorted(p.aliases | {pid}):
            if a in by_alias:
                uf.union(by_alias[a], pid)
            else:
                by_alias[a] = pid
        key = name_key(p.display_name)
        if key:
            if key in by_name:
                uf.union(by_name[key], pid)
            else:
                by_name[key] = pid
    person_map = _merge_people(uf.classes(), people, declared_people)

    places = dict(corpus.places)
    for rec in corpus.records.values():
        if rec.where is not None:
            places.setdefault(rec.where.canonical_id, rec.where)
    ids = sorted(places)
    puf = _UnionFind(ids)
    by_pname: dict[frozenset[str], str] = {}
    for pid in ids:
        key = name_key(places[pid].name)
        if key:
            if key in by_pname:
                puf.union(by_pname[key], pid)
            else:
                by_pname[key] = pid
    geo_ids = [pid for pid in ids if places[pid].geo is not None]
    if len(geo_ids) > 1:
        lat = np.array([places[p].geo[0] for p in geo_ids])
        lon = np.array([places[p].geo[1] for p in geo_ids])
        close = np.argwhere(np.triu(kernels.pairwise_haversine(lat, lon, lat, lon) < SNAP_RADIUS_M, k=1))
        for i, j in close:
            puf.union(geo_ids[i], geo_ids[j])
    place_map: dict[str, PlaceRef] = {}
    for members in puf.classes().values():
        cid = _canonical(members, corpus.declared_places)
        ordered = [cid] + sorted(m for m in members if m != cid)
        category = next((places[m].category for m in ordered if places[m].category), None)
        geo = next((places[m].geo for m in ordered if places[m].geo), None)
        ref = PlaceRef(cid, places[cid].name, category, geo)
        for m in members:
            place_map[m] = ref

    def fix(rec: PdtRecord) -> PdtRecord:
        who = {}
        for role, refs in rec.who.items():
            seen = {}
            for p in refs:
                q = person_map[p.canonical_id]
                seen.setdefault(q.canonical_id, q)
            who[role] = tuple(sorted(seen.values()))
        where = place_map[rec.where.canonical_id] if rec.where is not None else None
        return replace(rec, who=who, where=where)

    canonical_people = {r.canonical_id: r for r in person_map.values()}
    canonical_places = {r.canonical_id: r for r in place_map.values()}
    visits = [replace(v, place=place_map.get(v.place.canonical_id, v.place)) for v in corpus.visits]
    return replace(
        corpus,
        records={d: fix(r) for d, r in corpus.records.items()},
        people=dict(sorted(canonical_people.items())),
        places=dict(sorted(canonical_places.items())),
        visits=visits,
        aliases=sorted(claimed_pair for claimed_pair in ((c, a) for a, c in claimed.items())),
        owner=person_map[corpus.owner].canonical_id if corpus.owner in person_map else corpus.owner,
        declared_people=declared_people,
    )


# ---------------------------------------------------------------------------
# grouping
# ---------------------------------------------------------------------------

_REPLY_PREFIX = re.compile(r"^\s*((re|fw|fwd|aw|sv)\s*(\[\d+\])?\s*:\s*)+", re.IGNORECASE)


def normalize_subject(subject: str | None) -> str:
    if not subject:
        return ""
    return " ".join(tokens(_REPLY_PREFIX.sub("", subject)))


def _is_reply(subject: str | None) -> bool:
    return bool(subject and _REPLY_PREFIX.match(subject))


def _participants(rec: PdtRecord) -> frozenset[str]:
    return frozenset(p.canonical_id for p in rec.people())


def group_documents(corpus: Corpus, burst_gap_min: float = BURST_GAP_MIN) -> Corpus:
    """Fill ``groups``: email threads and message bursts.

    Emails with the same reply-stripped subject and overlapping participants
    form a thread, provided at least one of each linked pair is a reply or
    forward. Messages between the same participant set no more than
    ``burst_gap_min`` minutes apart form a burst. Records that already carry a
    ``group_id`` keep it. Only groups of two or more records are kept.
    """
    groups: dict[str, list[str]] = defaultdict(list)
    for d, rec in corpus.records.items():
        if rec.group_id is not None:
            groups[rec.group_id].append(d)

    free = [r for r in corpus.records.values() if r.group_id is None]

    emails = [r for r in free if r.source is SourceKind.EMAIL and normalize_subject(r.what.subject)]
    uf = _UnionFind(r.doc_id for r in emails)
    by_subject: dict[str, list[PdtRecord]] = defaultdict(list)
    for r in emails:
        by_subject[normalize_subject(r.what.subject)].append(r)
    for same in by_subject.values():
        for i, a in enumerate(same):
            for b in same[i + 1 :]:
                # identical automated subjects (receipts, confirmations) are not replies
                replied = _is_reply(a.what.subject) or _is_reply(b.what.subject)
                if replied and _participants(a) & _participants(b):
                    uf.union(a.doc_id, b.doc_id)
    for members in uf.classes().values():
        if len(members) > 1:
            groups["thread:" + min(members)].extend(members)

    by_people: dict[frozenset[str], list[PdtRecord]] = defaultdict(list)
    for r in free:
        if r.source is SourceKind.MESSAGE:
            by_people[_participants(r)].append(r)
    gap = burst_gap_min * 60.0
    for msgs in by_people.values():
        msgs.sort(key=lambda r: (r.when.start, r.doc_id))
        run = [msgs[0]]
        for prev, cur in zip(msgs, msgs[1:]):
            if cur.when.start_ts - prev.when.end_ts <= gap:
                run.append(cur)
                continue
            if len(run) > 1:
                groups["burst:" + min(x.doc_id for x in run)].extend(x.doc_id for x in run)
            run = [cur]
        if len(run) > 1:
            groups["burst:" + min(x.doc_id for x in run)].extend(x.doc_id for x in run)

    groups = {g: tuple(sorted(m)) for g, m in sorted(groups.items()) if len(m) > 1}
    member_of = {d: g for g, m in groups.items() for d in m}
    records = {d: replace(r, group_id=member_of.get(d)) for d, r in corpus.records.items()}
    return replace(corpus, records=records, groups=groups)


# ---------------------------------------------------------------------------
# stay points
# ---------------------------------------------------------------------------


def detect_visits(
    points: list[GpsFix],
    d_max: float = STAY_D_MAX_M,
    t_min: float = STAY_T_MIN_MIN,
    places: Iterable[PlaceRef] = (),
    snap_m: float = SNAP_RADIUS_M,
) -> list[Visit]:
    """Stay points in a time-sorted GPS track.

    ``d_max`` is in meters, ``t_min`` in minutes. Each visit snaps to the
    nearest known place within ``snap_m`` of its centroid, otherwise it gets
    a synthesized place at the centroid.
    """
    if d_max <= 0 or t_min <= 0:
        raise ValueError("d_max and t_min must be positive")
    if not points:
        return []
    t = np.array([p.when.timestamp() for p in points])
    if np.any(np.diff(t) < 0):
        raise CorpusError("UnsortedInput", "GPS points are not in time order")
    lat = np.array([p.lat for p in points])
    lon = np.array([p.lon for p in points])
    starts, ends = kernels.stay_point_bounds(t, lat, lon, d_max, t_min * 60.0)
    if len(starts) == 0:
        return []

    known = [p for p in places if p.geo is not None]
    centroids = np.array([[lat[s : e + 1].mean(), lon[s : e + 1].mean()] for s, e in zip(starts, ends)])
    if known:
        dist = kernels.pairwise_haversine(
            centroids[:, 0], centroids[:, 1], [p.geo[0] for p in known], [p.geo[1] for p in known]
        )
    visits = []
    for k, (s, e) in enumerate(zip(starts, ends)):
        clat, clon = float(centroids[k, 0]), float(centroids[k, 1])
        place = None
        if known:
            j = int(np.argmin(dist[k]))
            if dist[k, j] <= snap_m:
                place = known[j]
        if place is None:
            place = PlaceRef(f"visit:{clat:.5f},{clon:.5f}", f"Unnamed place ({clat:.5f}, {clon:.5f})", None, (clat, clon))
        visits.append(
            Visit(place, points[s].when, points[e].when, int(e - s + 1), (clat, clon), points[s].offset_minutes)
        )
    return visits


def visit_record(visit: Visit, owner: PersonRef | None) -> PdtRecord:
    return PdtRecord(
        doc_id=visit.doc_id,
        source=SourceKind.GPS_POINT,
        when=TimeSpec(visit.arrive, visit.depart, visit.offset_minutes),
        who={"author": (owner,)} if owner is not None else {},
        where=visit.place,
        how="Location History",
    )


def add_visits(corpus: Corpus, d_max=STAY_D_MAX_M, t_min=STAY_T_MIN_MIN, snap_m=SNAP_RADIUS_M) -> Corpus:
    visits = detect_visits(corpus.points, d_max, t_min, corpus.places.values(), snap_m)
    records = dict(corpus.records)
    owner = corpus.owner_ref()
    for v in visits:
        rec = visit_record(v, owner)
        if rec.doc_id in records:
            raise CorpusError("DuplicateDocId", f"visit id {rec.doc_id!r} collides with a record")
        records[rec.doc_id] = rec
    return replace(corpus, visits=visits, records=dict(sorted(records.items())))


# ---------------------------------------------------------------------------
# place mentions and the full pipeline
# ---------------------------------------------------------------------------


def annotate_mentions(corpus: Corpus) -> Corpus:
    """Known place names appearing in subject/body text."""
    index: dict[str, list[tuple[tuple[str, ...], PlaceRef]]] = defaultdict(list)
    for place in corpus.places.values():
        if place.canonical_id.startswith("visit:"):
            continue
        toks = tuple(tokens(place.name))
        if toks:
            index[toks[0]].append((toks, place))
    mentions = {}
    for doc_id, rec in corpus.records.items():
        found: dict[str, PlaceRef] = {}
        for text in (rec.what.subject, rec.what.body):
            toks = tokens(text)
            for tok in set(toks):
                for phrase, place in index.get(tok, ()):
                    if contains_phrase(toks, phrase):
                        found[place.canonical_id] = place
        if found:
            mentions[doc_id] = tuple(found[k] for k in sorted(found))
    return replace(corpus, mentions=mentions)


@dataclass(frozen=True)
class IngestSettings:
    stay_d_max_m: float = STAY_D_MAX_M
    stay_t_min_min: float = STAY_T_MIN_MIN
    snap_radius_m: float = SNAP_RADIUS_M
    burst_gap_min: float = BURST_GAP_MIN

    def to_json(self) -> dict:
        return {
            "stay_d_max_m": self.stay_d_max_m,
            "stay_t_min_min": self.stay_t_min_min,
            "snap_radius_m": self.snap_radius_m,
            "burst_gap_min": self.burst_gap_min,
        }


def preprocess(corpus: Corpus, settings: IngestSettings = IngestSettings()) -> Corpus:
    corpus = annotate_dates(corpus)
    corpus = resolve_entities(corpus)
    corpus = group_documents(corpus, settings.burst_gap_min)
    corpus = add_visits(corpus, settings.stay_d_max_m, settings.stay_t_min_min, settings.snap_radius_m)
    corpus = resolve_entities(corpus)
    return annotate_mentions(corpus)


def ingest(path: str | Path, settings: IngestSettings = IngestSettings()) -> Corpus:
    return preprocess(load_corpus(path), settings)
