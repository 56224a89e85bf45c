"""Seeded synthetic corpora with known eating-out episodes and distractors.

Each gold episode independently emits a card payment, a GPS stay, a
reservation email, a planning message burst, a social post and a ride, each
with its own probability. Distractors mimic the usual false positives:
take-out payments with only a brief GPS stop, supermarket payments, emails
that merely talk about food, and plans that were called off.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .ingest import (
    GPS_FILE,
    META_FILE,
    PEOPLE_FILE,
    PLACES_FILE,
    RECORDS_FILE,
    Corpus,
    load_corpus,
    digest_texts,
)

log = logging.getLogger(__name__)

TRACE_KINDS = ("payment", "gps", "reservation", "planning", "post", "ride")
DISTRACTOR_KINDS = ("keyword_email", "takeout", "supermarket", "cancelled_plan")

CENTER = (40.50, -74.40)
MIN_VENUE_SEPARATION_M = 300.0

_ADJ = ["Copper", "Golden", "Blue", "Silver", "Quiet", "Crooked", "Little", "Red", "Hidden", "Old",
        "Velvet", "Amber", "Iron", "Olive", "Wild", "Lucky", "Northern", "Painted", "Stone", "Twin"]
_NOUN = ["Kettle", "Lantern", "Door", "Anchor", "Garden", "Fox", "Harbor", "Lamp", "Oak", "Bell",
         "Sparrow", "Compass", "Bridge", "Willow", "Heron", "Crown", "Mill", "Orchard", "Tide", "Gate"]
_FIRST = ["Jordan", "Riley", "Casey", "Morgan", "Avery", "Quinn", "Rowan", "Sasha", "Devon", "Harper",
          "Emery", "Kai", "Reese", "Skyler", "Tatum", "Blair"]
_LAST = ["Nguyen", "Garcia", "Okafor", "Schmidt", "Rossi", "Kowalski", "Tanaka", "Haddad", "Silva", "Moreau",
         "Larsen", "Petrov", "Mensah", "Duarte", "Byrne", "Ahmed"]
_NEWSLETTER = [
    ("Five brunch recipes for the weekend", "Try these easy ideas this season."),
    ("Our lunch menu has changed", "New seasonal dishes are available for delivery."),
    ("Dinner party ideas", "Hosting friends? Here is a checklist."),
    ("Where to eat this spring", "A roundup of openings across the region."),
    ("Meal prep made simple", "Plan a week of lunches in one afternoon."),
    ("Breakfast around the world", "A reading list for curious cooks."),
]
_WEEKDAY = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"]


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    """Generator settings. ``days`` of 0 picks a span large enough for all events."""

    seed: int = 42
    start: str = "2019-03-04"
    days: int = 0
    offset_minutes: int = -240
    n_episodes: int = 10
    p_payment: float = 0.9
    p_gps: float = 0.8
    p_reservation: float = 0.5
    p_planning: float = 0.6
    p_post: float = 0.4
    p_ride: float = 0.3
    n_keyword_email: int = 6
    n_takeout: int = 3
    n_supermarket: int = 4
    n_cancelled_plan: int = 2
    n_venues: int = 12
    n_people: int = 6
    collisions: bool = False
    planning_lead_days_max: int = 3
    post_delay_max_min: int = 120
    ride_lead_min: int = 30

    def validate(self):
        problems = []
        for name in TRACE_KINDS:
            p = getattr(self, "p_" + name)
            if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
                problems.append(f"p_{name}={p!r} not in [0, 1]")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.startswith("n_") and not (isinstance(v, int) and v >= 0):
                problems.append(f"{f.name}={v!r} must be a non-negative integer")
        if not 0 <= self.seed < 2**64:
            problems.append("seed must fit in 64 bits")
        if self.days < 0:
            problems.append("days must be >= 0")
        needs_venue = self.n_episodes + self.n_takeout + self.n_cancelled_plan
        if needs_venue and self.n_venues < 2:
            problems.append("n_venues must be >= 2 when episodes, take-outs or cancelled plans are requested")
        if (self.n_episodes or self.n_cancelled_plan) and self.n_people < 1:
            problems.append("n_people must be >= 1 when episodes or plans are requested")
        if self.n_venues > len(_ADJ) * len(_NOUN):
            problems.append(f"n_venues must be <= {len(_ADJ) * len(_NOUN)}")
        if self.n_people > len(_FIRST) * len(_LAST):
            problems.append(f"n_people must be <= {len(_FIRST) * len(_LAST)}")
        if not 1 <= self.planning_lead_days_max <= 6:
            problems.append("planning_lead_days_max must be in 1..6")
        if self.days and self.days < self.slots_needed():
            problems.append(f"days={self.days} too small; need at least {self.slots_needed()}")
        try:
            date.fromisoformat(self.start)
        except (TypeError, ValueError):
            problems.append(f"start {self.start!r} is not an ISO date")
        if problems:
            raise InvalidConfig("; ".join(problems))
        return self

    def slots_needed(self) -> int:
        episodes = math.ceil(self.n_episodes / 2) if self.collisions else self.n_episodes
        return episodes + self.n_takeout + self.n_cancelled_plan

    @property
    def span_days(self) -> int:
        return self.days or max(7, self.slots_needed() + self.planning_lead_days_max + 1)

    @classmethod
    def from_json(cls, raw: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**raw).validate()
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc

    def to_json(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _offset_point(rng, lat: float, lon: float, radius_m: float) -> tuple[float, float]:
    """Uniform random point within ``radius_m`` of (lat, lon)."""
    r = radius_m * math.sqrt(rng.random())
    theta = 2 * math.pi * rng.random()
    dlat = r * math.cos(theta) / 111_320.0
    dlon = r * math.sin(theta) / (111_320.0 * math.cos(math.radians(lat)))
    return round(lat + dlat, 6), round(lon + dlon, 6)


def _dist_m(a, b) -> float:
    # equirectangular is plenty for rejection sampling at city scale
    x = math.radians(b[1] - a[1]) * math.cos(math.radians((a[0] + b[0]) / 2))
    y = math.radians(b[0] - a[0])
    return 6_371_000.0 * math.hypot(x, y)


def _slug(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


class _Builder:
    def __init__(self, cfg: GenConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.tz = timezone(timedelta(minutes=cfg.offset_minutes))
        self.records: list[dict] = []
        self.gps: list[tuple[datetime, float, float]] = []
        self.counters: dict[str, int] = {}

    def next_id(self, prefix: str) -> str:
        self.counters[prefix] = self.counters.get(prefix, 0) + 1
        return f"{prefix}-{self.counters[prefix]:04d}"

    def ts(self, dt: datetime) -> str:
        return dt.astimezone(self.tz).isoformat()

    def local(self, day: date, minute: int) -> datetime:
        return datetime(day.year, day.month, day.day, tzinfo=self.tz) + timedelta(minutes=int(minute))

    def uniform_min(self, lo: int, hi: int) -> int:
        return int(self.rng.integers(lo, hi + 1))

    # world -----------------------------------------------------------------

    def build_world(self):
        cfg, rng = self.cfg, self.rng
        self.owner = {"id": "p:owner", "name": "Alex Doe", "aliases": ["alex.doe@mail.example", "+15550100"]}
        names = rng.permutation(len(_FIRST) * len(_LAST))[: cfg.n_people]
        self.people = []
        for k, idx in enumerate(sorted(int(i) for i in names)):
            first, last = _FIRST[idx // len(_LAST)], _LAST[idx % len(_LAST)]
            self.people.append(
                {
                    "id": f"p:{k + 1:03d}",
                    "name": f"{first} {last}",
                    "aliases": [f"{first.lower()}.{last.lower()}@mail.example", f"+1555{2000 + k:04d}"],
                }
            )
        home = _offset_point(rng, *CENTER, 3000.0)
        market = _offset_point(rng, *CENTER, 3000.0)
        while _dist_m(home, market) < MIN_VENUE_SEPARATION_M:
            market = _offset_point(rng, *CENTER, 3000.0)
        self.home = {"id": "place:home", "name": "Home", "category": "Home", "lat": home[0], "lon": home[1]}
        self.market = {
            "id": "place:market",
            "name": "Fresh Basket Market",
            "category": "Supermarket",
            "lat": market[0],
            "lon": market[1],
        }
        taken = [home, market]
        combos = rng.permutation(len(_ADJ) * len(_NOUN))[: cfg.n_venues]
        self.venues = []
        for k, idx in enumerate(int(i) for i in combos):
            name = f"The {_ADJ[idx // len(_NOUN)]} {_NOUN[idx % len(_NOUN)]}"
            pos = _offset_point(rng, *CENTER, 4000.0)
            while any(_dist_m(pos, t) < MIN_VENUE_SEPARATION_M for t in taken):
                pos = _offset_point(rng, *CENTER, 4000.0)
            taken.append(pos)
            self.venues.append(
                {"id": f"place:v{k + 1:03d}", "name": name, "category": "Restaurant", "lat": pos[0], "lon": pos[1]}
            )

    # slots -------------------------------------------------------------------

    def assign_slots(self):
        """Days and venues for every event that carries a place and a time.

        Events land on distinct days (two per day in collision mode) and
        never reuse a venue from the previous or next day, so key windows
        around different events cannot overlap at the same place.
        """
        cfg, rng = self.cfg, self.rng
        start = date.fromisoformat(cfg.start)
        first_day = cfg.planning_lead_days_max
        usable = cfg.span_days - first_day
        kinds = ["episode"] * (math.ceil(cfg.n_episodes / 2) if cfg.collisions else cfg.n_episodes)
        kinds += ["takeout"] * cfg.n_takeout + ["cancelled_plan"] * cfg.n_cancelled_plan
        days = sorted(int(d) for d in rng.choice(usable, size=len(kinds), replace=False)) if kinds else []
        order = rng.permutation(len(kinds))
        slots = []
        venue_by_day: dict[int, set[str]] = {}
        for d, k in zip(days, order):
            kind = kinds[int(k)]
            per_day = 2 if (cfg.collisions and kind == "episode") else 1
            blocked = venue_by_day.get(d - 1, set()) | venue_by_day.get(d + 1, set())
            choices = [v for v in self.venues if v["id"] not in blocked]
            picks = rng.choice(len(choices), size=per_day, replace=False)
            for j, p in enumerate(sorted(int(x) for x in picks)):
                venue = choices[p]
                venue_by_day.setdefault(d, set()).add(venue["id"])
                meal = ("lunch", "dinner")[j] if per_day == 2 else ("lunch", "dinner")[int(rng.integers(2))]
                slots.append((kind, start + timedelta(days=first_day + d), venue, meal))
        n_ep = 0
        out = []
        for s in slots:
            if s[0] == "episode":
                n_ep += 1
                if n_ep > cfg.n_episodes:
                    continue
            out.append(s)
        return out

    # emitters ----------------------------------------------------------------

    def emit(self, source, when, who, what=None, where=None, how=None, prefix="doc") -> str:
        doc_id = self.next_id(prefix)
        rec = {"doc_id": doc_id, "source": source, "when": when, "who": who}
        if where is not None:
            rec["where"] = where
        if what:
            rec["what"] = what
        if how:
            rec["how"] = how
        self.records.append(rec)
        return doc_id

    def payment(self, at: datetime, venue: dict, category="Restaurant") -> str:
        amount = f"{self.rng.uniform(12, 140):.2f}"
        return self.emit(
            "BankTransaction",
            self.ts(at),
            {"payer": [self.owner["id"]]},
            {"amount": amount, "category": category},
            venue["id"],
            "Card statement",
            "bank",
        )

    def gps_stay(self, arrive: datetime, minutes: int, place: dict, step_min: int = 5):
        t = arrive
        end = arrive + timedelta(minutes=minutes)
        while t <= end:
            lat, lon = _offset_point(self.rng, place["lat"], place["lon"], 25.0)
            self.gps.append((t, lat, lon))
            t += timedelta(minutes=step_min)

    def gps_home(self, at: datetime):
        lat, lon = _offset_point(self.rng, self.home["lat"], self.home["lon"], 25.0)
        self.gps.append((at, lat, lon))

    def planning(self, day: date, venue: dict, meal: str, crew: list[dict], cancel: bool = False):
        lead = self.uniform_min(1, self.cfg.planning_lead_days_max)
        sent_day = day - timedelta(days=lead)
        phrase = "tomorrow" if lead == 1 else f"on {_WEEKDAY[day.weekday()]}"
        t0 = self.local(sent_day, self.uniform_min(9 * 60, 20 * 60))
        everyone = [self.owner["id"]] + [p["id"] for p in crew]
        lead_person = crew[0]
        first = {"body": f"{meal.title()} at {venue['name']} {phrase}?"}
        ids = [
            self.emit(
                "Message",
                self.ts(t0),
                {"from": [lead_person["aliases"][1]], "to": [x for x in everyone if x != lead_person["id"]]},
                first,
                how="Messages",
                prefix="msg",
            )
        ]
        reply = f"Sorry, cannot make it {phrase}" if cancel else f"Sounds good, see you {phrase}"
        t1 = t0 + timedelta(minutes=self.uniform_min(3, 20))
        ids.append(
            self.emit(
                "Message",
                self.ts(t1),
                {"from": [self.owner["aliases"][1]], "to": [p["id"] for p in crew]},
                {"body": reply},
                how="Messages",
                prefix="msg",
            )
        )
        return ids

    def reservation(self, day: date, start: datetime, venue: dict, party: int) -> str:
        lead = self.uniform_min(1, 5)
        sent = self.local(day - timedelta(days=lead), self.uniform_min(9 * 60, 17 * 60))
        hhmm = start.astimezone(self.tz).strftime("%I:%M %p").lstrip("0")
        return self.emit(
            "Email",
            self.ts(sent),
            {"from": [f"bookings@{_slug(venue['name'])}.example"], "to": [self.owner["aliases"][0]]},
            {
                "subject": f"Your reservation at {venue['name']}",
                "body": f"Table for {party} on {_WEEKDAY[day.weekday()]} at {hhmm}. Reply to change your booking.",
            },
            how="Mail",
            prefix="mail",
        )

    def post(self, end: datetime, venue: dict, crew: list[dict]) -> str:
        at = end + timedelta(minutes=self.uniform_min(5, self.cfg.post_delay_max_min))
        return self.emit(
            "SocialPost",
            self.ts(at),
            {"author": [self.owner["id"]], "tags": [p["id"] for p in crew]},
            {"body": "Great evening with good friends"},
            venue["id"],
            "Social",
            "post",
        )

    def ride(self, start: datetime, venue: dict) -> list[str]:
        pickup = start - timedelta(minutes=self.cfg.ride_lead_min)
        receipt = self.emit(
            "Email",
            self.ts(pickup + timedelta(minutes=20)),
            {"from": ["receipts@rides.example"], "to": [self.owner["aliases"][0]]},
            {"subject": f"Your ride to {venue['name']}", "body": "Trip receipt attached. Thanks for riding."},
            how="Mail",
            prefix="mail",
        )
        pay = self.emit(
            "BankTransaction",
            self.ts(pickup + timedelta(minutes=22)),
            {"payer": [self.owner["id"]]},
            {"amount": f"{self.rng.uniform(8, 30):.2f}", "category": "Rideshare"},
            how="Card statement",
            prefix="bank",
        )
        return [receipt, pay]

    # episodes ------------------------------------------------------------------

    def episode(self, k: int, day: date, venue: dict, meal: str) -> dict:
        cfg, rng = self.cfg, self.rng
        start_min = self.uniform_min(11 * 60 + 30, 13 * 60) if meal == "lunch" else self.uniform_min(18 * 60, 20 * 60)
        start = self.local(day, start_min)
        duration = self.uniform_min(50, 110)
        end = start + timedelta(minutes=duration)
        n_crew = int(rng.integers(1, min(3, len(self.people)) + 1))
        crew = [self.people[int(i)] for i in sorted(rng.choice(len(self.people), size=n_crew, replace=False))]
        # draw every coin up front so one kind's probability does not shift the others
        coins = {kind: rng.random() < getattr(cfg, "p_" + kind) for kind in TRACE_KINDS}
        docs = []
        if coins["planning"]:
            docs += self.planning(day, venue, meal, crew)
        if coins["reservation"]:
            docs.append(self.reservation(day, start, venue, n_crew + 1))
        if coins["ride"]:
            docs += self.ride(start, venue)
        if coins["gps"]:
            self.gps_home(start - timedelta(minutes=45))
            self.gps_stay(start, duration, venue)
            self.gps_home(end + timedelta(minutes=30))
        if coins["payment"]:
            docs.append(self.payment(end - timedelta(minutes=self.uniform_min(2, 10)), venue))
        if coins["post"]:
            docs.append(self.post(end, venue, crew))
        return {
            "id": f"gold-{k:04d}",
            "date": day.isoformat(),
            "where": {"id": venue["id"], "name": venue["name"]},
            "who": sorted([self.owner["id"]] + [p["id"] for p in crew]),
            "start": self.ts(start),
            "end": self.ts(end),
            "meal": meal,
            "traces": sorted(k for k, v in coins.items() if v),
            "records": docs,
        }

    def takeout(self, day: date, venue: dict) -> list[dict]:
        at = self.local(day, self.uniform_min(17 * 60, 20 * 60 + 30))
        self.gps_home(at - timedelta(minutes=30))
        self.gps_stay(at, self.uniform_min(3, 10), venue, step_min=3)
        self.gps_home(at + timedelta(minutes=30))
        return [{"doc_id": self.payment(at + timedelta(minutes=2), venue), "kind": "takeout"}]

    def supermarket(self) -> list[dict]:
        day = date.fromisoformat(self.cfg.start) + timedelta(days=int(self.rng.integers(self.cfg.span_days)))
        at = self.local(day, self.uniform_min(9 * 60, 21 * 60))
        return [{"doc_id": self.payment(at, self.market, category="Supermarket"), "kind": "supermarket"}]

    def keyword_email(self) -> list[dict]:
        day = date.fromisoformat(self.cfg.start) + timedelta(days=int(self.rng.integers(self.cfg.span_days)))
        at = self.local(day, self.uniform_min(6 * 60, 22 * 60))
        subject, body = _NEWSLETTER[int(self.rng.integers(len(_NEWSLETTER)))]
        doc = self.emit(
            "Email",
            self.ts(at),
            {"from": ["news@foodletter.example"], "to": [self.owner["aliases"][0]]},
            {"subject": subject, "body": body},
            how="Mail",
            prefix="mail",
        )
        return [{"doc_id": doc, "kind": "keyword_email"}]

    def cancelled(self, day: date, venue: dict, meal: str) -> list[dict]:
        crew = [self.people[int(self.rng.integers(len(self.people)))]]
        return [{"doc_id": d, "kind": "cancelled_plan"} for d in self.planning(day, venue, meal, crew, cancel=True)]


@dataclass
class SyntheticCorpus:
    config: GenConfig
    files: dict[str, str]
    gold: dict

    def write(self, out: str | Path) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (out / name).write_text(text, encoding="utf-8")
        (out / "gold.json").write_text(json.dumps(self.gold, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return out

    def load(self, out: str | Path) -> Corpus:
        return load_corpus(self.write(out))


def _jsonl(rows) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def generate(config: GenConfig) -> SyntheticCorpus:
    """Build a corpus and its gold file; the same config gives identical bytes."""
    cfg = config.validate()
    b = _Builder(cfg)
    b.build_world()
    slots = b.assign_slots()
    gold_eps, distractors = [], []
    k = 0
    for kind, day, venue, meal in slots:
        if kind == "episode":
            k += 1
            gold_eps.append(b.episode(k, day, venue, meal))
        elif kind == "takeout":
            distractors += b.takeout(day, venue)
        else:
            distractors += b.cancelled(day, venue, meal)
    for _ in range(cfg.n_supermarket):
        distractors += b.supermarket()
    for _ in range(cfg.n_keyword_email):
        distractors += b.keyword_email()

    b.records.sort(key=lambda r: r["doc_id"])
    gps = sorted(b.gps)
    files = {
        RECORDS_FILE: _jsonl(b.records),
        PEOPLE_FILE: _jsonl([b.owner] + b.people),
        PLACES_FILE: _jsonl([b.home, b.market] + b.venues),
        META_FILE: json.dumps({"owner": b.owner["id"]}, sort_keys=True) + "\n",
    }
    if gps:
        files[GPS_FILE] = "timestamp,lat,lon\n" + "".join(f"{b.ts(t)},{lat:.6f},{lon:.6f}\n" for t, lat, lon in gps)
    gold = {
        "script": "Eating_Out",
        "config": cfg.to_json(),
        "corpus_digest": digest_texts(files),
        "episodes": sorted(gold_eps, key=lambda e: e["id"]),
        "distractors": sorted(distractors, key=lambda d: d["doc_id"]),
    }
    log.info("generated %d records, %d gps fixes, %d gold episodes", len(b.records), len(gps), len(gold_eps))
    return SyntheticCorpus(cfg, files, gold)
