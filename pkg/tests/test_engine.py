import itertools
import json
import random
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import write_corpus
from episodic.dsl import Comparator, KeyDecl
from episodic.engine import (
    CandidateEpisode,
    EngineContext,
    EngineSettings,
    key_compatible,
    key_matrix,
    run,
)
from episodic.ingest import ingest
from episodic.model import PersonRef, PlaceRef, TimeSpec
from episodic.scoring import SCORE_CEILING, ScoreOutOfRange, hooper

UTC = timezone.utc

PLACES = [
    {"id": "place:aurora", "name": "Cafe Aurora", "category": "Restaurant", "lat": 40.5, "lon": -74.4},
    {"id": "place:borealis", "name": "Borealis Grill", "category": "Restaurant", "lat": 40.6, "lon": -74.3},
    {"id": "place:market", "name": "Green Market", "category": "Supermarket", "lat": 40.52, "lon": -74.42},
]


def pay(doc_id, when, place="place:aurora", category="Restaurant"):
    return {
        "doc_id": doc_id,
        "source": "BankTransaction",
        "when": when,
        "who": {"payer": ["p:alex"]},
        "where": place,
        "what": {"category": category},
    }


def mail(doc_id, when, subject, body=None):
    what = {"subject": subject}
    if body:
        what["body"] = body
    return {"doc_id": doc_id, "source": "Email", "when": when, "what": what}


def run_on(tmp_path, compiled, records, **kw):
    corpus = ingest(write_corpus(tmp_path, records, places=PLACES, meta={"owner": "p:alex"}))
    return run(compiled, None, corpus, EngineSettings(**kw))


# ---------------------------------------------------------------------------
# score combination


def test_hooper_worked_examples():
    assert hooper([0.8, 0.3]) == pytest.approx(0.86, abs=1e-12)
    assert hooper([0.3, 0.3, 0.3]) == pytest.approx(0.657, abs=1e-12)
    assert hooper([]) == 0.0
    assert hooper([0.18]) == 0.18


def test_hooper_rejects_out_of_range():
    for bad in ([1.0], [-0.1], [0.5, 1.2]):
        with pytest.raises(ScoreOutOfRange):
            hooper(bad)


_scores = st.lists(st.floats(0.0, 0.95), max_size=8)


@given(_scores, st.randoms())
def test_hooper_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert hooper(xs) == hooper(ys)


@given(_scores, st.floats(0.0, 0.95))
def test_hooper_monotone_and_bounded(xs, y):
    assert hooper(xs + [y]) >= hooper(xs)
    assert hooper(xs + [y]) >= y
    assert hooper(xs) <= SCORE_CEILING < 1.0


@given(st.lists(st.floats(0.0, 0.95), min_size=1, max_size=8))
def test_hooper_matches_product_form(xs):
    assert hooper(xs) == pytest.approx(1 - np.prod([1 - x for x in xs]), abs=1e-12)


# ---------------------------------------------------------------------------
# keys


T0 = datetime(2019, 3, 14, 19, tzinfo=UTC)
AURORA = PlaceRef("place:aurora", "Cafe Aurora", "Restaurant", (40.5, -74.4))
NEAR = PlaceRef("place:near", "Near", "Restaurant", (40.5005, -74.4))
FAR = PlaceRef("place:far", "Far", "Restaurant", (40.6, -74.3))

KEYS = (
    KeyDecl("where", "where", Comparator("ExactPlace"), True),
    KeyDecl("when", "when", Comparator("TimeWindow", 6.0), True),
    KeyDecl("who", "who", Comparator("WhoJaccard", 0.5), False),
)
GEO = KeyDecl("where", "where", Comparator("GeoRadius", 100.0), True)
OPT_PLACE = KeyDecl("where", "where", Comparator("ExactPlace"), False)


def cand(eid, where=None, hours=0.0, who=None):
    props = {"when": TimeSpec(T0 + timedelta(hours=hours), T0 + timedelta(hours=hours))}
    if where is not None:
        props["where"] = frozenset(where)
    if who is not None:
        props["who"] = frozenset(PersonRef(p) for p in who)
    return CandidateEpisode(eid, "S", (), props=props)


def test_key_compatible_examples():
    a = cand("a", [AURORA], 0, ["p1", "p2"])
    assert key_compatible(a, cand("b", [AURORA], 5.9), KEYS).merged
    assert not key_compatible(a, cand("b", [AURORA], 6.1), KEYS).merged
    assert not key_compatible(a, cand("b", [FAR], 1), KEYS).merged
    # a missing required place blocks the merge, a missing optional one does not
    assert not key_compatible(a, cand("b", None, 1), KEYS).merged
    assert key_compatible(a, cand("b", None, 1), (OPT_PLACE,)).merged
    d = key_compatible(a, cand("b", [AURORA], 1, ["p3"]), KEYS)
    assert d.merged and dict(d.key_results)["who"] is False


def test_geo_radius_key():
    assert key_compatible(cand("a", [AURORA]), cand("b", [NEAR]), (GEO,)).merged
    assert not key_compatible(cand("a", [AURORA]), cand("b", [FAR]), (GEO,)).merged


_place = st.sampled_from([AURORA, NEAR, FAR])
_cand = st.tuples(
    st.one_of(st.none(), st.sets(_place, min_size=1, max_size=2)),
    st.floats(0, 20),
    st.one_of(st.none(), st.sets(st.sampled_from(["p1", "p2", "p3", "p4"]), max_size=3)),
)


@settings(max_examples=80, deadline=None)
@given(st.lists(_cand, min_size=1, max_size=7))
def test_key_matrix_matches_pairwise(specs):
    cands = [cand(f"c{i}", w, h, who) for i, (w, h, who) in enumerate(specs)]
    for key in KEYS + (GEO, OPT_PLACE):
        m = key_matrix(cands, key)
        for i, j in itertools.product(range(len(cands)), repeat=2):
            want = key_compatible(cands[i], cands[j], (key,)).key_results[0][1]
            assert m[i, j] == want, (key, i, j)


# ---------------------------------------------------------------------------
# runs


def test_payment_and_weak_email_merge(tmp_path, compiled):
    res = run_on(
        tmp_path,
        compiled,
        [pay("b1", "2019-03-14T19:30:00Z"), mail("e1", "2019-03-14T15:00:00Z", "Dinner at Cafe Aurora")],
    )
    [ep] = res.episodes
    assert ep.units == {"b1", "e1"}
    assert ep.score == pytest.approx(0.86, abs=1e-12)
    assert ep.episode_id == "Eating_Out:b1"


def test_three_weak_emails_merge(tmp_path, compiled):
    res = run_on(
        tmp_path,
        compiled,
        [
            mail("e1", "2019-03-14T12:00:00Z", "dinner at Cafe Aurora"),
            mail("e2", "2019-03-14T13:00:00Z", "Cafe Aurora for dinner"),
            mail("e3", "2019-03-14T14:00:00Z", "dinner plans Cafe Aurora"),
        ],
    )
    [ep] = res.episodes
    assert ep.score == pytest.approx(0.657, abs=1e-12)
    assert len(res.merges) == 1
    assert len(res.merges[0].parts) == 3


def test_ride_receipt_attaches_with_discount(tmp_path, compiled):
    res = run_on(
        tmp_path,
        compiled,
        [
            pay("b1", "2019-03-14T19:30:00Z"),
            mail("e1", "2019-03-14T15:00:00Z", "Dinner at Cafe Aurora"),
            mail("r1", "2019-03-14T18:40:00Z", "Your ride to Cafe Aurora"),
        ],
    )
    [ep] = res.episodes
    [att] = ep.attached
    assert att.doc_id == "r1" and att.doc_score == 0.5
    # 1 - (1 - 0.86)(1 - 0.5 * 0.5)
    assert ep.score == pytest.approx(0.895, abs=1e-12)
    assert "goToPlace" in ep.instantiated_steps


def test_contextual_hit_far_in_time_stays_free(tmp_path, compiled):
    res = run_on(
        tmp_path,
        compiled,
        [pay("b1", "2019-03-14T19:30:00Z"), mail("r1", "2019-03-15T18:40:00Z", "Your ride to Cafe Aurora")],
    )
    [ep] = res.episodes
    assert ep.attached == ()


def test_attach_tie_goes_to_smaller_id(tmp_path, compiled):
    res = run_on(
        tmp_path,
        compiled,
        [
            pay("b2", "2019-03-14T19:00:00Z", "place:borealis"),
            pay("b1", "2019-03-14T19:00:00Z", "place:aurora"),
            mail("r1", "2019-03-14T17:00:00Z", "Reservation confirmed"),
        ],
    )
    by_id = {e.episode_id: e for e in res.episodes}
    assert [h.doc_id for h in by_id["Eating_Out:b1"].attached] == ["r1"]
    assert by_id["Eating_Out:b2"].attached == ()
    assert [e.episode_id for e in res.episodes] == ["Eating_Out:b1", "Eating_Out:b2"]


def test_supermarket_only_gives_no_episodes(tmp_path, compiled):
    res = run_on(tmp_path, compiled, [pay("b1", "2019-03-14T10:00:00Z", "place:market", "Supermarket")])
    assert res.episodes == [] and res.iterations == 0


def test_two_outings_same_day(tmp_path, compiled):
    res = run_on(
        tmp_path,
        compiled,
        [pay("b1", "2019-03-14T12:30:00Z", "place:borealis"), pay("b2", "2019-03-14T19:30:00Z", "place:aurora")],
    )
    assert len(res.episodes) == 2


def test_time_window_override_splits(tmp_path, compiled):
    records = [pay("b1", "2019-03-14T12:30:00Z"), pay("b2", "2019-03-14T17:30:00Z")]
    assert len(run_on(tmp_path / "a", compiled, records).episodes) == 1
    assert len(run_on(tmp_path / "b", compiled, records, time_window_h=2).episodes) == 2


def test_zero_discount_override_is_respected(compiled):
    ctx = EngineContext.build(compiled, EngineSettings(attach_discount=0.0))
    assert ctx.attach_discount == 0.0
    assert ctx.attach_window_h == 6.0
    assert ctx.thresholds()["key.whenEatingOccurred"] == {"comparator": "TimeWindow(6)", "required": True}


def test_dinner_week_episode(dinner_week, compiled):
    res = run(compiled, None, ingest(dinner_week))
    [ep] = res.episodes
    assert ep.episode_id == "Eating_Out:bank-001"
    assert {d for h in ep.members + ep.attached for d in h.records} == {
        "bank-001",
        "email-001",
        "gps-visit-001",
        "msg-001",
        "msg-002",
    }
    assert [h.doc_id for h in ep.attached] == ["email-001"]
    # 1 - 0.2 * 0.2 * 0.82 * (1 - 0.65 * 0.5)
    assert ep.score == pytest.approx(1 - 0.2 * 0.2 * 0.82 * (1 - 0.325), abs=1e-12)
    s = ep.summary
    assert {p.canonical_id for p in s.who} == {"p:alex", "p:sam"}
    assert {p.canonical_id for p in s.where} == {"place:aurora"}
    assert s.why == "eat out at a restaurant"
    assert res.iterations <= res.bound


def test_report_is_deterministic_under_record_order(tmp_path, dinner_week, compiled):
    lines = (dinner_week / "records.jsonl").read_text().splitlines()
    for name in ("people.jsonl", "places.jsonl", "corpus.json"):
        (tmp_path / name).write_text((dinner_week / name).read_text())
    random.Random(7).shuffle(lines)
    (tmp_path / "records.jsonl").write_text("\n".join(lines) + "\n")
    a = run(compiled, None, ingest(dinner_week)).dumps()
    b = run(compiled, None, ingest(tmp_path)).dumps()
    assert a == b
    doc = json.loads(a)
    assert doc["episodes"][0]["rank"] == 1
    assert doc["stats"]["iterations"] <= doc["stats"]["iteration_bound"]


def test_run_by_name(library, dinner_week):
    res = run(library, "Eating_Out", ingest(dinner_week))
    assert res.script == "Eating_Out" and len(res.episodes) == 1
