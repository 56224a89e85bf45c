import json
import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from episodic.engine import run
from episodic.evaluation import evaluate
from episodic.ingest import corpus_digest, ingest, load_corpus
from episodic.kernels import haversine_m
from episodic.synth import GenConfig, InvalidConfig, generate

FULL = dict(p_payment=1.0, p_gps=1.0, p_reservation=1.0, p_planning=1.0, p_post=1.0, p_ride=1.0)
QUIET = dict(n_keyword_email=0, n_takeout=0, n_supermarket=0, n_cancelled_plan=0)


def test_same_config_same_bytes():
    a = generate(GenConfig(seed=5))
    b = generate(GenConfig(seed=5))
    assert a.files == b.files and a.gold == b.gold
    assert generate(GenConfig(seed=6)).files != a.files


def test_written_corpus_loads_cleanly(tmp_path):
    s = generate(GenConfig(seed=1, **FULL))
    c = s.load(tmp_path)
    assert c.quarantine == []
    assert corpus_digest(tmp_path) == s.gold["corpus_digest"]
    assert json.loads((tmp_path / "gold.json").read_text()) == s.gold


def test_gold_records_exist_and_distractors_are_disjoint(tmp_path):
    s = generate(GenConfig(seed=2))
    c = s.load(tmp_path)
    gold_records = {r for e in s.gold["episodes"] for r in e["records"]}
    assert gold_records <= set(c.records)
    assert not gold_records & {d["doc_id"] for d in s.gold["distractors"]}
    kinds = Counter(d["kind"] for d in s.gold["distractors"])
    assert kinds["takeout"] >= 3 and kinds["supermarket"] == 4


def test_venues_are_far_apart(tmp_path):
    s = generate(GenConfig(seed=3, n_venues=20))
    venues = [json.loads(x) for x in s.files["places.jsonl"].splitlines()]
    geo = [(v["lat"], v["lon"]) for v in venues if v["id"].startswith("place:v")]
    assert len(geo) == 20
    assert min(haversine_m(*a, *b) for i, a in enumerate(geo) for b in geo[i + 1 :]) > 300


def test_one_episode_per_day_unless_collisions():
    plain = generate(GenConfig(seed=4, n_episodes=12))
    assert max(Counter(e["date"] for e in plain.gold["episodes"]).values()) == 1
    both = generate(GenConfig(seed=4, n_episodes=12, collisions=True))
    per_day = Counter(e["date"] for e in both.gold["episodes"])
    assert max(per_day.values()) == 2
    for day in per_day:
        places = {e["where"]["id"] for e in both.gold["episodes"] if e["date"] == day}
        assert len(places) == per_day[day]


def test_full_emission_traces():
    s = generate(GenConfig(seed=8, n_episodes=5, **FULL, **QUIET))
    for e in s.gold["episodes"]:
        assert set(e["traces"]) == {"payment", "gps", "reservation", "planning", "post", "ride"}
    assert s.gold["distractors"] == []


@pytest.mark.parametrize(
    "bad",
    [
        {"p_gps": 1.5},
        {"n_takeout": -1},
        {"n_venues": 1},
        {"days": 2, "n_episodes": 10},
        {"start": "March"},
        {"planning_lead_days_max": 0},
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(InvalidConfig):
        GenConfig(**bad).validate()


def test_config_json_roundtrip_and_unknown_key():
    cfg = GenConfig(seed=9, n_episodes=3)
    assert GenConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(InvalidConfig):
        GenConfig.from_json({"seeed": 1})


def test_span_grows_with_demand():
    cfg = GenConfig(n_episodes=40, n_takeout=10)
    assert cfg.span_days >= cfg.slots_needed()
    assert GenConfig(n_episodes=40, collisions=True, **QUIET).slots_needed() == 20


def test_small_full_emission_run_is_perfect(tmp_path, compiled):
    s = generate(GenConfig(seed=11, n_episodes=8, **FULL, **QUIET))
    s.write(tmp_path)
    res = run(compiled, None, ingest(tmp_path))
    ev = evaluate(res.to_json(), s.gold)
    assert ev.recall == 1.0 and ev.precision == 1.0


@settings(max_examples=15, deadline=None)
@given(
    st.integers(0, 2**32),
    st.integers(0, 6),
    st.floats(0, 1),
    st.floats(0, 1),
    st.booleans(),
)
def test_random_configs_generate_valid_corpora(tmp_path_factory, seed, n, p_pay, p_gps, collide):
    cfg = GenConfig(seed=seed, n_episodes=n, p_payment=p_pay, p_gps=p_gps, collisions=collide)
    s = generate(cfg)
    out = tmp_path_factory.mktemp("gen")
    c = load_corpus(s.write(out))
    assert c.quarantine == []
    assert len(s.gold["episodes"]) == n
    assert all(not math.isnan(v["lat"]) for v in map(json.loads, s.files["places.jsonl"].splitlines()) if "lat" in v)
