import json
import shutil

import pytest

from conftest import SCRIPTS
from episodic.cli import EXIT_CORPUS, EXIT_INVALID, EXIT_OK, EXIT_PARSE, main


def match(corpus, out, *extra):
    return main(["match", "--corpus", str(corpus), "--out", str(out), *extra])


def test_match_writes_report_and_manifest(tmp_path, dinner_week):
    out = tmp_path / "report.json"
    assert match(dinner_week, out) == EXIT_OK
    report = json.loads(out.read_text())
    assert [e["episode_id"] for e in report["episodes"]] == ["Eating_Out:bank-001"]
    m = json.loads((tmp_path / "report.json.manifest.json").read_text())
    assert set(m["inputs"]) >= {"corpus/records.jsonl", "corpus_digest"}
    assert m["thresholds"]["ingest"]["stay_d_max_m"] == 200.0
    assert m["tool"]["kernel_backend"] in {"numba", "numpy"}


def test_match_is_byte_identical(tmp_path, dinner_week):
    match(dinner_week, tmp_path / "a.json")
    match(dinner_week, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_match_override_is_recorded(tmp_path, dinner_week):
    out = tmp_path / "r.json"
    assert match(dinner_week, out, "--time-window-h", "2", "--attach-discount", "0") == EXIT_OK
    th = json.loads(out.read_text())["thresholds"]
    assert th["key.whenEatingOccurred"]["comparator"] == "TimeWindow(2)"
    assert th["attach_discount"] == 0.0


@pytest.mark.parametrize(
    "script, code",
    [("unresolved_ref", EXIT_PARSE), ("cycle", EXIT_INVALID), ("score_out_of_range", EXIT_INVALID)],
)
def test_bad_scripts_exit_codes(tmp_path, dinner_week, capsys, script, code):
    path = SCRIPTS / f"{script}.script"
    assert main(["validate", "--scripts", str(path)]) == code
    assert match(dinner_week, tmp_path / "r.json", "--scripts", str(path)) == code
    assert f"{path}:" in capsys.readouterr().err


def test_unknown_script_name(tmp_path, dinner_week):
    assert match(dinner_week, tmp_path / "r.json", "--script", "Nope") == EXIT_INVALID


def test_corpus_errors(tmp_path, dinner_week):
    assert match(tmp_path / "missing", tmp_path / "r.json") == EXIT_CORPUS
    bad = tmp_path / "dup"
    shutil.copytree(dinner_week, bad)
    lines = (bad / "records.jsonl").read_text().splitlines()
    (bad / "records.jsonl").write_text("\n".join(lines + lines[:1]) + "\n")
    assert match(bad, tmp_path / "r.json") == EXIT_CORPUS


def test_validate_bundled(capsys):
    assert main(["validate"]) == EXIT_OK
    assert "Eating_Out" in capsys.readouterr().err


def test_gen_match_eval_pipeline(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_episodes": 6, "p_payment": 1.0, "p_gps": 1.0}))
    assert main(["gen", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "c")]) == EXIT_OK
    assert main(["gen", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "d")]) == EXIT_OK
    for name in ("records.jsonl", "gps.csv", "gold.json"):
        assert (tmp_path / "c" / name).read_bytes() == (tmp_path / "d" / name).read_bytes()
    assert match(tmp_path / "c", tmp_path / "r.json") == EXIT_OK
    capsys.readouterr()
    args = ["eval", "--pred", str(tmp_path / "r.json"), "--gold", str(tmp_path / "c" / "gold.json")]
    assert main(args + ["--k", "1,3", "--out", str(tmp_path / "ev.json")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "MAP@3" in text and "nDCG@1" in text
    ev = json.loads((tmp_path / "ev.json").read_text())
    assert ev["mean"]["recall_proxy"] == 1.0
    assert (tmp_path / "ev.txt").read_text() == text


def test_eval_mismatched_corpus(tmp_path, dinner_week):
    match(dinner_week, tmp_path / "r.json")
    gold = tmp_path / "g.json"
    gold.write_text(json.dumps({"corpus_digest": "0" * 64, "episodes": []}))
    assert main(["eval", "--pred", str(tmp_path / "r.json"), "--gold", str(gold)]) == EXIT_INVALID


def test_eval_bad_k():
    with pytest.raises(SystemExit):
        main(["eval", "--pred", "a", "--gold", "b", "--k", "0,x"])


def test_gen_invalid_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"p_gps": 2}))
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "c")]) == EXIT_INVALID


def test_explain(tmp_path, dinner_week, capsys):
    match(dinner_week, tmp_path / "r.json")
    capsys.readouterr()
    assert main(["explain", "--report", str(tmp_path / "r.json"), "--episode", "Eating_Out:bank-001"]) == EXIT_OK
    text = capsys.readouterr().out
    first = text.splitlines()[0]
    assert first == "You ate at Cafe Aurora on Friday 15 March 2019 with Sam Lee."
    assert "[attached] makeReservation" in text
    assert main(["explain", "--report", str(tmp_path / "r.json"), "--episode", "nope"]) == EXIT_INVALID


def test_ingest_summary(tmp_path, dinner_week):
    out = tmp_path / "s.json"
    assert main(["ingest", "--corpus", str(dinner_week), "--out", str(out)]) == EXIT_OK
    s = json.loads(out.read_text())
    assert s["records"] == 7
    assert s["groups"] == {"burst:msg-001": ["msg-001", "msg-002"]}
    assert s["dates"]["email-001"] == [["on Friday", "2019-03-15"]]
