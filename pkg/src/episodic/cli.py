"""Command line entry point: ``episodic {match,eval,gen,explain,ingest,validate}``.

Exit codes: 0 success, 2 invalid input (validation errors, unknown names,
bad config), 3 script parse failure, 4 corpus failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from datetime import date
from importlib import resources
from pathlib import Path

from . import __version__
from .dsl import DslError, load_library, validate_library
from .engine import EngineSettings, dumps, manifest, run
from .evaluation import DEFAULT_K, EvalError, evaluate_files
from .ingest import CORPUS_FILES, CorpusError, IngestSettings, load_corpus, preprocess
from .synth import GenConfig, InvalidConfig, generate

log = logging.getLogger("episodic")

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_CORPUS = 0, 2, 3, 4


def default_library() -> Path:
    return Path(str(resources.files("episodic") / "data" / "eating_out.script"))


def _err(msg: str):
    print(msg, file=sys.stderr)


def _sha_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _ingest_settings(args) -> IngestSettings:
    return IngestSettings(
        stay_d_max_m=args.stay_d_max_m,
        stay_t_min_min=args.stay_t_min_min,
        snap_radius_m=args.snap_radius_m,
        burst_gap_min=args.burst_gap_min,
    )


def _add_ingest_flags(p):
    d = IngestSettings()
    p.add_argument("--stay-d-max-m", type=float, default=d.stay_d_max_m, help="stay-point distance threshold (m)")
    p.add_argument("--stay-t-min-min", type=float, default=d.stay_t_min_min, help="stay-point minimum dwell (min)")
    p.add_argument("--snap-radius-m", type=float, default=d.snap_radius_m, help="place snap/merge radius (m)")
    p.add_argument("--burst-gap-min", type=float, default=d.burst_gap_min, help="max gap inside a message burst (min)")


def _load_library(path: Path):
    """Parsed and validated library, or an exit code."""
    try:
        lib = load_library(path)
    except OSError as exc:
        _err(f"error: cannot read {path}: {exc}")
        return EXIT_PARSE
    except DslError as exc:
        for e in exc.errors:
            _err(f"{path}:{e}")
        return EXIT_PARSE
    errors = validate_library(lib)
    if errors:
        for e in errors:
            _err(f"{path}:{e}")
        return EXIT_INVALID
    return lib


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_match(args) -> int:
    scripts = Path(args.scripts) if args.scripts else default_library()
    lib = _load_library(scripts)
    if isinstance(lib, int):
        return lib
    top = [s.name for s in lib.top_level()]
    name = args.script or (top[0] if len(top) == 1 else None)
    if name not in top:
        _err(f"error: unknown script {args.script!r}; top-level scripts: {', '.join(top) or 'none'}")
        return EXIT_INVALID
    corpus_dir = Path(args.corpus)
    ingest_settings = _ingest_settings(args)
    try:
        corpus = preprocess(load_corpus(corpus_dir), ingest_settings)
    except (CorpusError, ValueError) as exc:
        _err(f"error: corpus {corpus_dir}: {exc}")
        return EXIT_CORPUS
    for q in corpus.quarantine:
        _err(f"warning: quarantined line {q.line} ({q.doc_id or '?'}): {'; '.join(q.errors)}")
    settings = EngineSettings(
        time_window_h=args.time_window_h,
        geo_radius_m=args.geo_radius_m,
        who_jaccard=args.who_jaccard,
        attach_window_h=args.attach_window_h,
        attach_radius_m=args.attach_radius_m,
        attach_discount=args.attach_discount,
    )
    result = run(lib, name, corpus, settings)
    text = result.dumps()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    inputs = {
        f"corpus/{n}": _sha_file(corpus_dir / n) for n in CORPUS_FILES if (corpus_dir / n).exists()
    }
    inputs["corpus_digest"] = corpus.digest
    m = manifest(text, inputs, scripts.read_text(encoding="utf-8"), result.thresholds, {"ingest": ingest_settings.to_json()})
    mpath = Path(args.manifest) if args.manifest else out.with_name(out.name + ".manifest.json")
    mpath.write_text(dumps(m), encoding="utf-8")
    _err(f"{len(result.episodes)} episode(s) from {len(result.hits)} evidence hit(s) -> {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scripts = Path(args.scripts) if args.scripts else default_library()
    lib = _load_library(scripts)
    if isinstance(lib, int):
        return lib
    _err(f"ok: {len(lib)} script(s), top-level: {', '.join(s.name for s in lib.top_level())}")
    return EXIT_OK


def _parse_k(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from exc
    if not ks or any(k <= 0 for k in ks):
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def cmd_eval(args) -> int:
    if len(args.pred) != len(args.gold):
        _err("error: give one --gold for every --pred")
        return EXIT_INVALID
    try:
        report = evaluate_files(list(zip(args.pred, args.gold)), args.k)
    except EvalError as exc:
        _err(f"error: {exc}")
        return EXIT_INVALID
    text = report.to_text()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(dumps(report.to_json()), encoding="utf-8")
        out.with_suffix(".txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gen(args) -> int:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            _err(f"error: config {args.config}: {exc}")
            return EXIT_INVALID
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = GenConfig.from_json(raw)
    except InvalidConfig as exc:
        _err(f"error: invalid config: {exc}")
        return EXIT_INVALID
    synth = generate(cfg)
    out = synth.write(args.out)
    _err(f"{len(synth.gold['episodes'])} gold episode(s), {len(synth.gold['distractors'])} distractor(s) -> {out}")
    return EXIT_OK


def _fmt_day(iso: str) -> str:
    d = date.fromisoformat(iso[:10])
    return f"{d:%A} {d.day} {d:%B %Y}"


def narrate(report: dict, episode: dict) -> str:
    """Narrative for one episode; empty dimensions drop their clause."""
    w = episode["w5h"]
    owner = report.get("owner")
    where = [p["name"] for p in w.get("where", [])]
    who = [p["name"] or p["id"] for p in w.get("who", []) if p["id"] != owner]
    when = w.get("when")
    clauses = {
        "at": f" at {' / '.join(where)}" if where else "",
        "on": f" on {_fmt_day(when['start'])}" if when else "",
        "with": f" with {_join(who)}" if who else "",
    }
    template = report.get("narrative") or (report.get("goal", "Episode") + "{at}{on}{with}.")
    lines = [template.format(**clauses)]
    lines.append(f"Score {episode['score']:.3f} ({episode['episode_id']}). Evidence:")
    for ev in episode["evidence"]:
        recs = ", ".join(ev.get("records", [ev["doc_id"]]))
        lines.append(f"  - [{ev['role']}] {ev['step']} ({ev['strength']}, {ev['doc_score']:.3f}): {recs}")
    return "\n".join(lines)


def _join(names: list[str]) -> str:
    if len(names) < 2:
        return "".join(names)
    return ", ".join(names[:-1]) + " and " + names[-1]


def cmd_explain(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"error: report {args.report}: {exc}")
        return EXIT_INVALID
    for ep in report.get("episodes", []):
        if ep["episode_id"] == args.episode:
            print(narrate(report, ep))
            return EXIT_OK
    _err(f"error: UnknownEpisode: {args.episode!r} is not in {args.report}")
    return EXIT_INVALID


def cmd_ingest(args) -> int:
    try:
        corpus = preprocess(load_corpus(args.corpus), _ingest_settings(args))
    except (CorpusError, ValueError) as exc:
        _err(f"error: corpus {args.corpus}: {exc}")
        return EXIT_CORPUS
    summary = {
        "corpus_digest": corpus.digest,
        "records": len(corpus.records),
        "quarantined": [q.to_json() for q in corpus.quarantine],
        "people": len(corpus.people),
        "places": len(corpus.places),
        "groups": {g: list(m) for g, m in corpus.groups.items()},
        "visits": [
            {"doc_id": v.doc_id, "place": v.place.canonical_id, "arrive": v.arrive.isoformat(), "depart": v.depart.isoformat(), "points": v.point_count}
            for v in corpus.visits
        ],
        "dates": {d: [[p, t.local_start().date().isoformat()] for p, t in ds] for d, ds in corpus.dates.items()},
        "date_rules": {
            "on <weekday>": "first such weekday strictly after the record date",
            "this <weekday>": "that weekday in the record's ISO week if not past, else the next one",
            "next <weekday>": "that weekday in the following ISO week",
        },
        "settings": _ingest_settings(args).to_json(),
    }
    text = dumps(summary)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="episodic", description="Reconstruct episodes from personal digital traces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="build episodes of one script over a corpus")
    p.add_argument("--scripts", help="script library file (default: bundled Eating_Out)")
    p.add_argument("--script", help="top-level script name")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="episode report path")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.add_argument("--time-window-h", type=float, help="override the TimeWindow merge key (hours)")
    p.add_argument("--geo-radius-m", type=float, help="override the GeoRadius merge key (meters)")
    p.add_argument("--who-jaccard", type=float, help="override the WhoJaccard threshold")
    p.add_argument("--attach-window-h", type=float, help="attach window for contextual evidence (hours)")
    p.add_argument("--attach-radius-m", type=float, help="attach radius for contextual evidence (meters)")
    p.add_argument("--attach-discount", type=float, help="score discount for attached evidence")
    _add_ingest_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("validate", help="parse and check a script library")
    p.add_argument("--scripts", help="script library file (default: bundled Eating_Out)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="score episode reports against gold files")
    p.add_argument("--pred", action="append", required=True, help="episode report (repeatable)")
    p.add_argument("--gold", action="append", required=True, help="gold file, paired with --pred in order")
    p.add_argument("--k", type=_parse_k, default=list(DEFAULT_K), help="comma-separated cutoffs, e.g. 1,3,5,10")
    p.add_argument("--out", help="write JSON here and an aligned text table next to it")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="generate a synthetic corpus with gold episodes")
    p.add_argument("--config", help="JSON generator config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("explain", help="narrate one episode of a report")
    p.add_argument("--report", required=True)
    p.add_argument("--episode", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ingest", help="preprocess a corpus and summarize the result")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="write the JSON summary here instead of stdout")
    _add_ingest_flags(p)
    p.set_defaults(func=cmd_ingest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
