"""Episode construction: seed, merge on keys to a fixed point, attach context, rank."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import __version__, kernels
from .dsl.compile import CompiledScript, compile_script
from .dsl.types import KeyDecl, ScriptLibrary, Strength
from .ingest import Corpus
from .matcher import EvidenceHit, build_evidence_set, is_missing, join_props
from .model import PersonRef, PlaceRef, TimeSpec, W5hSummary
from .scoring import ScoreOutOfRange, hooper

log = logging.getLogger(__name__)

__all__ = [
    "CandidateEpisode",
    "EngineContext",
    "EngineSettings",
    "MergeDecision",
    "MergeEvent",
    "RunResult",
    "ScoreOutOfRange",
    "attach_secondary",
    "hooper",
    "key_compatible",
    "merge_step",
    "run",
    "seed_candidates",
]


@dataclass(frozen=True)
class EngineSettings:
    """Threshold overrides; ``None`` keeps the value declared in the script."""

    time_window_h: float | None = None
    geo_radius_m: float | None = None
    who_jaccard: float | None = None
    attach_window_h: float | None = None
    attach_radius_m: float | None = None
    attach_discount: float | None = None


def _pick(override, declared):
    return declared if override is None else override


@dataclass
class EngineContext:
    compiled: CompiledScript
    keys: tuple[KeyDecl, ...]
    dims: dict[str, str]
    attach_window_h: float
    attach_radius_m: float
    attach_discount: float

    @classmethod
    def build(cls, compiled: CompiledScript, settings: EngineSettings) -> "EngineContext":
        keys = []
        for k in compiled.script.keys:
            c = k.comparator
            override = {
                "TimeWindow": settings.time_window_h,
                "GeoRadius": settings.geo_radius_m,
                "WhoJaccard": settings.who_jaccard,
            }.get(c.kind)
            keys.append(k if override is None else replace(k, comparator=replace(c, value=float(override))))
        s = compiled.script
        window = settings.attach_window_h
        if window is None:
            window = s.setting("attach_window_h")
        if window is None:
            window = next((k.comparator.value for k in keys if k.comparator.kind == "TimeWindow"), 6.0)
        return cls(
            compiled=compiled,
            keys=tuple(keys),
            dims={p.name: p.dimension for p in s.props},
            attach_window_h=float(window),
            attach_radius_m=float(_pick(settings.attach_radius_m, s.setting("attach_radius_m"))),
            attach_discount=float(_pick(settings.attach_discount, s.setting("attach_discount"))),
        )

    def prop_of(self, dimension: str) -> str | None:
        for k in self.keys:
            if k.comparator.dimension == dimension:
                return k.prop_name
        return next((p for p, d in self.dims.items() if d == dimension), None)

    def thresholds(self) -> dict:
        out = {f"key.{k.prop_name}": {"comparator": str(k.comparator), "required": k.required} for k in self.keys}
        out.update(
            attach_window_h=self.attach_window_h,
            attach_radius_m=self.attach_radius_m,
            attach_discount=self.attach_discount,
            context_base=float(self.compiled.script.setting("context_base")),
        )
        return out


# ---------------------------------------------------------------------------
# candidates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateEpisode:
    episode_id: str
    script_name: str
    members: tuple[EvidenceHit, ...]
    attached: tuple[EvidenceHit, ...] = ()
    props: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)
    score: float = 0.0
    goal: str | None = None
    dims: dict[str, str] = field(default_factory=dict, compare=False, hash=False, repr=False)

    @property
    def instantiated_steps(self) -> frozenset[str]:
        return frozenset(h.step_name for h in self.members + self.attached)

    @property
    def units(self) -> frozenset[str]:
        return frozenset(h.doc_id for h in self.members + self.attached)

    @property
    def summary(self) -> W5hSummary:
        vals: dict[str, Any] = {"who": frozenset(), "where": frozenset(), "what": frozenset(), "how": frozenset()}
        when = None
        for name, value in self.props.items():
            dim = self.dims.get(name)
            if dim == "when":
                when = value if when is None else (when if value is None else when.hull(value))
            elif dim in vals and value:
                vals[dim] = vals[dim] | value
        return W5hSummary(when=when, why=self.goal, **vals)

    def value(self, prop: str):
        return self.props.get(prop)


def _score(members, attached, discount: float) -> float:
    return hooper([h.doc_score for h in members] + [h.doc_score * discount for h in attached])


def _make(ctx: EngineContext, members, attached) -> CandidateEpisode:
    members = tuple(sorted(members, key=lambda h: (h.doc_id, h.step_name)))
    attached = tuple(sorted(attached, key=lambda h: (h.doc_id, h.step_name)))
    props: dict[str, Any] = {}
    for h in members + attached:
        props = join_props(ctx.dims, props, h.props)
    name = ctx.compiled.name
    return CandidateEpisode(
        episode_id=f"{name}:{min(h.doc_id for h in members)}",
        script_name=name,
        members=members,
        attached=attached,
        props=props,
        score=_score(members, attached, ctx.attach_discount),
        goal=ctx.compiled.script.goal,
        dims=ctx.dims,
    )


def seed_candidates(hits: list[EvidenceHit], ctx: EngineContext) -> list[CandidateEpisode]:
    """One candidate per unit with a strong or weak hit."""
    by_unit: dict[str, list[EvidenceHit]] = {}
    for h in hits:
        if h.strength is not Strength.CONTEXTUAL:
            by_unit.setdefault(h.doc_id, []).append(h)
    return [_make(ctx, hs, ()) for _, hs in sorted(by_unit.items())]


# ---------------------------------------------------------------------------
# keys
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MergeDecision:
    a: str
    b: str
    key_results: tuple[tuple[str, bool], ...]
    merged: bool


def _ids(values) -> set[str]:
    return {getattr(v, "canonical_id", v) for v in values}


def _key_pair(key: KeyDecl, va, vb) -> bool:
    if is_missing(va) or is_missing(vb):
        return not key.required
    kind, value = key.comparator.kind, key.comparator.value
    if kind == "ExactPlace":
        return bool(_ids(va) & _ids(vb))
    if kind == "GeoRadius":
        if _ids(va) & _ids(vb):
            return True
        ga = [p.geo for p in va if p.geo is not None]
        gb = [p.geo for p in vb if p.geo is not None]
        return any(kernels.haversine_m(*x, *y) <= value for x in ga for y in gb)
    if kind == "TimeWindow":
        return va.gap_seconds(vb) <= value * 3600.0
    if kind == "WhoJaccard":
        a, b = _ids(va), _ids(vb)
        return len(a & b) / len(a | b) >= value
    raise ValueError(f"unknown comparator {kind}")


def key_compatible(a: CandidateEpisode, b: CandidateEpisode, keys) -> MergeDecision:
    """Pairwise key check; the merge rule is that every required key passes."""
    results = tuple((k.prop_name, _key_pair(k, a.value(k.prop_name), b.value(k.prop_name))) for k in keys)
    merged = all(ok for (name, ok), k in zip(results, keys) if k.required)
    return MergeDecision(a.episode_id, b.episode_id, results, merged)


def _incidence(sets: list[set[str]]) -> np.ndarray:
    vocab = {x: i for i, x in enumerate(sorted(set().union(*sets)))} if sets else {}
    m = np.zeros((len(sets), len(vocab)))
    for i, s in enumerate(sets):
        for x in s:
            m[i, vocab[x]] = 1.0
    return m


def key_matrix(cands: list[CandidateEpisode], key: KeyDecl) -> np.ndarray:
    """Vectorized :func:`key_compatible` for one key over all candidate pairs."""
    n = len(cands)
    values = [c.value(key.prop_name) for c in cands]
    present = np.array([not is_missing(v) for v in values])
    both = np.outer(present, present)
    kind, thr = key.comparator.kind, key.comparator.value
    ok = np.zeros((n, n), dtype=bool)
    idx = np.flatnonzero(present)
    if len(idx):
        sub = [values[i] for i in idx]
        if kind in ("ExactPlace", "GeoRadius"):
            inc = _incidence([_ids(v) for v in sub])
            res = inc @ inc.T > 0
            if kind == "GeoRadius":
                owners, lat, lon = [], [], []
                for j, v in enumerate(sub):
                    for p in sorted(v):
                        if p.geo is not None:
                            owners.append(j)
                            lat.append(p.geo[0])
                            lon.append(p.geo[1])
                if owners:
                    close = kernels.pairwise_haversine(lat, lon, lat, lon) <= thr
                    c = np.zeros((len(sub), len(owners)))
                    c[owners, np.arange(len(owners))] = 1.0
                    res |= c @ close @ c.T > 0
        elif kind == "TimeWindow":
            s = np.array([v.start_ts for v in sub])
            e = np.array([v.end_ts for v in sub])
            res = kernels.interval_gaps(s, e, s, e) <= thr * 3600.0
        elif kind == "WhoJaccard":
            inc = _incidence([_ids(v) for v in sub])
            inter = inc @ inc.T
            size = inc.sum(axis=1)
            union = size[:, None] + size[None, :] - inter
            res = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0) >= thr
        else:
            raise ValueError(f"unknown comparator {kind}")
        ok[np.ix_(idx, idx)] = res
    if not key.required:
        ok |= ~both
    return ok


def compatibility(cands: list[CandidateEpisode], keys) -> np.ndarray:
    adj = np.ones((len(cands), len(cands)), dtype=bool)
    for k in keys:
        if k.required:
            adj &= key_matrix(cands, k)
    np.fill_diagonal(adj, False)
    return adj


# ---------------------------------------------------------------------------
# merge and attach
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MergeEvent:
    merged: CandidateEpisode
    parts: tuple[CandidateEpisode, ...]


def merge_step(cands: list[CandidateEpisode], ctx: EngineContext, log_to: list | None = None) -> list[CandidateEpisode]:
    """Collapse connected components of the key-compatibility graph."""
    cands = sorted(cands, key=lambda c: c.episode_id)
    if len(cands) < 2:
        return cands
    adj = compatibility(cands, ctx.keys)
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    if n_comp == len(cands):
        return cands
    out = []
    for comp in range(n_comp):
        parts = [cands[i] for i in np.flatnonzero(labels == comp)]
        if len(parts) == 1:
            out.append(parts[0])
            continue
        merged = _make(ctx, [h for p in parts for h in p.members], [h for p in parts for h in p.attached])
        if log_to is not None:
            log_to.append(MergeEvent(merged, tuple(parts)))
        out.append(merged)
    return sorted(out, key=lambda c: c.episode_id)


def _places_close(a, b, radius: float) -> bool:
    if _ids(a) & _ids(b):
        return True
    return any(
        kernels.haversine_m(*p.geo, *q.geo) <= radius for p in a for q in b if p.geo is not None and q.geo is not None
    )


def attach_secondary(
    cands: list[CandidateEpisode], ctx_hits: list[EvidenceHit], ctx: EngineContext, corpus: Corpus
) -> tuple[list[CandidateEpisode], bool]:
    """Attach each free contextual hit to its best compatible candidate.

    A hit from a unit already inside a candidate may only go to that one.
    Otherwise its time must fall inside the attach window of the candidate's
    time and, when the hit has a place, the places must match or lie within
    the attach radius. The highest scoring candidate wins, ties go to the
    smaller ``episode_id``.
    """
    if not cands:
        return cands, False
    taken = {(h.doc_id, h.step_name) for c in cands for h in c.attached}
    owner = {u: c.episode_id for c in cands for u in c.units}
    when_p, where_p = ctx.prop_of("when"), ctx.prop_of("where")
    by_id = {c.episode_id: c for c in cands}
    extra: dict[str, list[EvidenceHit]] = {}
    for hit in ctx_hits:
        if (hit.doc_id, hit.step_name) in taken:
            continue
        if hit.doc_id in owner:
            target = owner[hit.doc_id]
        else:
            h_when = hit.props.get(when_p)
            if h_when is None:
                h_when = _record_time(hit, corpus)
            h_where = hit.props.get(where_p) or frozenset()
            best = None
            for c in cands:
                c_when = c.value(when_p)
                if c_when is None or h_when is None or c_when.gap_seconds(h_when) > ctx.attach_window_h * 3600.0:
                    continue
                if h_where:
                    c_where = c.value(where_p) or frozenset()
                    if not c_where or not _places_close(h_where, c_where, ctx.attach_radius_m):
                        continue
                if best is None or (c.score, best.episode_id) > (best.score, c.episode_id):
                    best = c
            if best is None:
                continue
            target = best.episode_id
        extra.setdefault(target, []).append(hit)
        owner[hit.doc_id] = target
    if not extra:
        return cands, False
    out = []
    for c in cands:
        if c.episode_id in extra:
            c = _make(ctx, c.members, c.attached + tuple(extra[c.episode_id]))
        out.append(c)
    return out, True


def _record_time(hit: EvidenceHit, corpus: Corpus) -> TimeSpec | None:
    times = [corpus.records[d].when for d in hit.records if d in corpus.records]
    out = None
    for t in times:
        out = t if out is None else out.hull(t)
    return out


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    script: str
    goal: str
    episodes: list[CandidateEpisode]
    hits: list[EvidenceHit]
    iterations: int
    bound: int
    merges: list[MergeEvent]
    thresholds: dict
    corpus_digest: str = ""
    owner: str | None = None
    narrative: str | None = None

    def to_json(self) -> dict:
        return {
            "tool": {"name": "episodic", "version": __version__},
            "script": self.script,
            "goal": self.goal,
            "narrative": self.narrative,
            "corpus_digest": self.corpus_digest,
            "owner": self.owner,
            "thresholds": self.thresholds,
            "stats": {
                "evidence_hits": len(self.hits),
                "seeding_hits": sum(h.strength is not Strength.CONTEXTUAL for h in self.hits),
                "contextual_hits": sum(h.strength is Strength.CONTEXTUAL for h in self.hits),
                "iterations": self.iterations,
                "iteration_bound": self.bound,
                "merges": len(self.merges),
            },
            "episodes": [episode_json(e, rank) for rank, e in enumerate(self.episodes, 1)],
        }

    def dumps(self) -> str:
        return dumps(self.to_json())


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _person(p: PersonRef) -> dict:
    return {"id": p.canonical_id, "name": p.display_name}


def _place(p: PlaceRef) -> dict:
    return p.to_json()


def episode_json(e: CandidateEpisode, rank: int) -> dict:
    s = e.summary
    evidence = [dict(h.to_json(), role="member") for h in e.members]
    evidence += [dict(h.to_json(), role="attached") for h in e.attached]
    return {
        "rank": rank,
        "episode_id": e.episode_id,
        "script": e.script_name,
        "score": e.score,
        "steps": sorted(e.instantiated_steps),
        "w5h": {
            "who": [_person(p) for p in sorted(s.who)],
            "where": [_place(p) for p in sorted(s.where)],
            "when": None if s.when is None else {"start": s.when.local_start().isoformat(), "end": s.when.local_end().isoformat()},
            "what": sorted(s.what),
            "why": s.why,
            "how": sorted(s.how),
        },
        "evidence": evidence,
    }


def _rank_key(c: CandidateEpisode, when_prop: str | None):
    t = c.value(when_prop) if when_prop else None
    return (-c.score, t.start_ts if t is not None else float("inf"), c.episode_id)


def run(
    library: ScriptLibrary | CompiledScript,
    script_name: str | None,
    corpus: Corpus,
    settings: EngineSettings = EngineSettings(),
) -> RunResult:
    """Build, merge and rank episodes of one top-level script over a corpus."""
    compiled = library if isinstance(library, CompiledScript) else compile_script(library, script_name)
    ctx = EngineContext.build(compiled, settings)
    hits = build_evidence_set(corpus, compiled)
    ctx_hits = [h for h in hits if h.strength is Strength.CONTEXTUAL]
    cands = seed_candidates(hits, ctx)
    bound = len(hits)
    merges: list[MergeEvent] = []
    iterations = 0
    changed = bool(cands)
    while changed:
        iterations += 1
        if iterations > bound:
            raise RuntimeError(f"episode loop exceeded its bound of {bound} iterations")
        before = len(cands)
        cands = merge_step(cands, ctx, merges)
        cands, attached = attach_secondary(cands, ctx_hits, ctx, corpus)
        changed = attached or len(cands) != before
    when_prop = ctx.prop_of("when")
    cands.sort(key=lambda c: _rank_key(c, when_prop))
    log.info("%s: %d hits, %d episodes after %d iteration(s)", compiled.name, len(hits), len(cands), iterations)
    return RunResult(
        script=compiled.name,
        goal=compiled.script.goal,
        episodes=cands,
        hits=hits,
        iterations=iterations,
        bound=bound,
        merges=merges,
        thresholds=ctx.thresholds(),
        corpus_digest=corpus.digest,
        owner=corpus.owner,
        narrative=compiled.script.narrative,
    )


def manifest(report_text: str, inputs: dict[str, str], library_text: str, thresholds: dict, extra: dict | None = None) -> dict:
    """Run manifest: digests of every input and the output, plus thresholds."""

    def sha(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    return {
        "tool": {"name": "episodic", "version": __version__, "kernel_backend": kernels.BACKEND},
        "inputs": inputs,
        "script_library_digest": sha(library_text),
        "thresholds": dict(thresholds, **(extra or {})),
        "output_digest": sha(report_text),
    }
