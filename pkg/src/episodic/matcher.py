"""Match script clues against corpus records and score the evidence set D."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

from .dsl.compile import CompiledScript, StepNode
from .dsl.types import AtomicActionDef, KeywordClue, MetadataPredicate, PropDecl, Strength
from .ingest import Corpus, EvidenceUnit
from .model import PdtRecord, TimeSpec, hull_of
from .scoring import hooper
from .text import contains_phrase, fold, tokens

log = logging.getLogger(__name__)

SET_DIMENSIONS = ("who", "where", "what", "how")


# ---------------------------------------------------------------------------
# property values
# ---------------------------------------------------------------------------


def empty_value(dimension: str):
    return None if dimension == "when" else frozenset()


def join_values(dimension: str, a, b):
    if dimension == "when":
        return hull_of(t for t in (a, b) if t is not None)
    if dimension == "why":
        return a or b
    return (a or frozenset()) | (b or frozenset())


def is_missing(value) -> bool:
    return value is None or (isinstance(value, frozenset) and not value)


def join_props(dims: dict[str, str], a: dict[str, Any], b: dict[str, Any]) -> dict[str, Any]:
    out = {}
    for name in sorted(set(a) | set(b)):
        out[name] = join_values(dims[name], a.get(name), b.get(name))
    return out


# ---------------------------------------------------------------------------
# clue matching
# ---------------------------------------------------------------------------


def field_value(record: PdtRecord, path: tuple[str, ...]):
    head = path[0]
    rest = path[1] if len(path) > 1 else None
    if head == "what":
        return record.what.get(rest) if rest else None
    if head == "where":
        if record.where is None:
            return None
        return {"category": record.where.category, "name": record.where.name, "id": record.where.canonical_id}.get(
            rest or "id"
        )
    if head == "how":
        return record.how
    if head == "source":
        return record.source.value
    if head == "who":
        refs = record.who.get(rest, ()) if rest else tuple(record.people())
        return [p.canonical_id for p in refs]
    return None


def match_metadata(record: PdtRecord, pred: MetadataPredicate) -> bool:
    """True iff the record's source is listed and the field equals the value, ignoring case."""
    if record.source not in pred.sources:
        return False
    value = field_value(record, pred.field_path)
    if value is None:
        return False
    want = fold(pred.value)
    if isinstance(value, list):
        return any(fold(v) == want for v in value)
    return fold(str(value)) == want


def match_keywords(
    record: PdtRecord, clue: KeywordClue, keywords: tuple[tuple[str, ...], ...]
) -> list[tuple[str, str, float]]:
    """One ``(term, field, weight)`` per distinct term found in each weighted field."""
    out = []
    for name, weight in clue.fields:
        text = record.what.get(name)
        if not isinstance(text, str):
            continue
        toks = tokens(text)
        for phrase in keywords:
            if contains_phrase(toks, phrase):
                out.append((" ".join(phrase), name, weight))
    return out


# ---------------------------------------------------------------------------
# evidence hits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvidenceHit:
    """Evidence that one document (or document group) instantiates one step.

    ``doc_id`` names the evidence unit: a record id, or a group id for a
    thread or burst. ``props`` holds the values lifted into the top-level
    script properties.
    """

    doc_id: str
    step_name: str
    strength: Strength
    occurrence_scores: tuple[float, ...]
    doc_score: float
    records: tuple[str, ...] = ()
    matched: tuple[str, ...] = ()
    props: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "records": list(self.records),
            "step": self.step_name,
            "strength": self.strength.value,
            "occurrence_scores": list(self.occurrence_scores),
            "doc_score": self.doc_score,
            "matched": list(self.matched),
        }


def _fill(prop: PropDecl, records: list[PdtRecord], corpus: Corpus, terms: set[str]):
    """Value of an atomic action property taken from the records that matched it."""
    dim, src = prop.dimension, prop.source
    if dim == "who":
        people = set()
        for r in records:
            if src in (None, "record"):
                people |= r.people()
            else:
                people |= set(r.who.get(src, ()))
        return frozenset(people)
    if dim == "where":
        places = set()
        for r in records:
            mentioned = corpus.mentions.get(r.doc_id, ()) if src == "mentioned" else ()
            if mentioned:
                places |= set(mentioned)
            elif r.where is not None:
                places.add(r.where)
        return frozenset(places)
    if dim == "when":
        times = []
        for r in records:
            dates = corpus.dates.get(r.doc_id, ()) if src == "mentioned" else ()
            times += [t for _, t in dates] if dates else [r.when]
        return hull_of(times)
    if dim == "what":
        found = set(terms)
        for r in records:
            if r.what.category:
                found.add(r.what.category)
        return frozenset(found)
    if dim == "how":
        return frozenset(r.how for r in records if r.how)
    return None


class _StepMatcher:
    def __init__(self, compiled: CompiledScript, corpus: Corpus):
        self.compiled = compiled
        self.corpus = corpus
        self.keywords = compiled.keyword_sets

    def match_action(self, path, action: AtomicActionDef, unit: EvidenceUnit, base: float):
        """(occurrences, matched records, matched terms) for one action over a unit."""
        clue = action.clue
        occ: dict[tuple, float] = {}
        recs: list[PdtRecord] = []
        terms: set[str] = set()
        label = ".".join(path)
        for r in unit.records:
            if isinstance(clue, MetadataPredicate):
                if match_metadata(r, clue):
                    occ.setdefault((label, "metadata", ".".join(clue.field_path)), base)
                    recs.append(r)
            else:
                found = match_keywords(r, clue, self.keywords[clue.path])
                for term, fname, weight in found:
                    occ.setdefault((label, term, fname), base * weight)
                    terms.add(term)
                if found:
                    recs.append(r)
        return occ, recs, terms

    def node_values(self, node: StepNode, unit: EvidenceUnit, base: float):
        """Occurrences and property values for a step node, lifted to its own props."""
        if node.action is not None:
            occ, recs, terms = self.match_action(node.path, node.action, unit, base)
            if not occ:
                return {}, {}
            values = {p.name: _fill(p, recs, self.corpus, terms) for p in node.action.props}
            return occ, values
        script = node.script
        dims = {p.name: p.dimension for p in script.props}
        occ: dict[tuple, float] = {}
        values: dict[str, Any] = {}
        for child in node.children:
            c_occ, c_vals = self.node_values(child, unit, base)
            if not c_occ:
                continue
            occ.update(c_occ)
            values = join_props(dims, values, lift(script.propagation, child.name, c_vals, dims))
        return occ, values


def lift(rules, child_name: str, child_values: dict[str, Any], parent_dims: dict[str, str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for rule in rules:
        if rule.child_step != child_name or rule.child_prop not in child_values:
            continue
        dim = parent_dims[rule.parent_prop]
        out[rule.parent_prop] = join_values(dim, out.get(rule.parent_prop), child_values[rule.child_prop])
    return out


def build_evidence_set(corpus: Corpus, compiled: CompiledScript) -> list[EvidenceHit]:
    """Every (unit, step) pair whose clues matched, sorted by ``(doc_id, step)``.

    Contextual steps are included with strength ``CONTEXTUAL``; they can
    attach to episodes but never seed them.
    """
    m = _StepMatcher(compiled, corpus)
    dims = {p.name: p.dimension for p in compiled.script.props}
    hits = []
    for unit in corpus.units():
        for step_name, node in compiled.steps.items():
            strength, base = compiled.strength(step_name)
            occ, values = m.node_values(node, unit, base)
            if not occ:
                continue
            keys = sorted(occ)
            scores = tuple(occ[k] for k in keys)
            matched = tuple(sorted({k[0] for k in keys}))
            records = tuple(sorted({r.doc_id for r in unit.records}))
            hits.append(
                EvidenceHit(
                    doc_id=unit.unit_id,
                    step_name=step_name,
                    strength=strength,
                    occurrence_scores=scores,
                    doc_score=hooper(scores),
                    records=records,
                    matched=matched,
                    props=lift(compiled.script.propagation, step_name, values, dims),
                )
            )
    hits.sort(key=lambda h: (h.doc_id, h.step_name))
    log.debug("%s: %d evidence hits", compiled.name, len(hits))
    return hits


def hit_time(hit: EvidenceHit, corpus: Corpus) -> TimeSpec | None:
    """Time of a hit from its lifted properties, else from its records."""
    for value in hit.props.values():
        if isinstance(value, TimeSpec):
            return value
    return hull_of(corpus.records[d].when for d in hit.records if d in corpus.records)
