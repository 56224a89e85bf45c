"""Static checks over a parsed library. Returns violations, never mutates."""

from __future__ import annotations

from graphlib import CycleError, TopologicalSorter

from ..model import WHO_ROLES
from .compile import PLACEHOLDER, InstantiationError, compile_script, load_keyword_file
from .types import (
    KNOWN_SETTINGS,
    AtomicActionDef,
    KeywordClue,
    MetadataPredicate,
    ParamRef,
    ScriptDef,
    ScriptError,
    ScriptLibrary,
    Strength,
    SubScriptRef,
)

_PROP_SOURCES = {
    "who": {"record", *WHO_ROLES},
    "where": {"record", "mentioned"},
    "when": {"record", "mentioned"},
}


def _err(errors, code, msg, node=None):
    pos = getattr(node, "pos", None)
    errors.append(ScriptError(code, msg, pos.line if pos else 0, pos.col if pos else 0))


def _child_props(lib: ScriptLibrary, step) -> dict[str, str] | None:
    if isinstance(step, AtomicActionDef):
        return {p.name: p.dimension for p in step.props}
    target = lib.scripts.get(step.script_name)
    return None if target is None else {p.name: p.dimension for p in target.props}


def _check_script(lib: ScriptLibrary, s: ScriptDef, top: bool, errors: list[ScriptError]):
    steps = {st.name for st in s.body}
    props = {p.name: p for p in s.props}

    def check_props(decls, owner):
        for p in decls:
            allowed = _PROP_SOURCES.get(p.dimension, {"record"})
            if p.source is not None and p.source not in allowed:
                _err(errors, "BadPropSource", f"{owner}.{p.name}: source {p.source!r} not valid for {p.dimension}", p)

    check_props(s.props, s.name)

    for step in s.body:
        if isinstance(step, AtomicActionDef):
            check_props(step.props, f"{s.name}.{step.name}")
            clue = step.clue
            text = clue.value if isinstance(clue, MetadataPredicate) else clue.path
            for m in PLACEHOLDER.finditer(text):
                if m.group(1) not in s.params:
                    _err(errors, "UndeclaredParameter", f"{s.name}.{step.name} uses undeclared {m.group(1)!r}", clue)
            if isinstance(clue, KeywordClue):
                for name, w in clue.fields:
                    if not 0.0 < w <= 1.0:
                        _err(errors, "WeightOutOfRange", f"{s.name}.{step.name}: weight {name}:{w} not in (0, 1]", clue)
        else:
            target = lib.scripts.get(step.script_name)
            if isinstance(step.argument, ParamRef) and step.argument.name not in s.params:
                _err(errors, "UndeclaredParameter", f"{s.name} passes undeclared {step.argument.name!r}", step)
            if target is not None and bool(target.params) != (step.argument is not None):
                _err(
                    errors,
                    "ArityMismatch",
                    f"{s.name}: {step.script_name} takes {len(target.params)} parameter(s)",
                    step,
                )

    for a, b in s.ordering:
        for name in (a, b):
            if name not in steps:
                _err(errors, "UnknownStep", f"{s.name}: ordering mentions unknown step {name!r}", s)
    try:
        graph: dict[str, set[str]] = {}
        for a, b in s.ordering:
            graph.setdefault(b, set()).add(a)
        tuple(TopologicalSorter(graph).static_order())
    except CycleError as exc:
        cycle = " < ".join(exc.args[1]) if len(exc.args) > 1 else ""
        _err(errors, "CyclicOrdering", f"{s.name}: ordering has a cycle {cycle}".rstrip(), s)

    seen_ev = set()
    for ev in s.evidence:
        if ev.step_name not in steps:
            _err(errors, "UnknownStep", f"{s.name}: evidence for unknown step {ev.step_name!r}", ev)
        if ev.step_name in seen_ev:
            _err(errors, "DuplicateEvidence", f"{s.name}: evidence for {ev.step_name!r} declared twice", ev)
        seen_ev.add(ev.step_name)
        if not 0.0 < ev.base_score < 1.0:
            _err(errors, "ScoreOutOfRange", f"{s.name}: base score {ev.base_score} for {ev.step_name} not in (0, 1)", ev)

    for key in s.keys:
        decl = props.get(key.prop_name)
        if decl is None:
            _err(errors, "UnknownProp", f"{s.name}: key on undeclared property {key.prop_name!r}", key)
        elif decl.dimension != key.comparator.dimension:
            _err(
                errors,
                "KeyDimensionMismatch",
                f"{s.name}: {key.comparator} compares {key.comparator.dimension}, {key.prop_name} is {decl.dimension}",
                key,
            )
        v = key.comparator.value
        if key.comparator.kind == "WhoJaccard" and not 0.0 <= v <= 1.0:
            _err(errors, "ScoreOutOfRange", f"{s.name}: WhoJaccard threshold {v} not in [0, 1]", key)
        elif v is not None and key.comparator.kind != "WhoJaccard" and v <= 0:
            _err(errors, "ScoreOutOfRange", f"{s.name}: {key.comparator} must be positive", key)

    for rule in s.propagation:
        step = s.step(rule.child_step)
        if step is None:
            _err(errors, "UnknownStep", f"{s.name}: lift from unknown step {rule.child_step!r}", rule)
            continue
        parent = props.get(rule.parent_prop)
        if parent is None:
            _err(errors, "UnknownProp", f"{s.name}: lift into undeclared property {rule.parent_prop!r}", rule)
            continue
        child = _child_props(lib, step)
        if child is None:
            continue
        if rule.child_prop not in child:
            _err(errors, "UnknownProp", f"{s.name}: {rule.child_step} has no property {rule.child_prop!r}", rule)
        elif child[rule.child_prop] != parent.dimension:
            _err(
                errors,
                "DimensionMismatch",
                f"{s.name}: {rule.child_step}.{rule.child_prop} is {child[rule.child_prop]}, "
                f"{rule.parent_prop} is {parent.dimension}",
                rule,
            )

    for name, value in s.settings:
        if name not in KNOWN_SETTINGS:
            _err(errors, "UnknownSetting", f"{s.name}: unknown setting {name!r}", s)
        elif name in ("attach_discount",) and not 0.0 < value <= 1.0:
            _err(errors, "ScoreOutOfRange", f"{s.name}: {name} {value} not in (0, 1]", s)
        elif name == "context_base" and not 0.0 < value < 1.0:
            _err(errors, "ScoreOutOfRange", f"{s.name}: {name} {value} not in (0, 1)", s)
        elif name in ("attach_radius_m", "attach_window_h") and value <= 0:
            _err(errors, "ScoreOutOfRange", f"{s.name}: {name} must be positive", s)

    if top:
        if not any(e.strength is Strength.STRONG for e in s.evidence):
            _err(errors, "MissingStrongEvidence", f"{s.name}: no strong evidence declared", s)
        if not any(k.required for k in s.keys):
            _err(errors, "MissingRequiredKey", f"{s.name}: no required key declared", s)


def _use_cycles(lib: ScriptLibrary, errors):
    graph = {
        name: {st.script_name for st in s.body if isinstance(st, SubScriptRef) and st.script_name in lib.scripts}
        for name, s in lib.scripts.items()
    }
    try:
        tuple(TopologicalSorter(graph).static_order())
        return False
    except CycleError as exc:
        _err(errors, "RecursiveScript", "scripts use each other recursively: " + " -> ".join(exc.args[1]))
        return True


def validate_library(lib: ScriptLibrary) -> list[ScriptError]:
    """Every invariant violation in ``lib``; an empty list means it is usable."""
    errors: list[ScriptError] = []
    top = {s.name for s in lib.top_level()}
    for s in lib.scripts.values():
        _check_script(lib, s, s.name in top, errors)
    if _use_cycles(lib, errors) or errors:
        return errors

    checked: set[str] = set()
    for name in sorted(top):
        try:
            compiled = compile_script(lib, name)
        except InstantiationError as exc:
            _err(errors, exc.code, str(exc), lib[name])
            continue
        for node in compiled.steps.values():
            for path, action in node.actions():
                clue = action.clue
                if not isinstance(clue, KeywordClue) or clue.path in checked:
                    continue
                checked.add(clue.path)
                file = lib.resolve_path(clue.path)
                if not file.is_file():
                    _err(errors, "KeywordFileMissing", f"{'.'.join(path)}: keyword file {clue.path!r} not found", clue)
                elif not load_keyword_file(file):
                    _err(errors, "KeywordFileEmpty", f"{'.'.join(path)}: keyword file {clue.path!r} has no terms", clue)
    return errors
