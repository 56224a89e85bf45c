"""Parameter binding and expansion of a top-level script into a step tree."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

from ..text import tokens
from .types import (
    AtomicActionDef,
    KeywordClue,
    MetadataPredicate,
    ParamRef,
    ScriptDef,
    ScriptLibrary,
    Strength,
    SubScriptRef,
)

PLACEHOLDER = re.compile(r"\{([A-Za-z_]\w*)(?:\|(title|lower|upper))?\}")


class InstantiationError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


def _subst(text: str, binding: dict[str, str], params: tuple[str, ...]) -> str:
    def repl(m: re.Match) -> str:
        name, fmt = m.group(1), m.group(2)
        if name not in binding:
            if name in params:
                raise InstantiationError("UnboundParameter", f"parameter {name!r} has no value")
            return m.group(0)
        value = binding[name]
        if fmt == "title":
            return value[:1].upper() + value[1:]
        if fmt == "lower":
            return value.lower()
        if fmt == "upper":
            return value.upper()
        return value

    return PLACEHOLDER.sub(repl, text)


def bind_script(script: ScriptDef, binding: dict[str, str] | None = None) -> ScriptDef:
    """Substitute parameters throughout ``script``; the result has no params."""
    binding = dict(binding or {})
    missing = [p for p in script.params if p not in binding]
    if missing:
        raise InstantiationError("UnboundParameter", f"{script.name}: no value for {', '.join(missing)}")
    if not script.params:
        return script

    def clue(c):
        if isinstance(c, MetadataPredicate):
            return replace(c, value=_subst(c.value, binding, script.params))
        return replace(c, path=_subst(c.path, binding, script.params))

    body = []
    for step in script.body:
        if isinstance(step, AtomicActionDef):
            body.append(replace(step, clue=clue(step.clue)))
        elif isinstance(step.argument, ParamRef):
            if step.argument.name not in binding:
                raise InstantiationError("UnboundParameter", f"parameter {step.argument.name!r} has no value")
            body.append(replace(step, argument=binding[step.argument.name]))
        elif isinstance(step.argument, str):
            body.append(replace(step, argument=_subst(step.argument, binding, script.params)))
        else:
            body.append(step)
    return replace(script, params=(), body=tuple(body), goal=_subst(script.goal, binding, script.params))


def instantiate(
    library: ScriptLibrary, ref: SubScriptRef | str, binding: dict[str, str] | None = None
) -> ScriptDef:
    """Concrete copy of the script ``ref`` points at.

    ``binding`` defaults to the literal argument carried by ``ref``.
    """
    name = ref if isinstance(ref, str) else ref.script_name
    script = library[name]
    if binding is None:
        binding = {}
        if isinstance(ref, SubScriptRef) and ref.argument is not None:
            if isinstance(ref.argument, ParamRef):
                raise InstantiationError("UnboundParameter", f"argument {ref.argument.name!r} is a free parameter")
            if script.params:
                binding = {script.params[0]: ref.argument}
    return bind_script(script, binding)


@dataclass(frozen=True)
class StepNode:
    """One step of an expanded script: an atomic action or a bound sub-script."""

    name: str
    path: tuple[str, ...]
    action: AtomicActionDef | None = None
    script: ScriptDef | None = None
    children: tuple["StepNode", ...] = ()

    def actions(self):
        if self.action is not None:
            yield self.path, self.action
        for child in self.children:
            yield from child.actions()


def _expand(library: ScriptLibrary, step, prefix: tuple[str, ...], stack: tuple[str, ...]) -> StepNode:
    path = prefix + (step.name,)
    if isinstance(step, AtomicActionDef):
        return StepNode(step.name, path, action=step)
    if step.script_name in stack:
        raise InstantiationError("RecursiveScript", " -> ".join(stack + (step.script_name,)))
    sub = instantiate(library, step)
    children = tuple(_expand(library, s, path, stack + (sub.name,)) for s in sub.body)
    return StepNode(step.name, path, script=sub, children=children)


def load_keyword_file(path: Path) -> tuple[tuple[str, ...], ...]:
    phrases = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = tuple(tokens(line))
        if toks and toks not in phrases:
            phrases.append(toks)
    return tuple(phrases)


@dataclass
class CompiledScript:
    """A top-level script expanded into concrete steps, ready for matching."""

    script: ScriptDef
    steps: dict[str, StepNode]
    library: ScriptLibrary

    @property
    def name(self) -> str:
        return self.script.name

    def strength(self, step_name: str) -> tuple[Strength, float]:
        ev = self.script.evidence_for(step_name)
        if ev is None:
            return Strength.CONTEXTUAL, float(self.script.setting("context_base"))
        return ev.strength, ev.base_score

    def seeding_steps(self) -> list[str]:
        return [s for s in self.steps if self.strength(s)[0] is not Strength.CONTEXTUAL]

    def contextual_steps(self) -> list[str]:
        return [s for s in self.steps if self.strength(s)[0] is Strength.CONTEXTUAL]

    @cached_property
    def keyword_sets(self) -> dict[str, tuple[tuple[str, ...], ...]]:
        out = {}
        for node in self.steps.values():
            for _, action in node.actions():
                if isinstance(action.clue, KeywordClue) and action.clue.path not in out:
                    out[action.clue.path] = load_keyword_file(self.library.resolve_path(action.clue.path))
        return out

    def key_hours(self) -> float:
        for k in self.script.keys:
            if k.comparator.kind == "TimeWindow":
                return float(k.comparator.value)
        return 6.0

    def attach_window_h(self) -> float:
        v = self.script.setting("attach_window_h")
        return float(v) if v is not None else self.key_hours()


def compile_script(library: ScriptLibrary, name: str) -> CompiledScript:
    script = bind_script(library[name])
    steps = {s.name: _expand(library, s, (), (script.name,)) for s in script.body}
    return CompiledScript(script, steps, library)
