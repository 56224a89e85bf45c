"""Canonical text form of a library; reparsing the output gives an equal library."""

from __future__ import annotations

import json

from .types import (
    AtomicActionDef,
    KeywordClue,
    MetadataPredicate,
    ParamRef,
    PropDecl,
    ScriptDef,
    ScriptLibrary,
    _num,
)


def _prop(p: PropDecl) -> str:
    return f"{p.dimension} {p.name}" + (f" from {p.source}" if p.source else "")


def _clue(c) -> str:
    if isinstance(c, MetadataPredicate):
        kinds = " ".join(k.value for k in c.sources)
        return f"metadata {'.'.join(c.field_path)} = {json.dumps(c.value)} on {kinds}"
    assert isinstance(c, KeywordClue)
    fields = " ".join(f"{name}:{_num(w)}" for name, w in c.fields)
    return f"keywords {json.dumps(c.path)} in {fields}"


def format_script(s: ScriptDef) -> str:
    head = f"script {s.name}" + (f"<{', '.join(s.params)}>" if s.params else "")
    out = [head + " {", f"  goal: {json.dumps(s.goal)}"]
    if s.narrative is not None:
        out.append(f"  narrative: {json.dumps(s.narrative)}")
    out += [f"  {_prop(p)}" for p in s.props]
    for step in s.body:
        if isinstance(step, AtomicActionDef):
            out.append(f"  action {step.name} {{")
            out += [f"    {_prop(p)}" for p in step.props]
            out.append(f"    {_clue(step.clue)}")
            out.append("  }")
        else:
            if step.argument is None:
                arg = ""
            elif isinstance(step.argument, ParamRef):
                arg = f"<{step.argument.name}>"
            else:
                arg = f"<{json.dumps(step.argument)}>"
            out.append(f"  use {step.script_name}{arg} as {step.alias}")
    out += [f"  order {a} < {b}" for a, b in s.ordering]
    out += [f"  {e.strength.value} {e.step_name} base {_num(e.base_score)}" for e in s.evidence]
    out += [f"  key {k.prop_name} {'required' if k.required else 'optional'} {k.comparator}" for k in s.keys]
    out += [f"  lift {r.child_step}.{r.child_prop} -> {r.parent_prop}" for r in s.propagation]
    out += [f"  set {k} {_num(v)}" for k, v in s.settings]
    out.append("}")
    return "\n".join(out)


def format_library(lib: ScriptLibrary) -> str:
    return "\n\n".join(format_script(s) for s in lib.scripts.values()) + ("\n" if lib.scripts else "")
