"""Tokenizer and recursive-descent parser for script libraries.

Grammar (statements inside a script block may appear in any order; ``#``
starts a comment)::

    library   := script*
    script    := "script" NAME ["<" NAME ">"] "{" "goal" ":" STRING item* "}"
    item      := propdecl | step | order | evidence | key | lift | setting
               | "narrative" ":" STRING
    propdecl  := DIMENSION NAME ["from" NAME]
    step      := "action" NAME "{" propdecl* clue "}"
               | "use" NAME ["<" (NAME | STRING) ">"] "as" NAME
    clue      := "metadata" NAME ("." NAME)* "=" STRING "on" SOURCEKIND+
               | "keywords" STRING "in" (NAME ":" NUMBER)+
    order     := "order" NAME "<" NAME ("<" NAME)*
    evidence  := ("strong" | "weak") NAME ["base" NUMBER]
    key       := "key" NAME ("required" | "optional") COMPARATOR
    lift      := "lift" NAME "." NAME "->" NAME
    setting   := "set" NAME NUMBER
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from ..model import DIMENSIONS, SourceKind
from .types import (
    DEFAULT_BASE,
    AtomicActionDef,
    Comparator,
    DslError,
    EvidenceDecl,
    KeyDecl,
    KeywordClue,
    MetadataPredicate,
    ParamRef,
    Pos,
    PropagationRule,
    PropDecl,
    ScriptDef,
    ScriptError,
    ScriptLibrary,
    Strength,
    SubScriptRef,
)

SYNTAX_ERROR = "SyntaxError"
DUPLICATE_NAME = "DuplicateName"
UNRESOLVED_REFERENCE = "UnresolvedReference"

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<arrow>->)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}<>():,.=|])
    """,
    re.VERBOSE,
)

_COMPARATORS = {"ExactPlace": False, "GeoRadius": True, "TimeWindow": True, "WhoJaccard": True}
_SOURCE_NAMES = {k.value for k in SourceKind}


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    line: int
    col: int

    @property
    def pos(self) -> Pos:
        return Pos(self.line, self.col)


def tokenize(text: str) -> tuple[list[Token], list[ScriptError]]:
    tokens: list[Token] = []
    errors: list[ScriptError] = []
    line, line_start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            errors.append(ScriptError(SYNTAX_ERROR, f"unexpected character {text[i]!r}", line, i - line_start + 1))
            i += 1
            continue
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, i - line_start + 1))
        i = m.end()
    tokens.append(Token("eof", "", line, i - line_start + 1))
    return tokens, errors


class _Abort(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.errors: list[ScriptError] = []

    # -- token helpers -------------------------------------------------------
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, kind: str, value: str | None = None, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind == kind and (value is None or t.value == value)

    def advance(self) -> Token:
        t = self.peek()
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, msg: str, tok: Token | None = None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.value)
        self.errors.append(ScriptError(SYNTAX_ERROR, f"{msg}, found {found}", tok.line, tok.col))
        raise _Abort

    def expect(self, kind: str, value: str | None = None, what: str | None = None) -> Token:
        if not self.at(kind, value):
            self.fail(f"expected {what or value or kind}")
        return self.advance()

    def name(self, what: str = "a name") -> Token:
        return self.expect("name", what=what)

    def string(self) -> str:
        tok = self.expect("string", what="a quoted string")
        return json.loads(tok.value)

    def number(self) -> float:
        tok = self.expect("number", what="a number")
        return float(tok.value)

    # -- grammar -------------------------------------------------------------
    def library(self) -> list[ScriptDef]:
        scripts = []
        while not self.at("eof"):
            start = self.i
            try:
                scripts.append(self.script())
            except _Abort:
                self.i = max(self.i, start + 1)
                while not self.at("eof") and not self.at("name", "script"):
                    self.advance()
        return scripts

    def script(self) -> ScriptDef:
        head = self.expect("name", "script", what="'script'")
        name = self.name("a script name").value
        params: list[str] = []
        if self.at("punct", "<"):
            self.advance()
            params.append(self.name("a parameter name").value)
            while self.at("punct", ","):
                self.advance()
                params.append(self.name("a parameter name").value)
            self.expect("punct", ">")
        self.expect("punct", "{")
        self.expect("name", "goal", what="'goal:'")
        self.expect("punct", ":")
        goal = self.string()

        props, body, ordering, evidence, keys, lifts, settings = [], [], [], [], [], [], []
        narrative = None
        while not self.at("punct", "}"):
            tok = self.peek()
            if tok.kind != "name":
                self.fail("expected a statement")
            v = tok.value
            if v in DIMENSIONS:
                props.append(self.propdecl())
            elif v == "action":
                body.append(self.action())
            elif v == "use":
                body.append(self.use(params))
            elif v == "order":
                self.advance()
                chain = [self.name("a step name").value]
                self.expect("punct", "<")
                chain.append(self.name("a step name").value)
                while self.at("punct", "<"):
                    self.advance()
                    chain.append(self.name("a step name").value)
                ordering.extend(zip(chain, chain[1:]))
            elif v in ("strong", "weak"):
                self.advance()
                strength = Strength(v)
                step = self.name("a step name").value
                base = DEFAULT_BASE[strength]
                if self.at("name", "base"):
                    self.advance()
                    base = self.number()
                evidence.append(EvidenceDecl(step, strength, base, tok.pos))
            elif v == "key":
                keys.append(self.key())
            elif v == "lift":
                self.advance()
                child = self.name("a step name").value
                self.expect("punct", ".")
                child_prop = self.name("a property name").value
                self.expect("arrow", what="'->'")
                parent = self.name("a property name").value
                lifts.append(PropagationRule(child, child_prop, parent, tok.pos))
            elif v == "set":
                self.advance()
                key = self.name("a setting name").value
                settings.append((key, self.number()))
            elif v == "narrative":
                self.advance()
                self.expect("punct", ":")
                narrative = self.string()
            else:
                self.fail("expected a statement")
        self.expect("punct", "}")

        dims = {p.name: p.dimension for p in props}
        keys = [KeyDecl(k.prop_name, dims.get(k.prop_name), k.comparator, k.required, k.pos) for k in keys]
        return ScriptDef(
            name=name,
            params=tuple(params),
            goal=goal,
            props=tuple(props),
            body=tuple(body),
            ordering=tuple(ordering),
            evidence=tuple(evidence),
            keys=tuple(keys),
            propagation=tuple(lifts),
            settings=tuple(sorted(settings)),
            narrative=narrative,
            pos=head.pos,
        )

    def propdecl(self) -> PropDecl:
        dim = self.advance()
        name = self.name("a property name").value
        source = None
        if self.at("name", "from"):
            self.advance()
            source = self.name("a property source").value
        return PropDecl(name, dim.value, source, dim.pos)

    def action(self) -> AtomicActionDef:
        head = self.advance()
        name = self.name("an action name").value
        self.expect("punct", "{")
        props, clues = [], []
        while not self.at("punct", "}"):
            tok = self.peek()
            if tok.kind == "name" and tok.value in DIMENSIONS:
                props.append(self.propdecl())
            elif self.at("name", "metadata"):
                clues.append(self.metadata())
            elif self.at("name", "keywords"):
                clues.append(self.keywords())
            else:
                self.fail("expected a property or clue")
        if len(clues) != 1:
            self.fail(f"action {name!r} needs exactly one clue, has {len(clues)}")
        self.expect("punct", "}")
        return AtomicActionDef(name, tuple(props), clues[0], head.pos)

    def metadata(self) -> MetadataPredicate:
        head = self.advance()
        path = [self.name("a field name").value]
        while self.at("punct", "."):
            self.advance()
            path.append(self.name("a field name").value)
        self.expect("punct", "=")
        value = self.string()
        self.expect("name", "on", what="'on'")
        kinds = []
        while self.at("name") and self.peek().value in _SOURCE_NAMES:
            kinds.append(SourceKind.parse(self.advance().value))
        if not kinds:
            self.fail("expected at least one source kind")
        return MetadataPredicate(tuple(path), value, tuple(kinds), head.pos)

    def keywords(self) -> KeywordClue:
        head = self.advance()
        path = self.string()
        self.expect("name", "in", what="'in'")
        fields = []
        while self.at("name") and self.at("punct", ":", k=1):
            field_name = self.advance().value
            self.advance()
            fields.append((field_name, self.number()))
        if not fields:
            self.fail("expected at least one field:weight pair")
        return KeywordClue(path, tuple(fields), head.pos)

    def use(self, params: list[str]) -> SubScriptRef:
        head = self.advance()
        target = self.name("a script name").value
        arg = None
        if self.at("punct", "<"):
            self.advance()
            if self.at("string"):
                arg = self.string()
            else:
                a = self.name("an argument").value
                arg = ParamRef(a) if a in params else a
            self.expect("punct", ">")
        self.expect("name", "as", what="'as'")
        alias = self.name("a step name").value
        return SubScriptRef(target, arg, alias, head.pos)

    def key(self) -> KeyDecl:
        head = self.advance()
        prop = self.name("a property name").value
        req = self.name("'required' or 'optional'")
        if req.value not in ("required", "optional"):
            self.fail("expected 'required' or 'optional'", req)
        comp = self.name("a comparator")
        if comp.value not in _COMPARATORS:
            self.fail(f"expected one of {', '.join(_COMPARATORS)}", comp)
        value = None
        if _COMPARATORS[comp.value]:
            self.expect("punct", "(")
            value = self.number()
            self.expect("punct", ")")
        return KeyDecl(prop, None, Comparator(comp.value, value), req.value == "required", head.pos)


def parse_library(text: str, base_dir: str | Path | None = None) -> ScriptLibrary:
    """Parse script source into a :class:`ScriptLibrary`.

    Raises :class:`DslError` carrying every syntax, duplicate-name and
    unresolved-reference error with its line and column.
    """
    tokens, errors = tokenize(text)
    parser = _Parser(tokens)
    scripts = parser.library()
    errors = sorted(errors + parser.errors, key=lambda e: (e.line, e.col))

    lib: dict[str, ScriptDef] = {}
    for s in scripts:
        if s.name in lib:
            errors.append(ScriptError(DUPLICATE_NAME, f"script {s.name!r} defined twice", s.pos.line, s.pos.col))
            continue
        lib[s.name] = s
        for kind, items in (("step", s.body), ("property", s.props)):
            seen: set[str] = set()
            for item in items:
                if item.name in seen:
                    errors.append(
                        ScriptError(DUPLICATE_NAME, f"{kind} {item.name!r} repeated in {s.name}", item.pos.line, item.pos.col)
                    )
                seen.add(item.name)
    for s in lib.values():
        for step in s.body:
            if isinstance(step, SubScriptRef) and step.script_name not in lib:
                errors.append(
                    ScriptError(
                        UNRESOLVED_REFERENCE,
                        f"{s.name} uses undefined script {step.script_name!r}",
                        step.pos.line,
                        step.pos.col,
                    )
                )
    if errors:
        raise DslError(errors)
    return ScriptLibrary(lib, Path(base_dir) if base_dir is not None else None)


def load_library(path: str | Path) -> ScriptLibrary:
    path = Path(path)
    return parse_library(path.read_text(encoding="utf-8"), base_dir=path.parent)
