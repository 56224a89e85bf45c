"""In-memory form of a parsed script library."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Union

from ..model import SourceKind


@dataclass(frozen=True)
class Pos:
    line: int
    col: int

    def __str__(self):
        return f"{self.line}:{self.col}"


def _pos():
    return field(default=None, compare=False, repr=False)


class Strength(str, Enum):
    STRONG = "strong"
    WEAK = "weak"
    CONTEXTUAL = "contextual"


DEFAULT_BASE = {Strength.STRONG: 0.8, Strength.WEAK: 0.3}

# script-level tunables and their defaults; attach_window_h falls back to the
# TimeWindow key when unset
DEFAULT_SETTINGS = {
    "attach_discount": 0.5,
    "context_base": 0.5,
    "attach_radius_m": 250.0,
}
KNOWN_SETTINGS = set(DEFAULT_SETTINGS) | {"attach_window_h"}


@dataclass(frozen=True)
class PropDecl:
    name: str
    dimension: str
    source: str | None = None
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class MetadataPredicate:
    field_path: tuple[str, ...]
    value: str
    sources: tuple[SourceKind, ...]
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class KeywordClue:
    path: str
    fields: tuple[tuple[str, float], ...]
    pos: Pos | None = _pos()

    def weight(self, field_name: str) -> float | None:
        for name, w in self.fields:
            if name == field_name:
                return w
        return None


ClueDecl = Union[MetadataPredicate, KeywordClue]


@dataclass(frozen=True)
class AtomicActionDef:
    name: str
    props: tuple[PropDecl, ...]
    clue: ClueDecl
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class ParamRef:
    name: str


@dataclass(frozen=True)
class SubScriptRef:
    script_name: str
    argument: Union[str, ParamRef, None]
    alias: str
    pos: Pos | None = _pos()

    @property
    def name(self) -> str:
        return self.alias


StepDef = Union[AtomicActionDef, SubScriptRef]


@dataclass(frozen=True)
class EvidenceDecl:
    step_name: str
    strength: Strength
    base_score: float
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class Comparator:
    kind: str
    value: float | None = None

    DIMENSION = {"ExactPlace": "where", "GeoRadius": "where", "TimeWindow": "when", "WhoJaccard": "who"}

    @property
    def dimension(self) -> str:
        return self.DIMENSION[self.kind]

    def __str__(self):
        if self.value is None:
            return self.kind
        return f"{self.kind}({_num(self.value)})"


@dataclass(frozen=True)
class KeyDecl:
    prop_name: str
    dimension: str | None
    comparator: Comparator
    required: bool
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class PropagationRule:
    child_step: str
    child_prop: str
    parent_prop: str
    pos: Pos | None = _pos()


@dataclass(frozen=True)
class ScriptDef:
    name: str
    params: tuple[str, ...]
    goal: str
    props: tuple[PropDecl, ...] = ()
    body: tuple[StepDef, ...] = ()
    ordering: tuple[tuple[str, str], ...] = ()
    evidence: tuple[EvidenceDecl, ...] = ()
    keys: tuple[KeyDecl, ...] = ()
    propagation: tuple[PropagationRule, ...] = ()
    settings: tuple[tuple[str, float], ...] = ()
    narrative: str | None = None
    pos: Pos | None = _pos()

    def step(self, name: str) -> StepDef | None:
        for s in self.body:
            if s.name == name:
                return s
        return None

    def prop(self, name: str) -> PropDecl | None:
        for p in self.props:
            if p.name == name:
                return p
        return None

    def evidence_for(self, step_name: str) -> EvidenceDecl | None:
        for e in self.evidence:
            if e.step_name == step_name:
                return e
        return None

    def setting(self, name: str, default: float | None = None) -> float | None:
        for k, v in self.settings:
            if k == name:
                return v
        return DEFAULT_SETTINGS.get(name, default)


@dataclass
class ScriptLibrary:
    scripts: dict[str, ScriptDef] = field(default_factory=dict)
    base_dir: Path | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.scripts)

    def __contains__(self, name):
        return name in self.scripts

    def __getitem__(self, name) -> ScriptDef:
        return self.scripts[name]

    def used_names(self) -> set[str]:
        return {s.script_name for sc in self.scripts.values() for s in sc.body if isinstance(s, SubScriptRef)}

    def top_level(self) -> list[ScriptDef]:
        """Scripts with no parameters that no other script uses."""
        used = self.used_names()
        return [s for s in self.scripts.values() if not s.params and s.name not in used]

    def sub_scripts(self) -> list[ScriptDef]:
        top = {s.name for s in self.top_level()}
        return [s for s in self.scripts.values() if s.name not in top]

    def resolve_path(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class ScriptError:
    code: str
    message: str
    line: int = 0
    col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}: {self.code}: {self.message}"


class DslError(Exception):
    """Raised by the parser with every error found in the source."""

    def __init__(self, errors: list[ScriptError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))

    @property
    def codes(self) -> list[str]:
        return [e.code for e in self.errors]
