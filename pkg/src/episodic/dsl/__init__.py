"""Script definition language: parse, print, validate, instantiate."""

from .checks import validate_library
from .compile import CompiledScript, InstantiationError, StepNode, bind_script, compile_script, instantiate
from .parser import load_library, parse_library, tokenize
from .printer import format_library, format_script
from .types import (
    AtomicActionDef,
    Comparator,
    DslError,
    EvidenceDecl,
    KeyDecl,
    KeywordClue,
    MetadataPredicate,
    ParamRef,
    PropagationRule,
    PropDecl,
    ScriptDef,
    ScriptError,
    ScriptLibrary,
    Strength,
    SubScriptRef,
)

__all__ = [
    "AtomicActionDef",
    "Comparator",
    "CompiledScript",
    "DslError",
    "EvidenceDecl",
    "InstantiationError",
    "KeyDecl",
    "KeywordClue",
    "MetadataPredicate",
    "ParamRef",
    "PropDecl",
    "PropagationRule",
    "ScriptDef",
    "ScriptError",
    "ScriptLibrary",
    "StepNode",
    "Strength",
    "SubScriptRef",
    "bind_script",
    "compile_script",
    "format_library",
    "format_script",
    "instantiate",
    "load_library",
    "parse_library",
    "tokenize",
    "validate_library",
]
