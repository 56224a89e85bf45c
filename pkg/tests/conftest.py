from __future__ import annotations

import json
from pathlib import Path

import pytest

from episodic.cli import default_library
from episodic.dsl import compile_script, load_library

FIXTURES = Path(__file__).parent / "fixtures"
DINNER_WEEK = FIXTURES / "dinner_week"
SCRIPTS = FIXTURES / "scripts"


def write_corpus(path, records, people=(), places=(), meta=None, gps=None, aliases=None):
    path.mkdir(parents=True, exist_ok=True)
    lines = [r if isinstance(r, str) else json.dumps(r) for r in records]
    (path / "records.jsonl").write_text("\n".join(lines) + "\n")
    if people:
        (path / "people.jsonl").write_text("\n".join(json.dumps(p) for p in people) + "\n")
    if places:
        (path / "places.jsonl").write_text("\n".join(json.dumps(p) for p in places) + "\n")
    if meta is not None:
        (path / "corpus.json").write_text(json.dumps(meta))
    if gps is not None:
        (path / "gps.csv").write_text("timestamp,lat,lon\n" + "\n".join(gps) + "\n")
    if aliases is not None:
        (path / "aliases.tsv").write_text("\n".join(f"{c}\t{a}" for c, a in aliases) + "\n")
    return path


@pytest.fixture(scope="session")
def library():
    return load_library(default_library())


@pytest.fixture(scope="session")
def compiled(library):
    return compile_script(library, "Eating_Out")


@pytest.fixture()
def dinner_week() -> Path:
    return DINNER_WEEK


# acceptance criteria outcomes, printed as one block at the end of the run
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {name}: {detail}")
