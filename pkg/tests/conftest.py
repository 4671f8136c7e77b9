from __future__ import annotations

import pathlib
from dataclasses import replace

import pytest

from dynoptc.lang.ast import Fence, For, If, PhaseMarker, While

CORPUS = pathlib.Path(__file__).parent / "corpus"


def strip_fences(program):
    """Mutation helper: delete every fence statement, recursively."""
    def strip(stmts):
        out = []
        for s in stmts:
            if isinstance(s, Fence):
                continue
            if isinstance(s, If):
                s = replace(s, then=strip(s.then), els=strip(s.els))
            elif isinstance(s, (While, For, PhaseMarker)):
                s = replace(s, body=strip(s.body))
            out.append(s)
        return tuple(out)

    kernels = tuple(replace(k, body=strip(k.body)) for k in program.kernels)
    return replace(program, kernels=kernels)


@pytest.fixture
def corpus_dir() -> pathlib.Path:
    return CORPUS


def corpus_files() -> list[pathlib.Path]:
    return sorted(CORPUS.glob("*.mk"))


def read_corpus(name: str) -> str:
    return (CORPUS / name).read_text()


# One human-readable verdict line per acceptance criterion, echoed after the
# test summary so they are visible even when pytest captures test output.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
