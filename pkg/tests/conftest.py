from pathlib import Path

import pytest

from blogmh import load_model
from blogmh.engine import load_evidence_queries
from blogmh.oracle import load_bounds

_RESULTS: list = []


def record(name: str, ok: bool, detail: str = "") -> None:
    """Note an acceptance result; echoed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else "")
    _RESULTS.append(line)
    print(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: slow end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)


DATA = Path(__file__).parent / "data"
PKG_DATA = Path(__file__).parent.parent / "src" / "blogmh" / "data"


def load_case(name: str, data=DATA):
    """``(model, bounds, evidence, queries)`` for ``data/name.{blog,bounds,evidence}``."""
    model = load_model(data / f"{name}.blog")
    bounds = load_bounds(data / f"{name}.bounds")
    ev_path = data / f"{name}.evidence"
    evidence, queries = load_evidence_queries(model, ev_path) if ev_path.exists() else ({}, [])
    return model, bounds, evidence, queries


@pytest.fixture
def tiny():
    model = load_model(PKG_DATA / "tiny.blog")
    bounds = load_bounds(PKG_DATA / "tiny.bounds")
    from blogmh.engine import parse_evidence_queries

    evidence, queries = parse_evidence_queries(model, "Obs(C1) = true\nquery hot : Hot(PubCited(C1))\n")
    return model, bounds, evidence, queries
