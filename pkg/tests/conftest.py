from pathlib import Path

import numpy as np
import pytest

from quadlin.model import load_system, parse_system

DATA = Path(__file__).resolve().parent.parent / "data"

# Per-criterion verdicts filled in by test_acceptance.py.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def planar():
    return load_system(DATA / "planar.json")


@pytest.fixture(scope="session")
def cone():
    return load_system(DATA / "cone.json")


@pytest.fixture(scope="session")
def planar_path():
    return DATA / "planar.json"


@pytest.fixture(scope="session")
def cone_path():
    return DATA / "cone.json"


@pytest.fixture
def perturbed_planar(planar):
    doc = planar.to_dict()
    doc["A"][0][0][0] += 0.1
    return parse_system(doc)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}")
