import shutil
from pathlib import Path

import pytest

from sepe_sqed import smt

GOLDEN = Path(__file__).parent / "golden"
DATA = Path(__file__).parents[1] / "src" / "sepe_sqed" / "data"


def solver_available() -> bool:
    try:
        smt.solver_command()
    except smt.SolverNotFound:
        return False
    return True


needs_solver = pytest.mark.skipif(not solver_available(), reason="no SMT solver on PATH")


@pytest.fixture(scope="session")
def session():
    if not solver_available():
        pytest.skip("no SMT solver on PATH")
    with smt.SmtSession() as s:
        yield s


@pytest.fixture
def fresh_session():
    if not solver_available():
        pytest.skip("no SMT solver on PATH")
    with smt.SmtSession() as s:
        yield s


@pytest.fixture(scope="session")
def shipped_db():
    from sepe_sqed.hpf import CorrespondenceSet
    return CorrespondenceSet.load(DATA / "correspondences.json")


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
