import json

import pytest

from qcap import data_path
from qcap.geometry import cross_section_from_dict, load_cross_section, resolve_geometry

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def mtl2_doc():
    return json.loads(data_path("mtl2_like.json").read_text())


@pytest.fixture(scope="session")
def mtl2(mtl2_doc):
    return cross_section_from_dict(mtl2_doc)


@pytest.fixture(scope="session")
def mtl2_rg(mtl2):
    return resolve_geometry(mtl2)


@pytest.fixture(scope="session")
def mtl2_path():
    return str(data_path("mtl2_like.json"))


@pytest.fixture(scope="session")
def square_path():
    return str(data_path("unit_square.json"))


@pytest.fixture
def acceptance_line():
    def record(number, name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {name} -- {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
