import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slidesearch.encoding import TextureCode  # noqa: E402
from slidesearch.store import Database, MosaicMeta  # noqa: E402

SHORT = 16  # texture length for hand-built fixtures


def meta(bits=0, slide="s1", patient=None, diagnosis="A", length=SHORT, site="site", x=0, y=0):
    return MosaicMeta(TextureCode(bits, length), slide, patient or f"{slide}-p", diagnosis, site, x, y, "svs")


def make_db(records, length=SHORT, universe=1 << 50):
    """``records`` are ``(index, MosaicMeta)`` pairs."""
    db = Database(length, universe)
    for k, m in records:
        db.insert_record(k, m)
    return db.freeze()


@pytest.fixture
def tiny_db():
    return make_db([
        (100, meta(0b0000, "a1", "pa", "A")),
        (100, meta(0b0011, "a2", "pa", "A")),
        (200, meta(0b1111, "b1", "pb", "B")),
        (300, meta(0b0001, "c1", "pc", "C")),
    ])


# --- acceptance reporting --------------------------------------------------
# Tests marked ``@pytest.mark.criterion("name")`` get one PASS/FAIL line in the
# terminal summary, with any ``detail`` they attached via ``record_property``.

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _CRITERIA.append((mark.args[0], "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))
