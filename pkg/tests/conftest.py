import numpy as np
import pytest

from tcdst.corpus import generate_synthetic, toy_schema
from tcdst.tokenizer import ModelVariant, build_vocab

ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def schema():
    return toy_schema()


@pytest.fixture(scope="session")
def dialogues(schema):
    return generate_synthetic(schema, 16, 1.0, seed=7)


@pytest.fixture(scope="session")
def vocab(dialogues, schema):
    return build_vocab(dialogues, schema)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["baseline", "bdst-i", "bdst-c", "bdst-j"])
def variant(request):
    return ModelVariant(request.param)


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (id, passed, detail)."""

    def record(cid, passed, detail=""):
        ACCEPTANCE_RESULTS.append((cid, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0][1:])):
        terminalreporter.write_line(f"{cid} {'PASS' if passed else 'FAIL'} {detail}")
