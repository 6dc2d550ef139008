import random
from contextlib import contextmanager

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def rng():
    return random.Random(12345)


class _Result:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion():
    """``with criterion(k) as c: ...`` records one pass/fail line for acceptance criterion k."""
    @contextmanager
    def run(k):
        res = _Result()
        try:
            yield res
        except BaseException as e:
            line = f"criterion {k:2d}: FAIL  {res.detail} {type(e).__name__}: {e}".rstrip()
            _CRITERIA[k] = line
            print(line)
            raise
        line = f"criterion {k:2d}: PASS  {res.detail}".rstrip()
        _CRITERIA[k] = line
        print(line)
    return run


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k].splitlines()[0])
