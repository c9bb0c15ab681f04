from __future__ import annotations

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """``check = verdict(n)`` then ``check(ok, detail)`` records one line for criterion n."""

    def open_(n: int):
        VERDICTS[n] = f"criterion {n:2d}: FAIL (raised before a verdict)"

        def close(ok: bool, detail: str) -> None:
            VERDICTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
            print(VERDICTS[n])

        return close

    return open_


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
