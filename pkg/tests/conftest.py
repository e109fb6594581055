import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion's verdict for the summary."""
    results = request.config.stash.setdefault(_RESULTS, {})

    @contextmanager
    def record(number: int, title: str):
        t0 = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            detail = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            results[number] = ("FAIL", title, time.perf_counter() - t0, detail[:120])
            raise
        results[number] = ("PASS", title, time.perf_counter() - t0, "")

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        verdict, title, secs, detail = results[n]
        line = f"criterion {n}: {verdict}  {title}  ({secs:.2f} s)"
        terminalreporter.write_line(line + (f"  -- {detail}" if detail else ""))
