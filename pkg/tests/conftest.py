import time

import pytest

_RESULTS_KEY = pytest.StashKey[list]()


class AcceptanceRecorder:
    def __init__(self, config):
        self._config = config

    def check(self, number: int, title: str, func, limit_s: float):
        t0 = time.perf_counter()
        passed, detail = func()
        elapsed = time.perf_counter() - t0
        in_time = elapsed < limit_s
        ok = bool(passed) and in_time
        timing = f"{elapsed:.2f}s / limit {limit_s:g}s"
        if not in_time:
            timing += " (too slow)"
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} [{timing}]"
        self._config.stash.setdefault(_RESULTS_KEY, []).append((number, line))
        print(line)
        assert ok, line


@pytest.fixture
def acceptance(request):
    return AcceptanceRecorder(request.config)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS_KEY, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(results):
        terminalreporter.write_line(line)
