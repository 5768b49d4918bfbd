from collections import defaultdict

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")

_CRITERIA: dict = defaultdict(list)


@pytest.fixture
def criterion():
    """record(n, part, ok, detail) keeps one line per acceptance criterion."""
    def record(n: int, part: str, ok: bool, detail: str = "") -> bool:
        _CRITERIA[n].append((part, bool(ok), detail))
        print(f"criterion {n} [{part}]: {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        parts = _CRITERIA[n]
        ok = all(p[1] for p in parts)
        failed = [f"{p[0]} ({p[2]})" for p in parts if not p[1]]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += " - failing: " + "; ".join(failed)
        terminalreporter.write_line(line)
