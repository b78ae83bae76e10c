from __future__ import annotations

from collections import OrderedDict

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# criterion number -> list of (passed, detail)
_ACCEPTANCE: "OrderedDict[int, list[tuple[bool, str]]]" = OrderedDict()


class AcceptanceRecorder:
    def __init__(self, criterion: int):
        self.criterion = criterion

    def __call__(self, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.setdefault(self.criterion, []).append((bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {self.criterion}: {detail}")
        return passed


@pytest.fixture
def acceptance(request):
    marker = request.node.get_closest_marker("criterion")
    return AcceptanceRecorder(marker.args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[n]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d if p else f"[failed] {d}" for p, d in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
