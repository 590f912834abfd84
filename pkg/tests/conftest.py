"""Shared fixtures and the acceptance summary printed after the run."""

from __future__ import annotations

import numpy as np
import pytest

from discspec import gallery
from discspec.model import DiscreteModel, Rate

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


class CriterionRecorder:
    """Collects sub-checks for one acceptance criterion and asserts them together."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.checks: list[tuple[str, bool, str]] = []

    def check(self, label: str, ok: bool, detail: str = "") -> bool:
        self.checks.append((label, bool(ok), detail))
        return bool(ok)

    def finish(self) -> None:
        failed = [c for c in self.checks if not c[1]]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {self.number:>2} {status}: {self.title}"
        detail = "; ".join(f"{lab} ({det})" for lab, _, det in failed)
        ACCEPTANCE_RESULTS.append((line, not failed, detail))
        print(line + (f" -- failed: {detail}" if failed else ""))
        assert not failed, f"criterion {self.number} failed: {detail}"


@pytest.fixture
def criterion():
    made = []

    def make(number: int, title: str) -> CriterionRecorder:
        rec = CriterionRecorder(number, title)
        made.append(rec)
        return rec
    return make


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line, _, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(line + (f" -- failed: {detail}" if detail else ""))


@pytest.fixture(params=sorted(gallery.GALLERY))
def gallery_model(request) -> DiscreteModel:
    return gallery.get(request.param)


def table_model(a, b, c=None, fill: float = 1.0) -> DiscreteModel:
    """Model from finite tables, extended by the constant ``fill`` past their end."""
    ext = repr(float(fill))
    c = np.zeros(len(b)) if c is None else c
    return DiscreteModel(Rate.from_table(a, ext), Rate.from_table(b, ext), Rate.from_table(c, "0"))
