from __future__ import annotations

import re

import pytest
from hypothesis import HealthCheck, settings, strategies as st

from meaf import Instance, _kernels

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@st.composite
def tiny_instances(draw, max_users=6, max_apps=4, max_t=6, max_cap=10,
                   cap_at_least_demand=False):
    n = draw(st.integers(1, max_users))
    m = draw(st.integers(1, max_apps))
    users = []
    total = 0
    for u in range(n):
        t = draw(st.integers(1, max_t))
        total += t
        pre = draw(st.sets(st.integers(0, m - 1), max_size=m))
        users.append(("u%d" % u, t, sorted(pre)))
    if cap_at_least_demand:
        caps = [draw(st.integers(0, max_cap)) for _ in range(m)]
        short = total - sum(caps)
        if short > 0:
            caps[draw(st.integers(0, m - 1))] += short
    else:
        caps = [draw(st.integers(0, max_cap)) for _ in range(m)]
    return Instance.from_users(m, caps, users)


@pytest.fixture
def pure_backend():
    """Route all kernel calls through the pure-Python implementations."""
    saved = {
        name: getattr(_kernels, name + "_kernel")
        for name in ("carl", "dtas", "preonly", "dinic")
    }
    for name in saved:
        setattr(_kernels, name + "_kernel", _kernels.pure[name])
    yield _kernels.pure
    for name, fn in saved.items():
        setattr(_kernels, name + "_kernel", fn)


# ------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion at the end of the
# run, derived from the outcomes of the tests in test_acceptance.py.

_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return

    def key(nodeid):
        match = re.search(r"test_criterion_(\d+)", nodeid)
        return int(match.group(1)) if match else 99

    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE, key=key):
        outcome = _ACCEPTANCE[nodeid]
        label = nodeid.split("::")[-1].replace("test_criterion_", "criterion ")
        label = label.replace("_", " ", 1).replace("_", " ")
        word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(
            outcome, outcome.upper()
        )
        terminalreporter.write_line("%s  %s" % (word, label))
