import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(FIXTURES))

import build  # noqa: E402

from realseal.crypto import generate_keypair  # noqa: E402
from realseal.trust import TrustAuthority  # noqa: E402

WHEN = build.WHEN


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def fixture_authority():
    return build.authority()


@pytest.fixture
def fixture_trust_list(fixture_authority):
    return fixture_authority.get_trust_list()


class TickClock:
    """One second per call, so every operation gets a distinct timestamp."""

    def __init__(self, start=datetime(2024, 1, 1, tzinfo=timezone.utc)):
        self.now = start.timestamp()

    def __call__(self):
        self.now += 1
        return datetime.fromtimestamp(self.now, timezone.utc)


@pytest.fixture
def clock():
    return TickClock()


@pytest.fixture
def ca_keypair():
    return generate_keypair(bytes([0x42]) * 32)


@pytest.fixture
def authority(ca_keypair, clock, tmp_path):
    return TrustAuthority(ca_keypair, "s3cret", tmp_path / "ops.log", clock=clock)


# -- acceptance summary ----------------------------------------------------------

_RESULTS = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record ``(passed, detail)`` for the one-line acceptance summary."""
    results = request.config.stash.setdefault(_RESULTS, {})

    def record(number: int, passed: bool, detail: str):
        results[number] = (passed, detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
