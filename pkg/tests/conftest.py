import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from certdroid.features import default_config  # noqa: E402
from certdroid.ingest import RawManifest, RawPackage  # noqa: E402
from certdroid.likelihood import ChannelCounts, LikelihoodModel  # noqa: E402

_criteria: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): exit criterion, reported in the summary")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        marker = report.user_properties and dict(report.user_properties).get("criterion")
        if marker:
            _criteria.append((marker, report.outcome))


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    m = request.node.get_closest_marker("acceptance")
    if m:
        request.node.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _criteria:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")


@pytest.fixture(scope="session")
def cfg():
    return default_config()


def make_raw(sha="0" * 64, serials=(), permissions=(), dex=(), filters=()):
    return RawPackage(sha256=sha, size_bytes=0, cert_serials=tuple(serials),
                      manifest=RawManifest(requested_permissions=frozenset(permissions),
                                           intent_filters=tuple(filters)),
                      dex_strings=tuple(dex))


def model_from_rates(p_mal, p_ben, n=9998, fingerprint="toy"):
    """Single-channel model whose smoothed P(1|c) equal the given rates (n chosen so they are exact)."""
    cm = tuple(round(p * (n + 2)) - 1 for p in p_mal)
    cb = tuple(round(p * (n + 2)) - 1 for p in p_ben)
    ch = ChannelCounts(n, n, cb, cm)
    return LikelihoodModel({"requested": ch, "api_related": ch}, fingerprint)
