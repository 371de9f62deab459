import hashlib
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rosconda.channels import MergedIndex, PackageRecord, PlatformProfile
from rosconda.verspec import parse_version

FIXTURES = Path(__file__).parent / "fixtures"
LINUX = PlatformProfile("linux-64", glibc="2.17")
WIN = PlatformProfile("win-64")


def mk(name, version, depends=(), build="0", build_number=0, channel="c", platform="linux-64"):
    v = parse_version(version)
    fn = "%s-%s-%s.tar" % (name, v, build)
    digest = hashlib.sha256(("%s/%s/%s" % (channel, platform, fn)).encode()).hexdigest()
    return PackageRecord(name, v, build, build_number, tuple(depends), channel, platform, fn, digest)


def index_of(*records, channels=()):
    return MergedIndex.from_records(records, channels)


@pytest.fixture
def root(tmp_path, monkeypatch):
    """An empty rosconda root; channel names fall back to the bundled fixtures."""
    r = tmp_path / "root"
    r.mkdir()
    monkeypatch.setenv("ROSCONDA_ROOT", str(r))
    return r


@pytest.fixture
def linux():
    return LINUX


def snapshot_tree(path):
    """Relative path -> bytes for files, or None for directories."""
    out = {}
    for dirpath, dirs, files in os.walk(path):
        for d in dirs:
            out[(Path(dirpath) / d).relative_to(path).as_posix() + "/"] = None
        for f in files:
            p = Path(dirpath) / f
            out[p.relative_to(path).as_posix()] = p.read_bytes()
    return out


# -- acceptance reporting ---------------------------------------------------------

_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, [title, True, []])
    entry[1] = entry[1] and rep.passed
    entry[2] += [v for k, v in item.user_properties if k == "measured"]
    if rep.failed:
        entry[2].append("failed in %s" % item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, notes = _CRITERIA[number]
        line = "criterion %d %s: %s" % (number, "PASS" if ok else "FAIL", title)
        if notes:
            line += " [%s]" % "; ".join(notes)
        terminalreporter.write_line(line)
