"""Multi-platform lockfiles.

A spec file lists channels, versioned dependencies and target platforms::

    channels:
      - robostack
      - conda-forge
    dependencies:
      - python=3.8
    platforms:
      - linux-64
      - win-64

The lockfile pins one solved record set per platform::

    # rosconda lock v1
    # spec: sha256:...
    [linux-64]
    # index: sha256:...
    python=3.8.8=hffdb5ce_0_cpython conda-forge 4c3e...

Sections are sorted by platform and entries by name, so generating twice
from the same inputs gives the same bytes. The timestamp line is only
written when a timestamp is passed in.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .archive import read_archive
from .channels import (
    ArchiveSource,
    MergedIndex,
    PackageRecord,
    PlatformProfile,
    detect_virtual_packages,
    host_profile,
    load_channels,
    merge_channels,
    record_from_entry,
    resolve_channel,
)
from .environment import Plan, Transaction, dependency_order, execute
from .errors import (
    EnvironmentExists,
    LockGenerationError,
    MalformedDocument,
    PlatformMissing,
    SourceUnreachable,
)
from .solver import Solution, SolveRequest, UnsatExplanation, check_solution, solve
from .verspec import parse_matchspec

HEADER = "# rosconda lock v1"


@dataclass
class SpecFile:
    channels: list[str]
    dependencies: list[str]
    platforms: list[str]

    def __post_init__(self):
        for d in self.dependencies:
            parse_matchspec(d)
        if not self.platforms:
            raise MalformedDocument("spec file must list at least one platform")

    def canonical(self) -> str:
        return yaml.safe_dump({"channels": list(self.channels),
                               "dependencies": list(self.dependencies),
                               "platforms": list(self.platforms)}, sort_keys=True)

    def digest(self) -> str:
        return "sha256:" + hashlib.sha256(self.canonical().encode()).hexdigest()


def parse_spec_file(text: str) -> SpecFile:
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise MalformedDocument("invalid spec file: %s" % e) from None
    if not isinstance(doc, dict):
        raise MalformedDocument("spec file must be a mapping")
    out = {}
    for key in ("channels", "dependencies", "platforms"):
        items = doc.get(key) or []
        if not isinstance(items, list) or not all(isinstance(i, str) for i in items):
            raise MalformedDocument("%s must be a list of strings" % key)
        out[key] = items
    return SpecFile(**out)


@dataclass(frozen=True, order=True)
class LockEntry:
    name: str
    version: str
    build: str
    channel: str
    digest: str
    platform: str | None = field(default=None, compare=False)

    @property
    def line(self) -> str:
        return "%s=%s=%s %s %s" % (self.name, self.version, self.build, self.channel, self.digest)

    @property
    def identity(self) -> tuple[str, str, str, str, str]:
        return (self.name, self.version, self.build, self.channel, self.digest)

    @property
    def filename(self) -> str:
        return "%s-%s-%s.tar" % (self.name, self.version, self.build)

    @classmethod
    def from_record(cls, rec: PackageRecord) -> "LockEntry":
        return cls(rec.name, str(rec.version), rec.build, rec.channel, rec.digest, rec.platform)


def record_identity(rec: PackageRecord) -> tuple[str, str, str, str, str]:
    return (rec.name, str(rec.version), rec.build, rec.channel, rec.digest)


@dataclass
class Lockfile:
    spec_digest: str
    entries: dict[str, list[LockEntry]]
    index_digests: dict[str, str] = field(default_factory=dict)
    timestamp: str | None = None

    @property
    def platforms(self) -> list[str]:
        return sorted(self.entries)

    def render(self) -> str:
        lines = [HEADER, "# spec: %s" % self.spec_digest]
        if self.timestamp:
            lines.append("# generated: %s" % self.timestamp)
        for platform in self.platforms:
            lines.append("[%s]" % platform)
            if platform in self.index_digests:
                lines.append("# index: %s" % self.index_digests[platform])
            lines += [e.line for e in sorted(self.entries[platform], key=lambda e: e.name)]
        return "\n".join(lines) + "\n"


def parse_lockfile(text: str) -> Lockfile:
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise MalformedDocument("not a lockfile (missing %r header)" % HEADER)
    spec_digest = ""
    timestamp = None
    entries: dict[str, list[LockEntry]] = {}
    digests: dict[str, str] = {}
    section = None
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section in entries:
                raise MalformedDocument("line %d: duplicate section %s" % (n, section))
            entries[section] = []
        elif line.startswith("# spec: "):
            spec_digest = line[8:]
        elif line.startswith("# generated: "):
            timestamp = line[13:]
        elif line.startswith("# index: ") and section is not None:
            digests[section] = line[9:]
        elif line.startswith("#"):
            continue
        elif section is None:
            raise MalformedDocument("line %d: entry outside a platform section" % n)
        else:
            parts = line.split()
            if len(parts) != 3:
                raise MalformedDocument("line %d: expected 'pin channel digest'" % n)
            pin, channel, digest = parts
            spec = parse_matchspec(pin)
            if spec.build is None or len(spec.version.atoms) != 1 or spec.version.atoms[0].op != "==":
                raise MalformedDocument("line %d: %r is not fully pinned" % (n, pin))
            entries[section].append(LockEntry(spec.name, str(spec.version.atoms[0].operand),
                                              spec.build, channel, digest, None))
    return Lockfile(spec_digest, entries, digests, timestamp)


def load_platform_indexes(channels: Sequence[str], platforms: Sequence[str], root=None):
    resolved = [resolve_channel(c, root) for c in channels]
    return resolved, {p: merge_channels(load_channels(resolved, p)) for p in platforms}


def generate_lock(spec: SpecFile, indexes: Mapping[str, MergedIndex],
                  profiles: Mapping[str, PlatformProfile] | None = None,
                  timestamp: str | None = None) -> Lockfile:
    """Solve ``spec`` once per platform; all platforms must succeed."""
    profiles = dict(profiles or {})
    missing = [p for p in spec.platforms if p not in indexes]
    if missing:
        raise PlatformMissing("no index for platform(s): %s" % ", ".join(missing))
    entries = {}
    failures = {}
    for platform in sorted(set(spec.platforms)):
        profile = profiles.get(platform) or host_profile(platform)
        request = SolveRequest(spec.dependencies, indexes[platform],
                               detect_virtual_packages(profile))
        result = solve(request)
        if isinstance(result, UnsatExplanation):
            failures[platform] = result.render()
            continue
        entries[platform] = sorted((LockEntry.from_record(r) for r in result),
                                   key=lambda e: e.name)
    if failures:
        outcomes = {p: "ok" for p in entries}
        outcomes.update(failures)
        raise LockGenerationError(outcomes)
    digests = {p: indexes[p].snapshot_digest() for p in entries}
    return Lockfile(spec.digest(), entries, digests, timestamp)


def verify_lock(lock: Lockfile, platform: str, index: MergedIndex,
                profile: PlatformProfile | None = None) -> list[str]:
    """Problems with ``lock``'s section for ``platform`` against ``index``."""
    if platform not in lock.entries:
        raise PlatformMissing("lockfile has no section for %s" % platform)
    problems = []
    expected = lock.index_digests.get(platform)
    if expected and expected != index.snapshot_digest():
        problems.append("index snapshot drifted for %s" % platform)
    records = []
    for e in lock.entries[platform]:
        match = [r for r in index.candidates(e.name) if record_identity(r) == e.identity]
        if not match:
            problems.append("%s not in index" % e.line)
        else:
            records.append(match[0])
    profile = profile or host_profile(platform)
    request = SolveRequest((), index, detect_virtual_packages(profile))
    problems += check_solution(records, request)
    return problems


def _record_for(entry: LockEntry, platform: str, archives: ArchiveSource) -> PackageRecord:
    for subdir in (entry.platform or platform, "noarch"):
        if archives.has_file(entry.channel, subdir, entry.filename):
            try:
                path = archives.fetch_file(entry.channel, subdir, entry.filename, entry.digest)
            except SourceUnreachable:
                continue
            index = dict(read_archive(path).index)
            index["sha256"] = entry.digest
            return record_from_entry(entry.filename, index, entry.channel,
                                     index.get("subdir", subdir))
    raise SourceUnreachable("archive for %s not found in channel %s" % (entry.line, entry.channel))


def install_from_lock(lock: Lockfile, platform: str, prefix, archives: ArchiveSource,
                      channels: Sequence[str] = (), step_hook=None):
    """Install exactly the entries of one platform section, without solving."""
    if platform not in lock.entries:
        raise PlatformMissing("lockfile has no section for %s" % platform)
    prefix = Path(prefix).absolute()
    if prefix.exists() and (not prefix.is_dir() or any(prefix.iterdir())):
        raise EnvironmentExists("%s already exists and is not empty" % prefix)
    records = [_record_for(e, platform, archives) for e in lock.entries[platform]]
    tx = Transaction((), tuple(dependency_order(records)))
    requested = [parse_matchspec(r.pin) for r in sorted(records, key=lambda r: r.name)]
    chans = list(channels) or list(dict.fromkeys(e.channel for e in lock.entries[platform]))
    plan = Plan(prefix, tx, Solution(tuple(records)), chans, requested, [], archives)
    return execute(plan, "install-lock", [lock.spec_digest], step_hook=step_hook)
