"""Channels, per-platform index documents and strict-priority merging.

An index document lives at ``<channel>/<platform>/repodata.json``::

    {"info": {"subdir": "linux-64"},
     "packages": {"python-3.8.8-hffdb5ce_0_cpython.tar": {
         "name": "python", "version": "3.8.8", "build": "hffdb5ce_0_cpython",
         "build_number": 0, "depends": [], "sha256": "..."}}}

Archives sit next to the index document they are listed in.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shutil
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DigestMismatch,
    MalformedIndex,
    MalformedSpec,
    MalformedVersion,
    SourceUnreachable,
)
from .verspec import MatchSpec, Version, parse_matchspec, parse_version, spec_matches

log = logging.getLogger(__name__)

PLATFORMS = ("linux-64", "linux-aarch64", "osx-64", "osx-arm64", "win-64", "noarch")
ARCHIVE_EXT = ".tar"
INDEX_NAME = "repodata.json"
BUNDLED_CHANNELS = Path(__file__).parent / "data" / "channels"
_HEX64 = re.compile(r"[0-9a-f]{64}")


@dataclass(frozen=True)
class PackageRecord:
    name: str
    version: Version
    build: str
    build_number: int
    depends: tuple[str, ...]
    channel: str
    platform: str
    filename: str
    digest: str

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.name, str(self.version), self.build)

    @property
    def pin(self) -> str:
        return "%s=%s=%s" % self.key

    @property
    def dist(self) -> str:
        return "%s/%s::%s-%s-%s" % (self.channel, self.platform, *self.key)

    def __str__(self) -> str:
        return "%s %s %s" % self.key

    def index_entry(self) -> dict:
        return {
            "name": self.name,
            "version": str(self.version),
            "build": self.build,
            "build_number": self.build_number,
            "depends": list(self.depends),
            "sha256": self.digest,
        }

    def to_json(self) -> dict:
        doc = self.index_entry()
        doc.update(channel=self.channel, subdir=self.platform, fn=self.filename)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "PackageRecord":
        return record_from_entry(doc["fn"], doc, doc["channel"], doc["subdir"])


def record_from_entry(filename: str, entry: Mapping, channel: str, platform: str):
    """Validate one index entry; raises ``MalformedIndex`` naming ``filename``."""

    def bad(why):
        return MalformedIndex("%s: %s" % (filename, why), entry=filename)

    if not isinstance(entry, Mapping):
        raise bad("entry is not an object")
    for key in ("name", "version", "build"):
        if not isinstance(entry.get(key), str) or not entry[key]:
            raise bad("missing or invalid %r" % key)
    build_number = entry.get("build_number", 0)
    if not isinstance(build_number, int) or isinstance(build_number, bool) or build_number < 0:
        raise bad("build_number must be a non-negative integer")
    depends = entry.get("depends", [])
    if not isinstance(depends, list) or not all(isinstance(d, str) for d in depends):
        raise bad("depends must be a list of strings")
    digest = entry.get("sha256")
    if not isinstance(digest, str) or not _HEX64.fullmatch(digest):
        raise bad("sha256 must be 64 lowercase hex digits")
    subdir = entry.get("subdir", platform)
    if subdir != platform:
        raise bad("subdir %r does not match index platform %r" % (subdir, platform))
    try:
        version = parse_version(entry["version"])
        for dep in depends:
            parse_matchspec(dep)
    except (MalformedVersion, MalformedSpec) as e:
        raise bad(str(e)) from None
    name = entry["name"]
    if not _valid_name(name):
        raise bad("invalid package name %r" % name)
    expected = "%s-%s-%s%s" % (name, version, entry["build"], ARCHIVE_EXT)
    if filename != expected:
        raise bad("file name should be %r" % expected)
    return PackageRecord(
        name=name,
        version=version,
        build=entry["build"],
        build_number=build_number,
        depends=tuple(depends),
        channel=channel,
        platform=platform,
        filename=filename,
        digest=digest,
    )


def _valid_name(name: str) -> bool:
    try:
        return parse_matchspec(name).name == name
    except MalformedSpec:
        return False


@dataclass
class ChannelIndex:
    channel: str
    platform: str
    records: dict[str, PackageRecord] = field(default_factory=dict)
    locator: str | None = None

    def __len__(self) -> int:
        return len(self.records)

    def to_document(self) -> dict:
        return {
            "info": {"subdir": self.platform},
            "packages": {
                fn: self.records[fn].index_entry() for fn in sorted(self.records)
            },
        }


def _is_url(locator: str) -> bool:
    return locator.startswith(("http://", "https://"))


def _read_source(locator: str, relpath: str) -> bytes | None:
    """Return the bytes at ``relpath`` or ``None`` when it does not exist."""
    if _is_url(locator):
        url = locator.rstrip("/") + "/" + relpath
        try:
            with urllib.request.urlopen(url, timeout=30) as resp:
                return resp.read()
        except urllib.error.HTTPError as e:
            if e.code == 404:
                return None
            raise SourceUnreachable("%s: HTTP %d" % (url, e.code)) from None
        except (urllib.error.URLError, OSError) as e:
            raise SourceUnreachable("%s: %s" % (url, e)) from None
    base = Path(locator)
    if not base.is_dir():
        raise SourceUnreachable("channel directory %s does not exist" % base)
    path = base / relpath
    if not path.exists():
        return None
    try:
        return path.read_bytes()
    except OSError as e:
        raise SourceUnreachable("%s: %s" % (path, e)) from None


def parse_index(text: bytes | str, channel: str, platform: str) -> ChannelIndex:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if not text.strip():
        return ChannelIndex(channel, platform)
    try:
        doc = json.loads(text)
    except ValueError as e:
        raise MalformedIndex("%s/%s: invalid JSON: %s" % (channel, platform, e)) from None
    if not isinstance(doc, dict):
        raise MalformedIndex("%s/%s: index must be an object" % (channel, platform))
    subdir = (doc.get("info") or {}).get("subdir", platform)
    if subdir != platform:
        raise MalformedIndex(
            "%s/%s: index declares subdir %r" % (channel, platform, subdir)
        )
    packages = doc.get("packages") or {}
    if not isinstance(packages, dict):
        raise MalformedIndex("%s/%s: packages must be an object" % (channel, platform))
    records = {}
    for fn in sorted(packages):
        records[fn] = record_from_entry(fn, packages[fn], channel, platform)
    return ChannelIndex(channel, platform, records)


def load_index(source: str | os.PathLike, channel: str, platform: str) -> ChannelIndex:
    """Load ``<source>/<platform>/repodata.json``.

    A missing index document yields an empty index; a missing channel
    directory or an unreachable URL raises ``SourceUnreachable``.
    """
    locator = str(source)
    raw = _read_source(locator, "%s/%s" % (platform, INDEX_NAME))
    index = parse_index(raw or b"", channel, platform)
    index.locator = locator
    return index


# -- channel references --------------------------------------------------------


@dataclass(frozen=True)
class Channel:
    name: str
    locator: str


def resolve_channel(ref: str, root: str | os.PathLike | None = None) -> Channel:
    """Turn a ``-c`` argument into a channel name and locator.

    URLs and existing directories are used as given. Bare names are looked
    up under ``<root>/channels`` and then among the bundled fixture channels.
    """
    if _is_url(ref):
        return Channel(ref.rstrip("/").rsplit("/", 1)[-1], ref.rstrip("/"))
    path = Path(ref)
    if os.sep in ref or ref.startswith("."):
        if not path.is_dir():
            raise SourceUnreachable("channel directory %s does not exist" % ref)
        return Channel(path.resolve().name, str(path.resolve()))
    if root is not None and (Path(root) / "channels" / ref).is_dir():
        return Channel(ref, str(Path(root) / "channels" / ref))
    if (BUNDLED_CHANNELS / ref).is_dir():
        return Channel(ref, str(BUNDLED_CHANNELS / ref))
    raise SourceUnreachable("unknown channel %r" % ref)


def load_channels(channels: Sequence[Channel], platform: str) -> list[ChannelIndex]:
    """Load the platform and noarch indexes of every channel, in priority order."""
    jobs = []
    for ch in channels:
        jobs.append((ch, platform))
        if platform != "noarch":
            jobs.append((ch, "noarch"))
    with ThreadPoolExecutor(max_workers=min(8, len(jobs) or 1)) as pool:
        futures = [pool.submit(load_index, ch.locator, ch.name, p) for ch, p in jobs]
        return [f.result() for f in futures]


# -- merging -------------------------------------------------------------------


def _sort_candidates(records: Iterable[PackageRecord], ranks: Mapping[str, int]):
    out = sorted(records, key=lambda r: r.build)
    out.sort(key=lambda r: r.platform == "noarch")
    out.sort(key=lambda r: r.build_number, reverse=True)
    out.sort(key=lambda r: r.version, reverse=True)
    out.sort(key=lambda r: ranks.get(r.channel, len(ranks)))
    return tuple(out)


class MergedIndex:
    """Candidates grouped by name, best first. Immutable after construction."""

    def __init__(self, platform: str, channels: Sequence[str],
                 groups: Mapping[str, tuple[PackageRecord, ...]],
                 locators: Mapping[str, str] | None = None):
        self.platform = platform
        self.channels = tuple(channels)
        self.ranks = {ch: i for i, ch in enumerate(self.channels)}
        self.groups = dict(groups)
        self.locators = dict(locators or {})
        self._find_cache: dict[MatchSpec, tuple[PackageRecord, ...]] = {}

    def names(self) -> list[str]:
        return sorted(self.groups)

    def candidates(self, name: str) -> tuple[PackageRecord, ...]:
        return self.groups.get(name, ())

    def rank(self, record: PackageRecord) -> int:
        return self.ranks.get(record.channel, len(self.ranks))

    def find(self, spec: MatchSpec | str) -> tuple[PackageRecord, ...]:
        if isinstance(spec, str):
            spec = parse_matchspec(spec)
        hit = self._find_cache.get(spec)
        if hit is None:
            hit = tuple(r for r in self.candidates(spec.name) if spec_matches(spec, r))
            self._find_cache[spec] = hit
        return hit

    def records(self) -> list[PackageRecord]:
        return [r for name in self.names() for r in self.groups[name]]

    def __len__(self) -> int:
        return sum(len(g) for g in self.groups.values())

    def snapshot_digest(self) -> str:
        h = hashlib.sha256()
        for r in self.records():
            h.update(("%s %s %s\n" % (r.channel, r.platform, r.filename)).encode())
            h.update(r.digest.encode())
        return "sha256:" + h.hexdigest()

    @classmethod
    def from_records(cls, records: Iterable[PackageRecord], channels: Sequence[str] = (),
                     platform: str | None = None) -> "MergedIndex":
        """Build a merged index straight from records (tests, synthetic indexes)."""
        records = list(records)
        order = list(channels)
        for r in records:
            if r.channel not in order:
                order.append(r.channel)
        by_channel: dict[tuple[str, str], ChannelIndex] = {}
        for r in records:
            idx = by_channel.setdefault((r.channel, r.platform),
                                        ChannelIndex(r.channel, r.platform))
            idx.records[r.filename] = r
        indexes = sorted(by_channel.values(), key=lambda i: order.index(i.channel))
        merged = merge_channels(indexes)
        if platform is not None:
            merged.platform = platform
        return merged


def merge_channels(indexes: Sequence[ChannelIndex]) -> MergedIndex:
    """Merge indexes under strict channel priority.

    Rank is the position of a channel among the distinct channel names in
    input order; the platform and noarch index of a channel share a rank.
    A name provided by any channel shadows that name in every lower-priority
    channel.
    """
    platforms = {i.platform for i in indexes} - {"noarch"}
    if len(platforms) > 1:
        raise ValueError("cannot merge indexes of platforms %s" % sorted(platforms))
    platform = platforms.pop() if platforms else "noarch"
    order: list[str] = []
    locators = {}
    for idx in indexes:
        if idx.channel not in order:
            order.append(idx.channel)
        if idx.locator and idx.channel not in locators:
            locators[idx.channel] = idx.locator
    ranks = {ch: i for i, ch in enumerate(order)}

    by_name: dict[str, list[PackageRecord]] = {}
    for idx in indexes:
        for fn in sorted(idx.records):
            rec = idx.records[fn]
            by_name.setdefault(rec.name, []).append(rec)
    groups = {}
    for name, recs in by_name.items():
        best = min(ranks[r.channel] for r in recs)
        groups[name] = _sort_candidates([r for r in recs if ranks[r.channel] == best], ranks)
    return MergedIndex(platform, order, groups, locators)


# -- virtual packages ----------------------------------------------------------


@dataclass(frozen=True)
class VirtualPackage:
    name: str
    version: Version
    build: str = "0"

    channel = None

    def __str__(self) -> str:
        return "%s %s %s" % (self.name, self.version, self.build)


@dataclass(frozen=True)
class PlatformProfile:
    """Declared facts about a target system."""

    platform: str
    glibc: str | None = None
    osx: str | None = None


# Used when the target platform is not the host and nothing was declared.
DEFAULT_GLIBC = "2.17"
DEFAULT_OSX = "10.15"


def detect_virtual_packages(profile: PlatformProfile) -> list[VirtualPackage]:
    p = profile.platform
    out = []
    if p.startswith("linux") and profile.glibc:
        out.append(VirtualPackage("__glibc", parse_version(profile.glibc)))
    elif p.startswith("osx") and profile.osx:
        out.append(VirtualPackage("__osx", parse_version(profile.osx)))
    elif p.startswith("win"):
        out.append(VirtualPackage("__win", parse_version("0")))
    return out


def host_platform() -> str:
    import platform as _platform
    import sys

    machine = _platform.machine().lower()
    if sys.platform.startswith("linux"):
        return "linux-aarch64" if machine in ("aarch64", "arm64") else "linux-64"
    if sys.platform == "darwin":
        return "osx-arm64" if machine == "arm64" else "osx-64"
    if sys.platform.startswith("win"):
        return "win-64"
    return "noarch"


def host_profile(platform: str | None = None) -> PlatformProfile:
    """Probe the host when ``platform`` is the host, else use defaults."""
    import platform as _platform

    host = host_platform()
    platform = platform or host
    glibc = osx = None
    if platform.startswith("linux"):
        glibc = DEFAULT_GLIBC
        if platform == host:
            lib, ver = _platform.libc_ver()
            if lib == "glibc" and ver:
                glibc = ver
    elif platform.startswith("osx"):
        osx = DEFAULT_OSX
        if platform == host and _platform.mac_ver()[0]:
            osx = _platform.mac_ver()[0]
    return PlatformProfile(platform, glibc=glibc, osx=osx)


# -- archives --------------------------------------------------------------------


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class ArchiveSource:
    """Locate (and for remote channels, download) package archives."""

    def __init__(self, locators: Mapping[str, str], cache_dir: str | os.PathLike | None = None):
        self.locators = dict(locators)
        self.cache_dir = Path(cache_dir) if cache_dir else None

    @classmethod
    def for_channels(cls, channels: Sequence[Channel], cache_dir=None) -> "ArchiveSource":
        return cls({c.name: c.locator for c in channels}, cache_dir)

    def fetch(self, record: PackageRecord) -> Path:
        """Return a local path to ``record``'s archive after checking its digest."""
        return self.fetch_file(record.channel, record.platform, record.filename, record.digest)

    def fetch_file(self, channel: str, subdir: str, filename: str, digest: str) -> Path:
        try:
            locator = self.locators[channel]
        except KeyError:
            raise SourceUnreachable("no locator for channel %r" % channel) from None
        rel = "%s/%s" % (subdir, filename)
        if _is_url(locator):
            if self.cache_dir is None:
                raise SourceUnreachable("remote channel %r needs a cache dir" % channel)
            path = self.cache_dir / channel / rel
            if not path.exists() or sha256_file(path) != digest:
                data = _read_source(locator, rel)
                if data is None:
                    raise SourceUnreachable("%s/%s not found" % (locator, rel))
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".part")
                tmp.write_bytes(data)
                shutil.move(str(tmp), str(path))
        else:
            path = Path(locator) / rel
            if not path.is_file():
                raise SourceUnreachable("archive %s not found" % path)
        actual = sha256_file(path)
        if actual != digest:
            raise DigestMismatch(
                "%s: expected sha256 %s, got %s" % (filename, digest, actual)
            )
        return path

    def has_file(self, channel: str, subdir: str, filename: str) -> bool:
        locator = self.locators.get(channel)
        if locator is None:
            return False
        if _is_url(locator):
            return True
        return (Path(locator) / subdir / filename).is_file()
