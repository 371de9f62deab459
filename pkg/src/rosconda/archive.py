"""Package archives and prefix relocation.

An archive is an uncompressed tar holding ``info/index.json``,
``info/paths.json`` and the payload. Payload files are built against
``PLACEHOLDER``; installing rewrites it to the real prefix. Text files get a
plain substitution. In binary files the placeholder is a fixed-length field:
the prefix is written in its place and the rest of the field is NUL-filled,
so the file length never changes.
"""
from __future__ import annotations

import io
import json
import tarfile
from dataclasses import dataclass
from typing import Iterable

from .errors import MalformedIndex, PrefixTooLong

_STEM = "/opt/placeholder_prefix"
PLACEHOLDER = (_STEM + "_placehold" * 30)[:255]
TERMINATOR = b"\0"

TEXT = "text"
BINARY = "binary"


@dataclass(frozen=True)
class PathEntry:
    path: str
    mode: str = TEXT
    prefix_placeholder: str | None = None

    def to_json(self) -> dict:
        doc = {"path": self.path, "mode": self.mode}
        if self.prefix_placeholder is not None:
            doc["prefix_placeholder"] = self.prefix_placeholder
        return doc


@dataclass
class PackageArchive:
    index: dict
    paths: list[PathEntry]
    payload: dict[str, bytes]


def _info(name: str, size: int) -> tarfile.TarInfo:
    ti = tarfile.TarInfo(name)
    ti.size = size
    ti.mtime = 0
    ti.mode = 0o644
    ti.uid = ti.gid = 0
    ti.uname = ti.gname = ""
    return ti


def build_archive(index: dict, files: Iterable[tuple[PathEntry, bytes]]) -> bytes:
    """Deterministically pack ``files`` with their metadata."""
    files = sorted(files, key=lambda f: f[0].path)
    paths = {"paths_version": 1, "paths": [e.to_json() for e, _ in files]}
    members = [
        ("info/index.json", json.dumps(index, sort_keys=True, indent=2).encode() + b"\n"),
        ("info/paths.json", json.dumps(paths, sort_keys=True, indent=2).encode() + b"\n"),
    ] + [(e.path, data) for e, data in files]
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for name, data in members:
            tar.addfile(_info(name, len(data)), io.BytesIO(data))
    return buf.getvalue()


def read_archive(path) -> PackageArchive:
    try:
        with tarfile.open(path, mode="r:") as tar:
            members = {}
            for m in tar.getmembers():
                if not m.isfile():
                    continue
                if m.name.startswith("/") or ".." in m.name.split("/"):
                    raise MalformedIndex("%s: unsafe member path %r" % (path, m.name))
                members[m.name] = tar.extractfile(m).read()
    except tarfile.TarError as e:
        raise MalformedIndex("%s: unreadable archive: %s" % (path, e)) from None
    try:
        index = json.loads(members.pop("info/index.json"))
        paths_doc = json.loads(members.pop("info/paths.json"))
    except (KeyError, ValueError) as e:
        raise MalformedIndex("%s: missing or invalid metadata: %s" % (path, e)) from None
    entries = [
        PathEntry(p["path"], p.get("mode", TEXT), p.get("prefix_placeholder"))
        for p in paths_doc.get("paths", [])
    ]
    listed = {e.path for e in entries}
    payload = {k: v for k, v in members.items() if not k.startswith("info/")}
    if set(payload) != listed:
        raise MalformedIndex("%s: paths.json does not match payload" % path)
    return PackageArchive(index, entries, payload)


def relocate_text(data: bytes, placeholder: str, prefix: str) -> bytes:
    return data.replace(placeholder.encode(), prefix.encode())


def relocate_binary(data: bytes, placeholder: str, prefix: str) -> bytes:
    old = placeholder.encode()
    new = prefix.encode()
    if len(new) > len(old):
        raise PrefixTooLong(
            "prefix is %d bytes, binary placeholder allows %d" % (len(new), len(old))
        )
    return data.replace(old, new + TERMINATOR * (len(old) - len(new)))


def relocate(entry: PathEntry, data: bytes, prefix: str) -> bytes:
    if entry.prefix_placeholder is None:
        return data
    if entry.mode == BINARY:
        return relocate_binary(data, entry.prefix_placeholder, prefix)
    return relocate_text(data, entry.prefix_placeholder, prefix)
