"""Versions, version constraints and match specs.

A version is ``[epoch!]segments[+local]``. Segments are separated by ``.``,
``_`` or ``-`` and each segment splits further into numeric and lowercase
alphabetic runs, so ``1!2.0rc1`` is epoch 1 with segments ``[2], [0, 'rc', 1]``.

Ordering pads missing trailing components with numeric 0. Numbers sort above
words, words sort lexically, and ``dev`` sorts below everything.

A match spec selects package records::

    python                       any build of python
    python=3.8                   3.8 or anything starting with 3.8.
    python=3.8.8=hffdb5ce_0_cpython
    numpy >=1.2,<2
    robostack::ros-noetic-desktop
"""
from __future__ import annotations

import fnmatch
import functools
import re
from dataclasses import dataclass, field
from typing import Union

from .errors import MalformedSpec, MalformedVersion

__all__ = [
    "Version",
    "VersionConstraint",
    "MatchSpec",
    "parse_version",
    "compare_versions",
    "parse_constraint",
    "parse_matchspec",
    "spec_matches",
    "LT",
    "EQ",
    "GT",
]

LT, EQ, GT = -1, 0, 1

Component = Union[int, str]
Segment = tuple  # tuple[Component, ...]

_VERSION_CHARS = re.compile(r"[0-9a-z._\-]+")
_SEPARATORS = re.compile(r"[._\-]")
_COMPONENTS = re.compile(r"\d+|[a-z]+")
_NAME = re.compile(r"[a-z0-9_.\-]+")
_CHANNEL = re.compile(r"[A-Za-z0-9_.\-]+")
_BUILD = re.compile(r"[A-Za-z0-9_.+*]+")
_GLOB = re.compile(r"[0-9a-z._\-*]+")
_OPERATORS = ("==", "!=", ">=", "<=", ">", "<", "=")
_OP_CHARS = "=!<>~^"


# -- versions ----------------------------------------------------------------


def _split_segments(text: str, whole: str) -> tuple[Segment, ...]:
    if not text:
        raise MalformedVersion("empty segment in version %r" % whole)
    segments = []
    for part in _SEPARATORS.split(text):
        if not part:
            raise MalformedVersion("empty segment in version %r" % whole)
        comps = _COMPONENTS.findall(part)
        segments.append(tuple(int(c) if c.isdigit() else c for c in comps))
    return tuple(segments)


def _comp_key(c: Component) -> tuple:
    if isinstance(c, int):
        return (2, c, "")
    if c == "dev":
        return (0, 0, "")
    return (1, 0, c)


_ZERO_KEY = _comp_key(0)


def _cmp_segment(a: Segment, b: Segment) -> int:
    for i in range(max(len(a), len(b))):
        ka = _comp_key(a[i]) if i < len(a) else _ZERO_KEY
        kb = _comp_key(b[i]) if i < len(b) else _ZERO_KEY
        if ka != kb:
            return LT if ka < kb else GT
    return EQ


def _cmp_segments(a: tuple[Segment, ...], b: tuple[Segment, ...]) -> int:
    for i in range(max(len(a), len(b))):
        r = _cmp_segment(a[i] if i < len(a) else (), b[i] if i < len(b) else ())
        if r:
            return r
    return EQ


def _normalize(segments: tuple[Segment, ...]) -> tuple[Segment, ...]:
    out = []
    for seg in segments:
        seg = list(seg)
        while seg and seg[-1] == 0:
            seg.pop()
        out.append(tuple(seg))
    while out and not out[-1]:
        out.pop()
    return tuple(out)


def _render_segments(segments: tuple[Segment, ...]) -> str:
    return ".".join("".join(str(c) for c in seg) for seg in segments)


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class Version:
    epoch: int
    segments: tuple[Segment, ...]
    local: tuple[Segment, ...] = ()
    _key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        key = (self.epoch, _normalize(self.segments), _normalize(self.local))
        object.__setattr__(self, "_key", key)

    def __str__(self) -> str:
        text = _render_segments(self.segments)
        if self.epoch:
            text = "%d!%s" % (self.epoch, text)
        if self.local:
            text += "+" + _render_segments(self.local)
        return text

    def __eq__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __lt__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return compare_versions(self, other) == LT

    def startswith(self, prefix: "Version") -> bool:
        """True if this version's leading segments equal all of ``prefix``'s."""
        if self.epoch != prefix.epoch:
            return False
        for i, seg in enumerate(prefix.segments):
            mine = self.segments[i] if i < len(self.segments) else ()
            if _cmp_segment(mine, seg) != EQ:
                return False
        if prefix.local:
            return _cmp_segments(self.local, prefix.local) == EQ
        return True


@functools.lru_cache(maxsize=65536)
def parse_version(text: str) -> Version:
    if not text or not isinstance(text, str):
        raise MalformedVersion("empty version")
    epoch = 0
    body = text
    if "!" in body:
        epoch_text, body = body.split("!", 1)
        if not epoch_text.isdigit() or not epoch_text.isascii():
            raise MalformedVersion("bad epoch in version %r" % text)
        epoch = int(epoch_text)
    local_text = None
    if "+" in body:
        body, local_text = body.split("+", 1)
    for part in (body, local_text):
        if part is not None and part and not _VERSION_CHARS.fullmatch(part):
            raise MalformedVersion("illegal character in version %r" % text)
    segments = _split_segments(body, text)
    local = _split_segments(local_text, text) if local_text is not None else ()
    return Version(epoch, segments, local)


def compare_versions(a: Version, b: Version) -> int:
    """Return ``LT``, ``EQ`` or ``GT``."""
    if a.epoch != b.epoch:
        return LT if a.epoch < b.epoch else GT
    return _cmp_segments(a.segments, b.segments) or _cmp_segments(a.local, b.local)


# -- constraints -------------------------------------------------------------


def _glob_match(pattern: str, version: Version) -> bool:
    pats = pattern.split(".")
    segs = str(version).split("+")[0].split(".")
    if "!" in segs[0] and "!" not in pats[0]:
        return False
    if pats[-1] == "*":
        pats = pats[:-1]
        if len(segs) < len(pats):
            return False
        segs = segs[: len(pats)]
    elif len(segs) != len(pats):
        return False
    return all(fnmatch.fnmatchcase(s, p) for s, p in zip(segs, pats))


@dataclass(frozen=True)
class Atom:
    op: str  # one of ==, !=, >, >=, <, <=, =, glob
    operand: Union[Version, str]

    def matches(self, v: Version) -> bool:
        op, x = self.op, self.operand
        if op == "=":
            return v == x or v.startswith(x)
        if op == "glob":
            return _glob_match(x, v)
        c = compare_versions(v, x)
        if op == "==":
            return c == EQ
        if op == "!=":
            return c != EQ
        if op == ">":
            return c == GT
        if op == ">=":
            return c != LT
        if op == "<":
            return c == LT
        return c != GT  # <=

    def __str__(self) -> str:
        if self.op == "=":
            return "%s.*" % self.operand
        if self.op == "glob":
            return self.operand
        return "%s%s" % (self.op, self.operand)


@dataclass(frozen=True)
class VersionConstraint:
    """Conjunction of atoms; no atoms means any version."""

    atoms: tuple[Atom, ...] = ()

    def matches(self, v: Version) -> bool:
        return all(a.matches(v) for a in self.atoms)

    @property
    def is_any(self) -> bool:
        return not self.atoms

    def __str__(self) -> str:
        return ",".join(str(a) for a in self.atoms) if self.atoms else "*"


ANY = VersionConstraint()


def _version_or_spec_error(text: str, spec: str) -> Version:
    try:
        return parse_version(text)
    except MalformedVersion as e:
        raise MalformedSpec("%s (in %r)" % (e, spec)) from None


def _parse_atom(text: str, spec: str) -> Atom | None:
    if not text:
        raise MalformedSpec("empty version clause in %r" % spec)
    if text == "*":
        return None
    n = 0
    while n < len(text) and text[n] in _OP_CHARS:
        n += 1
    op = text[:n]
    operand = text[n:]
    if op and op not in _OPERATORS:
        raise MalformedSpec("unknown operator %r in %r" % (op, spec))
    if not op or op == "=":
        if operand == "*":
            return None
        if "*" in operand:
            if operand.endswith(".*") and "*" not in operand[:-2]:
                return Atom("=", _version_or_spec_error(operand[:-2], spec))
            if not _GLOB.fullmatch(operand):
                raise MalformedSpec("bad version pattern %r in %r" % (operand, spec))
            return Atom("glob", operand)
        return Atom(op or "==", _version_or_spec_error(operand, spec))
    if not operand:
        raise MalformedSpec("operator %r without version in %r" % (op, spec))
    if "*" in operand:
        raise MalformedSpec("wildcard not allowed after %r in %r" % (op, spec))
    return Atom(op, _version_or_spec_error(operand, spec))


def parse_constraint(text: str, spec: str | None = None) -> VersionConstraint:
    spec = spec if spec is not None else text
    atoms = []
    for part in text.split(","):
        atom = _parse_atom(part, spec)
        if atom is not None:
            atoms.append(atom)
    return VersionConstraint(tuple(atoms))


# -- match specs -------------------------------------------------------------


@dataclass(frozen=True)
class MatchSpec:
    name: str
    version: VersionConstraint = ANY
    build: str | None = None
    channel: str | None = None

    def __str__(self) -> str:
        head = "%s::%s" % (self.channel, self.name) if self.channel else self.name
        atoms = self.version.atoms
        if self.build is None:
            if not atoms:
                return head
            if len(atoms) == 1 and atoms[0].op == "=":
                return "%s=%s" % (head, atoms[0].operand)
            expr = str(self.version)
            return head + expr if expr[0] in _OP_CHARS else "%s %s" % (head, expr)
        if len(atoms) == 1 and atoms[0].op == "==":
            return "%s=%s=%s" % (head, atoms[0].operand, self.build)
        return "%s %s %s" % (head, self.version, self.build)

    def match(self, record) -> bool:
        return spec_matches(self, record)


def _check_build(build: str, spec: str) -> str:
    if not _BUILD.fullmatch(build):
        raise MalformedSpec("bad build string %r in %r" % (build, spec))
    return build


@functools.lru_cache(maxsize=65536)
def parse_matchspec(text: str) -> MatchSpec:
    if not isinstance(text, str) or not text.strip():
        raise MalformedSpec("empty match spec")
    spec = text
    text = re.sub(r"\s*,\s*", ",", text.strip())
    channel = None
    if "::" in text:
        channel, text = text.split("::", 1)
        if not _CHANNEL.fullmatch(channel):
            raise MalformedSpec("bad channel in %r" % spec)
    m = _NAME.match(text)
    if not m:
        raise MalformedSpec("empty package name in %r" % spec)
    name, rest = m.group(0), text[m.end():]
    version, build = ANY, None
    if not rest:
        pass
    elif rest[0].isspace():
        tokens = rest.split()
        if len(tokens) > 2:
            raise MalformedSpec("too many fields in %r" % spec)
        version = parse_constraint(tokens[0], spec)
        if len(tokens) == 2:
            build = _check_build(tokens[1], spec)
    elif rest[0] == "=" and not rest.startswith("=="):
        parts = rest[1:].split("=")
        if len(parts) > 2 or "," in rest:
            raise MalformedSpec("malformed pin %r" % spec)
        if len(parts) == 1:
            version = parse_constraint("=" + parts[0], spec)
        else:
            ver = parts[0]
            if "*" in ver:
                version = parse_constraint(ver, spec)
            else:
                version = parse_constraint("==" + ver, spec)
            build = _check_build(parts[1], spec)
    elif rest[0] in _OP_CHARS:
        tokens = rest.split()
        if len(tokens) > 2:
            raise MalformedSpec("too many fields in %r" % spec)
        version = parse_constraint(tokens[0], spec)
        if len(tokens) == 2:
            build = _check_build(tokens[1], spec)
    else:
        raise MalformedSpec("unexpected %r after name in %r" % (rest[0], spec))
    return MatchSpec(name, version, build, channel)


def spec_matches(spec: MatchSpec, record) -> bool:
    """Match against anything with name/version/build/channel attributes."""
    if spec.name != record.name:
        return False
    if spec.channel is not None and spec.channel != getattr(record, "channel", None):
        return False
    if not spec.version.matches(record.version):
        return False
    if spec.build is not None and not fnmatch.fnmatchcase(record.build, spec.build):
        return False
    return True
