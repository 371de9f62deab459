"""On-disk environments.

Layout of a prefix::

    <prefix>/...                 payload files of installed packages
    <prefix>/meta/<dist>.json    one record document per installed package
    <prefix>/meta/history        append-only transaction log
    <prefix>/meta/pinned         one match spec per line
    <prefix>/meta/channels       channel references in priority order
    <prefix>/meta/.lock          transaction lock

Transactions are all-or-nothing: files being replaced are parked in
``meta/.trash`` until the metadata is written, and any failure before that
point restores the previous file set.
"""
from __future__ import annotations

import datetime as _dt
import fcntl
import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import yaml

from .archive import read_archive, relocate
from .channels import (
    ArchiveSource,
    Channel,
    PackageRecord,
    PlatformProfile,
    detect_virtual_packages,
    host_profile,
    load_channels,
    merge_channels,
    resolve_channel,
)
from .errors import (
    CorruptEnvironment,
    CycleInDependencyGraph,
    EnvironmentExists,
    EnvironmentNotFound,
    LockHeld,
    MalformedDocument,
    RosCondaError,
    SpecHasNoCandidates,
    UnsatisfiableError,
)
from .solver import Solution, SolveRequest, UnsatExplanation, ConflictNode, solve
from .toposort import toposort
from .verspec import MatchSpec, parse_matchspec, spec_matches

log = logging.getLogger(__name__)

META = "meta"
ROOT_ENV_VAR = "ROSCONDA_ROOT"


def default_root() -> Path:
    return Path(os.environ.get(ROOT_ENV_VAR) or Path.home() / ".rosconda")


def env_prefix(name: str, root=None) -> Path:
    return Path(root or default_root()) / "envs" / name


# -- state ---------------------------------------------------------------------


@dataclass(frozen=True)
class HistoryEntry:
    timestamp: str
    command: str
    specs: tuple[str, ...] = ()
    requested: tuple[str, ...] = ()
    unlink: tuple[str, ...] = ()
    link: tuple[str, ...] = ()

    def render(self) -> str:
        lines = ["==> %s <==" % self.timestamp, "# cmd: %s" % self.command,
                 "# specs: %s" % json.dumps(list(self.specs)),
                 "# requested: %s" % json.dumps(list(self.requested))]
        lines += ["-" + d for d in self.unlink]
        lines += ["+" + d for d in self.link]
        return "\n".join(lines) + "\n"


def parse_history(text: str) -> list[HistoryEntry]:
    entries = []
    cur: dict | None = None
    for line in text.splitlines():
        if line.startswith("==> ") and line.endswith(" <=="):
            if cur is not None:
                entries.append(HistoryEntry(**cur))
            cur = dict(timestamp=line[4:-4], command="", specs=(), requested=(),
                       unlink=(), link=())
        elif cur is None or not line:
            continue
        elif line.startswith("# cmd: "):
            cur["command"] = line[7:]
        elif line.startswith("# specs: "):
            cur["specs"] = tuple(json.loads(line[9:]))
        elif line.startswith("# requested: "):
            cur["requested"] = tuple(json.loads(line[13:]))
        elif line[0] == "-":
            cur["unlink"] += (line[1:],)
        elif line[0] == "+":
            cur["link"] += (line[1:],)
    if cur is not None:
        entries.append(HistoryEntry(**cur))
    return entries


@dataclass(frozen=True)
class EnvironmentState:
    prefix: Path
    installed: frozenset = frozenset()
    history: tuple[HistoryEntry, ...] = ()
    pins: tuple[MatchSpec, ...] = ()
    channels: tuple[str, ...] = ()

    @property
    def name(self) -> str:
        return self.prefix.name

    @property
    def requested(self) -> list[MatchSpec]:
        if not self.history:
            return []
        return [parse_matchspec(s) for s in self.history[-1].requested]

    def records(self) -> list[PackageRecord]:
        return sorted(self.installed, key=lambda r: r.name)

    def get(self, name: str) -> PackageRecord | None:
        for r in self.installed:
            if r.name == name:
                return r
        return None


def _record_doc_name(rec: PackageRecord) -> str:
    return "%s-%s-%s.json" % rec.key


def _read_state(prefix: Path) -> EnvironmentState:
    meta = prefix / META
    if not meta.is_dir():
        return EnvironmentState(prefix)
    installed = []
    for doc_path in sorted(meta.glob("*.json")):
        try:
            installed.append(PackageRecord.from_json(json.loads(doc_path.read_text())))
        except (ValueError, KeyError, RosCondaError) as e:
            raise CorruptEnvironment("%s: %s" % (doc_path, e)) from None
    history = parse_history(_read_text(meta / "history"))
    pins = tuple(parse_matchspec(l) for l in _read_text(meta / "pinned").splitlines() if l.strip())
    channels = tuple(l for l in _read_text(meta / "channels").splitlines() if l.strip())
    return EnvironmentState(prefix, frozenset(installed), tuple(history), pins, channels)


def _read_text(path: Path) -> str:
    try:
        return path.read_text()
    except FileNotFoundError:
        return ""


def is_environment(prefix) -> bool:
    return (Path(prefix) / META / "history").is_file()


def load_environment(prefix) -> EnvironmentState:
    prefix = Path(prefix).absolute()
    if not is_environment(prefix):
        raise EnvironmentNotFound("no environment at %s" % prefix)
    with PrefixLock(prefix, shared=True):
        return _read_state(prefix)


# -- locking -------------------------------------------------------------------


class PrefixLock:
    """Advisory lock on ``<prefix>/meta/.lock``; never blocks."""

    def __init__(self, prefix, shared: bool = False):
        self.path = Path(prefix) / META / ".lock"
        self.shared = shared
        self._fd: int | None = None

    def acquire(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd = os.open(self.path, os.O_RDWR | os.O_CREAT, 0o644)
        mode = fcntl.LOCK_SH if self.shared else fcntl.LOCK_EX
        try:
            fcntl.flock(fd, mode | fcntl.LOCK_NB)
        except OSError:
            os.close(fd)
            raise LockHeld("environment %s is locked by another operation"
                           % self.path.parent.parent) from None
        self._fd = fd
        return self

    def release(self):
        if self._fd is not None:
            fcntl.flock(self._fd, fcntl.LOCK_UN)
            os.close(self._fd)
            self._fd = None

    def __enter__(self):
        return self.acquire()

    def __exit__(self, *exc):
        self.release()


# -- transactions ----------------------------------------------------------------


@dataclass(frozen=True)
class Transaction:
    unlink: tuple[PackageRecord, ...] = ()
    link: tuple[PackageRecord, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.unlink or self.link)

    def render(self) -> str:
        lines = sorted("- " + r.dist for r in self.unlink)
        lines += sorted("+ " + r.dist for r in self.link)
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"unlink": [r.to_json() for r in self.unlink],
                "link": [r.to_json() for r in self.link]}


def dependency_order(records: Iterable[PackageRecord]) -> list[PackageRecord]:
    """Dependencies before dependents; raises ``CycleInDependencyGraph``."""
    by_name = {r.name: r for r in records}
    deps = {}
    for r in by_name.values():
        names = set()
        for d in r.depends:
            spec = parse_matchspec(d)
            if spec.name in by_name and spec_matches(spec, by_name[spec.name]):
                names.add(spec.name)
        deps[r.name] = names
    return [by_name[n] for n in toposort(by_name, deps, CycleInDependencyGraph)]


def plan_transaction(current, target) -> Transaction:
    installed = current.installed if isinstance(current, EnvironmentState) else current
    installed = list(installed)
    target = list(target)
    have = {r.key for r in installed}
    want = {r.key for r in target}
    unlink = [r for r in installed if r.key not in want]
    link = [r for r in target if r.key not in have]
    unlink_order = [r for r in reversed(dependency_order(installed)) if r in unlink]
    link_order = [r for r in dependency_order(target) if r in link]
    return Transaction(tuple(unlink_order), tuple(link_order))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class _Journal:
    """Records every filesystem change so it can be undone."""

    def __init__(self, prefix: Path):
        self.prefix = prefix
        self.trash = prefix / META / ".trash"
        self.created_files: list[Path] = []
        self.created_dirs: list[Path] = []
        self.moved: list[tuple[Path, Path]] = []
        self._n = 0

    def makedirs(self, path: Path):
        missing = []
        while not path.exists():
            missing.append(path)
            path = path.parent
        for p in reversed(missing):
            p.mkdir()
            self.created_dirs.append(p)

    def park(self, path: Path):
        """Move an existing file out of the way, keeping it for rollback."""
        if not self.trash.exists():
            self.makedirs(self.trash)
        self._n += 1
        dest = self.trash / ("%06d" % self._n)
        os.replace(path, dest)
        self.moved.append((path, dest))

    def write(self, path: Path, data: bytes):
        self.makedirs(path.parent)
        if path.exists() or path.is_symlink():
            self.park(path)
        self.created_files.append(path)
        with open(path, "wb") as f:
            f.write(data)

    def rollback(self):
        errors = []
        for path in reversed(self.created_files):
            try:
                path.unlink()
            except FileNotFoundError:
                pass
            except OSError as e:
                errors.append("%s: %s" % (path, e))
        for orig, parked in reversed(self.moved):
            try:
                os.replace(parked, orig)
            except OSError as e:
                errors.append("%s: %s" % (orig, e))
        for d in reversed(self.created_dirs):
            try:
                d.rmdir()
            except FileNotFoundError:
                pass
            except OSError as e:
                errors.append("%s: %s" % (d, e))
        if errors:
            raise CorruptEnvironment("rollback failed: " + "; ".join(errors))

    def commit(self, unlinked: Iterable[Path]):
        shutil.rmtree(self.trash, ignore_errors=True)
        for path in sorted(unlinked, key=lambda p: -len(p.parts)):
            d = path.parent
            while d != self.prefix and d.is_dir() and not any(d.iterdir()):
                d.rmdir()
                d = d.parent


StepHook = Callable[[str], None]


def apply_transaction(tx: Transaction, prefix, archives: ArchiveSource, *,
                      command: str = "", specs: Sequence = (),
                      requested: Sequence | None = None,
                      pins: Sequence | None = None,
                      channels: Sequence[str] | None = None,
                      step_hook: StepHook | None = None) -> EnvironmentState:
    """Realize ``tx`` in ``prefix``.

    ``requested``, ``pins`` and ``channels`` replace the stored values when
    given. ``step_hook`` is called with a step label before every
    filesystem mutation; raising from it aborts and rolls back.
    """
    prefix = Path(prefix).absolute()
    if not prefix.is_dir():
        raise EnvironmentNotFound("prefix %s does not exist" % prefix)
    hook = step_hook or (lambda step: None)

    # Fetch, verify and relocate everything before touching the prefix.
    staged = []
    for rec in tx.link:
        archive = read_archive(archives.fetch(rec))
        files = [(e.path, relocate(e, archive.payload[e.path], str(prefix)))
                 for e in archive.paths]
        staged.append((rec, files))

    meta = prefix / META
    created_meta = not meta.exists()
    lock = PrefixLock(prefix)
    lock.acquire()
    journal = _Journal(prefix)
    try:
        before = _read_state(prefix)
        unlinked_paths = []
        try:
            for rec in tx.unlink:
                doc_path = meta / _record_doc_name(rec)
                files = json.loads(doc_path.read_text()).get("files", [])
                for rel in files:
                    path = prefix / rel
                    if path.exists() or path.is_symlink():
                        hook("unlink %s" % rel)
                        journal.park(path)
                        unlinked_paths.append(path)
                hook("unlink-meta %s" % rec.dist)
                journal.park(doc_path)
            hook("between unlink and link")
            for rec, files in staged:
                for rel, data in files:
                    hook("link %s" % rel)
                    journal.write(prefix / rel, data)
                doc = rec.to_json()
                doc["files"] = sorted(rel for rel, _ in files)
                hook("link-meta %s" % rec.dist)
                journal.write(meta / _record_doc_name(rec),
                              (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())

            if requested is None:
                requested = [str(s) for s in before.requested]
            entry = HistoryEntry(
                _now(), command, tuple(str(s) for s in specs),
                tuple(str(s) for s in requested),
                tuple(r.dist for r in tx.unlink), tuple(r.dist for r in tx.link))
            history = _read_text(meta / "history") + entry.render()
            pin_list = before.pins if pins is None else pins
            chan_list = before.channels if channels is None else channels
            hook("write metadata")
            journal.write(meta / "history", history.encode())
            journal.write(meta / "pinned", "".join("%s\n" % p for p in pin_list).encode())
            journal.write(meta / "channels", "".join("%s\n" % c for c in chan_list).encode())
        except BaseException:
            journal.rollback()
            raise
        journal.commit(unlinked_paths)
        return _read_state(prefix)
    finally:
        lock.release()
        if created_meta and not (meta / "history").exists():
            shutil.rmtree(meta, ignore_errors=True)


# -- environment documents ---------------------------------------------------------


@dataclass
class EnvironmentDocument:
    name: str | None
    channels: list[str] = field(default_factory=list)
    dependencies: list[str] = field(default_factory=list)

    def render(self) -> str:
        lines = []
        if self.name is not None:
            lines.append("name: %s" % self.name)
        lines += _yaml_list("channels", self.channels)
        lines += _yaml_list("dependencies", self.dependencies)
        return "\n".join(lines) + "\n"


def _yaml_list(key: str, items: Sequence[str]) -> list[str]:
    if not items:
        return ["%s: []" % key]
    return ["%s:" % key] + ["  - %s" % i for i in items]


def export_environment(state: EnvironmentState, mode: str = "full", name: str | None = None) -> str:
    if mode not in ("full", "no_builds"):
        raise ValueError("mode must be 'full' or 'no_builds'")
    deps = []
    for rec in state.records():
        if mode == "full":
            deps.append("%s=%s=%s" % rec.key)
        else:
            deps.append("%s=%s" % (rec.name, rec.version))
    doc = EnvironmentDocument(name or state.name, list(state.channels), deps)
    return doc.render()


def parse_environment_document(text: str) -> EnvironmentDocument:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise MalformedDocument("invalid environment document: %s" % e) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise MalformedDocument("environment document must be a mapping")
    name = doc.get("name")
    channels = doc.get("channels") or []
    deps = doc.get("dependencies") or []
    if name is not None and not isinstance(name, str):
        raise MalformedDocument("name must be a string")
    for key, items in (("channels", channels), ("dependencies", deps)):
        if not isinstance(items, list) or not all(isinstance(i, str) for i in items):
            raise MalformedDocument("%s must be a list of strings" % key)
    for d in deps:
        parse_matchspec(d)
    return EnvironmentDocument(name, list(channels), list(deps))


# -- high level operations -------------------------------------------------------------


@dataclass
class Plan:
    prefix: Path
    transaction: Transaction
    solution: Solution
    channels: list[str]
    requested: list[MatchSpec]
    pins: list[MatchSpec]
    archives: ArchiveSource
    dropped: list[str] = field(default_factory=list)


def _resolve_prefix(name=None, prefix=None, root=None) -> Path:
    if prefix is not None:
        return Path(prefix).absolute()
    if name is not None:
        return env_prefix(name, root).absolute()
    raise EnvironmentNotFound("an environment name or prefix is required")


def _unsat(result: UnsatExplanation):
    if result.missing:
        return SpecHasNoCandidates(result.missing, result)
    return UnsatisfiableError(result)


def _index_for(channel_refs: Sequence[str], profile: PlatformProfile, root):
    channels = [c if isinstance(c, Channel) else resolve_channel(c, root) for c in channel_refs]
    merged = merge_channels(load_channels(channels, profile.platform))
    cache = Path(root or default_root()) / "pkgs"
    return channels, merged, ArchiveSource.for_channels(channels, cache)


def plan_create(specs: Sequence, channels: Sequence, profile: PlatformProfile | None = None,
                *, name=None, prefix=None, root=None, pins: Sequence = ()) -> Plan:
    target = _resolve_prefix(name, prefix, root)
    if target.exists() and (not target.is_dir() or any(target.iterdir())):
        raise EnvironmentExists("%s already exists and is not empty" % target)
    profile = profile or host_profile()
    specs = [parse_matchspec(s) if isinstance(s, str) else s for s in specs]
    pins = [parse_matchspec(s) if isinstance(s, str) else s for s in pins]
    chans, merged, archives = _index_for(channels, profile, root)
    request = SolveRequest(specs, merged, detect_virtual_packages(profile), pins)
    result = solve(request)
    if isinstance(result, UnsatExplanation):
        raise _unsat(result)
    tx = plan_transaction([], result)
    refs = [c.locator if isinstance(c, Channel) else c for c in channels]
    return Plan(target, tx, result, refs, specs, pins, archives)


def execute(plan: Plan, command: str, specs: Sequence = (), step_hook=None) -> EnvironmentState:
    made = not plan.prefix.exists()
    plan.prefix.mkdir(parents=True, exist_ok=True)
    try:
        return apply_transaction(plan.transaction, plan.prefix, plan.archives,
                                 command=command, specs=specs,
                                 requested=[str(s) for s in plan.requested],
                                 pins=[str(p) for p in plan.pins],
                                 channels=plan.channels, step_hook=step_hook)
    except BaseException:
        if made and not is_environment(plan.prefix):
            shutil.rmtree(plan.prefix, ignore_errors=True)
        raise


def create_environment(specs: Sequence, channels: Sequence,
                       profile: PlatformProfile | None = None, *, name=None, prefix=None,
                       root=None, pins: Sequence = ()) -> EnvironmentState:
    """Solve ``specs`` against ``channels`` and install into a new prefix.

    Named environments live at ``<root>/envs/<name>``.
    """
    plan = plan_create(specs, channels, profile, name=name, prefix=prefix, root=root, pins=pins)
    return execute(plan, "create", [str(s) for s in specs])


def create_from_document(text: str, profile: PlatformProfile | None = None, *,
                         name=None, prefix=None, root=None) -> EnvironmentState:
    doc = parse_environment_document(text)
    if name is None and prefix is None:
        name = doc.name
    return create_environment(doc.dependencies, doc.channels, profile,
                              name=name, prefix=prefix, root=root)


def _merge_requested(old: Sequence[MatchSpec], new: Sequence[MatchSpec]) -> list[MatchSpec]:
    names = {s.name for s in new}
    return [s for s in old if s.name not in names] + list(new)


def plan_install(prefix, specs: Sequence, profile: PlatformProfile | None = None, *,
                 root=None) -> Plan:
    state = load_environment(prefix)
    profile = profile or host_profile()
    specs = [parse_matchspec(s) if isinstance(s, str) else s for s in specs]
    chans, merged, archives = _index_for(state.channels, profile, root)
    requested = _merge_requested(state.requested, specs)
    request = SolveRequest(requested, merged, detect_virtual_packages(profile),
                           state.pins, locked=state.installed)
    result = solve(request)
    if isinstance(result, UnsatExplanation):
        raise _unsat(result)
    tx = plan_transaction(state, result)
    return Plan(state.prefix, tx, result, list(state.channels), requested,
                list(state.pins), archives)


def plan_remove(prefix, specs: Sequence, profile: PlatformProfile | None = None, *,
                root=None) -> Plan:
    """Remove packages, everything that depends on them, and orphans."""
    state = load_environment(prefix)
    profile = profile or host_profile()
    names = [parse_matchspec(s).name if isinstance(s, str) else s.name for s in specs]
    unknown = [n for n in names if state.get(n) is None]
    if unknown:
        raise EnvironmentNotFound("not installed: %s" % ", ".join(unknown))
    doomed = _dependents(state.installed, set(names))
    for pin in state.pins:
        if pin.name in doomed:
            node = ConflictNode(str(pin), state.get(pin.name), "pinned package cannot be removed")
            raise UnsatisfiableError(UnsatExplanation([node]))
    requested = [s for s in state.requested if s.name not in doomed]
    chans, merged, archives = _index_for(state.channels, profile, root)
    keep = [r for r in state.installed if r.name not in doomed]
    request = SolveRequest(requested, merged, detect_virtual_packages(profile),
                           state.pins, locked=keep)
    result = solve(request)
    if isinstance(result, UnsatExplanation):
        raise _unsat(result)
    result = _prune(result, list(requested) + list(state.pins))
    tx = plan_transaction(state, result)
    dropped = sorted(doomed - set(names))
    return Plan(state.prefix, tx, result, list(state.channels), requested,
                list(state.pins), archives, dropped=dropped)


def _dependents(installed: Iterable[PackageRecord], names: set[str]) -> set[str]:
    rdeps: dict[str, set[str]] = {}
    for r in installed:
        for d in r.depends:
            rdeps.setdefault(parse_matchspec(d).name, set()).add(r.name)
    doomed = set(names)
    stack = list(names)
    while stack:
        for parent in rdeps.get(stack.pop(), ()):
            if parent not in doomed:
                doomed.add(parent)
                stack.append(parent)
    return doomed


def _prune(solution: Solution, roots: Sequence[MatchSpec]) -> Solution:
    by_name = {r.name: r for r in solution}
    keep = set()
    stack = [s.name for s in roots]
    while stack:
        name = stack.pop()
        rec = by_name.get(name)
        if rec is None or name in keep:
            continue
        keep.add(name)
        stack.extend(parse_matchspec(d).name for d in rec.depends)
    return Solution(tuple(r for r in solution if r.name in keep))


def install_packages(prefix, specs, profile=None, *, root=None) -> EnvironmentState:
    plan = plan_install(prefix, specs, profile, root=root)
    return execute(plan, "install", [str(s) for s in specs])


def remove_packages(prefix, specs, profile=None, *, root=None) -> EnvironmentState:
    plan = plan_remove(prefix, specs, profile, root=root)
    return execute(plan, "remove", [str(s) for s in specs])
