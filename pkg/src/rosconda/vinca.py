"""Generate package recipes from ROS ``package.xml`` manifests.

ROS dependencies are rosdep keys. A key naming another manifest of the same
snapshot becomes that package's mangled name (``ros-<distro>-<name>``);
every other key must be listed in the dependency mapping for the target
platform. Mapping files look like::

    [all]
    python3: [python]

    [linux-64]
    opencv: [libopencv]
    boost: [boost-cpp]

Keys in a platform section override the ``[all]`` section.
"""
from __future__ import annotations

import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import yaml

from .errors import DependencyCycle, MalformedDocument, MalformedManifest, UnmappedDependency
from .toposort import toposort
from .verspec import parse_matchspec

DISTROS = ("melodic", "noetic", "foxy", "galactic")

_DEPEND_TAGS = {
    "build_depend": ("build_depend",),
    "buildtool_depend": ("buildtool_depend",),
    "build_export_depend": ("build_export_depend",),
    "exec_depend": ("exec_depend",),
    "run_depend": ("exec_depend",),
    "test_depend": ("test_depend",),
    "depend": ("build_depend", "exec_depend"),
}


@dataclass
class RosManifest:
    name: str
    version: str
    build_depend: list[str] = field(default_factory=list)
    buildtool_depend: list[str] = field(default_factory=list)
    build_export_depend: list[str] = field(default_factory=list)
    exec_depend: list[str] = field(default_factory=list)
    test_depend: list[str] = field(default_factory=list)
    description: str = ""
    maintainer: str = ""

    def install_keys(self) -> set[str]:
        """Every key that ends up in a recipe (test dependencies excluded)."""
        return (set(self.build_depend) | set(self.buildtool_depend)
                | set(self.build_export_depend) | set(self.exec_depend))


def parse_package_xml(document: str | bytes) -> RosManifest:
    try:
        root = ET.fromstring(document)
    except ET.ParseError as e:
        raise MalformedManifest("unparseable package.xml: %s" % e) from None
    if root.tag != "package":
        raise MalformedManifest("root element must be <package>, not <%s>" % root.tag)

    def text(tag):
        el = root.find(tag)
        return (el.text or "").strip() if el is not None else ""

    name, version = text("name"), text("version")
    if not name:
        raise MalformedManifest("package.xml has no <name>")
    if not version:
        raise MalformedManifest("%s: package.xml has no <version>" % name)
    m = RosManifest(name, version, description=" ".join(text("description").split()),
                    maintainer=text("maintainer"))
    for el in root:
        for kind in _DEPEND_TAGS.get(el.tag, ()):
            key = (el.text or "").strip()
            if not key or not re.fullmatch(r"[A-Za-z0-9_.\-]+", key):
                raise MalformedManifest("%s: bad dependency key %r in <%s>" % (name, key, el.tag))
            deps = getattr(m, kind)
            if key not in deps:
                deps.append(key)
    return m


def mangle_name(ros_name: str, distro: str) -> str:
    if distro not in DISTROS:
        raise ValueError("unknown ROS distro %r" % distro)
    return "ros-%s-%s" % (distro, ros_name.replace("_", "-").lower())


class DependencyMapping:
    """rosdep key -> channel match specs, per platform."""

    def __init__(self, sections: Mapping[str, Mapping[str, list[str]]]):
        self.sections = {p: dict(v) for p, v in sections.items()}
        for entries in self.sections.values():
            for specs in entries.values():
                for s in specs:
                    parse_matchspec(s)

    def lookup(self, key: str, platform: str) -> list[str] | None:
        for section in (platform, "all"):
            entries = self.sections.get(section, {})
            if key in entries:
                return list(entries[key])
        return None


def parse_mapping(text: str) -> DependencyMapping:
    sections: dict[str, dict[str, list[str]]] = {}
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1].strip(), {})
            continue
        if current is None:
            raise MalformedDocument("mapping line %d: entry before any [section]" % n)
        key, sep, value = line.partition(":")
        try:
            specs = yaml.safe_load(value) if sep else None
        except yaml.YAMLError:
            specs = None
        if not sep or not isinstance(specs, list) or not all(isinstance(s, str) for s in specs):
            raise MalformedDocument("mapping line %d: expected 'key: [spec, ...]'" % n)
        current[key.strip()] = specs
    return DependencyMapping(sections)


@dataclass
class Recipe:
    name: str
    version: str
    build: list[str] = field(default_factory=list)
    host: list[str] = field(default_factory=list)
    run: list[str] = field(default_factory=list)
    source_url: str = ""
    source_sha256: str | None = None
    script: str = "build_ros.sh"
    summary: str = ""
    maintainer: str = ""

    def to_dict(self) -> dict:
        return {
            "package": {"name": self.name, "version": self.version},
            "source": {"url": self.source_url, "sha256": self.source_sha256},
            "build": {"script": self.script},
            "requirements": {"build": self.build, "host": self.host, "run": self.run},
            "about": {"summary": self.summary, "maintainer": self.maintainer},
        }

    def render(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)


def generate_recipe(manifest: RosManifest, distro: str, mapping: DependencyMapping,
                    platform: str, snapshot: Iterable[str] = (),
                    source_url: str | None = None, source_sha256: str | None = None) -> Recipe:
    """Translate one manifest; ``snapshot`` holds the ROS names being built together."""
    siblings = set(snapshot)
    missing = []

    def resolve(keys):
        out = set()
        for key in keys:
            if key in siblings:
                out.add(mangle_name(key, distro))
                continue
            mapped = mapping.lookup(key, platform)
            if mapped is None:
                missing.append(key)
            else:
                out.update(mapped)
        return sorted(out)

    build = resolve(manifest.buildtool_depend)
    host = resolve(manifest.build_depend + manifest.build_export_depend)
    run = resolve(manifest.exec_depend + manifest.build_export_depend)
    if missing:
        raise UnmappedDependency(manifest.name, set(missing))
    if source_url is None:
        source_url = "https://github.com/ros-gbp/%s-release/archive/release/%s/%s/%s.tar.gz" % (
            manifest.name.replace("_", "-"), distro, manifest.name, manifest.version)
    return Recipe(mangle_name(manifest.name, distro), manifest.version,
                  build, host, run, source_url, source_sha256,
                  summary=manifest.description, maintainer=manifest.maintainer)


def build_order(snapshot: Iterable[RosManifest]) -> list[str]:
    """Build+exec dependency order within the snapshot, ties alphabetical."""
    manifests = {m.name: m for m in snapshot}
    deps = {name: m.install_keys() for name, m in manifests.items()}
    return toposort(manifests, deps, DependencyCycle)


def load_snapshot(directory) -> list[RosManifest]:
    """Every ``package.xml`` below ``directory``, sorted by package name."""
    out = []
    for path in sorted(Path(directory).rglob("package.xml")):
        out.append(parse_package_xml(path.read_bytes()))
    names = [m.name for m in out]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise MalformedManifest("duplicate packages in snapshot: %s" % ", ".join(dupes))
    return sorted(out, key=lambda m: m.name)


def generate_snapshot(snapshot: Iterable[RosManifest], distro: str, mapping: DependencyMapping,
                      platform: str) -> dict[str, Recipe]:
    """Recipes for a whole snapshot, keyed by ROS name; unmapped keys are
    collected across all packages before failing."""
    snapshot = list(snapshot)
    names = {m.name for m in snapshot}
    recipes, missing = {}, {}
    for m in sorted(snapshot, key=lambda m: m.name):
        try:
            recipes[m.name] = generate_recipe(m, distro, mapping, platform, names)
        except UnmappedDependency as e:
            missing[m.name] = e.keys
    if missing:
        first = min(missing)
        keys = sorted({k for ks in missing.values() for k in ks})
        raise UnmappedDependency(first if len(missing) == 1 else ", ".join(sorted(missing)), keys)
    return recipes


def write_recipes(recipes: Mapping[str, Recipe], dest) -> list[Path]:
    dest = Path(dest)
    out = []
    for name in sorted(recipes):
        r = recipes[name]
        path = dest / r.name / "recipe.yaml"
        os.makedirs(path.parent, exist_ok=True)
        path.write_text(r.render())
        out.append(path)
    return out
