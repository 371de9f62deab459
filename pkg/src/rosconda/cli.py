"""Command line interface.

Exit codes: 0 success, 1 user error, 2 unsatisfiable, 3 I/O or integrity
failure. Diagnostics go to stderr, machine output to stdout. The root
directory (``envs/``, ``channels/``, ``pkgs/``) comes from ``ROSCONDA_ROOT``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import environment as env
from . import lock as lockmod
from . import vinca
from .channels import (
    ArchiveSource,
    detect_virtual_packages,
    host_profile,
    load_channels,
    merge_channels,
    resolve_channel,
)
from .errors import IO_ERROR, USER_ERROR, RosCondaError, UnsatisfiableError
from .solver import SolveRequest, UnsatExplanation, solve

log = logging.getLogger("rosconda")


class UsageError(RosCondaError):
    exit_code = USER_ERROR


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("%s: %s" % (self.prog, message))


def _env_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("-n", "--name", help="environment name under $ROSCONDA_ROOT/envs")
    g.add_argument("-p", "--prefix", help="environment directory")


def _platform_args(p):
    p.add_argument("--platform", help="target platform (default: host)")
    p.add_argument("--glibc", help="declared glibc version for linux targets")
    p.add_argument("--osx", help="declared macOS version for osx targets")


def _profile(args, platform=None):
    profile = host_profile(platform or args.platform)
    overrides = {k: getattr(args, k) for k in ("glibc", "osx") if getattr(args, k, None)}
    return dataclasses.replace(profile, **overrides)


def _prefix(args) -> Path:
    if args.prefix:
        return Path(args.prefix).absolute()
    return env.env_prefix(args.name).absolute()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rosconda", description="Miniature cross-platform package manager.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("create", help="create an environment")
    _env_args(p)
    p.add_argument("specs", nargs="*")
    p.add_argument("-c", "--channel", action="append", default=[], dest="channels")
    p.add_argument("--pin", action="append", default=[])
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--json", action="store_true")
    _platform_args(p)

    for name in ("install", "remove"):
        p = sub.add_parser(name, help="%s packages in an environment" % name)
        _env_args(p)
        p.add_argument("specs", nargs="+")
        p.add_argument("--dry-run", action="store_true")
        p.add_argument("--json", action="store_true")
        _platform_args(p)

    p = sub.add_parser("list", help="list installed packages")
    _env_args(p)

    p = sub.add_parser("export", help="write an environment document")
    _env_args(p)
    p.add_argument("--no-builds", action="store_true")
    p.add_argument("-f", "--file", help="output file (default: stdout)")

    p = sub.add_parser("env-create", help="create an environment from a document")
    _env_args(p, required=False)
    p.add_argument("-f", "--file", required=True)
    _platform_args(p)

    p = sub.add_parser("solve", help="solve without installing")
    p.add_argument("specs", nargs="*")
    p.add_argument("-c", "--channel", action="append", default=[], dest="channels")
    p.add_argument("--json", action="store_true")
    _platform_args(p)

    p = sub.add_parser("lock", help="generate a multi-platform lockfile")
    p.add_argument("specfile")
    p.add_argument("--platform", action="append", default=[], dest="platforms",
                   help="restrict/override the spec file's platforms")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--timestamp", help="record this generation timestamp")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("install-lock", help="install one platform of a lockfile")
    _env_args(p)
    p.add_argument("lockfile")
    p.add_argument("--platform")
    p.add_argument("-c", "--channel", action="append", default=[], dest="channels",
                   help="where to find the lockfile's channels")

    p = sub.add_parser("generate-recipe", help="recipe from a ROS package.xml")
    p.add_argument("manifest")
    p.add_argument("--distro", required=True, choices=vinca.DISTROS)
    p.add_argument("--mapping", required=True)
    p.add_argument("--platform", default="linux-64")
    p.add_argument("--snapshot", help="directory of sibling package.xml files")
    p.add_argument("-o", "--output")

    p = sub.add_parser("build-order", help="build order of a package.xml snapshot")
    p.add_argument("snapshot")
    return parser


def _emit(text: str, path: str | None = None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") or not text else text + "\n")


def _report_plan(plan, args, dry_run):
    if getattr(args, "json", False):
        _emit(json.dumps({"prefix": str(plan.prefix), "dry_run": dry_run,
                          "transaction": plan.transaction.to_json()}, indent=2, sort_keys=True))
    else:
        if plan.dropped:
            print("removing dependents: %s" % ", ".join(plan.dropped), file=sys.stderr)
        if plan.transaction:
            _emit(plan.transaction.render())
        else:
            print("nothing to do", file=sys.stderr)


def cmd_create(args):
    if not args.name and not args.prefix:
        raise UsageError("create needs -n NAME or -p PREFIX")
    plan = env.plan_create(args.specs, args.channels, _profile(args), name=args.name,
                           prefix=args.prefix, root=env.default_root(), pins=args.pin)
    _report_plan(plan, args, args.dry_run)
    if not args.dry_run:
        env.execute(plan, "create", args.specs)
    return 0


def cmd_install(args):
    plan = env.plan_install(_prefix(args), args.specs, _profile(args), root=env.default_root())
    _report_plan(plan, args, args.dry_run)
    if not args.dry_run:
        env.execute(plan, "install", args.specs)
    return 0


def cmd_remove(args):
    plan = env.plan_remove(_prefix(args), args.specs, _profile(args), root=env.default_root())
    _report_plan(plan, args, args.dry_run)
    if not args.dry_run:
        env.execute(plan, "remove", args.specs)
    return 0


def cmd_list(args):
    state = env.load_environment(_prefix(args))
    _emit("\n".join(r.dist for r in state.records()))
    return 0


def cmd_export(args):
    state = env.load_environment(_prefix(args))
    mode = "no_builds" if args.no_builds else "full"
    _emit(env.export_environment(state, mode), args.file)
    return 0


def cmd_env_create(args):
    text = Path(args.file).read_text()
    doc = env.parse_environment_document(text)
    name = args.name or (None if args.prefix else doc.name)
    if not name and not args.prefix:
        raise UsageError("environment document has no name; pass -n or -p")
    env.create_from_document(text, _profile(args), name=name, prefix=args.prefix,
                             root=env.default_root())
    return 0


def cmd_solve(args):
    profile = _profile(args)
    channels = [resolve_channel(c, env.default_root()) for c in args.channels]
    merged = merge_channels(load_channels(channels, profile.platform))
    result = solve(SolveRequest(args.specs, merged, detect_virtual_packages(profile)))
    if isinstance(result, UnsatExplanation):
        raise env._unsat(result)
    if args.json:
        _emit(json.dumps({"platform": profile.platform,
                          "records": [r.to_json() for r in result]}, indent=2, sort_keys=True))
    else:
        _emit("\n".join(r.dist for r in result))
    return 0


def cmd_lock(args):
    spec = lockmod.parse_spec_file(Path(args.specfile).read_text())
    if args.platforms:
        spec = dataclasses.replace(spec, platforms=list(args.platforms))
    root = env.default_root()
    _, indexes = lockmod.load_platform_indexes(spec.channels, spec.platforms, root)
    profiles = {p: host_profile(p) for p in spec.platforms}
    lock = lockmod.generate_lock(spec, indexes, profiles, timestamp=args.timestamp)
    if args.json:
        doc = {"spec": lock.spec_digest, "index": lock.index_digests,
               "platforms": {p: [dataclasses.asdict(e) for e in lock.entries[p]]
                             for p in lock.platforms}}
        _emit(json.dumps(doc, indent=2, sort_keys=True), args.output)
    else:
        _emit(lock.render(), args.output)
    return 0


def cmd_install_lock(args):
    lock = lockmod.parse_lockfile(Path(args.lockfile).read_text())
    platform = args.platform or host_profile().platform
    root = env.default_root()
    refs = args.channels or sorted({e.channel for es in lock.entries.values() for e in es})
    channels = [resolve_channel(c, root) for c in refs]
    archives = ArchiveSource.for_channels(channels, root / "pkgs")
    lockmod.install_from_lock(lock, platform, _prefix(args), archives,
                              channels=[c.locator for c in channels])
    return 0


def cmd_generate_recipe(args):
    manifest = vinca.parse_package_xml(Path(args.manifest).read_bytes())
    mapping = vinca.parse_mapping(Path(args.mapping).read_text())
    snapshot = []
    if args.snapshot:
        snapshot = [m.name for m in vinca.load_snapshot(args.snapshot)]
    recipe = vinca.generate_recipe(manifest, args.distro, mapping, args.platform, snapshot)
    _emit(recipe.render(), args.output)
    return 0


def cmd_build_order(args):
    order = vinca.build_order(vinca.load_snapshot(args.snapshot))
    _emit("\n".join(order))
    return 0


COMMANDS = {
    "create": cmd_create,
    "install": cmd_install,
    "remove": cmd_remove,
    "list": cmd_list,
    "export": cmd_export,
    "env-create": cmd_env_create,
    "solve": cmd_solve,
    "lock": cmd_lock,
    "install-lock": cmd_install_lock,
    "generate-recipe": cmd_generate_recipe,
    "build-order": cmd_build_order,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s: %(message)s")
        return COMMANDS[args.command](args)
    except UnsatisfiableError as e:
        print("error: unsatisfiable request", file=sys.stderr)
        print(str(e), file=sys.stderr)
        return e.exit_code
    except RosCondaError as e:
        print("error: %s" % e, file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print("error: %s" % e, file=sys.stderr)
        return IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
