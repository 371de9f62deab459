import json
import shutil

import pytest

from conftest import FIXTURES
from rosconda import cli, errors
from rosconda.channels import BUNDLED_CHANNELS
from rosconda.environment import PrefixLock, load_environment
from rosconda.fixtures import write_channel

ROS = FIXTURES / "ros"
DESKTOP_CREATE = ["create", "-n", "rosenv", "ros-noetic-desktop", "-c", "robostack", "-c", "conda-forge",
        "--platform", "linux-64", "--glibc", "2.17"]
LINUX = ["--platform", "linux-64", "--glibc", "2.17"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def rosenv(root, capsys):
    assert run(capsys, *DESKTOP_CREATE)[0] == 0
    return root / "envs" / "rosenv"


class TestCreate:
    def test_desktop_create(self, rosenv, capsys):
        state = load_environment(rosenv)
        assert state.get("ros-noetic-desktop") is not None
        code, out, _ = run(capsys, "list", "-n", "rosenv")
        assert code == 0 and "robostack/linux-64::ros-noetic-desktop-1.5.0-py38h5f3c1a0_2" in out.splitlines()

    def test_needs_name(self, root, capsys):
        code, _, err = run(capsys, "create", "python", "-c", "conda-forge")
        assert code == 1 and "error" in err

    def test_dry_run_touches_nothing(self, root, capsys):
        code, out, _ = run(capsys, "create", "-n", "dry", "python=3.8", "-c", "conda-forge",
                           "--dry-run", *LINUX)
        assert code == 0
        assert out.splitlines() == sorted(out.splitlines())
        assert "+ conda-forge/linux-64::python-3.8.8-hffdb5ce_0_cpython" in out
        assert not (root / "envs" / "dry").exists()

    def test_json(self, root, capsys):
        code, out, _ = run(capsys, "create", "-n", "j", "python=3.8", "-c", "conda-forge", "--json", *LINUX)
        doc = json.loads(out)
        assert code == 0 and doc["dry_run"] is False
        assert {r["name"] for r in doc["transaction"]["link"]} == {"python"}

    def test_unsat(self, root, capsys):
        code, _, err = run(capsys, "create", "-n", "u", "python>=99", "-c", "conda-forge", *LINUX)
        assert code == 2 and "unsatisfiable" in err
        assert not (root / "envs" / "u").exists()

    def test_malformed_spec(self, root, capsys):
        assert run(capsys, "create", "-n", "m", "pyth on==", "-c", "conda-forge")[0] == 1

    def test_prefix(self, root, tmp_path, capsys):
        assert run(capsys, "create", "-p", str(tmp_path / "p"), "-c", "conda-forge", *LINUX)[0] == 0
        assert load_environment(tmp_path / "p").installed == frozenset()


class TestInstallRemove:
    def test_install_satisfied(self, rosenv, capsys):
        code, out, err = run(capsys, "install", "-n", "rosenv", "python", *LINUX)
        assert code == 0 and out == "" and "nothing to do" in err

    def test_install_new(self, rosenv, capsys):
        code, out, _ = run(capsys, "install", "-n", "rosenv", "numpy", *LINUX)
        assert code == 0 and out == "+ conda-forge/linux-64::numpy-1.21.2-py38he2449b9_0\n"

    def test_install_no_candidates(self, rosenv, capsys):
        assert run(capsys, "install", "-n", "rosenv", "nope", *LINUX)[0] == 2

    def test_remove_reports_dependents(self, rosenv, capsys):
        code, out, err = run(capsys, "remove", "-n", "rosenv", "ros-noetic-viz", *LINUX)
        assert code == 0 and "removing dependents: ros-noetic-desktop" in err
        assert "- robostack/linux-64::ros-noetic-viz-1.5.0-py38h0a1b2c3_1" in out
        assert load_environment(rosenv).get("ros-noetic-desktop") is None

    def test_remove_pinned(self, root, capsys):
        run(capsys, *DESKTOP_CREATE[:3], "ros-noetic-ros-base", "-c", "robostack", "-c", "conda-forge",
            "--pin", "boost-cpp", *LINUX)
        assert run(capsys, "remove", "-n", "rosenv", "boost-cpp", *LINUX)[0] == 2

    def test_unknown_env(self, root, capsys):
        assert run(capsys, "install", "-n", "ghost", "python", *LINUX)[0] == 1


class TestDocuments:
    def test_export_env_create_round_trip(self, rosenv, tmp_path, capsys):
        doc = tmp_path / "env.yml"
        assert run(capsys, "export", "-n", "rosenv", "-f", str(doc))[0] == 0
        text = doc.read_text().replace("name: rosenv", "name: copy")
        doc.write_text(text)
        assert run(capsys, "env-create", "-f", str(doc), *LINUX)[0] == 0
        code, out, _ = run(capsys, "export", "-n", "copy")
        assert code == 0 and out == text
        assert {r.key for r in load_environment(rosenv).installed} == \
               {r.key for r in load_environment(rosenv.parent / "copy").installed}

    def test_export_no_builds(self, rosenv, capsys):
        _, out, _ = run(capsys, "export", "-n", "rosenv", "--no-builds")
        assert "  - python=3.8.8\n" in out

    def test_lock_and_install(self, root, tmp_path, capsys):
        spec = tmp_path / "spec.yml"
        spec.write_text("channels: [robostack, conda-forge]\ndependencies: [ros-noetic-desktop]\n"
                        "platforms: [linux-64, win-64]\n")
        first, second = tmp_path / "a.lock", tmp_path / "b.lock"
        assert run(capsys, "lock", str(spec), "-o", str(first))[0] == 0
        assert run(capsys, "lock", str(spec), "-o", str(second))[0] == 0
        assert first.read_bytes() == second.read_bytes()
        assert first.read_text().count("\n[") == 2
        for platform in ("linux-64", "win-64"):
            code = run(capsys, "install-lock", "-n", platform, str(first), "--platform", platform)[0]
            assert code == 0
            assert load_environment(root / "envs" / platform).get("ros-noetic-desktop").platform == platform

    def test_lock_json(self, root, tmp_path, capsys):
        spec = tmp_path / "spec.yml"
        spec.write_text("channels: [conda-forge]\ndependencies: [python=3.8]\nplatforms: [linux-64]\n")
        code, out, _ = run(capsys, "lock", str(spec), "--json", "--platform", "win-64")
        doc = json.loads(out)
        assert code == 0 and list(doc["platforms"]) == ["win-64"]

    def test_lock_one_platform_fails(self, root, tmp_path, capsys):
        spec = tmp_path / "spec.yml"
        spec.write_text("channels: [conda-forge]\ndependencies: [python=3.7]\nplatforms: [linux-64, win-64]\n")
        code, _, err = run(capsys, "lock", str(spec))
        assert code == 2 and "[win-64]" in err and "[linux-64]\nok" in err


class TestSolve:
    def test_text(self, root, capsys):
        code, out, _ = run(capsys, "solve", "python=3.9", "numpy", "-c", "conda-forge", *LINUX)
        assert code == 0
        assert out.splitlines() == ["conda-forge/linux-64::libgcc-ng-11.2.0-h1d223b6_11",
                                 "conda-forge/linux-64::numpy-1.21.2-py39hdbf815f_0",
                                 "conda-forge/linux-64::python-3.9.7-hb7a2778_3_cpython"]

    def test_json(self, root, capsys):
        code, out, _ = run(capsys, "solve", "python", "-c", "conda-forge", "--json", "--platform", "win-64")
        doc = json.loads(out)
        assert doc["platform"] == "win-64" and doc["records"][0]["subdir"] == "win-64"

    def test_glibc_override(self, root, capsys):
        args = ["solve", "ros-noetic-roscpp>=1.15.13", "-c", "robostack", "-c", "conda-forge",
                "--platform", "linux-64"]
        assert run(capsys, *args, "--glibc", "2.12")[0] == 0
        assert run(capsys, *args, "--glibc", "2.5")[0] == 2


class TestVinca:
    def test_generate_recipe(self, tmp_path, capsys):
        out_file = tmp_path / "recipe.yaml"
        code = run(capsys, "generate-recipe", str(ROS / "snapshot" / "foo_bar" / "package.xml"),
                   "--distro", "noetic", "--mapping", str(ROS / "mapping.txt"),
                   "--snapshot", str(ROS / "snapshot"), "-o", str(out_file))[0]
        assert code == 0
        text = out_file.read_text()
        assert "name: ros-noetic-foo-bar" in text and "- libopencv" in text

    def test_unmapped(self, capsys):
        code, _, err = run(capsys, "generate-recipe", str(ROS / "unmapped" / "talker" / "package.xml"),
                           "--distro", "noetic", "--mapping", str(ROS / "mapping.txt"))
        assert code == 1 and "libfrobnicate" in err

    def test_build_order(self, capsys):
        code, out, _ = run(capsys, "build-order", str(ROS / "snapshot"))
        assert code == 0 and out == "roscpp\ncv_bridge\nfoo_bar\nrospy\nviz\ndesktop\n"

    def test_build_order_cycle(self, capsys):
        code, _, err = run(capsys, "build-order", str(ROS / "cycle"))
        assert code == 1 and "a -> b -> a" in err

    def test_bad_distro(self, capsys):
        assert run(capsys, "generate-recipe", "x", "--distro", "kinetic", "--mapping", "m")[0] == 1


def _tampered_channel(root):
    dest = root / "channels" / "conda-forge"
    shutil.copytree(BUNDLED_CHANNELS / "conda-forge", dest)
    path = dest / "linux-64" / "python-3.8.8-hffdb5ce_0_cpython.tar"
    path.write_bytes(path.read_bytes() + b"\0")


def _bad_index(root):
    (root / "channels" / "broken" / "linux-64").mkdir(parents=True)
    (root / "channels" / "broken" / "linux-64" / "repodata.json").write_text("{oops")


def _cyclic_channel(root):
    write_channel(root / "channels" / "cyc", "cyc",
                  {"linux-64": [("a", "1.0", "0", 0, ["b"]), ("b", "1.0", "0", 0, ["a"])]})


class TestExitCodes:
    """Every error class, driven through a real invocation."""

    CASES = {
        "usage": (1, None, []),
        "MalformedSpec": (1, None, ["solve", "py thon==", "-c", "conda-forge"]),
        "MalformedVersion": (1, None, ["create", "-n", "x", "-c", "conda-forge", "--glibc", "2..1", "python"]),
        "MalformedManifest": (1, None, ["build-order", "@bad_manifest"]),
        "MalformedDocument": (1, None, ["env-create", "-f", "@bad_doc"]),
        "EnvironmentExists": (1, None, ["create", "-n", "rosenv", "-c", "conda-forge"]),
        "EnvironmentNotFound": (1, None, ["list", "-n", "ghost"]),
        "UnmappedDependency": (1, None, ["generate-recipe", str(ROS / "unmapped" / "talker" / "package.xml"),
                                         "--distro", "noetic", "--mapping", str(ROS / "mapping.txt")]),
        "DependencyCycle": (1, None, ["build-order", str(ROS / "cycle")]),
        "PlatformMissing": (1, None, ["install-lock", "-n", "l", "@lock", "--platform", "osx-64"]),
        "UnsatisfiableError": (2, None, ["solve", "ros-noetic-desktop", "python=3.9", "-c", "robostack",
                                         "-c", "conda-forge"]),
        "SpecHasNoCandidates": (2, None, ["solve", "nothing-here", "-c", "conda-forge"]),
        "LockGenerationError": (2, None, ["lock", "@spec37"]),
        "CycleInDependencyGraph": (2, _cyclic_channel, ["create", "-n", "c", "a", "-c", "cyc"]),
        "SourceUnreachable": (3, None, ["solve", "python", "-c", "no-such-channel"]),
        "MalformedIndex": (3, _bad_index, ["solve", "python", "-c", "broken"]),
        "DigestMismatch": (3, _tampered_channel, ["create", "-n", "d", "python=3.8", "-c", "conda-forge"]),
        "PrefixTooLong": (3, None, ["create", "-p", "@long", "boost-cpp", "-c", "robostack", "-c", "conda-forge"]),
        "LockHeld": (3, None, ["install", "-n", "rosenv", "numpy"]),
        "CorruptEnvironment": (3, None, ["list", "-n", "rosenv"]),
        "OSError": (3, None, ["export", "-n", "rosenv", "-f", "@missing_dir"]),
    }

    @pytest.mark.parametrize("case", sorted(CASES))
    def test_case(self, case, rosenv, tmp_path, capsys):
        want, setup, argv = self.CASES[case]
        root = rosenv.parent.parent
        if setup is not None:
            setup(root)
        files = {
            "@bad_manifest": self._bad_manifest(tmp_path),
            "@bad_doc": _write(tmp_path / "bad.yml", "dependencies: python\n"),
            "@spec37": _write(tmp_path / "s.yml", "channels: [conda-forge]\ndependencies: [python=3.7]\n"
                                                  "platforms: [linux-64, win-64]\n"),
            "@lock": _write(tmp_path / "x.lock", "# rosconda lock v1\n# spec: x\n[linux-64]\n"),
            "@long": str(tmp_path / ("d" * 200) / ("d" * 200)),
            "@missing_dir": str(tmp_path / "no" / "such" / "env.yml"),
        }
        argv = [files.get(a, a) for a in argv]
        if argv and argv[0] in ("create", "install", "solve"):
            argv += ["--platform", "linux-64"] + (["--glibc", "2.17"] if "--glibc" not in argv else [])
        if case == "CorruptEnvironment":
            next((rosenv / "meta").glob("python-*.json")).write_text("{not json")
        if case == "LockHeld":
            with PrefixLock(rosenv):
                code, _, err = run(capsys, *argv)
        else:
            code, _, err = run(capsys, *argv)
        assert code == want, err
        assert err.startswith("error")

    @staticmethod
    def _bad_manifest(tmp_path):
        (tmp_path / "snap" / "p").mkdir(parents=True)
        (tmp_path / "snap" / "p" / "package.xml").write_text("<package><name>p</name></package>")
        return str(tmp_path / "snap")

    def test_every_error_class_has_a_code(self, monkeypatch, capsys):
        def subclasses(cls):
            for sub in cls.__subclasses__():
                yield sub
                yield from subclasses(sub)

        classes = set(subclasses(errors.RosCondaError))
        # InstanceTooLarge only comes from the brute-force oracle, which no command runs.
        assert {c.__name__ for c in classes} - {"UsageError", "InstanceTooLarge"} <= set(self.CASES)
        for cls in classes:
            assert cls.exit_code in (1, 2, 3)


def _write(path, text):
    path.write_text(text)
    return str(path)
