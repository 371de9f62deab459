import functools
import hashlib
import http.server
import json
import shutil
import threading

import pytest

from conftest import LINUX, index_of, mk
from rosconda.channels import (
    BUNDLED_CHANNELS,
    ArchiveSource,
    ChannelIndex,
    PlatformProfile,
    detect_virtual_packages,
    load_channels,
    load_index,
    merge_channels,
    parse_index,
    resolve_channel,
)
from rosconda.errors import DigestMismatch, MalformedIndex, SourceUnreachable
from rosconda.solver import SolveRequest, UnsatExplanation, solve
from rosconda.verspec import parse_version

ROBOSTACK = BUNDLED_CHANNELS / "robostack"
DIGEST = "0" * 64


def write_index(base, platform, packages):
    d = base / platform
    d.mkdir(parents=True, exist_ok=True)
    doc = {"info": {"subdir": platform}, "packages": packages}
    (d / "repodata.json").write_text(json.dumps(doc))


def entry(name, version, build="0", depends=(), **extra):
    e = {"name": name, "version": version, "build": build, "build_number": 0,
         "depends": list(depends), "sha256": DIGEST}
    e.update(extra)
    return e


class TestLoadIndex:
    def test_bundled_robostack_has_twelve_records(self):
        idx = load_index(ROBOSTACK, "robostack", "linux-64")
        assert len(idx) == 12
        assert {r.channel for r in idx.records.values()} == {"robostack"}
        assert {r.platform for r in idx.records.values()} == {"linux-64"}

    def test_empty_document(self, tmp_path):
        (tmp_path / "linux-64").mkdir()
        (tmp_path / "linux-64" / "repodata.json").write_text("")
        assert len(load_index(tmp_path, "c", "linux-64")) == 0

    def test_missing_document_is_empty(self, tmp_path):
        assert len(load_index(tmp_path, "c", "osx-arm64")) == 0

    def test_missing_directory(self, tmp_path):
        with pytest.raises(SourceUnreachable):
            load_index(tmp_path / "nope", "c", "linux-64")

    def test_bad_depends_names_record(self, tmp_path):
        write_index(tmp_path, "linux-64", {
            "good-1.0-0.tar": entry("good", "1.0"),
            "bad-1.0-0.tar": entry("bad", "1.0", depends=["pyth on=="]),
        })
        with pytest.raises(MalformedIndex) as err:
            load_index(tmp_path, "c", "linux-64")
        assert err.value.entry == "bad-1.0-0.tar"
        assert "bad-1.0-0.tar" in str(err.value)

    @pytest.mark.parametrize("fn,e", [
        ("x-1.0-0.tar", entry("x", "1.0", sha256="abc")),
        ("x-1.0-0.tar", entry("x", "1.0", build_number=-1)),
        ("x-1.0-0.tar", entry("x", "1.0", subdir="win-64")),
        ("y-1.0-0.tar", entry("x", "1.0")),
        ("x-1.00-0.tar", entry("x", "1.00")),
        ("X-1.0-0.tar", entry("X", "1.0")),
        ("x-1.0-0.tar", {"name": "x"}),
        ("x-1..0-0.tar", entry("x", "1..0")),
    ])
    def test_invalid_entries(self, fn, e):
        with pytest.raises(MalformedIndex) as err:
            parse_index(json.dumps({"packages": {fn: e}}), "c", "linux-64")
        assert err.value.entry == fn

    def test_invalid_json(self):
        with pytest.raises(MalformedIndex):
            parse_index("{not json", "c", "linux-64")

    def test_over_http(self, tmp_path):
        shutil.copytree(ROBOSTACK, tmp_path / "robostack")
        handler = functools.partial(_QuietHandler, directory=str(tmp_path))
        server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
        t = threading.Thread(target=server.serve_forever, daemon=True)
        t.start()
        try:
            url = "http://127.0.0.1:%d/robostack" % server.server_address[1]
            idx = load_index(url, "robostack", "linux-64")
            assert len(idx) == 12
            assert len(load_index(url, "robostack", "noarch")) == 0
            rec = idx.records["boost-cpp-1.74.0-h312852a_4.tar"]
            src = ArchiveSource({"robostack": url}, tmp_path / "cache")
            path = src.fetch(rec)
            assert path.is_file() and str(path).startswith(str(tmp_path / "cache"))
        finally:
            server.shutdown()

    def test_unreachable_url(self):
        with pytest.raises(SourceUnreachable):
            load_index("http://127.0.0.1:9/none", "c", "linux-64")


class _QuietHandler(http.server.SimpleHTTPRequestHandler):
    def log_message(self, *args):
        pass


class TestMerge:
    def test_strict_priority_shadows(self):
        a = ChannelIndex("robostack", "linux-64", {"x": mk("x", "1.0", channel="robostack")})
        b = ChannelIndex("conda-forge", "linux-64", {"x": mk("x", "2.0", channel="conda-forge")})
        merged = merge_channels([a, b])
        assert [str(r.version) for r in merged.candidates("x")] == ["1.0"]
        assert [str(r.version) for r in merge_channels([b, a]).candidates("x")] == ["2.0"]

    def test_single_channel_identity(self):
        recs = [mk("x", "1.0"), mk("x", "2.0"), mk("y", "1.0")]
        merged = index_of(*recs)
        assert sorted(merged.records(), key=str) == sorted(recs, key=str)

    def test_name_only_in_second_channel(self):
        a = ChannelIndex("a", "linux-64", {"x": mk("x", "1.0", channel="a")})
        b = ChannelIndex("b", "linux-64", {"y": mk("y", "1.0", channel="b")})
        merged = merge_channels([a, b])
        assert merged.candidates("y")[0].channel == "b"
        assert merged.rank(merged.candidates("y")[0]) == 1

    def test_candidate_order(self):
        recs = [
            mk("x", "1.0", build="a", build_number=5),
            mk("x", "2.0", build="b", build_number=0),
            mk("x", "2.0", build="c", build_number=1),
            mk("x", "2.0", build="d", build_number=1, platform="noarch"),
            mk("x", "2.0", build="a", build_number=1, platform="noarch"),
        ]
        merged = index_of(*recs)
        assert [r.build for r in merged.candidates("x")] == ["c", "a", "d", "b", "a"]

    def test_noarch_shares_rank_with_its_channel(self):
        idx = merge_channels(load_channels([resolve_channel("conda-forge")], "linux-64"))
        catkin = idx.candidates("catkin-pkg")
        assert [str(r.version) for r in catkin] == ["0.4.24", "0.4.23"]
        assert {idx.rank(r) for r in catkin} == {0}

    def test_bundled_desktop_shadowing(self):
        chans = [resolve_channel("robostack"), resolve_channel("conda-forge")]
        merged = merge_channels(load_channels(chans, "linux-64"))
        assert {r.channel for r in merged.candidates("boost-cpp")} == {"robostack"}
        assert merged.candidates("python")[0].channel == "conda-forge"

    def test_input_order_of_records_is_irrelevant(self):
        recs = [mk("x", v, build=b) for v in ("1.0", "2.0") for b in ("p", "q")]
        a = index_of(*recs)
        b = index_of(*reversed(recs))
        assert a.records() == b.records()
        assert a.snapshot_digest() == b.snapshot_digest()

    def test_mixed_platforms_rejected(self):
        with pytest.raises(ValueError):
            merge_channels([ChannelIndex("a", "linux-64"), ChannelIndex("b", "win-64")])


class TestVirtualPackages:
    def test_glibc(self):
        (v,) = detect_virtual_packages(PlatformProfile("linux-64", glibc="2.12"))
        assert v.name == "__glibc" and v.version == parse_version("2.12") and v.build == "0"

    def test_win(self):
        (v,) = detect_virtual_packages(PlatformProfile("win-64"))
        assert (v.name, str(v.version)) == ("__win", "0")

    def test_osx(self):
        (v,) = detect_virtual_packages(PlatformProfile("osx-arm64", osx="11.0"))
        assert v.name == "__osx"

    def test_glibc_floor_is_enforced(self):
        idx = index_of(mk("x", "1.0", ["__glibc >=2.17"]))
        old = detect_virtual_packages(PlatformProfile("linux-64", glibc="2.12"))
        assert isinstance(solve(SolveRequest(["x"], idx, old)), UnsatExplanation)
        new = detect_virtual_packages(LINUX)
        assert solve(SolveRequest(["x"], idx, new)).names() == ["x"]


class TestResolveAndFetch:
    def test_root_channels_take_precedence(self, tmp_path):
        (tmp_path / "channels" / "robostack").mkdir(parents=True)
        assert resolve_channel("robostack", tmp_path).locator == str(tmp_path / "channels" / "robostack")
        assert resolve_channel("conda-forge", tmp_path).locator == str(BUNDLED_CHANNELS / "conda-forge")

    def test_unknown_channel(self, tmp_path):
        with pytest.raises(SourceUnreachable):
            resolve_channel("no-such-channel", tmp_path)

    def test_path_channel(self, tmp_path):
        ch = resolve_channel(str(ROBOSTACK))
        assert ch.name == "robostack"
        with pytest.raises(SourceUnreachable):
            resolve_channel(str(tmp_path / "missing"))

    def test_digest_mismatch(self, tmp_path):
        shutil.copytree(ROBOSTACK, tmp_path / "robostack")
        idx = load_index(tmp_path / "robostack", "robostack", "linux-64")
        rec = idx.records["boost-cpp-1.74.0-h312852a_4.tar"]
        path = tmp_path / "robostack" / "linux-64" / rec.filename
        data = bytearray(path.read_bytes())
        data[600] ^= 0xFF
        path.write_bytes(bytes(data))
        src = ArchiveSource({"robostack": str(tmp_path / "robostack")})
        with pytest.raises(DigestMismatch):
            src.fetch(rec)

    def test_bundled_digests_are_correct(self):
        idx = load_index(ROBOSTACK, "robostack", "linux-64")
        for rec in idx.records.values():
            data = (ROBOSTACK / "linux-64" / rec.filename).read_bytes()
            assert hashlib.sha256(data).hexdigest() == rec.digest
