"""Deterministic generator for the bundled fixture channels.

The bundled ``robostack`` and ``conda-forge`` channels under ``data/channels``
are produced by :func:`write_fixture_channels`. Run this module to regenerate
them::

    python -m rosconda.fixtures src/rosconda/data/channels
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

from .archive import BINARY, PLACEHOLDER, TEXT, PathEntry, build_archive
from .channels import ARCHIVE_EXT, INDEX_NAME

# (name, version, build, build_number, depends)
ROBOSTACK = {
    "linux-64": [
        ("ros-distro-mutex", "0.1.0", "noetic", 0, []),
        ("ros-noetic-desktop", "1.5.0", "py38h5f3c1a0_2", 2,
         ["ros-distro-mutex 0.1 noetic", "ros-noetic-robot", "ros-noetic-viz"]),
        ("ros-noetic-desktop", "1.4.1", "py38h5f3c1a0_0", 0,
         ["ros-distro-mutex 0.1 noetic", "ros-noetic-robot", "ros-noetic-viz"]),
        ("ros-noetic-robot", "1.5.0", "py38h0a1b2c3_1", 1, ["ros-noetic-ros-base"]),
        ("ros-noetic-viz", "1.5.0", "py38h0a1b2c3_1", 1,
         ["ros-noetic-ros-base", "qt-main >=5.12"]),
        ("ros-noetic-ros-base", "1.5.0", "py38h0a1b2c3_1", 1,
         ["ros-noetic-ros-core", "boost-cpp >=1.74"]),
        ("ros-noetic-ros-core", "1.5.0", "py38h0a1b2c3_1", 1,
         ["ros-noetic-roscpp", "ros-noetic-rospy"]),
        ("ros-noetic-roscpp", "1.15.13", "py38h7e4e1b8_3", 3,
         ["boost-cpp >=1.74", "libgcc-ng >=9", "__glibc >=2.12"]),
        ("ros-noetic-roscpp", "1.15.11", "py38h7e4e1b8_0", 0,
         ["boost-cpp >=1.74", "libgcc-ng >=9"]),
        ("ros-noetic-rospy", "1.15.13", "py38h7e4e1b8_3", 3,
         ["python=3.8", "catkin-pkg >=0.4"]),
        ("ros-noetic-cv-bridge", "1.15.0", "py38h9c1d2e3_2", 2,
         ["libopencv >=4.5", "ros-noetic-roscpp", "python=3.8"]),
        ("boost-cpp", "1.74.0", "h312852a_4", 4, ["libgcc-ng >=9"]),
    ],
    "win-64": [
        ("ros-distro-mutex", "0.1.0", "noetic", 0, []),
        ("ros-noetic-desktop", "1.5.0", "py38h2a1f3e0_2", 2,
         ["ros-distro-mutex 0.1 noetic", "ros-noetic-robot", "ros-noetic-viz"]),
        ("ros-noetic-robot", "1.5.0", "py38h6d1e2f3_1", 1, ["ros-noetic-ros-base"]),
        ("ros-noetic-viz", "1.5.0", "py38h6d1e2f3_1", 1,
         ["ros-noetic-ros-base", "qt-main >=5.12"]),
        ("ros-noetic-ros-base", "1.5.0", "py38h6d1e2f3_1", 1,
         ["ros-noetic-ros-core", "boost-cpp >=1.74"]),
        ("ros-noetic-ros-core", "1.5.0", "py38h6d1e2f3_1", 1,
         ["ros-noetic-roscpp", "ros-noetic-rospy"]),
        ("ros-noetic-roscpp", "1.15.13", "py38h6d1e2f3_3", 3,
         ["boost-cpp >=1.74", "vs2015_runtime >=14.16", "__win"]),
        ("ros-noetic-rospy", "1.15.13", "py38h6d1e2f3_3", 3,
         ["python=3.8", "catkin-pkg >=0.4"]),
        ("boost-cpp", "1.74.0", "h5b4e17d_4", 4, ["vs2015_runtime >=14.16"]),
    ],
}

CONDA_FORGE = {
    "linux-64": [
        ("python", "3.8.8", "hffdb5ce_0_cpython", 0, ["__glibc >=2.12"]),
        ("python", "3.9.7", "hb7a2778_3_cpython", 3, ["__glibc >=2.17"]),
        ("python", "3.7.10", "hffdb5ce_100_cpython", 100, ["__glibc >=2.12"]),
        ("boost-cpp", "1.77.0", "h359cf19_1", 1, ["libgcc-ng >=9"]),
        ("libgcc-ng", "11.2.0", "h1d223b6_11", 11, ["__glibc >=2.12"]),
        ("qt-main", "5.15.2", "h8d5c5b1_0", 0, ["libgcc-ng >=9"]),
        ("qt-main", "5.12.9", "hda022c4_4", 4, ["libgcc-ng >=7"]),
        ("libopencv", "4.5.3", "py38h5627943_1", 1, ["libgcc-ng >=9", "python=3.8"]),
        ("numpy", "1.21.2", "py38he2449b9_0", 0, ["python=3.8", "libgcc-ng >=9"]),
        ("numpy", "1.21.2", "py39hdbf815f_0", 0, ["python=3.9", "libgcc-ng >=9"]),
    ],
    "win-64": [
        ("python", "3.8.8", "h7840368_0_cpython", 0, ["__win"]),
        ("python", "3.9.7", "h7840368_3_cpython", 3, ["__win"]),
        ("vs2015_runtime", "14.29.30037", "h902a5da_5", 5, []),
        ("boost-cpp", "1.77.0", "h62d2a3b_1", 1, ["vs2015_runtime >=14.16"]),
        ("qt-main", "5.15.2", "h0c2a8d6_0", 0, ["vs2015_runtime >=14.16"]),
        ("numpy", "1.21.2", "py38h089cfbf_0", 0, ["python=3.8"]),
    ],
    "noarch": [
        ("catkin-pkg", "0.4.24", "pyhd8ed1ab_0", 0, ["python >=3.6"]),
        ("catkin-pkg", "0.4.23", "pyhd8ed1ab_0", 0, ["python >=3.6"]),
    ],
}

FIXTURE_CHANNELS = {"robostack": ROBOSTACK, "conda-forge": CONDA_FORGE}


def payload_for(name: str, version: str, platform: str) -> list[tuple[PathEntry, bytes]]:
    """Small but realistic payload: a relocatable text file, a relocatable
    binary, and a file without any prefix reference."""
    root = "Library/" if platform.startswith("win") else ""
    text = (
        "# %s %s\n"
        "prefix=%s\n"
        "cmake_dir=%s/%sshare/%s/cmake\n" % (name, version, PLACEHOLDER, PLACEHOLDER, root, name)
    ).encode()
    binary = (
        b"\x7fELF\x02\x01\x01\x00"
        + hashlib.sha256(name.encode()).digest()
        + PLACEHOLDER.encode()
        + b"\x00"
        + ("%s-%s" % (name, version)).encode()
        + b"\x00" * 7
        + PLACEHOLDER.encode()
        + b"\x00\x01\x02\x03"
    )
    license_text = ("%s is distributed under the BSD-3-Clause license.\n" % name).encode()
    lib = name.replace("-", "_")
    return [
        (PathEntry("%sshare/%s/config.txt" % (root, name), TEXT, PLACEHOLDER), text),
        (PathEntry("%slib/lib%s.so" % (root, lib), BINARY, PLACEHOLDER), binary),
        (PathEntry("%sshare/%s/LICENSE" % (root, name), TEXT), license_text),
    ]


def write_channel(dest: Path, channel: str, content: dict) -> dict[str, int]:
    """Write one channel; returns record counts per platform."""
    counts = {}
    for platform, rows in content.items():
        subdir = dest / channel / platform
        subdir.mkdir(parents=True, exist_ok=True)
        packages = {}
        for name, version, build, build_number, depends in rows:
            fn = "%s-%s-%s%s" % (name, version, build, ARCHIVE_EXT)
            index = {
                "name": name,
                "version": version,
                "build": build,
                "build_number": build_number,
                "depends": list(depends),
                "subdir": platform,
            }
            data = build_archive(index, payload_for(name, version, platform))
            (subdir / fn).write_bytes(data)
            entry = {k: v for k, v in index.items() if k != "subdir"}
            entry["sha256"] = hashlib.sha256(data).hexdigest()
            packages[fn] = entry
        doc = {"info": {"subdir": platform}, "packages": dict(sorted(packages.items()))}
        (subdir / INDEX_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        counts[platform] = len(packages)
    return counts


def write_fixture_channels(dest) -> None:
    dest = Path(dest)
    for channel, content in FIXTURE_CHANNELS.items():
        write_channel(dest, channel, content)


if __name__ == "__main__":
    write_fixture_channels(sys.argv[1] if len(sys.argv) > 1 else
                           Path(__file__).parent / "data" / "channels")
