"""Lock one spec for linux-64 and win-64 and install each section."""
import tempfile
from pathlib import Path

from rosconda import lock
from rosconda.channels import ArchiveSource, PlatformProfile

spec = lock.parse_spec_file("""
channels: [robostack, conda-forge]
dependencies: [ros-noetic-desktop]
platforms: [linux-64, win-64]
""")
profiles = {"linux-64": PlatformProfile("linux-64", glibc="2.17"),
            "win-64": PlatformProfile("win-64")}
channels, indexes = lock.load_platform_indexes(spec.channels, spec.platforms)
lockfile = lock.generate_lock(spec, indexes, profiles)
text = lockfile.render()
print(text)

# same inputs, same bytes
again = lock.generate_lock(spec, indexes, profiles).render()
print("byte-identical on rerun:", again == text)

# only name and version can match across platforms; builds differ
for name in ("python", "boost-cpp", "ros-noetic-desktop"):
    row = [(e.version, e.build) for p in lockfile.platforms for e in lockfile.entries[p] if e.name == name]
    print("%-20s %s" % (name, row))

dest = Path(tempfile.mkdtemp(prefix="rosconda-lock-"))
archives = ArchiveSource.for_channels(channels)
for platform in lockfile.platforms:
    state = lock.install_from_lock(lock.parse_lockfile(text), platform, dest / platform, archives)
    print(platform, "->", len(state.installed), "packages in", state.prefix)
