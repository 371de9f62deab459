"""Create the rosenv environment from the bundled channels, then export it."""
import tempfile
from pathlib import Path

from rosconda import environment as env
from rosconda.channels import PlatformProfile

root = Path(tempfile.mkdtemp(prefix="rosconda-demo-"))
linux = PlatformProfile("linux-64", glibc="2.17")

# robostack first, so its boost-cpp shadows the newer conda-forge build
state = env.create_environment(["ros-noetic-desktop"], ["robostack", "conda-forge"], linux,
                               name="rosenv", root=root)
print("installed into", state.prefix)
for rec in state.records():
    print("  %-22s %-9s %-20s %s" % (rec.name, rec.version, rec.build, rec.channel))

# files were relocated from the build placeholder into this prefix
print((state.prefix / "share" / "boost-cpp" / "config.txt").read_text())

doc = env.export_environment(state)
print(doc)
print(env.export_environment(state, "no_builds"))

# rebuild a second environment from the exported document
copy = env.create_from_document(doc, linux, name="rosenv-copy", root=root)
same = {r.key for r in copy.installed} == {r.key for r in state.installed}
print("reproduced exactly:", same)

# newer packages can be added later without disturbing the rest
after = env.install_packages(state.prefix, ["numpy"], linux, root=root)
print("python still", after.get("python").version, "| numpy", after.get("numpy").version)
