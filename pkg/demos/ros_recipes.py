"""Turn a small snapshot of ROS manifests into recipes and a build order."""
import tempfile
from pathlib import Path

from rosconda import vinca
from rosconda.errors import DependencyCycle, UnmappedDependency

fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "ros"
mapping = vinca.parse_mapping((fixtures / "mapping.txt").read_text())
snapshot = vinca.load_snapshot(fixtures / "snapshot")
print("manifests:", [m.name for m in snapshot])

# sibling keys become mangled names, the rest go through the mapping
recipes = vinca.generate_snapshot(snapshot, "noetic", mapping, "linux-64")
print(recipes["foo_bar"].render())

# the same manifest on windows picks up that platform's mapping
win = vinca.generate_snapshot(snapshot, "noetic", mapping, "win-64")
print("cv_bridge run on win-64:", win["cv_bridge"].run)

print("build order:", " -> ".join(vinca.build_order(snapshot)))
out = vinca.write_recipes(recipes, tempfile.mkdtemp(prefix="recipes-"))
print("wrote", len(out), "recipes under", out[0].parent.parent)

try:
    vinca.generate_snapshot(vinca.load_snapshot(fixtures / "unmapped"), "noetic", mapping, "linux-64")
except UnmappedDependency as e:
    print("unmapped:", e)

try:
    vinca.build_order(vinca.load_snapshot(fixtures / "cycle"))
except DependencyCycle as e:
    print("cycle:", e)
