"""The solver on small hand-made indexes: preferences, backtracking, and
what an unsatisfiable request looks like."""
import hashlib

from rosconda.channels import MergedIndex, PackageRecord, PlatformProfile, detect_virtual_packages
from rosconda.solver import SolveRequest, UnsatExplanation, brute_force_solve, solve
from rosconda.verspec import compare_versions, parse_matchspec, parse_version


def rec(name, version, depends=(), build="0", channel="demo"):
    v = parse_version(version)
    fn = "%s-%s-%s.tar" % (name, v, build)
    return PackageRecord(name, v, build, 0, tuple(depends), channel, "linux-64", fn,
                         hashlib.sha256(fn.encode()).hexdigest())


# version ordering: numbers beat words, dev sorts first, missing parts are zero
for a, b in [("1.0", "1.0.0"), ("2.0rc1", "2.0"), ("1.0dev", "1.0a"), ("1.10", "1.9")]:
    print("%-7s vs %-7s -> %+d" % (a, b, compare_versions(parse_version(a), parse_version(b))))

spec = parse_matchspec("python=3.8")
print(spec.name, "constraint", spec.version)

# app 2.0 wants lib>=2 but lib 2.0 needs a newer glibc than we declare,
# so the solver backs off to app 1.0
index = MergedIndex.from_records([
    rec("app", "2.0", ["lib >=2"]), rec("app", "1.0", ["lib"]),
    rec("lib", "2.0", ["__glibc >=2.28"]), rec("lib", "1.0"),
])
virtual = detect_virtual_packages(PlatformProfile("linux-64", glibc="2.17"))
request = SolveRequest(["app"], index, virtual)
result = solve(request)
print("chosen:", [str(r) for r in result])
print("brute force agrees:", brute_force_solve(request) == result)

# two requests that can never hold together
clash = MergedIndex.from_records([
    rec("a", "1.0", ["c <2"]), rec("b", "1.0", ["c >=2"]),
    rec("c", "1.0"), rec("c", "2.0"),
])
unsat = solve(SolveRequest(["a", "b"], clash, ()))
assert isinstance(unsat, UnsatExplanation)
print(unsat.render())
