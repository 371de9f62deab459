"""Independent reference implementations used as test oracles.

Nothing here imports the matching or ordering code under test; the rules are
re-derived from their textual definitions so that agreement means something.
"""
import fnmatch
import random
import re

from conftest import mk

# -- versions -------------------------------------------------------------------


def _tokens(part):
    out, cur = [], ""
    for ch in part:
        if cur and (ch.isdigit() != cur[-1].isdigit()):
            out.append(cur)
            cur = ""
        cur += ch
    if cur:
        out.append(cur)
    return [int(t) if t.isdigit() else t for t in out]


def _parts(text):
    if not text:
        return []
    return [_tokens(p) for p in re.split(r"[._-]", text)]


def _rank(tok):
    # dev < any word < any number; missing counts as the number 0
    if isinstance(tok, int):
        return (3, tok, "")
    if tok == "dev":
        return (1, 0, "")
    return (2, 0, tok)


def _cmp_lists(a, b, pad):
    for i in range(max(len(a), len(b))):
        x = a[i] if i < len(a) else pad
        y = b[i] if i < len(b) else pad
        c = pad_cmp(x, y) if isinstance(x, list) else ((x > y) - (x < y))
        if c:
            return c
    return 0


def pad_cmp(x, y):
    xs = [_rank(t) for t in x]
    ys = [_rank(t) for t in y]
    return _cmp_lists(xs, ys, _rank(0))


def naive_compare(a, b):
    """-1/0/1 for two version strings."""
    def split(text):
        epoch = 0
        if "!" in text:
            e, text = text.split("!", 1)
            epoch = int(e)
        main, _, local = text.partition("+")
        return epoch, _parts(main), _parts(local)

    ea, ma, la = split(a)
    eb, mb, lb = split(b)
    if ea != eb:
        return -1 if ea < eb else 1
    return _cmp_lists(ma, mb, []) or _cmp_lists(la, lb, [])


def naive_prefix(version, prefix):
    """``version`` equals ``prefix`` or continues it segment-wise."""
    if naive_compare(version, prefix) == 0:
        return True
    ve, _, vbody = version.rpartition("!")
    pe, _, pbody = prefix.rpartition("!")
    if int(ve or 0) != int(pe or 0):
        return False
    vs, ps = _parts(vbody.split("+")[0]), _parts(pbody.split("+")[0])
    for i, seg in enumerate(ps):
        if pad_cmp(vs[i] if i < len(vs) else [], seg) != 0:
            return False
    return True


# -- match specs ------------------------------------------------------------------

_REL = re.compile(r"(==|!=|>=|<=|>|<)(.+)")


def _atom_ok(atom, version):
    if atom.endswith(".*"):
        return naive_prefix(version, atom[:-2])
    m = _REL.fullmatch(atom)
    if not m:
        return naive_compare(version, atom) == 0
    op, x = m.groups()
    c = naive_compare(version, x)
    return {"==": c == 0, "!=": c != 0, ">=": c >= 0, "<=": c <= 0, ">": c > 0, "<": c < 0}[op]


def naive_match(spec, name, version, build, channel=None):
    """Apply the spec grammar straight to the text of a spec and a record."""
    want_channel = None
    if "::" in spec:
        want_channel, spec = spec.split("::", 1)
    if want_channel is not None and want_channel != channel:
        return False
    m = re.fullmatch(r"([a-z0-9_.\-]+)(.*)", spec.strip())
    spec_name, rest = m.group(1), m.group(2)
    if spec_name != name:
        return False
    rest = rest.strip()
    if not rest:
        return True
    want_build = None
    if rest.startswith("=") and not rest.startswith("=="):
        fields = rest[1:].split("=")
        if len(fields) == 2:
            atoms, want_build = [fields[0]], fields[1]
        else:
            atoms = [fields[0] + ".*"]
    else:
        fields = rest.split()
        atoms = fields[0].split(",")
        if len(fields) == 2:
            want_build = fields[1]
    if not all(_atom_ok(a, version) for a in atoms):
        return False
    return want_build is None or fnmatch.fnmatchcase(build, want_build)


# -- solutions --------------------------------------------------------------------


def valid_solution(records, specs, virtual=(), pins=()):
    """Problems with ``records`` as a solution; empty list when valid."""
    problems = []
    names = [r.name for r in records]
    if len(names) != len(set(names)):
        problems.append("duplicate names")
    pool = [(r.name, str(r.version), r.build, r.channel) for r in records]
    pool += [(v.name, str(v.version), v.build, None) for v in virtual]

    def sat(spec):
        return any(naive_match(spec, *p) for p in pool)

    for s in list(specs) + list(pins):
        if not sat(str(s)):
            problems.append("unsatisfied request %s" % s)
    for r in records:
        for d in r.depends:
            if not sat(d):
                problems.append("%s: unsatisfied %s" % (r, d))
    return problems


def edge_violations(order, edges):
    """Edges (dependent, dependency) whose dependency is placed after the dependent."""
    pos = {n: i for i, n in enumerate(order)}
    return [(a, b) for a, b in edges if a in pos and b in pos and pos[b] > pos[a]]


def random_dag(rng, n, p=0.15):
    names = ["n%02d" % i for i in range(n)]
    rng.shuffle(names)
    edges = set()
    for i in range(n):
        for j in range(i):
            if rng.random() < p:
                edges.add((names[i], names[j]))
    return names, edges


# -- random solver instances ---------------------------------------------------------

VERSIONS = ["1.0", "1.5", "2.0", "2.1", "3.0"]
MAX_NAMES = 8


def _constraint(rng, target_versions):
    # Mostly loose, so that unplanted instances are usually satisfiable.
    v = rng.choice(target_versions)
    return rng.choice(["", "", "", " >=%s" % v, " <=%s" % v, "==%s" % v,
                       "=%s" % v.split(".")[0], " >=1.0,<=%s" % v])


def random_instance(rng: random.Random, unsat: bool = False, budget: int = 24):
    """A small solver instance ``(records, specs, pins, locked)``.

    At most ``MAX_NAMES`` package names and four versions per name.

    With ``unsat`` one of several conflict patterns is planted. The
    caller should still trust the brute-force verdict, not this flag.
    """
    kind = rng.choice(["missing-dep", "conflict", "no-match", "conflict"]) if unsat else None
    extra = {"conflict": 3, "missing-dep": 1}.get(kind, 0)
    n = rng.randint(2, MAX_NAMES - extra)
    names = ["p%d" % i for i in range(n)]
    per_name = {}
    left = budget - 4  # headroom for planted records
    for name in names:
        k = min(rng.randint(1, 4), max(1, left - (n - len(per_name) - 1)))
        per_name[name] = sorted(rng.sample(VERSIONS, k))
        left -= k
    records = []
    for name in names:
        for v in per_name[name]:
            deps = []
            others = [o for o in names if o != name]
            for o in rng.sample(others, min(len(others), rng.choice([0, 0, 1, 1, 2]))):
                deps.append(o + _constraint(rng, per_name[o]))
            if rng.random() < 0.1:
                deps.append("__glibc >=%s" % rng.choice(["2.12", "2.17"]))
            channel = "hi" if rng.random() < 0.8 else "lo"
            records.append(mk(name, v, deps, build="b%d" % rng.randint(0, 1),
                              build_number=rng.randint(0, 2), channel=channel))
    specs = [s + _constraint(rng, per_name[s]) for s in rng.sample(names, rng.randint(1, min(3, n)))]
    pins = []
    if rng.random() < 0.15:
        p = rng.choice(names)
        pins.append(p + _constraint(rng, per_name[p]))

    if unsat:
        a = specs[0].split()[0].split("=")[0].split("<")[0].split(">")[0].split("!")[0]
        if kind == "no-match":
            specs.append(a + " >=99")
        elif kind == "missing-dep":
            records = [r if r.name != a else mk(r.name, str(r.version), r.depends + ("zz >=9",),
                                                 r.build, r.build_number, r.channel)
                       for r in records]
            records.append(mk("zz", "1.0", channel="hi"))
        else:
            records.append(mk("qa", "1.0", ["qc <2"], channel="hi"))
            records.append(mk("qb", "1.0", ["qc >=2"], channel="hi"))
            records.append(mk("qc", "1.0", channel="hi"))
            records.append(mk("qc", "2.0", channel="hi"))
            specs += ["qa", "qb"]

    locked = []
    if rng.random() < 0.2:
        by = {}
        for r in records:
            by.setdefault(r.name, []).append(r)
        for name in rng.sample(sorted(by), min(len(by), 2)):
            locked.append(rng.choice(by[name]))
    return records, specs, pins, locked


def instance_stream(rng: random.Random, count: int, unsat_share: float = 0.3):
    """Yield ``(request, planted)`` pairs with an exact share of planted UNSAT.

    Unplanted instances are redrawn until the brute-force oracle finds them
    satisfiable, so the UNSAT share of the stream is the planted share.
    """
    from rosconda.channels import PlatformProfile, detect_virtual_packages
    from rosconda.solver import SolveRequest, brute_force_solve

    from conftest import index_of

    planted_count = round(count * unsat_share)
    flags = [True] * planted_count + [False] * (count - planted_count)
    rng.shuffle(flags)
    for planted in flags:
        while True:
            recs, specs, pins, locked = random_instance(rng, unsat=planted)
            profile = PlatformProfile("linux-64", glibc=rng.choice(["2.12", "2.17"]))
            req = SolveRequest(specs, index_of(*recs, channels=["hi", "lo"]),
                               detect_virtual_packages(profile), pins, locked)
            if planted or brute_force_solve(req) is not None:
                break
        yield req, planted
