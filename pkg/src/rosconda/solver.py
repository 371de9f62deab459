"""Dependency resolution.

The objective is lexicographic over package names: requested names first (in
request order), then every other name alphabetically. For each name the
choices rank as

* unlocked name: absent, then candidates best-first;
* locked name: the installed record, absent, then the other candidates.

Candidates are ordered by the merged index (channel rank, version, build
number, platform-before-noarch, build string).

``solve`` encodes the request as CNF and runs a conflict-driven search whose
decisions follow that objective order with a fixed preferred polarity and no
restarts. Because every learned clause is implied by the formula, the first
model such a search reaches is the lexicographically smallest one, so the
result is optimal and not merely consistent. ``brute_force_solve`` is the
enumeration oracle used to check that claim.
"""
from __future__ import annotations

import itertools
from collections import deque
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .channels import MergedIndex, PackageRecord, VirtualPackage
from .errors import InstanceTooLarge, SpecHasNoCandidates
from .verspec import MatchSpec, parse_matchspec, spec_matches

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 24
EXPLAIN_DEPTH = 10


def _spec(s) -> MatchSpec:
    return s if isinstance(s, MatchSpec) else parse_matchspec(s)


def is_virtual(name: str) -> bool:
    return name.startswith("__")


@dataclass
class SolveRequest:
    specs: Sequence[MatchSpec]
    index: MergedIndex
    virtual: Sequence[VirtualPackage] = ()
    pins: Sequence[MatchSpec] = ()
    locked: Sequence[PackageRecord] = ()

    def __post_init__(self):
        self.specs = tuple(_spec(s) for s in self.specs)
        self.pins = tuple(_spec(s) for s in self.pins)
        self.virtual = tuple(self.virtual)
        self.locked = tuple(sorted(set(self.locked), key=lambda r: r.name))

    def replace(self, **kw) -> "SolveRequest":
        args = dict(specs=self.specs, index=self.index, virtual=self.virtual,
                    pins=self.pins, locked=self.locked)
        args.update(kw)
        return SolveRequest(**args)

    def virtual_match(self, spec: MatchSpec) -> bool:
        return any(spec_matches(spec, v) for v in self.virtual)

    def name_order(self, names: Iterable[str]) -> list[str]:
        requested = list(dict.fromkeys(s.name for s in self.specs))
        rest = sorted(set(names) - set(requested))
        return requested + rest

    def pool(self, name: str) -> list[PackageRecord]:
        """Candidates for ``name`` in preference order, locked record first."""
        cands = list(self.index.candidates(name))
        for rec in self.locked:
            if rec.name == name:
                if rec in cands:
                    cands.remove(rec)
                cands.insert(0, rec)
        return cands

    def locked_record(self, name: str) -> PackageRecord | None:
        for rec in self.locked:
            if rec.name == name:
                return rec
        return None

    def matching(self, spec: MatchSpec) -> list[PackageRecord]:
        return [r for r in self.pool(spec.name) if spec_matches(spec, r)]


@dataclass(frozen=True)
class Solution:
    records: tuple[PackageRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(sorted(self.records, key=lambda r: r.name)))

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __contains__(self, item):
        return item in self.records

    def names(self) -> list[str]:
        return [r.name for r in self.records]

    def get(self, name: str) -> PackageRecord | None:
        for r in self.records:
            if r.name == name:
                return r
        return None


def check_solution(records: Iterable[PackageRecord], request: SolveRequest) -> list[str]:
    """Return the list of violated solution invariants (empty when valid)."""
    records = list(records)
    problems = []
    seen: dict[str, PackageRecord] = {}
    for r in records:
        if r.name in seen:
            problems.append("two records named %s" % r.name)
        seen[r.name] = r

    def satisfied(spec: MatchSpec) -> bool:
        if is_virtual(spec.name):
            return request.virtual_match(spec)
        r = seen.get(spec.name)
        return r is not None and spec_matches(spec, r)

    for s in request.specs:
        if not satisfied(s):
            problems.append("requested %s not satisfied" % s)
    for s in request.pins:
        if not satisfied(s):
            problems.append("pin %s not satisfied" % s)
    for r in records:
        for d in r.depends:
            if not satisfied(parse_matchspec(d)):
                problems.append("%s: dependency %s not satisfied" % (r, d))
    return problems


# -- encoding ------------------------------------------------------------------


@dataclass
class ClauseSet:
    """CNF over candidate records; variable ``i + 1`` is ``variables[i]``."""

    variables: list[PackageRecord] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    options: dict[str, list[int]] = field(default_factory=dict)
    locked: dict[str, int] = field(default_factory=dict)
    requests: list[list[int]] = field(default_factory=list)
    dependencies: list[list[int]] = field(default_factory=list)
    at_most_one: list[list[int]] = field(default_factory=list)
    pins: list[list[int]] = field(default_factory=list)

    def clauses(self) -> list[list[int]]:
        out = list(self.requests) + list(self.dependencies) + list(self.pins)
        for group in self.at_most_one:
            out.extend([-a, -b] for a, b in itertools.combinations(group, 2))
        return out


def encode(request: SolveRequest) -> ClauseSet:
    cs = ClauseSet()
    var_of: dict[PackageRecord, int] = {}
    missing = []

    def var(rec: PackageRecord) -> int:
        v = var_of.get(rec)
        if v is None:
            cs.variables.append(rec)
            v = var_of[rec] = len(cs.variables)
            queue.append(rec)
        return v

    queue: deque[PackageRecord] = deque()
    roots: list[tuple[str, MatchSpec]] = [("request", s) for s in request.specs]
    roots += [("pin", s) for s in request.pins]
    for kind, spec in roots:
        if is_virtual(spec.name):
            if not request.virtual_match(spec):
                missing.append(spec)
            continue
        matches = request.matching(spec)
        if not matches:
            missing.append(spec)
            continue
        clause = [var(r) for r in matches]
        (cs.requests if kind == "request" else cs.pins).append(clause)
    if missing:
        raise SpecHasNoCandidates(missing)
    for rec in request.locked:
        var(rec)

    dep_cache: dict[str, list[PackageRecord] | bool] = {}
    while queue:
        rec = queue.popleft()
        v = var_of[rec]
        for dep in rec.depends:
            targets = dep_cache.get(dep)
            if targets is None:
                spec = parse_matchspec(dep)
                if is_virtual(spec.name):
                    targets = request.virtual_match(spec)
                else:
                    targets = request.matching(spec)
                dep_cache[dep] = targets
            if targets is True:
                continue
            if targets is False:
                cs.dependencies.append([-v])
                continue
            cs.dependencies.append([-v] + [var(t) for t in targets])

    by_name: dict[str, list[int]] = {}
    for i, rec in enumerate(cs.variables):
        by_name.setdefault(rec.name, []).append(i + 1)
    cs.names = request.name_order(by_name)
    for name in cs.names:
        pool = request.pool(name)
        vs = sorted(by_name[name], key=lambda v: pool.index(cs.variables[v - 1]))
        cs.options[name] = vs
        if len(vs) > 1:
            cs.at_most_one.append(vs)
        locked = request.locked_record(name)
        if locked is not None and locked in var_of:
            cs.locked[name] = var_of[locked]
    return cs


# -- conflict-driven search ------------------------------------------------------


class _CDCL:
    """Clause-learning search with a fixed decision order and polarity."""

    def __init__(self, nvars: int, order: list[int]):
        self.n = nvars
        self.order = order  # signed literals: decide abs(lit) with polarity sign(lit)
        self.value = [0] * (nvars + 1)
        self.level = [0] * (nvars + 1)
        self.reason: list[list[int] | None] = [None] * (nvars + 1)
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.clauses: list[list[int]] = []
        self.watches: dict[int, list[list[int]]] = {}
        self.units: list[int] = []
        self.empty = False
        self.qhead = 0

    def lit_value(self, lit: int) -> int:
        v = self.value[abs(lit)]
        return v if lit > 0 else -v

    def add_clause(self, clause: list[int]):
        clause = list(dict.fromkeys(clause))
        if any(-l in clause for l in clause):
            return
        if not clause:
            self.empty = True
        elif len(clause) == 1:
            self.units.append(clause[0])
        else:
            self._attach(clause)

    def _attach(self, clause):
        self.clauses.append(clause)
        self.watches.setdefault(-clause[0], []).append(clause)
        self.watches.setdefault(-clause[1], []).append(clause)

    def _assign(self, lit: int, reason):
        v = abs(lit)
        self.value[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _propagate(self):
        """Return a conflicting clause or None."""
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            # clauses watching -lit's falsification are stored under key lit
            watchers = self.watches.get(lit)
            if not watchers:
                continue
            keep = []
            i = 0
            n = len(watchers)
            while i < n:
                c = watchers[i]
                i += 1
                if c[0] == -lit:
                    c[0], c[1] = c[1], c[0]
                # c[1] is now the falsified watch
                if self.lit_value(c[0]) == 1:
                    keep.append(c)
                    continue
                for k in range(2, len(c)):
                    if self.lit_value(c[k]) != -1:
                        c[1], c[k] = c[k], c[1]
                        self.watches.setdefault(-c[1], []).append(c)
                        break
                else:
                    keep.append(c)
                    if self.lit_value(c[0]) == -1:
                        keep.extend(watchers[i:])
                        self.watches[lit] = keep
                        return c
                    self._assign(c[0], c)
            self.watches[lit] = keep
        return None

    def _analyze(self, conflict):
        cur = len(self.trail_lim)
        seen = set()
        learnt = [0]
        pending = 0
        clause = conflict
        idx = len(self.trail) - 1
        p = 0
        while True:
            for q in clause:
                if q == p:
                    continue
                v = abs(q)
                if v in seen or self.level[v] == 0:
                    continue
                seen.add(v)
                if self.level[v] == cur:
                    pending += 1
                else:
                    learnt.append(q)
            while abs(self.trail[idx]) not in seen:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            clause = self.reason[abs(p)] or []
            pending -= 1
            if pending == 0:
                break
        learnt[0] = -p
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda i: self.level[abs(learnt[i])])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, self.level[abs(learnt[1])]

    def _backjump(self, level: int):
        if len(self.trail_lim) <= level:
            return
        start = self.trail_lim[level]
        for lit in self.trail[start:]:
            v = abs(lit)
            self.value[v] = 0
            self.reason[v] = None
        del self.trail[start:]
        del self.trail_lim[level:]
        self.qhead = len(self.trail)

    def solve(self) -> list[int] | None:
        if self.empty:
            return None
        for u in self.units:
            val = self.lit_value(u)
            if val == -1:
                return None
            if val == 0:
                self._assign(u, None)
        pos = 0
        while True:
            conflict = self._propagate()
            if conflict is not None:
                if not self.trail_lim:
                    return None
                learnt, back = self._analyze(conflict)
                self._backjump(back)
                if len(learnt) == 1:
                    self._assign(learnt[0], None)
                else:
                    self._attach(learnt)
                    self._assign(learnt[0], learnt)
                pos = 0
                continue
            while pos < len(self.order) and self.value[abs(self.order[pos])]:
                pos += 1
            if pos == len(self.order):
                return [v for v in range(1, self.n + 1) if self.value[v] == 1]
            self.trail_lim.append(len(self.trail))
            self._assign(self.order[pos], None)


def _search(cs: ClauseSet) -> list[PackageRecord] | None:
    nrec = len(cs.variables)
    present = {name: nrec + i + 1 for i, name in enumerate(cs.names)}
    order: list[int] = []
    for name in cs.names:
        opts = cs.options[name]
        locked = cs.locked.get(name)
        if locked is not None:
            order.append(locked)
        order.append(-present[name])
        order.extend(v for v in opts if v != locked)
    engine = _CDCL(nrec + len(present), order)
    for clause in cs.clauses():
        engine.add_clause(clause)
    for name, opts in cs.options.items():
        p = present[name]
        engine.add_clause([-p] + opts)
        for v in opts:
            engine.add_clause([-v, p])
    model = engine.solve()
    if model is None:
        return None
    return [cs.variables[v - 1] for v in model if v <= nrec]


def _solve_records(request: SolveRequest) -> list[PackageRecord] | None:
    try:
        cs = encode(request)
    except SpecHasNoCandidates:
        return None
    return _search(cs)


def solve(request: SolveRequest) -> Union[Solution, "UnsatExplanation"]:
    records = _solve_records(request)
    if records is None:
        return explain(request)
    solution = Solution(tuple(records))
    problems = check_solution(solution, request)
    if problems:  # pragma: no cover - soundness guard
        raise AssertionError("solver produced an invalid solution: %s" % problems)
    return solution


# -- oracle --------------------------------------------------------------------


def brute_force_solve(request: SolveRequest) -> Solution | None:
    """Exhaustive reference solver; ``None`` means unsatisfiable.

    Every name reachable from the request through any candidate's
    dependencies is assigned "absent" or one of its candidates. Assignments
    are visited in objective order (the order ``itertools.product`` would
    produce), so the first consistent one is the optimum. A branch is only
    cut once a constraint between already-assigned names is violated, which
    no completion can repair.
    """
    names = set()
    frontier = [s.name for s in request.specs] + [s.name for s in request.pins]
    frontier += [r.name for r in request.locked]
    while frontier:
        name = frontier.pop()
        if name in names or is_virtual(name):
            continue
        names.add(name)
        for rec in request.pool(name):
            frontier.extend(parse_matchspec(d).name for d in rec.depends)
    order = request.name_order(names)
    total = sum(len(request.pool(n)) for n in order)
    if total > BRUTE_FORCE_LIMIT:
        raise InstanceTooLarge("%d candidates exceed the limit of %d" % (total, BRUTE_FORCE_LIMIT))

    choices = []
    for name in order:
        pool = request.pool(name)
        locked = request.locked_record(name)
        if locked is not None:
            choices.append([locked, None] + [r for r in pool if r != locked])
        else:
            choices.append([None] + pool)
    position = {name: i for i, name in enumerate(order)}
    required = {}
    for s in list(request.specs) + list(request.pins):
        if is_virtual(s.name):
            if not request.virtual_match(s):
                return None
        else:
            required.setdefault(s.name, []).append(s)

    def holds(spec: MatchSpec, assigned: list) -> bool:
        if is_virtual(spec.name):
            return request.virtual_match(spec)
        r = assigned[position[spec.name]]
        return r is not None and spec_matches(spec, r)

    def consistent(depth: int, assigned: list) -> bool:
        # Check every constraint whose names are all assigned once the
        # last of them (index ``depth``) is set.
        name = order[depth]
        if not all(holds(s, assigned) for s in required.get(name, ())):
            return False
        for i in range(depth + 1):
            r = assigned[i]
            if r is None:
                continue
            for d in r.depends:
                spec = parse_matchspec(d)
                j = position.get(spec.name, -1)
                if (i == depth and j <= depth) or (i < depth and j == depth):
                    if not holds(spec, assigned):
                        return False
        return True

    assigned: list = [None] * len(order)

    def walk(depth: int) -> bool:
        if depth == len(order):
            return True
        for option in choices[depth]:
            assigned[depth] = option
            if consistent(depth, assigned) and walk(depth + 1):
                return True
        assigned[depth] = None
        return False

    if not walk(0):
        return None
    chosen = [r for r in assigned if r is not None]
    problems = check_solution(chosen, request)
    if problems:  # pragma: no cover - guards the pruning rule
        raise AssertionError(problems)
    return Solution(tuple(chosen))


# -- explanations ----------------------------------------------------------------

NO_CANDIDATE = "no candidate matches"
CONFLICT = "candidate conflicts with chosen name"
DEP_UNSAT = "dependency unsatisfiable"


@dataclass
class ConflictNode:
    spec: str
    candidate: PackageRecord | None
    reason: str
    children: list["ConflictNode"] = field(default_factory=list)
    detail: str = ""

    def lines(self, indent: int = 0) -> list[str]:
        pad = "  " * indent
        head = str(self.candidate) if self.candidate is not None else self.spec
        text = "%s%s: %s" % (pad, head, self.reason)
        if self.detail:
            text += " (%s)" % self.detail
        out = [text]
        for child in self.children:
            out.extend(child.lines(indent + 1))
        return out


ELIDED = "..."


@dataclass
class UnsatExplanation:
    roots: list[ConflictNode]

    def render(self) -> str:
        lines = []
        for root in self.roots:
            lines.extend(root.lines())
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.render()

    @property
    def missing(self) -> list[str]:
        """Root specs that failed only because nothing matched them."""
        return [r.spec for r in self.roots if r.reason == NO_CANDIDATE]


class _Explainer:
    def __init__(self, request: SolveRequest):
        self.base = request.replace(specs=(), pins=(), locked=())
        self._sat: dict[tuple[str, ...], bool] = {}

    def satisfiable(self, specs: Sequence[MatchSpec]) -> bool:
        key = tuple(sorted(str(s) for s in specs))
        hit = self._sat.get(key)
        if hit is None:
            hit = self._sat[key] = _solve_records(self.base.replace(specs=specs)) is not None
        return hit

    def exact(self, rec: PackageRecord) -> MatchSpec:
        return parse_matchspec("%s::%s" % (rec.channel, rec.pin))

    def spec_node(self, spec: MatchSpec, depth: int, path: tuple[str, ...]) -> ConflictNode:
        if is_virtual(spec.name):
            return ConflictNode(str(spec), None, NO_CANDIDATE)
        cands = self.base.matching(spec)
        if not cands:
            return ConflictNode(str(spec), None, NO_CANDIDATE)
        node = ConflictNode(str(spec), None, DEP_UNSAT)
        if depth >= EXPLAIN_DEPTH:
            node.children.append(ConflictNode(ELIDED, None, "elided"))
            return node
        for c in cands:
            node.children.append(self.candidate_node(spec, c, depth + 1, path))
        return node

    def candidate_node(self, spec, rec, depth, path) -> ConflictNode:
        if rec.name in path:
            return ConflictNode(str(spec), rec, DEP_UNSAT, detail="cycle, elided")
        path = path + (rec.name,)
        deps = [parse_matchspec(d) for d in rec.depends]
        for dep in deps:
            if is_virtual(dep.name) and not self.base.virtual_match(dep):
                return ConflictNode(str(spec), rec, DEP_UNSAT,
                                    [ConflictNode(str(dep), None, NO_CANDIDATE)])
        broken = [d for d in deps if not is_virtual(d.name) and not self.satisfiable([d])]
        if broken:
            # Follow a dependency that leads somewhere new before a cyclic one.
            dep = next((d for d in broken if d.name not in path), broken[0])
            return ConflictNode(str(spec), rec, DEP_UNSAT, [self.spec_node(dep, depth, path)])
        for i, dep in enumerate(deps):
            if is_virtual(dep.name):
                continue
            if not self.satisfiable([self.exact(rec)] + deps[: i + 1]):
                return ConflictNode(str(spec), rec, CONFLICT, detail=str(dep))
        return ConflictNode(str(spec), rec, CONFLICT)


def explain(request: SolveRequest) -> UnsatExplanation:
    """Build a deterministic conflict tree for an unsatisfiable request."""
    ex = _Explainer(request)
    specs = list(dict.fromkeys(list(request.specs) + list(request.pins)))
    failing = [s for s in specs if not ex.satisfiable([s])]
    if failing:
        roots = [ex.spec_node(s, 0, ()) for s in sorted(failing, key=str)]
        return UnsatExplanation(roots)

    core = list(specs)
    for s in list(core):
        trial = [t for t in core if t != s]
        if not ex.satisfiable(trial):
            core = trial
    roots = []
    for s in sorted(core, key=str):
        others = [t for t in core if t != s]
        node = ConflictNode(str(s), None, CONFLICT,
                            detail="with " + ", ".join(str(t) for t in others))
        chosen = _solve_records(ex.base.replace(specs=others)) or []
        chosen_by_name = {r.name: r for r in chosen}
        for c in ex.base.matching(s):
            closure = _solve_records(ex.base.replace(specs=[ex.exact(c)])) or [c]
            clash = _first_clash(c, closure, chosen_by_name)
            node.children.append(ConflictNode(str(s), c, CONFLICT, detail=clash))
        roots.append(node)
    if request.locked and not roots:  # pragma: no cover - locked never causes UNSAT
        roots.append(ConflictNode("<locked>", None, CONFLICT))
    return UnsatExplanation(roots)


def _first_clash(rec: PackageRecord, closure: Sequence[PackageRecord],
                 chosen: dict[str, PackageRecord]) -> str:
    """Name the first dependency of ``rec`` (direct, then via its preferred
    closure) that disagrees with the other specs' preferred solution."""
    other = chosen.get(rec.name)
    if other is not None and other != rec:
        return "chosen %s" % other
    via = [rec] + sorted((r for r in closure if r.name != rec.name), key=lambda r: r.name)
    for r in via:
        for d in r.depends:
            spec = parse_matchspec(d)
            other = chosen.get(spec.name)
            if other is not None and not spec_matches(spec, other):
                prefix = "" if r is rec else "via %s: " % r.name
                return "%s%s vs chosen %s" % (prefix, d, other)
    return "jointly unsatisfiable"
