from __future__ import annotations

import heapq
from typing import Iterable, Mapping


def toposort(nodes: Iterable[str], deps: Mapping[str, Iterable[str]], cycle_error=ValueError) -> list[str]:
    """Order ``nodes`` so every node follows its dependencies.

    Ties go to the alphabetically smallest ready node. Dependencies outside
    ``nodes`` are ignored. On a cycle, ``cycle_error`` is raised with one
    full cycle path, e.g. ``["a", "b", "a"]``.
    """
    nodes = set(nodes)
    edges = {n: sorted(set(deps.get(n, ())) & nodes) for n in nodes}
    waiting = {n: len(edges[n]) for n in nodes}
    dependents: dict[str, list[str]] = {n: [] for n in nodes}
    for n, ds in edges.items():
        for d in ds:
            dependents[d].append(n)
    ready = [n for n, k in waiting.items() if k == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        n = heapq.heappop(ready)
        out.append(n)
        for m in dependents[n]:
            waiting[m] -= 1
            if waiting[m] == 0:
                heapq.heappush(ready, m)
    if len(out) < len(nodes):
        raise cycle_error(find_cycle({n: edges[n] for n in nodes if waiting[n]}))
    return out


def find_cycle(edges: Mapping[str, list[str]]) -> list[str]:
    """Walk dependency edges among blocked nodes until a node repeats."""
    node = min(edges)
    path = [node]
    seen = {node: 0}
    while True:
        node = min(d for d in edges[node] if d in edges)
        if node in seen:
            return path[seen[node]:] + [node]
        seen[node] = len(path)
        path.append(node)
