"""Communication graphs, coverage paths and bounded-connectivity checks."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Edge = tuple[int, int]

# exact covering-walk search is exponential; beyond this size use the tree fallback
EXACT_COVERAGE_MAX_N = 10


def norm_edge(i: int, j: int) -> Edge:
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Undirected communication graph on workers ``0 .. n_workers-1``.

    Construction checks structure only (range, self-loops, duplicates).
    Use :func:`make_graph` or :func:`generate_graph` to also require
    connectivity.
    """

    n_workers: int
    edges: frozenset[Edge]
    _adj: tuple[frozenset[int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_workers < 1:
            raise ValueError("n_workers must be positive")
        seen: set[Edge] = set()
        adj: list[set[int]] = [set() for _ in range(self.n_workers)]
        for raw in self.edges:
            i, j = raw
            if i == j:
                raise ValueError(f"self-loop at worker {i}")
            if not (0 <= i < self.n_workers and 0 <= j < self.n_workers):
                raise ValueError(f"edge {raw} out of range for n={self.n_workers}")
            e = norm_edge(i, j)
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            adj[i].add(j)
            adj[j].add(i)
        object.__setattr__(self, "edges", frozenset(seen))
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def degree(self, j: int) -> int:
        return len(self._adj[j])

    def to_json(self) -> str:
        return json.dumps({"n": self.n_workers, "edges": [list(e) for e in self.sorted_edges()]})

    @classmethod
    def from_json(cls, text: str) -> Graph:
        doc = json.loads(text)
        return make_graph(doc["n"], doc["edges"])


@dataclass(frozen=True)
class CoveragePath:
    """Ordered links that together touch every worker of the parent graph.

    ``walk`` is the vertex sequence the links were read from (empty for the
    spanning-tree fallback).
    """

    links: tuple[Edge, ...]
    walk: tuple[int, ...] = ()

    @property
    def length_d(self) -> int:
        return len(self.links)


def make_graph(n: int, edges: Iterable[Sequence[int]]) -> Graph:
    """Build a graph from an explicit edge list and reject it unless connected."""
    g = Graph(int(n), frozenset(norm_edge(*e) for e in edges))
    if not is_connected(g):
        raise ValueError("graph not connected")
    return g


def generate_graph(n: int, kind: str = "random", p: float = 0.4, seed: int = 0) -> Graph:
    """Generate a connected graph of kind ``ring``, ``path``, ``complete`` or ``random``.

    ``random`` draws Erdos-Renyi edges with probability ``p`` and then overlays
    a random spanning tree so the result is always connected.
    """
    if n < 2:
        raise ValueError("need at least 2 workers")
    if kind == "path":
        edges = {(i, i + 1) for i in range(n - 1)}
    elif kind == "ring":
        edges = {norm_edge(i, (i + 1) % n) for i in range(n)}
    elif kind == "complete":
        edges = {(i, j) for i in range(n) for j in range(i + 1, n)}
    elif kind == "random":
        if not 0 < p <= 1:
            raise ValueError("edge probability must be in (0, 1]")
        rng = np.random.default_rng(seed)
        upper = rng.random((n, n))
        edges = {(i, j) for i in range(n) for j in range(i + 1, n) if upper[i, j] < p}
        # random spanning tree: attach each node of a random order to an earlier one
        order = rng.permutation(n)
        for pos in range(1, n):
            parent = order[rng.integers(0, pos)]
            edges.add(norm_edge(order[pos], parent))
    else:
        raise ValueError(f"unknown topology kind {kind!r}")
    return make_graph(n, edges)


def neighbors(g: Graph, j: int) -> frozenset[int]:
    """Graph neighbours of ``j``, excluding ``j`` itself."""
    if not 0 <= j < g.n_workers:
        raise IndexError(f"worker {j} out of range")
    return g._adj[j]


def _connected_on(n: int, edges: Iterable[Edge]) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def is_connected(g: Graph) -> bool:
    return _connected_on(g.n_workers, g.edges)


def _tree_coverage(g: Graph) -> CoveragePath:
    # BFS spanning tree rooted at 0, emitted in DFS preorder
    parent: dict[int, int] = {0: -1}
    children: dict[int, list[int]] = {u: [] for u in range(g.n_workers)}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in sorted(g._adj[u]):
            if v not in parent:
                parent[v] = u
                children[u].append(v)
                queue.append(v)
    links: list[Edge] = []
    stack = [0]
    while stack:
        u = stack.pop()
        for v in reversed(children[u]):
            stack.append(v)
        if parent[u] >= 0:
            links.append(norm_edge(parent[u], u))
    return CoveragePath(tuple(links))


def _exact_coverage(g: Graph) -> CoveragePath:
    """Minimum-length covering walk by iterative deepening.

    Starts and neighbours are tried in ascending order, so the first walk found
    at the minimal length is the lexicographically smallest vertex sequence.
    Links are the walk's distinct edges in order of first traversal.
    """
    n = g.n_workers
    full = (1 << n) - 1
    adj = [sorted(g._adj[u]) for u in range(n)]
    dead: set[tuple[int, int, int]] = set()

    def dfs(u: int, mask: int, steps_left: int, walk: list[int]) -> list[int] | None:
        if mask == full:
            return walk
        if steps_left < n - bin(mask).count("1") or (u, mask, steps_left) in dead:
            return None
        for v in adj[u]:
            walk.append(v)
            found = dfs(v, mask | (1 << v), steps_left - 1, walk)
            if found is not None:
                return found
            walk.pop()
        dead.add((u, mask, steps_left))
        return None

    for length in range(n - 1, 2 * n):
        for start in range(n):
            walk = dfs(start, 1 << start, length, [start])
            if walk is not None:
                links: list[Edge] = []
                for a, b in zip(walk, walk[1:]):
                    e = norm_edge(a, b)
                    if e not in links:
                        links.append(e)
                return CoveragePath(tuple(links), tuple(walk))
    raise AssertionError("connected graph always has a covering walk of length < 2n")


def coverage_path(g: Graph) -> CoveragePath:
    """Links of a shortest walk touching every worker.

    Exact search for ``n <= 10``; otherwise the DFS order of a BFS spanning
    tree (``d = n - 1``).
    """
    if not is_connected(g):
        raise ValueError("graph not connected")
    if g.n_workers == 1:
        raise ValueError("single worker has no links to cover")
    if g.n_workers <= EXACT_COVERAGE_MAX_N:
        return _exact_coverage(g)
    return _tree_coverage(g)


def check_b_connectivity(g: Graph, seq: Sequence[Iterable[Edge]], b: int) -> bool:
    """True iff every aligned window of ``b`` consecutive edge sets unions to a connected graph.

    Windows are ``[0, b), [b, 2b), ...``; a trailing partial window is ignored.
    """
    if len(seq) == 0:
        raise ValueError("empty edge-set sequence")
    if b < 1:
        raise ValueError("b must be positive")
    if len(seq) < b:
        raise ValueError(f"sequence of length {len(seq)} shorter than window {b}")
    sets = [{norm_edge(*e) for e in s} for s in seq]
    for k, s in enumerate(sets):
        stray = s - g.edges
        if stray:
            raise ValueError(f"edge set {k} contains non-graph edges {sorted(stray)}")
    for start in range(0, len(sets) - b + 1, b):
        union: set[Edge] = set().union(*sets[start : start + b])
        if not _connected_on(g.n_workers, union):
            return False
    return True
