"""Constraint dependency graph, {2,3}-trees, frozen-set components.

A {2,3}-tree is a vertex set with pairwise geodesic distance >= 2 that
becomes connected once edges are added between members at distance 2 or 3.
Only distances up to 3 matter anywhere here, so per-vertex BFS is capped
at depth 3.
"""

from collections import deque
from dataclasses import dataclass

from .errors import ResourceError


class LineGraph:
    """Graph on constraint indices; edge iff scopes intersect.

    `adj` is the adjacency (distance exactly 1); `ball2`/`ball3` hold the
    vertices at distance exactly 2 / exactly 3. The distance-<=2 graph used
    for frozen components is adj | ball2.
    """

    def __init__(self, nv, adj, scopes=None):
        self.nv = nv
        self.adj = tuple(frozenset(s) for s in adj)
        self.scopes = scopes
        self.degree = max((len(s) for s in self.adj), default=0)
        self.ball2 = []
        self.ball3 = []
        for v in range(nv):
            dist = self._bfs3(v)
            self.ball2.append(frozenset(u for u, d in dist.items() if d == 2))
            self.ball3.append(frozenset(u for u, d in dist.items() if d == 3))

    def _bfs3(self, src):
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            if dist[u] == 3:
                continue
            for w in self.adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return dist

    def g2_neighbors(self, v):
        return self.adj[v] | self.ball2[v]


def build_line_graph(inst):
    adj = [set() for _ in range(inst.m)]
    for i in range(inst.m):
        for j in range(i + 1, inst.m):
            if inst.scopes[i] & inst.scopes[j]:
                adj[i].add(j)
                adj[j].add(i)
    g = LineGraph(inst.m, adj, scopes=inst.scopes)
    assert g.degree == inst.delta
    return g


@dataclass(frozen=True)
class Tree23:
    members: frozenset


def is_tree23(g, members):
    """Check both defining conditions directly."""
    members = frozenset(members)
    for u in members:
        for w in members:
            if w != u and (w in g.adj[u] or w == u):
                return False
    if len(members) <= 1:
        return True
    # connectivity after joining members at distance 2 or 3
    start = next(iter(members))
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in (g.ball2[u] | g.ball3[u]) & members:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen == members


def enumerate_23_trees(g, root, t, limit=None):
    """All {2,3}-trees of size exactly t containing `root`, as Tree23 objects.

    Grows partial trees breadth-first, adding vertices at distance 2 or 3
    from some member and at distance >= 2 from every member; deduplicated
    by member set.
    """
    if t < 1:
        raise ValueError("tree size must be >= 1")
    level = {frozenset((root,))}
    for _ in range(t - 1):
        nxt = set()
        for part in level:
            cands = set()
            for m in part:
                cands |= g.ball2[m] | g.ball3[m]
            cands -= part
            for u in sorted(cands):
                if any(u in g.adj[m] for m in part):
                    continue
                nxt.add(part | {u})
                if limit is not None and len(nxt) > limit:
                    raise ResourceError(
                        "tree family for root %d exceeds %d" % (root, limit)
                    )
        level = nxt
    out = [Tree23(part) for part in sorted(level, key=sorted)]
    for tree in out:
        assert is_tree23(g, tree.members)
    return out


def extract_23_tree(g, b, anchor):
    """Greedy {2,3}-tree inside a distance-<=2-connected set b, containing anchor.

    Repeatedly adds the lowest-indexed vertex of b at distance >= 2 from the
    current tree among those at distance <= 3 from it.
    """
    b = frozenset(b)
    if anchor not in b:
        raise ValueError("anchor not in b")
    if not _g2_connected(g, b):
        raise ValueError("b does not induce a connected distance-<=2 subgraph")
    tree = {anchor}
    while True:
        cands = set()
        for m in tree:
            cands |= (g.ball2[m] | g.ball3[m]) & b
        cands -= tree
        cands = {u for u in cands if not any(u in g.adj[m] for m in tree)}
        if not cands:
            break
        tree.add(min(cands))
    result = Tree23(frozenset(tree))
    assert is_tree23(g, result.members)
    return result


def _g2_connected(g, b):
    if not b:
        return True
    start = min(b)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in g.g2_neighbors(u) & b:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen == b


@dataclass(frozen=True)
class Component:
    constraints: tuple
    variables: tuple


def frozen_components(g, f):
    """Connected components of the distance-<=2 graph induced by constraint set f.

    Each component carries its member constraints and the union of their scopes.
    """
    if g.scopes is None:
        raise ValueError("graph lacks scopes; build it from an instance")
    f = set(f)
    comps = []
    while f:
        start = min(f)
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in g.g2_neighbors(u) & f:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        f -= seen
        variables = set()
        for c in seen:
            variables |= g.scopes[c]
        comps.append(
            Component(tuple(sorted(seen)), tuple(sorted(variables)))
        )
    comps.sort(key=lambda comp: comp.constraints)
    return comps
