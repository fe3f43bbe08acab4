"""Achievable rates from the aggregated repeater protocol.

Every channel use distributes one qubit GHZ state among the endpoints of its
hyperedge. The resulting undirected multi-hypergraph of GHZ states is turned
into GHZ states among a client family by merging states along edge-disjoint
Steiner trees and measuring out the repeater vertices, so the number of such
trees is an achievable count per protocol round.
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .netmodel import BroadcastNetwork, ClientFamily

EXACT_LIMIT = 12
LAU_FACTOR = 26


class HypergraphError(ValueError):
    pass


class PackingLimitError(ValueError):
    pass


class WastefulMergeWarning(UserWarning):
    """Two merged GHZ states share more than the merge vertex."""


@dataclass(frozen=True, eq=False)
class GhzHypergraph:
    """Undirected multi-hypergraph of distributed GHZ states.

    Hyperedge instances carry unique ids; ``origin`` maps an instance id to the
    network edge that produced it, when there is one.
    """

    vertices: frozenset[str]
    hyperedges: tuple[tuple[str, frozenset[str]], ...] = ()
    origin: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", frozenset(self.vertices))
        edges = tuple((str(i), frozenset(m)) for i, m in self.hyperedges)
        object.__setattr__(self, "hyperedges", edges)
        object.__setattr__(self, "origin", dict(self.origin))
        ids = [i for i, _ in edges]
        if len(set(ids)) != len(ids):
            raise HypergraphError("hyperedge ids must be unique")
        for i, members in edges:
            if len(members) < 2:
                raise HypergraphError(f"hyperedge {i!r} has fewer than two members")
            if not members <= self.vertices:
                raise HypergraphError(f"hyperedge {i!r} has members outside the vertex set")

    def members(self, edge_id: str) -> frozenset[str]:
        for i, m in self.hyperedges:
            if i == edge_id:
                return m
        raise KeyError(edge_id)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.hyperedges)

    def without(self, edge_ids: Iterable[str]) -> "GhzHypergraph":
        drop = set(edge_ids)
        return GhzHypergraph(self.vertices, tuple(h for h in self.hyperedges if h[0] not in drop),
                             self.origin)

    def subgraph(self, edge_ids: Iterable[str]) -> "GhzHypergraph":
        keep = set(edge_ids)
        return GhzHypergraph(self.vertices, tuple(h for h in self.hyperedges if h[0] in keep),
                             self.origin)

    @property
    def is_graph(self) -> bool:
        return all(len(m) == 2 for _, m in self.hyperedges)

    def to_dict(self) -> dict:
        return {"vertices": sorted(self.vertices),
                "hyperedges": [{"id": i, "members": sorted(m)} for i, m in self.hyperedges]}


def build_ghz_network(net: BroadcastNetwork, copies: Mapping[str, int] | None = None
                      ) -> GhzHypergraph:
    """``copies[e]`` parallel hyperedges over the endpoints of every edge ``e``.

    Missing entries default to ``floor(avg_uses)``: one qubit GHZ per use.
    """
    copies = dict(copies or {})
    edges, origin = [], {}
    for e in net.edges:
        c = copies.get(e.id, math.floor(e.avg_uses))
        if c < 0:
            raise ValueError(f"negative copy count for edge {e.id!r}")
        for k in range(int(c)):
            iid = f"{e.id}#{k}"
            edges.append((iid, frozenset(e.endpoints)))
            origin[iid] = e.id
    return GhzHypergraph(frozenset(net.vertices), tuple(edges), origin)


# ---------------------------------------------------------------------------
# symbolic GHZ rules
# ---------------------------------------------------------------------------


def merge_rule(g: GhzHypergraph, e1: str, e2: str, at: str) -> GhzHypergraph:
    """Replace two GHZ states sharing vertex ``at`` by one over the union."""
    if e1 == e2:
        raise HypergraphError("cannot merge a hyperedge with itself")
    m1, m2 = g.members(e1), g.members(e2)
    if at not in m1 or at not in m2:
        raise HypergraphError(f"vertex {at!r} is not shared by {e1!r} and {e2!r}")
    if len(m1 & m2) > 1:
        warnings.warn(f"merging {e1!r} and {e2!r} at {at!r} wastes the shared "
                      f"vertices {sorted((m1 & m2) - {at})}", WastefulMergeWarning, stacklevel=2)
    new_id = f"({e1}+{e2})"
    edges = []
    for i, m in g.hyperedges:
        if i == e1:
            edges.append((new_id, m1 | m2))
        elif i != e2:
            edges.append((i, m))
    return GhzHypergraph(g.vertices, tuple(edges), g.origin)


def reduce_rule(g: GhzHypergraph, e: str, v: str) -> GhzHypergraph:
    """Remove vertex ``v`` from GHZ state ``e`` (an X-basis measurement)."""
    m = g.members(e)
    if v not in m:
        raise HypergraphError(f"vertex {v!r} is not in hyperedge {e!r}")
    if len(m) < 3:
        raise HypergraphError("reduction would leave fewer than two parties")
    return GhzHypergraph(g.vertices, tuple((i, mm - {v}) if i == e else (i, mm)
                                           for i, mm in g.hyperedges), g.origin)


# ---------------------------------------------------------------------------
# connectivity helpers
# ---------------------------------------------------------------------------


def _connects(edge_members: Sequence[frozenset[str]], terminals: Iterable[str]) -> bool:
    terminals = list(terminals)
    if len(terminals) <= 1:
        return True
    parent: dict[str, str] = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for members in edge_members:
        it = iter(members)
        root = find(next(it))
        for v in it:
            r = find(v)
            if r != root:
                parent[r] = root
    first = find(terminals[0])
    return all(find(t) == first for t in terminals[1:])


def connects(g: GhzHypergraph, terminals: Iterable[str]) -> bool:
    return _connects([m for _, m in g.hyperedges], terminals)


# ---------------------------------------------------------------------------
# max-flow / Steiner cuts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutResult:
    value: int
    witness: frozenset[str]
    pair: tuple[str, str]

    def to_dict(self) -> dict:
        return {"value": self.value, "witness": sorted(self.witness), "pair": list(self.pair)}


class _FlowNetwork:
    """Residual graph for the split-node hypergraph flow network.

    Each hyperedge instance becomes ``in -> out`` with capacity one; every
    member ``v`` gets uncapacitated arcs ``v -> in`` and ``out -> v``.
    """

    def __init__(self, g: GhzHypergraph):
        self.vertex_ids = sorted(g.vertices)
        self.edge_ids = sorted(g.ids)
        nv = len(self.vertex_ids)
        self.index = {v: i for i, v in enumerate(self.vertex_ids)}
        self.n = nv + 2 * len(self.edge_ids)
        self.adj: list[list[int]] = [[] for _ in range(self.n)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.unit_arc: dict[int, str] = {}
        big = len(self.edge_ids) + 1
        members = dict(g.hyperedges)
        for k, eid in enumerate(self.edge_ids):
            e_in, e_out = nv + 2 * k, nv + 2 * k + 1
            self.unit_arc[self._add(e_in, e_out, 1)] = eid
            for v in sorted(members[eid]):
                self._add(self.index[v], e_in, big)
                self._add(e_out, self.index[v], big)

    def _add(self, a: int, b: int, c: int) -> int:
        arc = len(self.to)
        self.to += [b, a]
        self.cap += [c, 0]
        self.adj[a].append(arc)
        self.adj[b].append(arc + 1)
        return arc

    def max_flow(self, s: str, t: str) -> tuple[int, frozenset[str]]:
        cap = list(self.cap)
        src, dst = self.index[s], self.index[t]
        flow = 0
        while True:
            prev = [-1] * self.n
            prev[src] = -2
            queue = deque([src])
            while queue and prev[dst] == -1:
                u = queue.popleft()
                for arc in self.adj[u]:
                    w = self.to[arc]
                    if cap[arc] > 0 and prev[w] == -1:
                        prev[w] = arc
                        queue.append(w)
            if prev[dst] == -1:
                break
            push, w = math.inf, dst
            while w != src:
                arc = prev[w]
                push = min(push, cap[arc])
                w = self.to[arc ^ 1]
            w = dst
            while w != src:
                arc = prev[w]
                cap[arc] -= push
                cap[arc ^ 1] += push
                w = self.to[arc ^ 1]
            flow += push
        reach = {src}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for arc in self.adj[u]:
                w = self.to[arc]
                if cap[arc] > 0 and w not in reach:
                    reach.add(w)
                    queue.append(w)
        witness = frozenset(eid for arc, eid in self.unit_arc.items()
                            if self.to[arc ^ 1] in reach and self.to[arc] not in reach)
        return int(flow), witness


def pair_cut(g: GhzHypergraph, u: str, v: str) -> CutResult:
    """Maximum number of hyperedge-disjoint ``u``-``v`` hyperpaths, with a minimum cut."""
    for x in (u, v):
        if x not in g.vertices:
            raise HypergraphError(f"vertex {x!r} not in hypergraph")
    if u == v:
        raise HypergraphError("terminals must differ")
    value, witness = _FlowNetwork(g).max_flow(u, v)
    return CutResult(value, witness, (u, v))


def min_steiner_cut(g: GhzHypergraph, s: Iterable[str]) -> CutResult:
    """Smallest set of hyperedges whose removal disconnects some pair of ``s``.

    Any such cut separates the first terminal (sorted order) from some other
    terminal, so ``|s| - 1`` max-flow computations suffice.
    """
    terminals = sorted(set(s))
    if len(terminals) < 2:
        raise HypergraphError("a Steiner cut needs at least two terminals")
    missing = [t for t in terminals if t not in g.vertices]
    if missing:
        raise HypergraphError(f"terminals {missing} not in hypergraph")
    flow = _FlowNetwork(g)
    best = None
    root = terminals[0]
    for t in terminals[1:]:
        value, witness = flow.max_flow(root, t)
        if best is None or value < best.value:
            best = CutResult(value, witness, (root, t))
    return best


# ---------------------------------------------------------------------------
# Steiner tree packing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteinerTree:
    edge_ids: tuple[str, ...]
    vertices: frozenset[str]

    def to_dict(self) -> dict:
        return {"hyperedges": list(self.edge_ids), "vertices": sorted(self.vertices)}


@dataclass(frozen=True)
class PackingResult:
    trees: tuple[SteinerTree, ...]
    count: int
    upper_certificate: int
    method: str
    lau_floor: int | None = None

    def to_dict(self) -> dict:
        return {"count": self.count, "method": self.method,
                "upper_certificate": self.upper_certificate, "lau_floor": self.lau_floor,
                "trees": [t.to_dict() for t in self.trees]}


def _tree(g: GhzHypergraph, ids: Iterable[str]) -> SteinerTree:
    ids = tuple(sorted(ids))
    members = dict(g.hyperedges)
    return SteinerTree(ids, frozenset().union(*(members[i] for i in ids)) if ids else frozenset())


def is_minimal_steiner_tree(g: GhzHypergraph, tree: SteinerTree, s: Iterable[str]) -> bool:
    """Spans ``s`` and loses that property when any hyperedge is removed."""
    s = list(s)
    members = dict(g.hyperedges)
    edges = [members[i] for i in tree.edge_ids]
    if not _connects(edges, s):
        return False
    return all(not _connects(edges[:k] + edges[k + 1:], s) for k in range(len(edges)))


def _greedy_tree(g: GhzHypergraph, terminals: Sequence[str]) -> list[str] | None:
    members = dict(g.hyperedges)
    order = sorted(members)
    incident: dict[str, list[str]] = {}
    for eid in order:
        for v in members[eid]:
            incident.setdefault(v, []).append(eid)
    root = terminals[0]
    parent_edge: dict[str, str | None] = {root: None}
    parent_vertex: dict[str, str] = {}
    queue = deque([root])
    used_edges: set[str] = set()
    while queue:
        u = queue.popleft()
        for eid in incident.get(u, []):
            if eid in used_edges:
                continue
            used_edges.add(eid)
            for w in sorted(members[eid]):
                if w not in parent_edge:
                    parent_edge[w] = eid
                    parent_vertex[w] = u
                    queue.append(w)
    if any(t not in parent_edge for t in terminals):
        return None
    chosen: set[str] = set()
    for t in terminals:
        w = t
        while parent_edge[w] is not None:
            chosen.add(parent_edge[w])
            w = parent_vertex[w]
    tree = sorted(chosen)
    for eid in reversed(list(tree)):
        rest = [x for x in tree if x != eid]
        if _connects([members[x] for x in rest], terminals):
            tree = rest
    return tree


def _lau_floor(g: GhzHypergraph, cut: int) -> int | None:
    return cut // LAU_FACTOR if g.is_graph else None


def _spanning_masks(g: GhzHypergraph, terminals: Sequence[str]) -> list[bool]:
    edges = [m for _, m in g.hyperedges]
    n = len(edges)
    return [_connects([edges[i] for i in range(n) if mask >> i & 1], terminals)
            for mask in range(1 << n)]


def _exact_packing(g: GhzHypergraph, terminals: Sequence[str], upper: int) -> list[list[str]]:
    ids = [i for i, _ in g.hyperedges]
    n = len(ids)
    spanning = _spanning_masks(g, terminals)
    minimal = [mask for mask in range(1, 1 << n) if spanning[mask]
               and all(not spanning[mask & ~(1 << i)] for i in range(n) if mask >> i & 1)]
    minimal.sort(key=lambda m: (bin(m).count("1"), m))
    smallest = bin(minimal[0]).count("1") if minimal else 1
    best: list[int] = []

    def search(avail: int, chosen: list[int], start: int):
        nonlocal best
        if len(chosen) > len(best):
            best = list(chosen)
            if len(best) >= upper:
                return True
        if len(chosen) + bin(avail).count("1") // smallest <= len(best):
            return False
        for k in range(start, len(minimal)):
            m = minimal[k]
            if m & avail == m:
                chosen.append(m)
                if search(avail & ~m, chosen, k + 1):
                    return True
                chosen.pop()
        return False

    search((1 << n) - 1, [], 0)
    return [[ids[i] for i in range(n) if m >> i & 1] for m in best]


def pack_steiner_trees(g: GhzHypergraph, s: Iterable[str], method: str = "greedy",
                       limit: int = EXACT_LIMIT) -> PackingResult:
    """Edge-disjoint Steiner trees spanning ``s``.

    ``exact`` searches all families of disjoint minimal trees (at most
    ``limit`` hyperedge instances). ``greedy`` repeatedly grows a tree
    breadth-first from the first terminal, prunes it to a minimal one and
    removes its hyperedges. The minimum Steiner cut is reported as an upper
    certificate; ``lau_floor`` (cut // 26) is only given for ordinary graphs.
    """
    terminals = sorted(set(s))
    cut = min_steiner_cut(g, terminals)
    lau = _lau_floor(g, cut.value)
    if cut.value == 0:
        return PackingResult((), 0, 0, method, lau)
    if method == "exact":
        if len(g.hyperedges) > limit:
            raise PackingLimitError(
                f"{len(g.hyperedges)} hyperedge instances exceed the exact limit of {limit}")
        trees = _exact_packing(g, terminals, cut.value)
    elif method == "greedy":
        trees = []
        work = g
        while True:
            t = _greedy_tree(work, terminals)
            if t is None:
                break
            trees.append(t)
            work = work.without(t)
    else:
        raise ValueError(f"unknown packing method {method!r}")
    packed = tuple(_tree(g, t) for t in trees)
    return PackingResult(packed, len(packed), cut.value, method, lau)


def brute_force_packing(g: GhzHypergraph, s: Iterable[str], limit: int = EXACT_LIMIT) -> int:
    """Maximum number of disjoint spanning hyperedge sets, by subset dynamic programming.

    Exponential (``3^n``); a test oracle only.
    """
    terminals = sorted(set(s))
    n = len(g.hyperedges)
    if n > limit:
        raise PackingLimitError(f"{n} hyperedge instances exceed the limit of {limit}")
    if n == 0:
        return 0
    spanning = _spanning_masks(g, terminals)
    best = [0] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        value = best[mask & ~low]
        # some spanning subset containing the lowest edge, or that edge unused
        sub = mask
        while sub:
            if sub & low and spanning[sub]:
                cand = 1 + best[mask & ~sub]
                if cand > value:
                    value = cand
            sub = (sub - 1) & mask
        best[mask] = value
    return best[(1 << n) - 1]


# ---------------------------------------------------------------------------
# aggregated repeater protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Merge:
    e1: str
    e2: str
    at: str
    result: str


@dataclass(frozen=True)
class Reduce:
    edge: str
    vertex: str


def tree_protocol(g: GhzHypergraph, tree: SteinerTree, family: Iterable[str]
                  ) -> tuple[list, GhzHypergraph]:
    """Merge/reduce steps that turn the GHZ states of ``tree`` into one GHZ state
    on exactly ``family``.

    Merges proceed breadth-first from the tree hyperedge with the smallest id;
    repeater vertices are reduced away at the end. Returns the steps and the
    final hypergraph (whose only edge is the family GHZ state).
    """
    family = frozenset(family)
    work = g.subgraph(tree.edge_ids)
    if not tree.edge_ids:
        raise HypergraphError("empty tree")
    steps: list = []
    current = tree.edge_ids[0]
    pending = list(tree.edge_ids[1:])
    while pending:
        cm = work.members(current)
        for eid in pending:
            shared = sorted(cm & work.members(eid))
            if shared:
                at = shared[0]
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", WastefulMergeWarning)
                    work = merge_rule(work, current, eid, at)
                new = f"({current}+{eid})"
                steps.append(Merge(current, eid, at, new))
                current = new
                pending.remove(eid)
                break
        else:
            raise HypergraphError("tree hyperedges are not connected")
    for v in sorted(work.members(current) - family):
        work = reduce_rule(work, current, v)
        steps.append(Reduce(current, v))
    if work.members(current) != family:
        raise HypergraphError("tree does not reduce to exactly the family")
    return steps, work


@dataclass(frozen=True)
class AggregatedRate:
    packing: PackingResult
    ghz_count: int
    hypergraph: GhzHypergraph
    family: ClientFamily

    def to_dict(self) -> dict:
        return {"family": self.family.id, "ghz_count": self.ghz_count,
                "packing": self.packing.to_dict()}


def aggregated_rate(net: BroadcastNetwork, family: ClientFamily,
                    copies: Mapping[str, int] | None = None, method: str = "auto"
                    ) -> AggregatedRate:
    """Qubit GHZ states among ``family`` per round of the aggregated protocol.

    ``method="auto"`` uses the exact packing up to the exact limit and greedy
    beyond it.
    """
    if len(family.members) < 2:
        raise HypergraphError("family needs at least two members")
    g = build_ghz_network(net, copies)
    if method == "auto":
        method = "exact" if len(g.hyperedges) <= EXACT_LIMIT else "greedy"
    packing = pack_steiner_trees(g, family.members, method)
    return AggregatedRate(packing, packing.count, g, family)
