"""Broadcast networks as directed hypergraphs, partitions and client families."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .entropy import ChannelSpec

EXHAUSTIVE_LIMIT = 12


class NetworkError(ValueError):
    """A network document or object violates the schema."""


class DanglingReferenceError(NetworkError):
    pass


class PartitionDomainError(ValueError):
    """A partition does not cover the vertices it is applied to."""


class PartitionLimitError(ValueError):
    pass


class SingletonFamilyWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Hyperedge:
    id: str
    tail: str
    heads: tuple[str, ...]
    channel: ChannelSpec | None = None
    avg_uses: float = 1.0

    def __post_init__(self):
        heads = tuple(self.heads)
        object.__setattr__(self, "heads", heads)
        if not heads:
            raise NetworkError(f"edge {self.id!r} has no heads")
        if len(set(heads)) != len(heads):
            raise NetworkError(f"edge {self.id!r} lists a head twice")
        if self.tail in heads:
            raise NetworkError(
                f"edge {self.id!r}: tail is also a head; model colocated outputs "
                "by putting a separate vertex in the tail's class")
        uses = float(self.avg_uses)
        if not math.isfinite(uses) or uses < 0:
            raise NetworkError(f"edge {self.id!r}: avg_uses must be a non-negative number")
        object.__setattr__(self, "avg_uses", uses)
        if self.channel is None:
            object.__setattr__(self, "channel", ChannelSpec.ideal(len(heads)))
        elif self.channel.num_heads != len(heads):
            raise NetworkError(f"edge {self.id!r}: channel has {self.channel.num_heads} heads, "
                               f"edge has {len(heads)}")

    @property
    def endpoints(self) -> tuple[str, ...]:
        return (self.tail,) + self.heads

    def to_dict(self) -> dict:
        return {"id": self.id, "tail": self.tail, "heads": list(self.heads),
                "channel": self.channel.to_dict(), "avg_uses": self.avg_uses}


@dataclass(frozen=True)
class ClientFamily:
    id: str
    members: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise NetworkError(f"family {self.id!r} is empty")

    def to_dict(self) -> dict:
        return {"id": self.id, "members": sorted(self.members)}


@dataclass(frozen=True, eq=False)
class BroadcastNetwork:
    vertices: tuple[str, ...]
    edges: tuple[Hyperedge, ...] = ()
    families: tuple[ClientFamily, ...] = ()

    def __post_init__(self):
        verts = tuple(self.vertices)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "families", tuple(self.families))
        if len(set(verts)) != len(verts):
            raise NetworkError("duplicate vertex ids")
        known = set(verts)
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate edge ids")
        for e in self.edges:
            missing = [v for v in e.endpoints if v not in known]
            if missing:
                raise DanglingReferenceError(f"edge {e.id!r} references undeclared {missing}")
        fids = [f.id for f in self.families]
        if len(set(fids)) != len(fids):
            raise NetworkError("duplicate family ids")
        for f in self.families:
            missing = sorted(f.members - known)
            if missing:
                raise DanglingReferenceError(f"family {f.id!r} references undeclared {missing}")
            if len(f.members) == 1:
                warnings.warn(f"family {f.id!r} has a single member and never constrains a bound",
                              SingletonFamilyWarning, stacklevel=3)

    def edge(self, edge_id: str) -> Hyperedge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    def family(self, family_id: str) -> ClientFamily:
        for f in self.families:
            if f.id == family_id:
                return f
        raise KeyError(family_id)

    def without_edge(self, edge_id: str) -> "BroadcastNetwork":
        self.edge(edge_id)
        return BroadcastNetwork(self.vertices, [e for e in self.edges if e.id != edge_id],
                                self.families)

    def to_dict(self) -> dict:
        return {"vertices": list(self.vertices),
                "edges": [e.to_dict() for e in self.edges],
                "families": [f.to_dict() for f in self.families]}


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _require(doc: Mapping, key: str, where: str):
    if key not in doc:
        raise NetworkError(f"{where}: missing key {key!r}")
    return doc[key]


def load_network(document: str | bytes | Mapping) -> BroadcastNetwork:
    """Parse and validate a network document (JSON text or an already-parsed mapping)."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise NetworkError(f"parse error: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise NetworkError("network document must be an object")
    vertices = [str(v) for v in _require(doc, "vertices", "network")]
    edges = []
    for i, raw in enumerate(doc.get("edges", [])):
        where = f"edge #{i}"
        heads = [str(h) for h in _require(raw, "heads", where)]
        try:
            channel = ChannelSpec.from_dict(raw.get("channel") or {}, len(heads)) if heads else None
        except (ValueError, KeyError, TypeError) as exc:
            raise NetworkError(f"{where}: bad channel: {exc}") from exc
        edges.append(Hyperedge(str(_require(raw, "id", where)), str(_require(raw, "tail", where)),
                               tuple(heads), channel, raw.get("avg_uses", 1.0)))
    families = [ClientFamily(str(_require(f, "id", "family")),
                             frozenset(str(m) for m in _require(f, "members", "family")))
                for f in doc.get("families", [])]
    return BroadcastNetwork(tuple(vertices), tuple(edges), tuple(families))


def load_network_file(path: str | Path) -> BroadcastNetwork:
    return load_network(Path(path).read_text())


def dump_network(net: BroadcastNetwork) -> str:
    return json.dumps(net.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Partition:
    """A division of a vertex set into non-empty, pairwise disjoint classes.

    Classes keep the order in which they were given; equality ignores order.
    """

    blocks: tuple[frozenset[str], ...]
    _class_of: dict = field(init=False, repr=False)

    def __post_init__(self):
        blocks = tuple(frozenset(b) for b in self.blocks)
        if any(not b for b in blocks):
            raise PartitionDomainError("partition classes must be non-empty")
        class_of = {}
        for i, b in enumerate(blocks):
            for v in b:
                if v in class_of:
                    raise PartitionDomainError(f"vertex {v!r} appears in two classes")
                class_of[v] = i
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "_class_of", class_of)

    @classmethod
    def from_labels(cls, vertices: Sequence[str], labels: Sequence[int]) -> "Partition":
        if len(vertices) != len(labels):
            raise PartitionDomainError("one label per vertex required")
        order: dict[int, list[str]] = {}
        for v, lbl in zip(vertices, labels):
            order.setdefault(lbl, []).append(v)
        return cls(tuple(frozenset(vs) for vs in order.values()))

    @classmethod
    def from_mapping(cls, class_of: Mapping[str, object]) -> "Partition":
        return cls.from_labels(list(class_of), list(class_of.values()))

    @classmethod
    def single(cls, vertices: Iterable[str]) -> "Partition":
        return cls((frozenset(vertices),))

    @classmethod
    def discrete(cls, vertices: Iterable[str]) -> "Partition":
        return cls(tuple(frozenset([v]) for v in vertices))

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def vertices(self) -> frozenset[str]:
        return frozenset(self._class_of)

    @property
    def class_of(self) -> Mapping[str, int]:
        return self._class_of

    def labels(self, vertices: Sequence[str]) -> tuple[int, ...]:
        """Restricted-growth labels of ``vertices`` (canonical signature)."""
        seen: dict[int, int] = {}
        try:
            return tuple(seen.setdefault(self._class_of[v], len(seen)) for v in vertices)
        except KeyError as exc:
            raise PartitionDomainError(f"vertex {exc.args[0]!r} not covered by partition") from None

    def refines(self, other: "Partition") -> bool:
        """True if every class of ``self`` lies inside one class of ``other``."""
        return all(len({other.class_of[v] for v in b}) == 1 for b in self.blocks)

    def sorted_blocks(self, order: Sequence[str] | None = None) -> list[list[str]]:
        """Classes as lists, ordered by first appearance in ``order``."""
        if order is None:
            order = sorted(self._class_of)
        rank = {v: i for i, v in enumerate(order)}
        blocks = [sorted(b, key=lambda v: rank.get(v, len(rank))) for b in self.blocks]
        return sorted(blocks, key=lambda b: rank.get(b[0], len(rank)))

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return set(self.blocks) == set(other.blocks)

    def __hash__(self):
        return hash(frozenset(self.blocks))

    def __repr__(self):
        return "Partition(" + " | ".join(",".join(sorted(b)) for b in self.blocks) + ")"

    def to_dict(self, order: Sequence[str] | None = None) -> dict:
        return {"classes": self.sorted_blocks(order)}


def partition_from_dict(doc: Mapping) -> Partition:
    return Partition(tuple(frozenset(c) for c in doc["classes"]))


def _check_domain(net: BroadcastNetwork, p: Partition) -> None:
    if p.vertices != frozenset(net.vertices):
        raise PartitionDomainError("partition does not match the network's vertex set")


def crossing_edges(net: BroadcastNetwork, p: Partition) -> tuple[Hyperedge, ...]:
    """Edges whose endpoints touch at least two classes (the non-trivial edges)."""
    _check_domain(net, p)
    cls = p.class_of
    return tuple(e for e in net.edges if len({cls[v] for v in e.endpoints}) >= 2)


def trivial_edges(net: BroadcastNetwork, p: Partition) -> tuple[Hyperedge, ...]:
    _check_domain(net, p)
    cls = p.class_of
    return tuple(e for e in net.edges if len({cls[v] for v in e.endpoints}) < 2)


def n_parts(family: ClientFamily | Iterable[str], p: Partition) -> int:
    """Number of classes meeting the family, or 0 when that number is below 2."""
    members = family.members if isinstance(family, ClientFamily) else frozenset(family)
    missing = members - p.vertices
    if missing:
        raise PartitionDomainError(f"family members {sorted(missing)} outside partition")
    count = len({p.class_of[v] for v in members})
    return count if count >= 2 else 0


def restricted_growth_strings(n: int, max_classes: int | None = None) -> Iterator[tuple[int, ...]]:
    """All restricted growth strings of length ``n`` in lexicographic order."""
    if n == 0:
        yield ()
        return
    cap = n if max_classes is None else max_classes
    if cap < 1:
        return
    a = [0] * n

    def rec(i: int, used: int):
        if i == n:
            yield tuple(a)
            return
        for c in range(min(used + 1, cap)):
            a[i] = c
            yield from rec(i + 1, max(used, c + 1))

    yield from rec(1, 1)


def enumerate_partitions(vertices: Sequence[str], max_classes: int | None = None,
                         limit: int = EXHAUSTIVE_LIMIT) -> Iterator[Partition]:
    """Every set partition of ``vertices`` exactly once, in restricted-growth order."""
    vertices = list(vertices)
    if len(vertices) > limit:
        raise PartitionLimitError(
            f"{len(vertices)} vertices exceed the exhaustive limit of {limit}; "
            "use the local-search strategy instead")
    for labels in restricted_growth_strings(len(vertices), max_classes):
        yield Partition.from_labels(vertices, labels)


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------


def _q(name: str) -> str:
    return '"' + str(name).replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(net: BroadcastNetwork, p: Partition | None = None) -> str:
    """Graphviz rendering: hyperedges become star nodes ``he_<id>``; partition
    classes become clusters and client families become labelled subgraphs."""
    lines = ["digraph broadcast_network {", "  compound=true;", "  node [shape=circle];"]
    if p is not None:
        _check_domain(net, p)
        for i, block in enumerate(p.sorted_blocks(net.vertices)):
            lines.append(f"  subgraph cluster_P{i + 1} {{")
            lines.append(f'    label="P{i + 1}"; style=dashed;')
            for v in block:
                lines.append(f"    {_q(v)};")
            lines.append("  }")
    else:
        for v in net.vertices:
            lines.append(f"  {_q(v)};")
    for f in net.families:
        lines.append(f"  subgraph {_q('family_' + f.id)} {{")
        lines.append(f"    label={_q(f.id)};")
        members = [v for v in net.vertices if v in f.members]
        lines.append("    " + " ".join(f"{_q(v)};" for v in members))
        lines.append("  }")
    for e in net.edges:
        star = _q("he_" + e.id)
        lines.append(f"  {star} [shape=point, xlabel={_q(e.id)}];")
        lines.append(f"  {_q(e.tail)} -> {star} [arrowhead=none];")
        for h in e.heads:
            lines.append(f"  {star} -> {_q(h)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
