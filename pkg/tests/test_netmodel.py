import json
import math

import pytest

from qbnet.entropy import ChannelSpec
from qbnet.netmodel import (BroadcastNetwork, ClientFamily, DanglingReferenceError, Hyperedge,
                            NetworkError, Partition, PartitionDomainError, PartitionLimitError,
                            SingletonFamilyWarning, crossing_edges, dump_network,
                            enumerate_partitions, export_dot, load_network, n_parts,
                            partition_from_dict, restricted_growth_strings, trivial_edges)

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147]


def all_set_partitions(items):
    """Recursive oracle: insert the first item into every block of each partition of the rest."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in all_set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


@pytest.fixture
def star():
    return BroadcastNetwork(("s", "A", "B", "C"), (Hyperedge("bc", "s", ("A", "B", "C")),),
                            (ClientFamily("ABC", {"A", "B", "C"}),))


def test_hyperedge_defaults_to_ideal_qubit_channel():
    e = Hyperedge("e", "t", ("x", "y"))
    assert e.channel.kind == "ideal_broadcast" and e.channel.num_heads == 2
    assert e.endpoints == ("t", "x", "y")


@pytest.mark.parametrize("kwargs", [
    dict(heads=()),
    dict(heads=("x", "x")),
    dict(heads=("t", "x")),
    dict(heads=("x",), avg_uses=-1),
    dict(heads=("x",), avg_uses=math.inf),
    dict(heads=("x",), channel=ChannelSpec.ideal(2)),
])
def test_hyperedge_validation(kwargs):
    with pytest.raises(NetworkError):
        Hyperedge("e", "t", **kwargs)


def test_network_rejects_dangling_and_duplicates():
    with pytest.raises(DanglingReferenceError):
        BroadcastNetwork(("a",), (Hyperedge("e", "a", ("b",)),))
    with pytest.raises(DanglingReferenceError):
        BroadcastNetwork(("a", "b"), (), (ClientFamily("F", {"a", "z"}),))
    with pytest.raises(NetworkError):
        BroadcastNetwork(("a", "a"))
    with pytest.raises(NetworkError):
        BroadcastNetwork(("a", "b"), (Hyperedge("e", "a", ("b",)), Hyperedge("e", "b", ("a",))))


def test_singleton_family_warns_but_is_accepted():
    with pytest.warns(SingletonFamilyWarning):
        net = BroadcastNetwork(("a", "b"), (), (ClientFamily("F", {"a"}),))
    assert n_parts(net.family("F"), Partition.discrete(net.vertices)) == 0


def test_overlapping_families_allowed():
    net = BroadcastNetwork(("a", "b", "c"), (),
                           (ClientFamily("F", {"a", "b"}), ClientFamily("G", {"b", "c"})))
    assert len(net.families) == 2


def test_json_roundtrip(star):
    again = load_network(dump_network(star))
    assert again.to_dict() == star.to_dict()
    assert json.loads(dump_network(again)) == json.loads(dump_network(star))


def test_load_network_errors():
    with pytest.raises(NetworkError):
        load_network("{not json")
    with pytest.raises(NetworkError):
        load_network({"edges": []})
    with pytest.raises(NetworkError):
        load_network({"vertices": ["a", "b"], "edges": [{"id": "e", "tail": "a"}]})
    with pytest.raises(NetworkError):
        load_network({"vertices": ["a", "b"],
                      "edges": [{"id": "e", "tail": "a", "heads": ["b"],
                                 "channel": {"kind": "teleporter"}}]})


def test_noisy_channel_loaded_from_document():
    net = load_network({"vertices": ["a", "b", "c"], "edges": [
        {"id": "e", "tail": "a", "heads": ["b", "c"],
         "channel": {"kind": "dephasing_broadcast", "dim": 2, "params": {"p": 0.2}},
         "avg_uses": 2.5}]})
    e = net.edge("e")
    assert (e.channel.kind, e.channel.p, e.avg_uses) == ("dephasing_broadcast", 0.2, 2.5)


def test_partition_basics():
    p = Partition.from_labels(["a", "b", "c", "d"], [0, 1, 0, 2])
    assert p.k == 3
    assert p.labels(["a", "b", "c", "d"]) == (0, 1, 0, 2)
    assert p.labels(["d", "a", "b", "c"]) == (0, 1, 2, 1)
    assert p == Partition([{"b"}, {"d"}, {"a", "c"}])
    assert hash(p) == hash(Partition([{"d"}, {"c", "a"}, {"b"}]))
    assert Partition.discrete("abcd").refines(p)
    assert p.refines(Partition.single("abcd"))
    assert not p.refines(Partition.discrete("abcd"))


def test_partition_rejects_overlap_and_empty_blocks():
    with pytest.raises(ValueError):
        Partition([{"a", "b"}, {"b"}])
    with pytest.raises(ValueError):
        Partition([{"a"}, set()])


def test_partition_dict_roundtrip():
    p = Partition([{"a", "c"}, {"b"}])
    assert partition_from_dict(p.to_dict()) == p


def test_crossing_and_trivial_edges():
    net = BroadcastNetwork(("a", "b", "c"),
                           (Hyperedge("ab", "a", ("b",)), Hyperedge("bc", "b", ("c",))))
    p = Partition([{"a", "b"}, {"c"}])
    assert [e.id for e in crossing_edges(net, p)] == ["bc"]
    assert [e.id for e in trivial_edges(net, p)] == ["ab"]
    with pytest.raises(PartitionDomainError):
        crossing_edges(net, Partition([{"a", "b"}]))


@pytest.mark.parametrize("labels,expected", [
    ((0, 1, 2, 0), 3),      # A | B | C, s with A
    ((0, 0, 0, 0), 0),      # single class
    ((0, 0, 1, 1), 2),      # {A,B} {C,s}
    ((0, 0, 0, 1), 0),      # family inside one class
    ((0, 1, 1, 1), 2),      # {A} {B,C,s}
])
def test_n_parts_examples(star, labels, expected):
    # labels are listed for vertices A, B, C, s
    p = Partition.from_labels(["A", "B", "C", "s"], labels)
    assert n_parts(star.family("ABC"), p) == expected


def test_n_parts_monotone_under_refinement():
    fam = {"a", "b", "c"}
    parts = [Partition(b) for b in all_set_partitions(list("abcde"))]
    for coarse in parts:
        n = n_parts(fam, coarse)
        if n < 2:
            continue
        for fine in parts:
            if fine.refines(coarse):
                assert n_parts(fam, fine) >= n


@pytest.mark.parametrize("n", range(1, 9))
def test_rgs_count_matches_bell_numbers(n):
    rgs = list(restricted_growth_strings(n))
    assert len(rgs) == BELL[n]
    assert rgs == sorted(rgs)
    assert len(set(rgs)) == len(rgs)


def test_partition_enumeration_matches_oracle():
    verts = list("abcde")
    ours = set(enumerate_partitions(verts))
    theirs = {Partition(b) for b in all_set_partitions(verts)}
    assert ours == theirs


def test_enumeration_max_classes():
    assert len(list(enumerate_partitions(list("abcd"), max_classes=2))) == 8


def test_enumeration_limit():
    with pytest.raises(PartitionLimitError):
        next(enumerate_partitions([f"v{i}" for i in range(13)]))


def test_dot_export(star):
    dot = export_dot(star, Partition([{"s", "A"}, {"B"}, {"C"}]))
    assert dot.startswith("digraph")
    assert '"he_bc"' in dot or "he_bc" in dot
    assert dot.count("subgraph cluster_P") == 3
    assert "family_ABC" in dot
    assert dot.rstrip().endswith("}")
