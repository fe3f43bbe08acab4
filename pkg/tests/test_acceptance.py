"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL summary that is printed in the pytest
terminal summary. Time limits are asserted alongside the numerical checks.
"""
import itertools
import json
import math
import subprocess
import sys
import time
from importlib import resources

import numpy as np
import pytest

from qbnet import corpus
from qbnet.bounds import ChannelWeightTable, corollary_bound, theorem1_rhs
from qbnet.entropy import ChannelSpec, channel_esq, ghz_state, multipartite_cmi, product
from qbnet.entropy import squashed_ent_upper
from qbnet.lower import (EXACT_LIMIT, GhzHypergraph, aggregated_rate, brute_force_packing,
                         min_steiner_cut, pack_steiner_trees, pair_cut)
from qbnet.netmodel import enumerate_partitions, load_network
from qbnet.simverify import (QUBIT_CAP, ghz_register, register_fidelity, simulate_merge,
                             simulate_reduce, simulate_tree_extraction)

from conftest import ACCEPTANCE_LINES
from oracles import brute_cut, brute_disjoint_paths

# exhaustive-oracle value for the star fixture, fixed before the bound code existed:
# an ideal qubit broadcast to three clients, best cut {s,A,B}|{C} gives 2 / 2
STAR_FIXTURE = 1.0
VIOLATION_TOL = 1e-8


class Criterion:
    """Context manager timing one criterion and recording its summary line."""

    def __init__(self, number, limit):
        self.number, self.limit = number, limit
        self.detail = ""

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        late = elapsed >= self.limit
        ok = exc_type is None and not late
        why = "" if exc_type is None else f" ({exc_type.__name__})"
        if late and exc_type is None:
            why = f" (over {self.limit:g} s limit)"
        ACCEPTANCE_LINES.append(f"criterion {self.number:2d} {'PASS' if ok else 'FAIL'} "
                                f"{elapsed:7.2f}s  {self.detail}{why}")
        if late and exc_type is None:
            pytest.fail(f"criterion {self.number} took {elapsed:.1f} s, limit {self.limit} s")
        return False


def entropy_oracle(rho, dims, keep):
    """Von Neumann entropy (bits) of the marginal on ``keep``, via einsum partial trace."""
    n = len(dims)
    t = rho.reshape(tuple(dims) * 2)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = [letters[n + i] if i in keep else letters[i] for i in range(n)]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    dk = int(np.prod([dims[i] for i in keep]))
    red = np.einsum("".join(row) + "".join(col) + "->" + out, t).reshape(dk, dk)
    ev = np.linalg.eigvalsh(red)
    ev = ev[ev > 1e-12]
    return float(-(ev * np.log2(ev)).sum())


def builtin(name):
    return load_network(resources.files("qbnet").joinpath("data", f"{name}.json").read_text())


def test_criterion_01_ghz_value():
    with Criterion(1, 5.0) as c:
        worst = 0.0
        for m, d in itertools.product((2, 3, 4), (2, 3)):
            st = ghz_state(m, d)
            val = squashed_ent_upper(st, list(st.labeling.labels))
            worst = max(worst, abs(val - m * math.log2(d)))
        c.detail = f"max |E - m log d| = {worst:.1e} over 6 (m,d) pairs"
        assert worst <= 1e-9


def test_criterion_02_reduction():
    rng = np.random.default_rng(1002)
    with Criterion(2, 10.0) as c:
        worst = 0.0
        for _ in range(50):
            a = corpus.random_density(rng, [2], ["A"])
            bc = corpus.random_density(rng, [2, 2], ["B", "C"])
            lhs = multipartite_cmi(product(a, bc), ["A", "B", "C"])
            rho = bc.matrix
            oracle = (entropy_oracle(rho, [2, 2], [0]) + entropy_oracle(rho, [2, 2], [1])
                      - entropy_oracle(rho, [2, 2], [0, 1]))
            worst = max(worst, abs(lhs - oracle),
                        abs(lhs - multipartite_cmi(bc, ["B", "C"])))
        c.detail = f"50 product states, max deviation {worst:.1e}"
        assert worst <= 1e-8


def test_criterion_03_grouping():
    rng = np.random.default_rng(1003)
    with Criterion(3, 30.0) as c:
        worst = -math.inf
        for _ in range(100):
            # A, B, C qubits plus a qubit extension E with random correlations
            st = corpus.random_density(rng, [2, 2, 2, 2], ["A", "B", "C", "E"],
                                       rank=int(rng.integers(1, 17)))
            v = (multipartite_cmi(st, [["A", "B"], "C"], "E")
                 - multipartite_cmi(st, ["A", "B", "C"], "E"))
            worst = max(worst, v)
        c.detail = f"100 states, worst violation {worst:.1e}"
        assert worst <= VIOLATION_TOL


def test_criterion_04_split_inequality():
    rng = np.random.default_rng(1004)
    with Criterion(4, 60.0) as c:
        worst = -math.inf
        for _ in range(100):
            st = corpus.random_pure_state(rng, [2] * 5, ["A", "A'", "B", "B'", "E"])
            lhs = multipartite_cmi(st, [["A", "A'"], ["B", "B'"]], "E")
            rhs = (multipartite_cmi(st, ["A", "B"], ["E", "A'", "B'"])
                   + multipartite_cmi(st, ["A'", "B'"], "E"))
            worst = max(worst, rhs - lhs)
        c.detail = f"100 pure states, worst violation {worst:.1e}"
        assert worst <= VIOLATION_TOL


def test_criterion_05_cmi_chain():
    rng = np.random.default_rng(1005)
    with Criterion(5, 60.0) as c:
        worst = -math.inf
        for _ in range(100):
            st = corpus.random_pure_state(rng, [2] * 6, ["S", "P1", "P2", "Q1", "E1", "E2"])
            lhs = multipartite_cmi(st, ["S", ["P1", "Q1"], "P2"], ["E1", "E2"])
            rhs = (multipartite_cmi(st, [["S", "Q1", "E2"], "P1", "P2"], "E1")
                   + multipartite_cmi(st, [["S", "P1", "P2", "E1"], "Q1"], "E2"))
            worst = max(worst, lhs - rhs)
        c.detail = f"100 pure states, worst violation {worst:.1e}"
        assert worst <= VIOLATION_TOL


def test_criterion_06_channel_weight():
    with Criterion(6, 30.0) as c:
        spec = ChannelSpec.ideal(2, 2)
        discrete = channel_esq(spec, (0, 1, 2)).value
        grouped = channel_esq(spec, (0, 1, 1)).value
        c.detail = f"discrete {discrete:.9f}, heads grouped {grouped:.9f}"
        assert discrete == pytest.approx(3.0, abs=1e-6)
        assert grouped == pytest.approx(2.0, abs=1e-6)


def test_criterion_07_single_broadcast_bound():
    with Criterion(7, 60.0) as c:
        star = builtin("star")
        cb = corollary_bound(star, star.family("ABC"), ChannelWeightTable(star))
        chain = builtin("chain")
        cc = corollary_bound(chain, chain.family("AB"), ChannelWeightTable(chain))
        c.detail = f"star {cb.value}, chain {cc.value}"
        assert math.isfinite(cb.value)
        assert cb.value == STAR_FIXTURE
        assert cc.value == pytest.approx(1.0, abs=1e-12)


def test_criterion_08_min_cut():
    rng = np.random.default_rng(1008)
    with Criterion(8, 120.0) as c:
        for _ in range(200):
            g = corpus.random_hypergraph(rng, int(rng.integers(3, 7)), int(rng.integers(1, 11)))
            terms = sorted(g.vertices)[:int(rng.integers(2, 4))]
            assert min_steiner_cut(g, terms).value == brute_cut(g, terms)
        pairs = 0
        for _ in range(40):
            g = corpus.random_hypergraph(rng, int(rng.integers(2, 6)), int(rng.integers(1, 9)),
                                         graph=True)
            edges = [m for _, m in g.hyperedges]
            for u, v in itertools.combinations(sorted(g.vertices), 2):
                assert pair_cut(g, u, v).value == brute_disjoint_paths(edges, u, v)
                pairs += 1
        c.detail = f"200 hypergraph cuts and {pairs} graph pairs match brute force"


def packing_corpus():
    rng = np.random.default_rng(1009)
    out = []
    for _ in range(100):
        g = corpus.random_hypergraph(rng, int(rng.integers(3, 7)), int(rng.integers(1, 13)))
        out.append((g, sorted(g.vertices)[:int(rng.integers(2, 4))]))
    return out


def test_criterion_09_packing():
    with Criterion(9, 120.0) as c:
        for g, terms in packing_corpus():
            assert len(g.hyperedges) <= EXACT_LIMIT
            greedy = pack_steiner_trees(g, terms, "greedy").count
            exact = pack_steiner_trees(g, terms, "exact").count
            assert greedy <= exact == brute_force_packing(g, terms)
            assert exact <= min_steiner_cut(g, terms).value
        tri = GhzHypergraph(frozenset("ABC"), (("ab", frozenset("AB")), ("bc", frozenset("BC")),
                                               ("ca", frozenset("CA"))))
        tri_count = pack_steiner_trees(tri, "ABC", "exact").count
        c.detail = f"100 instances sound, triangle packs {tri_count}"
        assert tri_count == 1


def test_criterion_10_protocol_fidelity():
    with Criterion(10, 120.0) as c:
        worst = 0.0
        for n, m in itertools.product((2, 3, 4), repeat=2):
            for out in (0, 1):
                ts = ghz_register([f"a{i}" for i in range(n)],
                                  [f"X{i}" for i in range(n - 1)] + ["V"], "r1")
                ts = ghz_register([f"b{i}" for i in range(m)],
                                  ["V"] + [f"Y{i}" for i in range(m - 1)], "r2", ts)
                ts, _ = simulate_merge(ts, f"a{n - 1}", "b0", out)
                worst = max(worst, abs(register_fidelity(ts, "(r1+r2)") - 1))
        for n in (3, 4):
            for q, out in itertools.product(range(n), (0, 1)):
                ts = ghz_register([f"q{i}" for i in range(n)], [f"V{i}" for i in range(n)], "r")
                ts, _ = simulate_reduce(ts, f"q{q}", out)
                worst = max(worst, abs(register_fidelity(ts, "r") - 1))
        assert worst <= 1e-10
        trees = 0
        tree_worst = 0.0
        rng = np.random.default_rng(1010)
        for g, terms in packing_corpus():
            seen = set()
            for method in ("greedy", "exact"):
                for tree in pack_steiner_trees(g, terms, method).trees:
                    qubits = sum(len(g.members(i)) for i in tree.edge_ids)
                    if tree.edge_ids in seen or qubits > QUBIT_CAP:
                        continue
                    seen.add(tree.edge_ids)
                    rep = simulate_tree_extraction(g, terms, tree, rng=rng)
                    tree_worst = max(tree_worst, abs(rep.fidelity - 1))
                    trees += 1
        c.detail = (f"merge/reduce worst {worst:.1e}; {trees} trees, "
                    f"worst {tree_worst:.1e}")
        assert trees > 0
        assert tree_worst <= 1e-9


def ideal_rhs_oracle(net, p):
    """An ideal qubit broadcast contributes the number of classes its endpoints touch."""
    total = 0.0
    for e in net.edges:
        touched = len({p.class_of[v] for v in e.endpoints})
        if touched >= 2:
            total += e.avg_uses * touched
    return total


def test_criterion_11_cross_module_soundness():
    rng = np.random.default_rng(1011)
    with Criterion(11, 300.0) as c:
        violations = 0
        slack = math.inf
        for _ in range(50):
            n_vertices = int(rng.integers(3, 9))
            net = corpus.random_ideal_network(rng, n_vertices, int(rng.integers(1, 7)))
            fam = net.family("S")
            rate = aggregated_rate(net, fam).ghz_count
            w = ChannelWeightTable(net)
            best = math.inf
            for p in enumerate_partitions(list(net.vertices)):
                if len({p.class_of[v] for v in fam.members}) != len(fam.members):
                    continue
                rhs = theorem1_rhs(net, p, w)
                assert rhs == pytest.approx(ideal_rhs_oracle(net, p), abs=1e-9)
                best = min(best, rhs)
            lhs = rate * len(fam.members)
            violations += lhs > best + 1e-9
            slack = min(slack, best - lhs)
        c.detail = f"50 networks, {violations} violations, min slack {slack:g}"
        assert violations == 0


CLI_RUNS = [
    ["verify", "--seed", "5"],
    ["bound-upper", "--network", "three_families", "--all-families", "--seed", "5"],
    ["bound-lower", "--network", "three_families", "--all-families", "--seed", "5"],
    ["simulate", "--network", "three_families", "--family", "S2", "--seed", "5"],
]


def test_criterion_12_determinism(tmp_path):
    with Criterion(12, 300.0) as c:
        for k, argv in enumerate(CLI_RUNS):
            blobs = []
            for rep in range(2):
                target = tmp_path / f"r{k}_{rep}.json"
                subprocess.run([sys.executable, "-m", "qbnet.cli", *argv,
                                "--report", str(target)], check=True)
                blobs.append(target.read_bytes())
            assert blobs[0] == blobs[1], argv[0]
            assert json.loads(blobs[0])["seed"] == 5
        c.detail = f"{len(CLI_RUNS)} commands, byte-identical reports"
