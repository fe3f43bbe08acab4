"""Randomized invariant suites run by ``qbnet verify``.

Every check draws its instances from its own named stream, so the result of
one check does not depend on which other checks ran.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import corpus
from .entropy import (ghz_state, multipartite_cmi, product, squashed_ent_estimate,
                      squashed_ent_upper, SearchConfig)
from .lower import (brute_force_packing, min_steiner_cut, pack_steiner_trees,
                    is_minimal_steiner_tree, connects)
from .rng import stream
from .simverify import (QUBIT_CAP, ghz_register, register_fidelity, simulate_merge,
                        simulate_reduce, simulate_tree_extraction)

TOL = 1e-8


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: int
    total: int
    worst: float

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "total": self.total,
                "ok": self.ok, "worst": round(self.worst, 12)}


def _run(name: str, seed: int, count: int, trial: Callable[[np.random.Generator], float]
         ) -> CheckResult:
    """``trial`` returns a violation amount; positive beyond ``TOL`` fails."""
    rng = stream(seed, name)
    worst = -math.inf
    passed = 0
    for _ in range(count):
        v = trial(rng)
        worst = max(worst, v)
        passed += v <= TOL
    return CheckResult(name, passed, count, worst if count else 0.0)


def _ghz_value(rng) -> float:
    worst = 0.0
    for m in (2, 3, 4):
        for d in (2, 3):
            st = ghz_state(m, d)
            worst = max(worst, abs(squashed_ent_upper(st, list(st.labeling.labels))
                                   - m * math.log2(d)))
    return worst


def _reduction(rng) -> float:
    a = corpus.random_density(rng, [2], ["A"])
    bc = corpus.random_density(rng, [2, 2], ["B", "C"])
    st = product(a, bc)
    return abs(multipartite_cmi(st, ["A", "B", "C"]) - multipartite_cmi(bc, ["B", "C"]))


def _grouping(rng) -> float:
    st = corpus.random_density(rng, [2, 2, 2, 2], ["A", "B", "C", "E"],
                               rank=int(rng.integers(1, 17)))
    return (multipartite_cmi(st, [["A", "B"], "C"], "E")
            - multipartite_cmi(st, ["A", "B", "C"], "E"))


def _split_inequality(rng) -> float:
    st = corpus.random_pure_state(rng, [2] * 5, ["A", "A'", "B", "B'", "E"])
    lhs = multipartite_cmi(st, [["A", "A'"], ["B", "B'"]], "E")
    rhs = (multipartite_cmi(st, ["A", "B"], ["E", "A'", "B'"])
           + multipartite_cmi(st, ["A'", "B'"], "E"))
    return rhs - lhs


def _chain(rng) -> float:
    st = corpus.random_pure_state(rng, [2] * 6, ["S", "P1", "P2", "Q1", "E1", "E2"])
    lhs = multipartite_cmi(st, ["S", ["P1", "Q1"], "P2"], ["E1", "E2"])
    rhs = (multipartite_cmi(st, [["S", "Q1", "E2"], "P1", "P2"], "E1")
           + multipartite_cmi(st, [["S", "P1", "P2", "E1"], "Q1"], "E2"))
    return lhs - rhs


def _basis_invariance(rng) -> float:
    st = corpus.random_density(rng, [2, 2, 2], ["A", "B", "C"])
    u = corpus.random_unitary(rng, 2)
    full = np.kron(np.kron(u, np.eye(2)), np.eye(2))
    rot = type(st)(st.labeling, full @ st.matrix @ full.conj().T)
    return abs(multipartite_cmi(st, ["A", "B", "C"]) - multipartite_cmi(rot, ["A", "B", "C"]))


def _estimate_below_upper(rng) -> float:
    st = corpus.random_density(rng, [2, 2], ["A", "B"], rank=2)
    cfg = SearchConfig(restarts=2, iterations=20, seed=int(rng.integers(2**31)))
    est = squashed_ent_estimate(st, ["A", "B"], cfg).value
    return est - squashed_ent_upper(st, ["A", "B"])


def entropic_suite(seed: int, scale: int = 1) -> list[CheckResult]:
    return [
        _run("ghz-value", seed, 1, _ghz_value),
        _run("reduction-property", seed, 10 * scale, _reduction),
        _run("grouping-monotonicity", seed, 10 * scale, _grouping),
        _run("split-inequality", seed, 10 * scale, _split_inequality),
        _run("cmi-chain", seed, 10 * scale, _chain),
        _run("basis-invariance", seed, 10 * scale, _basis_invariance),
        _run("estimate-below-upper", seed, 3 * scale, _estimate_below_upper),
    ]


def _merge_branches(rng) -> float:
    worst = 0.0
    for n in (2, 3, 4):
        for m in (2, 3, 4):
            for out in (0, 1):
                ts = ghz_register([f"a{i}" for i in range(n)], ["X"] * (n - 1) + ["V"], "r1")
                ts = ghz_register([f"b{i}" for i in range(m)], ["V"] + ["Y"] * (m - 1), "r2", ts)
                ts, rec = simulate_merge(ts, f"a{n - 1}", "b0", out)
                worst = max(worst, abs(register_fidelity(ts, "(r1+r2)") - 1),
                            abs(rec.probability - 0.5))
    return worst


def _reduce_branches(rng) -> float:
    worst = 0.0
    for n in (3, 4):
        for out in (0, 1):
            ts = ghz_register([f"a{i}" for i in range(n)], [f"V{i}" for i in range(n)], "r")
            ts, rec = simulate_reduce(ts, "a0", out)
            worst = max(worst, abs(register_fidelity(ts, "r") - 1), abs(rec.probability - 0.5))
    return worst


def _tree_extraction(rng) -> float:
    g = corpus.random_hypergraph(rng, int(rng.integers(3, 6)), int(rng.integers(2, 7)))
    terms = sorted(g.vertices)[:3]
    if not connects(g, terms):
        return 0.0
    worst = 0.0
    for tree in pack_steiner_trees(g, terms, "greedy").trees:
        if sum(len(g.members(i)) for i in tree.edge_ids) > QUBIT_CAP:
            continue
        rep = simulate_tree_extraction(g, terms, tree, rng=rng)
        worst = max(worst, abs(rep.fidelity - 1))
    return worst


def _packing(rng) -> float:
    g = corpus.random_hypergraph(rng, int(rng.integers(3, 6)), int(rng.integers(1, 9)))
    terms = sorted(g.vertices)[:3]
    exact = pack_steiner_trees(g, terms, "exact")
    greedy = pack_steiner_trees(g, terms, "greedy")
    cut = min_steiner_cut(g, terms).value
    bad = (greedy.count > exact.count or exact.count != brute_force_packing(g, terms)
           or exact.count > cut
           or not all(is_minimal_steiner_tree(g, t, terms) for t in exact.trees + greedy.trees))
    return 1.0 if bad else 0.0


def protocol_suite(seed: int, scale: int = 1) -> list[CheckResult]:
    return [
        _run("merge-branches", seed, 1, _merge_branches),
        _run("reduce-branches", seed, 1, _reduce_branches),
        _run("tree-extraction", seed, 10 * scale, _tree_extraction),
        _run("packing-soundness", seed, 10 * scale, _packing),
    ]


SUITES = {"entropic": entropic_suite, "protocol": protocol_suite}
