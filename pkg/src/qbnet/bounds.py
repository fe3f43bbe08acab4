"""Upper bounds on GHZ / private-state distribution rates over partitions.

For a partition of the network's vertices, the expected squashed entanglement
across the classes grows by at most ``avg_uses * weight`` per crossing edge,
where the weight is the channel's squashed entanglement relative to the
partition of its endpoints. Each family contributes ``n_parts`` times its
log-dimension rate to the left-hand side.
"""
from __future__ import annotations

import itertools
import math
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from .entropy import SearchConfig, channel_esq
from .netmodel import (BroadcastNetwork, ClientFamily, Hyperedge, Partition,
                       crossing_edges, n_parts, restricted_growth_strings,
                       EXHAUSTIVE_LIMIT, PartitionLimitError)

LOCAL_RESTARTS = 50


class MissingWeightError(KeyError):
    pass


class UnboundedConstraintError(ValueError):
    """``b * epsilon >= 1`` makes the finite-error bound vacuous."""


class InfeasibleConstraintError(ValueError):
    pass


InitialEsq = Union[float, Callable[[Partition], float]]


def endpoint_signature(edge: Hyperedge, p: Partition) -> tuple[int, ...]:
    """Restricted-growth labels of the edge's endpoints (tail first)."""
    return p.labels(edge.endpoints)


class ChannelWeightTable:
    """Cache of channel weights keyed by ``(edge id, endpoint signature)``.

    With a network attached, missing entries are computed on demand; without
    one, a missing entry raises :class:`MissingWeightError`. Single-class
    signatures always weigh zero.
    """

    def __init__(self, network: BroadcastNetwork | None = None,
                 search: SearchConfig | None = None,
                 entries: Mapping[tuple[str, tuple[int, ...]], float] | None = None):
        self.network = network
        self.search = search
        self._entries: dict[tuple[str, tuple[int, ...]], float] = dict(entries or {})
        self._meta: dict[tuple[str, tuple[int, ...]], tuple[bool, str]] = {}
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def set(self, edge_id: str, signature: Sequence[int], weight: float) -> None:
        if weight < 0:
            raise ValueError("channel weights are non-negative")
        self._entries[(edge_id, tuple(signature))] = float(weight)
        self._meta[(edge_id, tuple(signature))] = (True, "user")

    def lookup(self, edge: Hyperedge, signature: Sequence[int]) -> float:
        signature = tuple(signature)
        if len(set(signature)) < 2:
            return 0.0
        key = (edge.id, signature)
        hit = self._entries.get(key)
        if hit is not None:
            return hit
        if self.network is None:
            raise MissingWeightError(key)
        with self._lock:
            if key not in self._entries:
                res = channel_esq(edge.channel, signature, self.search)
                self._entries[key] = res.value
                self._meta[key] = (res.certified, res.method)
        return self._entries[key]

    def weight(self, edge: Hyperedge, p: Partition) -> float:
        return self.lookup(edge, endpoint_signature(edge, p))

    def precompute(self, net: BroadcastNetwork | None = None) -> "ChannelWeightTable":
        """Fill every signature of every edge (``B(r+1)`` per edge)."""
        net = net or self.network
        for e in net.edges:
            for sig in restricted_growth_strings(len(e.endpoints)):
                self.lookup(e, sig)
        return self

    def entries(self) -> dict[tuple[str, tuple[int, ...]], float]:
        return dict(self._entries)

    def provenance(self) -> dict[tuple[str, tuple[int, ...]], tuple[bool, str]]:
        return dict(self._meta)

    @property
    def all_certified(self) -> bool:
        return all(c for c, _ in self._meta.values())


def _initial(initial_esq: InitialEsq, p: Partition) -> float:
    return float(initial_esq(p)) if callable(initial_esq) else float(initial_esq)


def theorem1_rhs(net: BroadcastNetwork, p: Partition, weights: ChannelWeightTable,
                 initial_esq: InitialEsq = 0.0) -> float:
    """Initial squashed entanglement plus ``sum avg_uses * weight`` over crossing edges."""
    return _initial(initial_esq, p) + sum(
        e.avg_uses * weights.weight(e, p) for e in crossing_edges(net, p))


@dataclass(frozen=True)
class EpsilonTerms:
    epsilon: float
    b: float
    g: float

    def __post_init__(self):
        if self.epsilon < 0 or self.b < 0 or self.g < 0:
            raise ValueError("epsilon, b and g must be non-negative")
        if self.b * self.epsilon >= 1:
            raise UnboundedConstraintError("b * epsilon >= 1: the bound is unbounded")

    def apply(self, base: float) -> float:
        return (base + self.g) / (1 - self.b * self.epsilon)


@dataclass(frozen=True, eq=False)
class BoundReport:
    partition: Partition
    family_ids: tuple[str, ...]
    n: tuple[int, ...]
    weight_sum: float
    initial_esq: float
    rhs: float
    epsilon_terms: EpsilonTerms | None = None
    contributions: tuple[tuple[str, float, float], ...] = ()
    score: float | None = None
    ties: tuple[Partition, ...] = ()

    @property
    def inert(self) -> bool:
        return not any(self.n)

    @property
    def constraint(self) -> tuple[tuple[int, ...], float]:
        return self.n, self.rhs

    def to_dict(self, order: Sequence[str] | None = None) -> dict:
        out = {
            "partition": self.partition.sorted_blocks(order),
            "families": list(self.family_ids),
            "n": list(self.n),
            "weight_sum": self.weight_sum,
            "initial_esq": self.initial_esq,
            "rhs": self.rhs,
            "inert": self.inert,
            "crossing_edges": [
                {"edge": eid, "avg_uses": uses, "weight": w} for eid, uses, w in self.contributions
            ],
            "constraint": " + ".join(f"{c}*r[{f}]" for c, f in zip(self.n, self.family_ids))
                          + f" <= {self.rhs!r}",
        }
        if self.epsilon_terms is not None:
            e = self.epsilon_terms
            out["epsilon_terms"] = {"epsilon": e.epsilon, "b": e.b, "g": e.g}
        if self.score is not None:
            out["score"] = self.score
        if self.ties:
            out["ties"] = [t.sorted_blocks(order) for t in self.ties]
        return out


def theorem2_bound(net: BroadcastNetwork, p: Partition, weights: ChannelWeightTable,
                   initial_esq: InitialEsq = 0.0, eps_terms: EpsilonTerms | None = None,
                   families: Sequence[ClientFamily] | None = None) -> BoundReport:
    """Constraint ``sum_j n_j r_j <= RHS`` for one partition.

    Without ``eps_terms`` the asymptotic form is used; otherwise
    ``RHS = (base + g) / (1 - b eps)``.
    """
    families = list(net.families if families is None else families)
    contributions = tuple((e.id, e.avg_uses, weights.weight(e, p)) for e in crossing_edges(net, p))
    weight_sum = sum(u * w for _, u, w in contributions)
    init = _initial(initial_esq, p)
    base = init + weight_sum
    rhs = eps_terms.apply(base) if eps_terms is not None else base
    return BoundReport(p, tuple(f.id for f in families), tuple(n_parts(f, p) for f in families),
                       weight_sum, init, rhs, eps_terms, contributions)


# ---------------------------------------------------------------------------
# partition search
# ---------------------------------------------------------------------------


class _Evaluator:
    """Fast RHS / score evaluation on label vectors over ``net.vertices``."""

    def __init__(self, net: BroadcastNetwork, families: Sequence[ClientFamily],
                 table: Mapping[tuple[str, tuple[int, ...]], float], initial_esq: InitialEsq,
                 eps_terms: EpsilonTerms | None, min_n: Sequence[int],
                 rate_weights: Sequence[float], objective: str):
        self.net = net
        self.vertices = list(net.vertices)
        pos = {v: i for i, v in enumerate(self.vertices)}
        self.edges = [(e.id, e.avg_uses, [pos[v] for v in e.endpoints]) for e in net.edges]
        self.families = [[pos[v] for v in f.members] for f in families]
        self.table = table
        self.initial_esq = initial_esq
        self.eps_terms = eps_terms
        self.min_n = list(min_n)
        self.rate_weights = list(rate_weights)
        self.objective = objective

    def rhs(self, labels: Sequence[int]) -> float:
        total = 0.0
        for eid, uses, ends in self.edges:
            seen: dict[int, int] = {}
            sig = tuple(seen.setdefault(labels[i], len(seen)) for i in ends)
            if len(seen) >= 2 and uses:
                total += uses * self.table[(eid, sig)]
        if callable(self.initial_esq):
            total += float(self.initial_esq(Partition.from_labels(self.vertices, labels)))
        else:
            total += float(self.initial_esq)
        return self.eps_terms.apply(total) if self.eps_terms is not None else total

    def ns(self, labels: Sequence[int]) -> list[int]:
        out = []
        for fam in self.families:
            c = len({labels[i] for i in fam})
            out.append(c if c >= 2 else 0)
        return out

    def score(self, labels: Sequence[int]) -> float:
        ns = self.ns(labels)
        if any(n < lo for n, lo in zip(ns, self.min_n)):
            return math.inf
        denom = sum(w * n for w, n in zip(self.rate_weights, ns))
        if denom <= 0:
            return math.inf
        if self.objective == "ratio":
            return self.rhs(labels) / denom
        return self.rhs(labels)


def _canonical(labels: Sequence[int]) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


def _scan_chunk(ev: _Evaluator, chunk: list[tuple[int, ...]]):
    best, best_labels, ties = math.inf, None, []
    for labels in chunk:
        s = ev.score(labels)
        if s < best - 1e-12:
            best, best_labels, ties = s, labels, []
        elif best_labels is not None and abs(s - best) <= 1e-12:
            ties.append(labels)
    return best, best_labels, ties


def _exhaustive(ev: _Evaluator, threads: int = 1):
    n = len(ev.vertices)
    if n > EXHAUSTIVE_LIMIT:
        raise PartitionLimitError(
            f"{n} vertices exceed the exhaustive limit of {EXHAUSTIVE_LIMIT}; use local search")
    stream = restricted_growth_strings(n)
    if threads <= 1 or callable(ev.initial_esq):
        return _scan_chunk(ev, list(stream))
    chunks, size = [], 4096
    while True:
        chunk = list(itertools.islice(stream, size))
        if not chunk:
            break
        chunks.append(chunk)
    best, best_labels, ties = math.inf, None, []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for b, bl, t in pool.map(_scan_chunk, itertools.repeat(ev), chunks):
            if bl is None:
                continue
            if b < best - 1e-12:
                best, best_labels, ties = b, bl, list(t)
            elif abs(b - best) <= 1e-12:
                ties.extend([bl] + list(t))
    return best, best_labels, ties


def _local_search(ev: _Evaluator, seed: int, restarts: int):
    n = len(ev.vertices)
    budget = 10 * n * n
    cache: dict[tuple[int, ...], float] = {}

    def score(labels):
        key = _canonical(labels)
        if key not in cache:
            cache[key] = ev.score(key)
        return cache[key]

    best, best_labels = math.inf, None
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    for r, seq in enumerate(seeds):
        rng = np.random.default_rng(seq)
        if r == 0:
            labels = list(range(n))
        else:
            k = int(rng.integers(1, n + 1))
            labels = [int(x) for x in rng.integers(0, k, size=n)]
        labels = list(_canonical(labels))
        current = score(labels)
        spent = 1
        improved = True
        while improved and spent < budget:
            improved = False
            k = max(labels) + 1
            moves = [("move", v, c) for v in range(n) for c in range(k + 1) if c != labels[v]]
            moves += [("merge", a, b) for a in range(k) for b in range(a + 1, k)]
            for idx in rng.permutation(len(moves)):
                kind, a, b = moves[idx]
                if kind == "move":
                    trial = labels.copy()
                    trial[a] = b
                else:
                    trial = [a if x == b else x for x in labels]
                trial = list(_canonical(trial))
                s = score(trial)
                spent += 1
                if s < current - 1e-12:
                    labels, current, improved = trial, s, True
                    break
                if spent >= budget:
                    break
        if current < best - 1e-12 or best_labels is None:
            best, best_labels = current, tuple(labels)
    return best, best_labels, []


def _prepare(net: BroadcastNetwork, families: Sequence[ClientFamily],
             weights: ChannelWeightTable):
    if weights.network is not None:
        weights.precompute(net)
    table = {}
    for e in net.edges:
        for sig in restricted_growth_strings(len(e.endpoints)):
            if len(set(sig)) >= 2:
                table[(e.id, sig)] = weights.lookup(e, sig)
    return table


def optimize_partition(net: BroadcastNetwork, families: Sequence[ClientFamily] | None,
                       weights: ChannelWeightTable, strategy: str = "exhaustive",
                       min_n: Mapping[str, int] | None = None,
                       rate_weights: Mapping[str, float] | None = None,
                       initial_esq: InitialEsq = 0.0, eps_terms: EpsilonTerms | None = None,
                       objective: str = "ratio", seed: int = 0,
                       restarts: int = LOCAL_RESTARTS, threads: int = 1) -> BoundReport:
    """Search partitions for the tightest bound.

    ``objective="ratio"`` minimizes ``RHS / sum_j w_j n_j`` (the rate bound on
    the weighted family rates); ``objective="rhs"`` minimizes the RHS alone.
    ``min_n`` imposes lower bounds on the per-family ``n_parts``.
    Exhaustive search is exact; local search starts from the discrete
    partition, tries single-vertex moves and class merges, accepts strict
    improvements and restarts from random partitions.
    """
    families = list(net.families if families is None else families)
    if objective not in ("ratio", "rhs"):
        raise ValueError(f"unknown objective {objective!r}")
    lows = [int((min_n or {}).get(f.id, 0)) for f in families]
    for f, lo in zip(families, lows):
        if lo > len(f.members) or lo < 0:
            raise InfeasibleConstraintError(
                f"family {f.id!r} cannot be split into {lo} parts")
    ws = [float((rate_weights or {}).get(f.id, 1.0)) for f in families]
    table = _prepare(net, families, weights)
    ev = _Evaluator(net, families, table, initial_esq, eps_terms, lows, ws, objective)
    if strategy == "exhaustive":
        best, labels, ties = _exhaustive(ev, threads)
    elif strategy in ("local", "local-search"):
        best, labels, ties = _local_search(ev, seed, restarts)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    if labels is None or not math.isfinite(best):
        raise InfeasibleConstraintError("no partition satisfies the n_parts constraints")
    p = Partition.from_labels(net.vertices, labels)
    report = theorem2_bound(net, p, weights, initial_esq, eps_terms, families)
    tie_parts = tuple(Partition.from_labels(net.vertices, t) for t in ties)
    return BoundReport(report.partition, report.family_ids, report.n, report.weight_sum,
                       report.initial_esq, report.rhs, report.epsilon_terms,
                       report.contributions, best, tie_parts)


class CorollaryBound(NamedTuple):
    value: float
    partition: Partition
    ties: tuple[Partition, ...] = ()


def corollary_bound(net: BroadcastNetwork, family: ClientFamily, weights: ChannelWeightTable,
                    strategy: str = "exhaustive", initial_esq: InitialEsq = 0.0,
                    eps_terms: EpsilonTerms | None = None, seed: int = 0,
                    threads: int = 1) -> CorollaryBound:
    """Minimum over partitions with ``n_parts != 0`` of ``RHS / n_parts``.

    The first minimizer in enumeration order is returned; other minimizers
    are listed in ``ties``.
    """
    if len(family.members) < 2:
        raise InfeasibleConstraintError(
            f"family {family.id!r} has fewer than two members: no admissible partition")
    rep = optimize_partition(net, [family], weights, strategy, min_n={family.id: 2},
                             initial_esq=initial_esq, eps_terms=eps_terms, seed=seed,
                             threads=threads)
    return CorollaryBound(rep.score, rep.partition, rep.ties)


# ---------------------------------------------------------------------------
# rate regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    """``sum_j coeffs[j] * r_j <= rhs`` over the listed families."""

    family_ids: tuple[str, ...]
    coeffs: tuple[int, ...]
    rhs: float
    partition: Partition | None = field(default=None)

    def dominates(self, other: "LinearConstraint") -> bool:
        return (all(a >= b for a, b in zip(self.coeffs, other.coeffs))
                and self.rhs <= other.rhs)

    def satisfied_by(self, rates: Sequence[float], tol: float = 1e-12) -> bool:
        return sum(c * r for c, r in zip(self.coeffs, rates)) <= self.rhs + tol

    def to_dict(self, order: Sequence[str] | None = None) -> dict:
        out = {"families": list(self.family_ids), "coeffs": list(self.coeffs), "rhs": self.rhs}
        if self.partition is not None:
            out["partition"] = self.partition.sorted_blocks(order)
        return out


def rate_region(net: BroadcastNetwork, families: Sequence[ClientFamily] | None,
                weights: ChannelWeightTable, partitions: Iterable[Partition],
                initial_esq: InitialEsq = 0.0,
                eps_terms: EpsilonTerms | None = None) -> list[LinearConstraint]:
    """One constraint per partition, with vacuous and dominated ones removed.

    Dominance is componentwise: a constraint with coefficients at least as
    large and a right-hand side at most as large implies the other for
    non-negative rates.
    """
    families = list(net.families if families is None else families)
    raw = []
    for p in partitions:
        rep = theorem2_bound(net, p, weights, initial_esq, eps_terms, families)
        if rep.inert:
            continue
        raw.append(LinearConstraint(rep.family_ids, rep.n, rep.rhs, p))
    kept: list[LinearConstraint] = []
    for i, c in enumerate(raw):
        dominated = False
        for j, other in enumerate(raw):
            if i == j or not other.dominates(c):
                continue
            # identical constraints: keep the first occurrence only
            if c.dominates(other) and j > i:
                continue
            dominated = True
            break
        if not dominated:
            kept.append(c)
    return kept
