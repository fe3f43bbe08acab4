"""State-vector checks of the GHZ merge/reduce protocols and of the
partition entanglement budget along scripted protocols."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bounds import ChannelWeightTable
from .entropy import (ChannelSpec, PureState, SystemLabeling, apply_channel_purified, ghz_state,
                      measure_key, product)
from .lower import GhzHypergraph, SteinerTree, build_ghz_network, tree_protocol, Merge
from .netmodel import BroadcastNetwork, ClientFamily, Partition

QUBIT_CAP = 20
FIDELITY_TOL = 1e-9
ZERO_ENTROPY_TOL = 1e-9

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


class QubitCapError(ValueError):
    pass


class ProtocolError(ValueError):
    """A protocol step violates its preconditions."""


class FidelityError(AssertionError):
    pass


@dataclass(frozen=True)
class TrackedState:
    """Global pure state with subsystem ownership and GHZ register bookkeeping.

    ``owner`` maps every subsystem label to a vertex, or to ``None`` for
    systems nobody holds (channel environments, discarded qubits).
    ``registers`` lists the qubits of each GHZ state that is being tracked.
    """

    state: PureState
    owner: Mapping[str, str | None]
    registers: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        labels = set(self.state.labeling.labels)
        if set(self.owner) != labels:
            raise ProtocolError("ownership map must cover exactly the subsystems")
        seen: set[str] = set()
        for rid, qs in self.registers.items():
            if not set(qs) <= labels:
                raise ProtocolError(f"register {rid!r} references unknown subsystems")
            if seen & set(qs):
                raise ProtocolError("registers overlap")
            seen |= set(qs)

    @classmethod
    def empty(cls) -> "TrackedState":
        return cls(PureState(SystemLabeling(()), np.array([1.0 + 0j])), {}, {})

    @property
    def num_qubits(self) -> float:
        return math.log2(self.state.labeling.total_dim)

    def register_of(self, label: str) -> str:
        for rid, qs in self.registers.items():
            if label in qs:
                return rid
        raise ProtocolError(f"{label!r} is not in any GHZ register")

    def add(self, other: PureState, owner: Mapping[str, str | None],
            register: str | None = None) -> "TrackedState":
        """Tensor in an independent pure state, optionally as a new register."""
        regs = dict(self.registers)
        if register is not None:
            if register in regs:
                raise ProtocolError(f"register {register!r} already exists")
            regs[register] = tuple(other.labeling.labels)
        st = product(self.state, other) if self.state.labeling.subsystems else other
        if st.labeling.total_dim > 2**QUBIT_CAP:
            raise QubitCapError(f"state exceeds {QUBIT_CAP} qubits")
        return TrackedState(st, {**self.owner, **owner}, regs)


@dataclass(frozen=True)
class MeasurementRecord:
    qubit: str
    basis: str
    outcome: int
    probability: float
    corrected: bool

    def to_dict(self) -> dict:
        return {"qubit": self.qubit, "basis": self.basis, "outcome": self.outcome,
                "probability": round(self.probability, 12), "corrected": self.corrected}


# ---------------------------------------------------------------------------
# state-vector primitives
# ---------------------------------------------------------------------------


def _tensor(st: PureState) -> np.ndarray:
    return st.amplitudes.reshape(st.labeling.dims)


def _apply_1q(st: PureState, label: str, op: np.ndarray) -> PureState:
    ax = st.labeling.index(label)
    t = np.moveaxis(np.tensordot(op, _tensor(st), axes=([1], [ax])), 0, ax)
    return PureState(st.labeling, t.reshape(-1))


def _apply_cnot(st: PureState, control: str, target: str) -> PureState:
    c, t = st.labeling.index(control), st.labeling.index(target)
    amps = _tensor(st).copy()
    sl = [slice(None)] * amps.ndim
    sl[c] = 1
    sub = amps[tuple(sl)]
    tax = t if t < c else t - 1
    amps[tuple(sl)] = np.flip(sub, axis=tax)
    return PureState(st.labeling, amps.reshape(-1))


def _measure_z(st: PureState, label: str, outcome: int | None,
               rng: np.random.Generator | None) -> tuple[PureState, int, float]:
    """Computational-basis measurement; the measured factor is removed."""
    ax = st.labeling.index(label)
    t = _tensor(st)
    branches = [np.take(t, k, axis=ax) for k in range(2)]
    probs = [float(np.vdot(b, b).real) for b in branches]
    if outcome is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        outcome = int(rng.random() >= probs[0])
    if outcome not in (0, 1):
        raise ProtocolError("outcome must be 0 or 1")
    if probs[outcome] < 1e-14:
        raise ProtocolError(f"outcome {outcome} on {label!r} has probability zero")
    lab = SystemLabeling(tuple(s for s in st.labeling.subsystems if s[0] != label),
                         {g: m - {label} for g, m in st.labeling.groups.items()
                          if m - {label}})
    amps = branches[outcome].reshape(-1) / math.sqrt(probs[outcome])
    return PureState(lab, amps), outcome, probs[outcome]


def _drop(ts: TrackedState, st: PureState, label: str) -> TrackedState:
    owner = {k: v for k, v in ts.owner.items() if k != label}
    regs = {}
    for rid, qs in ts.registers.items():
        left = tuple(q for q in qs if q != label)
        if left:
            regs[rid] = left
    return TrackedState(st, owner, regs)


def _check_qubit(ts: TrackedState, label: str) -> None:
    if ts.state.labeling.dim(label) != 2:
        raise ProtocolError(f"{label!r} is not a qubit")


# ---------------------------------------------------------------------------
# GHZ merge and reduce
# ---------------------------------------------------------------------------


def simulate_merge(ts: TrackedState, q1: str, q2: str, outcome: int | None = None,
                   rng: np.random.Generator | None = None, correct: bool = True,
                   new_id: str | None = None) -> tuple[TrackedState, MeasurementRecord]:
    """Fuse the GHZ registers of ``q1`` and ``q2`` (held by the same vertex).

    CNOT from ``q1`` onto ``q2``, Z measurement of ``q2``; outcome 1 is fixed
    by X on the rest of the second register.
    """
    for q in (q1, q2):
        _check_qubit(ts, q)
    if ts.owner[q1] is None or ts.owner[q1] != ts.owner[q2]:
        raise ProtocolError(f"{q1!r} and {q2!r} are not held by the same vertex")
    r1, r2 = ts.register_of(q1), ts.register_of(q2)
    if r1 == r2:
        raise ProtocolError("merge needs qubits of two distinct registers")
    st = _apply_cnot(ts.state, q1, q2)
    st, outcome, prob = _measure_z(st, q2, outcome, rng)
    rest2 = [q for q in ts.registers[r2] if q != q2]
    if outcome == 1 and correct:
        for q in rest2:
            st = _apply_1q(st, q, _X)
    after = _drop(ts, st, q2)
    regs = {k: v for k, v in after.registers.items() if k not in (r1, r2)}
    regs[new_id or f"({r1}+{r2})"] = tuple(ts.registers[r1]) + tuple(rest2)
    return (TrackedState(st, after.owner, regs),
            MeasurementRecord(q2, "z", outcome, prob, correct and outcome == 1))


def simulate_reduce(ts: TrackedState, q: str, outcome: int | None = None,
                    rng: np.random.Generator | None = None, correct: bool = True
                    ) -> tuple[TrackedState, MeasurementRecord]:
    """Remove ``q`` from its GHZ register by an X-basis measurement.

    The minus outcome is fixed by Z on the first remaining register qubit.
    """
    _check_qubit(ts, q)
    rid = ts.register_of(q)
    if len(ts.registers[rid]) < 3:
        raise ProtocolError("reduction would leave fewer than two qubits")
    st = _apply_1q(ts.state, q, _H)
    st, outcome, prob = _measure_z(st, q, outcome, rng)
    rest = [x for x in ts.registers[rid] if x != q]
    if outcome == 1 and correct:
        st = _apply_1q(st, rest[0], _Z)
    return _drop(ts, st, q), MeasurementRecord(q, "x", outcome, prob, correct and outcome == 1)


def register_fidelity(ts: TrackedState, register: str | Sequence[str]) -> float:
    """``<GHZ| rho |GHZ>`` for the reduced state of a register."""
    qs = list(ts.registers[register]) if isinstance(register, str) else list(register)
    rho = ts.state.reduced(qs)
    target = ghz_state(len(qs), 2).amplitudes
    return float(np.vdot(target, rho @ target).real)


def ghz_register(labels: Sequence[str], owners: Sequence[str], register: str,
                 ts: TrackedState | None = None) -> TrackedState:
    """Append a qubit GHZ state on ``labels`` to ``ts`` (or to the empty state)."""
    ts = ts if ts is not None else TrackedState.empty()
    return ts.add(ghz_state(len(labels), 2, labels), dict(zip(labels, owners)), register)


# ---------------------------------------------------------------------------
# tree extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtractionReport:
    fidelity: float
    family: tuple[str, ...]
    qubits: int
    merges: int
    reductions: int
    records: tuple[MeasurementRecord, ...]
    key_distribution: Mapping[tuple[int, ...], float]

    def to_dict(self) -> dict:
        return {"fidelity": round(self.fidelity, 12), "family": list(self.family),
                "qubits": self.qubits, "merges": self.merges, "reductions": self.reductions,
                "records": [r.to_dict() for r in self.records],
                "key_distribution": {"".join(map(str, k)): round(v, 12)
                                     for k, v in sorted(self.key_distribution.items())}}


def _distribute(ts: TrackedState, iid: str, members: Sequence[str], tail: str | None
                ) -> TrackedState:
    labels = [f"{iid}@{v}" for v in members]
    if tail is None:
        return ghz_register(labels, members, iid, ts)
    # the tail keeps one half of a Bell pair and broadcasts the other half
    heads = [v for v in members if v != tail]
    src = f"{iid}@{tail}"
    bell = ghz_state(2, 2, [src, f"{iid}~in"])
    out = apply_channel_purified(ChannelSpec.ideal(len(heads), 2), bell, f"{iid}~in",
                                 [f"{iid}@{h}" for h in heads], env_label=None)
    owners = {src: tail, **{f"{iid}@{h}": h for h in heads}}
    return ts.add(out, owners, iid)


def simulate_tree_extraction(source: BroadcastNetwork | GhzHypergraph,
                             family: ClientFamily | Iterable[str], tree: SteinerTree,
                             copies: Mapping[str, int] | None = None,
                             rng: np.random.Generator | None = None,
                             outcomes: str = "sampled") -> ExtractionReport:
    """Run the merge/reduce protocol for ``tree`` on state vectors.

    Each tree hyperedge becomes a qubit GHZ state (through the ideal
    broadcast isometry when the hyperedge came from a network edge). Merges
    follow :func:`lower.tree_protocol`; afterwards surplus qubits at family
    vertices and all qubits at other vertices are measured out. ``outcomes``
    is ``"sampled"``, ``"zeros"`` or ``"ones"``.
    """
    members_set = frozenset(family.members if isinstance(family, ClientFamily) else family)
    net = source if isinstance(source, BroadcastNetwork) else None
    g = build_ghz_network(source, copies) if net is not None else source
    members = dict(g.hyperedges)
    total = sum(len(members[i]) for i in tree.edge_ids)
    if total > QUBIT_CAP:
        raise QubitCapError(f"tree needs {total} qubits, cap is {QUBIT_CAP}")
    forced = {"sampled": None, "zeros": 0, "ones": 1}[outcomes]
    rng = rng if rng is not None else np.random.default_rng(0)

    def tail_of(iid):
        if net is None or iid not in g.origin:
            return None
        return net.edge(g.origin[iid]).tail

    def order(iid):
        t = tail_of(iid)
        return ([t] if t else []) + sorted(members[iid] - {t})

    steps, _ = tree_protocol(g, tree, members_set)
    records = []
    first = tree.edge_ids[0]
    ts = _distribute(TrackedState.empty(), first, order(first), tail_of(first))
    merges = reductions = 0
    for step in steps:
        if isinstance(step, Merge):
            ts = _distribute(ts, step.e2, order(step.e2), tail_of(step.e2))
            q1 = next(q for q in ts.registers[step.e1] if ts.owner[q] == step.at)
            q2 = f"{step.e2}@{step.at}"
            ts, rec = simulate_merge(ts, q1, q2, forced, rng, new_id=step.result)
            records.append(rec)
            merges += 1
    (rid, qubits), = ts.registers.items()
    kept: dict[str, str] = {}
    for q in qubits:
        v = ts.owner[q]
        if v in members_set and v not in kept:
            kept[v] = q
    for q in qubits:
        if kept.get(ts.owner[q]) != q:
            ts, rec = simulate_reduce(ts, q, forced, rng)
            records.append(rec)
            reductions += 1
    order_f = sorted(kept)
    final = [kept[v] for v in order_f]
    fid = register_fidelity(ts, final)
    if abs(fid - 1.0) > FIDELITY_TOL:
        raise FidelityError(f"extracted state has GHZ fidelity {fid}")
    return ExtractionReport(fid, tuple(order_f), total, merges, reductions, tuple(records),
                            measure_key(ts.state, final))


# ---------------------------------------------------------------------------
# entanglement budget along scripted protocols
# ---------------------------------------------------------------------------

LOCC_OPS = ("prepare", "merge", "reduce", "measure", "discard")


@dataclass(frozen=True)
class TraceStep:
    index: int
    op: str
    value: float
    exact: bool
    budget: float
    record: MeasurementRecord | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "op": self.op, "value": round(self.value, 10),
                "kind": "exact" if self.exact else "surrogate",
                "budget": round(self.budget, 10),
                "record": self.record.to_dict() if self.record else None}


@dataclass(frozen=True)
class TraceReport:
    steps: tuple[TraceStep, ...]
    violations: tuple[int, ...]
    locc_monotone: bool
    final_value: float
    final_exact: bool
    budget: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations),
                "locc_monotone": self.locc_monotone, "final_value": round(self.final_value, 10),
                "final_kind": "exact" if self.final_exact else "surrogate",
                "budget": round(self.budget, 10), "steps": [s.to_dict() for s in self.steps]}


def partition_esq_value(ts: TrackedState, p: Partition) -> tuple[float, bool]:
    """Partition entanglement of the held systems and whether it is exact.

    When the unheld systems are in a pure state, the held state is pure and
    the value ``sum_k H(class_k)`` is exact. Otherwise the trivial-extension
    mutual information is returned as an upper-bound surrogate.
    """
    st = ts.state
    held = [l for l in st.labeling.labels if ts.owner[l] is not None]
    unheld = [l for l in st.labeling.labels if ts.owner[l] is None]
    groups: dict[int, list[str]] = {}
    for l in held:
        groups.setdefault(p.class_of[ts.owner[l]], []).append(l)
    h_unheld = st.entropy(unheld) if unheld and held else 0.0
    exact = h_unheld < ZERO_ENTROPY_TOL
    if len(groups) < 2:
        return 0.0, exact
    value = sum(st.entropy(ls) for ls in groups.values()) - h_unheld
    return max(value, 0.0), exact


def _script_error(i: int, msg: str) -> ProtocolError:
    return ProtocolError(f"step {i}: {msg}")


def verify_theorem1_trace(net: BroadcastNetwork, script: Sequence[Mapping], p: Partition,
                          weights: ChannelWeightTable | None = None,
                          initial: TrackedState | None = None, seed: int = 0) -> TraceReport:
    """Track the partition entanglement along a linear protocol script.

    Steps are mappings with an ``op`` key:

    - ``prepare``: GHZ state on ``labels``, all held by ``vertex``
    - ``channel``: one use of ``edge``; ``input`` is a qubit held by its tail,
      optional ``outputs`` name the head systems
    - ``merge`` (``q1``, ``q2``), ``reduce`` (``q``): GHZ protocols
    - ``measure`` (``q``, ``basis`` z or x): measure and remove a qubit
    - ``discard`` (``q``): hand a system to nobody

    Measurement outcomes come from an ``outcome`` key or are sampled. The
    budget starts at the value of the initial state and grows by the channel
    weight on every use. Exact values above the budget are violations.
    """
    if weights is None:
        weights = ChannelWeightTable(net)
    rng = np.random.default_rng(seed)
    ts = initial if initial is not None else TrackedState.empty()
    value, exact = partition_esq_value(ts, p)
    budget = value
    steps = [TraceStep(-1, "initial", value, exact, budget)]
    violations: list[int] = []
    monotone = True
    for i, step in enumerate(script):
        op = step.get("op")
        record = None
        try:
            if op == "prepare":
                labels = list(step["labels"])
                ts = ghz_register(labels, [step["vertex"]] * len(labels),
                                  step.get("register", f"reg{i}"), ts)
            elif op == "channel":
                edge = net.edge(step["edge"])
                q = step["input"]
                if ts.owner.get(q) != edge.tail:
                    raise _script_error(i, f"{q!r} is not held by the tail {edge.tail!r}")
                outs = list(step.get("outputs", [f"{edge.id}.{i}@{h}" for h in edge.heads]))
                spec = edge.channel
                env = None if spec.is_isometric else f"env{i}"
                st = apply_channel_purified(spec, ts.state, q, outs, env_label=env)
                owner = {k: v for k, v in ts.owner.items() if k != q}
                owner.update(zip(outs, edge.heads))
                if env:
                    owner[env] = None
                regs = {rid: tuple(x for r in qs for x in ([*outs] if r == q else [r]))
                        for rid, qs in ts.registers.items()}
                if st.labeling.total_dim > 2**QUBIT_CAP:
                    raise QubitCapError(f"state exceeds {QUBIT_CAP} qubits")
                ts = TrackedState(st, owner, regs)
                budget += weights.weight(edge, p)
            elif op == "merge":
                ts, record = simulate_merge(ts, step["q1"], step["q2"], step.get("outcome"), rng)
            elif op == "reduce":
                ts, record = simulate_reduce(ts, step["q"], step.get("outcome"), rng)
            elif op == "measure":
                q = step["q"]
                basis = step.get("basis", "z")
                if basis not in ("z", "x"):
                    raise _script_error(i, f"unknown basis {basis!r}")
                st = _apply_1q(ts.state, q, _H) if basis == "x" else ts.state
                st, out, prob = _measure_z(st, q, step.get("outcome"), rng)
                ts = _drop(ts, st, q)
                record = MeasurementRecord(q, basis, out, prob, False)
            elif op == "discard":
                q = step["q"]
                if q not in ts.owner:
                    raise _script_error(i, f"unknown system {q!r}")
                ts = replace(ts, owner={**ts.owner, q: None})
            else:
                raise _script_error(i, f"unknown op {op!r}")
        except KeyError as exc:
            raise _script_error(i, f"missing or unknown key {exc}") from exc
        new_value, exact = partition_esq_value(ts, p)
        if op in LOCC_OPS and new_value > value + 1e-9:
            monotone = False
        value = new_value
        if exact and value > budget + 1e-9:
            violations.append(i)
        steps.append(TraceStep(i, op, value, exact, budget, record))
    return TraceReport(tuple(steps), tuple(violations), monotone, value, exact, budget)
