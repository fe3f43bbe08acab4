"""Finite-dimensional quantum numerics for broadcast-network bounds.

States carry a :class:`SystemLabeling` so that subsystems can be addressed by
name. Party specifications accepted throughout the module are either a
subsystem label, a group name from the labeling, or an iterable mixing both.

All entropies are measured in bits.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.optimize import minimize

HERMITIAN_TOL = 1e-10
EIG_CUTOFF = 1e-12
ISOMETRY_TOL = 1e-9
DEFAULT_DIM_CAP = 2**16
SEARCH_DIM_CAP = 2**10

PartySpec = Union[str, Iterable[str]]


class LabelError(ValueError):
    """Unknown, duplicated or overlapping subsystem labels."""


class DimensionError(ValueError):
    """Dimension mismatch or dimension cap exceeded."""


class InvalidExtensionError(ValueError):
    """A squashing channel is not trace preserving."""


# ---------------------------------------------------------------------------
# labelings and states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemLabeling:
    """Ordered tensor factors plus named groups of factors (parties)."""

    subsystems: tuple[tuple[str, int], ...]
    groups: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        subs = tuple((str(lbl), int(dim)) for lbl, dim in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        labels = [lbl for lbl, _ in subs]
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate subsystem labels in {labels}")
        if any(dim < 1 for _, dim in subs):
            raise DimensionError("subsystem dimensions must be >= 1")
        groups = {str(k): frozenset(v) for k, v in dict(self.groups).items()}
        known = set(labels)
        for name, members in groups.items():
            missing = members - known
            if missing:
                raise LabelError(f"group {name!r} references unknown labels {sorted(missing)}")
            if name in known and members != {name}:
                raise LabelError(f"group {name!r} shadows a subsystem label")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def of(cls, *pairs: tuple[str, int], groups: Mapping[str, Iterable[str]] | None = None):
        return cls(tuple(pairs), {k: frozenset(v) for k, v in (groups or {}).items()})

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(f"unknown subsystem {label!r}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def resolve(self, spec: PartySpec | None) -> tuple[int, ...]:
        """Sorted subsystem indices named by ``spec``."""
        if spec is None:
            return ()
        if isinstance(spec, str):
            if spec in self.groups:
                return tuple(sorted(self.index(lbl) for lbl in self.groups[spec]))
            return (self.index(spec),)
        out: set[int] = set()
        for item in spec:
            out.update(self.resolve(item))
        return tuple(sorted(out))

    def with_groups(self, groups: Mapping[str, Iterable[str]]) -> "SystemLabeling":
        merged = dict(self.groups)
        merged.update({k: frozenset(v) for k, v in groups.items()})
        return SystemLabeling(self.subsystems, merged)

    def replaced(self, label: str, new: Sequence[tuple[str, int]]) -> "SystemLabeling":
        """Labeling with ``label`` swapped for the factors ``new`` (in place)."""
        i = self.index(label)
        subs = self.subsystems[:i] + tuple(new) + self.subsystems[i + 1:]
        groups = {k: v - {label} for k, v in self.groups.items() if v - {label}}
        return SystemLabeling(subs, groups)

    def to_dict(self) -> dict:
        return {
            "subsystems": [[lbl, dim] for lbl, dim in self.subsystems],
            "groups": {k: sorted(v) for k, v in sorted(self.groups.items())},
        }


def _entropy_from_eigs(eigs: np.ndarray) -> float:
    eigs = np.asarray(eigs, dtype=float)
    eigs = eigs[eigs > EIG_CUTOFF]
    if eigs.size == 0:
        return 0.0
    return float(-np.sum(eigs * np.log2(eigs)))


def _cut_entropy(psi: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> float:
    """Entropy of the marginal on ``keep`` of a pure tensor with factor ``dims``."""
    keep = list(keep)
    n = len(dims)
    if not keep or len(keep) == n:
        return 0.0
    rest = [i for i in range(n) if i not in keep]
    dk = math.prod(dims[i] for i in keep)
    m = np.asarray(psi).reshape(dims).transpose(keep + rest).reshape(dk, -1)
    if m.shape[0] <= m.shape[1]:
        eigs = np.linalg.eigvalsh(m @ m.conj().T)
    else:
        eigs = np.linalg.eigvalsh(m.conj().T @ m)
    return _entropy_from_eigs(eigs)


def _ptrace_matrix(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    keep = list(keep)
    n = len(dims)
    if len(keep) == n and keep == sorted(keep):
        return rho
    t = rho.reshape(tuple(dims) + tuple(dims))
    letters = [chr(ord("a") + i) for i in range(n)]
    bra = [chr(ord("A") + i) if i in keep else letters[i] for i in range(n)]
    out = [letters[i] for i in keep] + [bra[i] for i in keep]
    expr = "".join(letters) + "".join(bra) + "->" + "".join(out)
    dk = math.prod(dims[i] for i in keep)
    return np.einsum(expr, t).reshape(dk, dk)


@dataclass(frozen=True, eq=False)
class PureState:
    labeling: SystemLabeling
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.labeling.total_dim:
            raise DimensionError(
                f"{amps.size} amplitudes for total dimension {self.labeling.total_dim}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > HERMITIAN_TOL:
            raise ValueError(f"state vector norm {norm} differs from 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.labeling.dims

    def entropy(self, spec: PartySpec) -> float:
        return _cut_entropy(self.amplitudes, self.dims, self.labeling.resolve(spec))

    def reduced(self, spec: PartySpec) -> np.ndarray:
        keep = list(self.labeling.resolve(spec))
        rest = [i for i in range(len(self.dims)) if i not in keep]
        dk = math.prod(self.dims[i] for i in keep)
        m = self.amplitudes.reshape(self.dims).transpose(keep + rest).reshape(dk, -1)
        return m @ m.conj().T

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.labeling, np.outer(self.amplitudes, self.amplitudes.conj()))

    def with_groups(self, groups: Mapping[str, Iterable[str]]) -> "PureState":
        return PureState(self.labeling.with_groups(groups), self.amplitudes)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    labeling: SystemLabeling
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = self.labeling.total_dim
        if mat.shape != (dim, dim):
            raise DimensionError(f"matrix shape {mat.shape} for total dimension {dim}")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        mat = (mat + mat.conj().T) / 2
        tr = np.trace(mat).real
        if abs(tr - 1.0) > HERMITIAN_TOL:
            raise ValueError(f"density matrix trace {tr} differs from 1")
        if np.linalg.eigvalsh(mat)[0] < -HERMITIAN_TOL:
            raise ValueError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", mat)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.labeling.dims

    def reduced(self, spec: PartySpec) -> np.ndarray:
        return _ptrace_matrix(self.matrix, self.dims, self.labeling.resolve(spec))

    def entropy(self, spec: PartySpec) -> float:
        keep = self.labeling.resolve(spec)
        if not keep:
            return 0.0
        return _entropy_from_eigs(np.linalg.eigvalsh(_ptrace_matrix(self.matrix, self.dims, keep)))

    def with_groups(self, groups: Mapping[str, Iterable[str]]) -> "DensityMatrix":
        return DensityMatrix(self.labeling.with_groups(groups), self.matrix)


def keep_labels(state, indices: Sequence[int]) -> list[str]:
    return [state.labeling.labels[i] for i in indices]


State = Union[PureState, DensityMatrix]


def as_density(state: State) -> DensityMatrix:
    return state.density() if isinstance(state, PureState) else state


# ---------------------------------------------------------------------------
# standard states
# ---------------------------------------------------------------------------


def ghz_state(m: int, d: int = 2, labels: Sequence[str] | None = None,
              dim_cap: int = DEFAULT_DIM_CAP) -> PureState:
    """``(1/sqrt d) sum_i |i...i>`` on ``m`` parties of dimension ``d``."""
    if m < 1 or d < 1:
        raise ValueError("need m >= 1 and d >= 1")
    if d**m > dim_cap:
        raise DimensionError(f"d^m = {d**m} exceeds cap {dim_cap}")
    labels = list(labels) if labels is not None else [f"A{i + 1}" for i in range(m)]
    if len(labels) != m:
        raise LabelError("need one label per party")
    stride = sum(d**k for k in range(m))
    amps = np.zeros(d**m, dtype=complex)
    amps[np.arange(d) * stride] = 1 / math.sqrt(d)
    return PureState(SystemLabeling(tuple((lbl, d) for lbl in labels)), amps)


def maximally_mixed(dims: Sequence[int], labels: Sequence[str] | None = None) -> DensityMatrix:
    labels = list(labels) if labels is not None else [f"A{i + 1}" for i in range(len(dims))]
    dim = math.prod(dims)
    return DensityMatrix(SystemLabeling(tuple(zip(labels, dims))), np.eye(dim) / dim)


def product(*states: State) -> State:
    """Tensor product; pure if every factor is pure."""
    subs = tuple(itertools.chain.from_iterable(s.labeling.subsystems for s in states))
    groups: dict[str, frozenset[str]] = {}
    for s in states:
        groups.update(s.labeling.groups)
    labeling = SystemLabeling(subs, groups)
    if all(isinstance(s, PureState) for s in states):
        amps = np.array([1.0 + 0j])
        for s in states:
            amps = np.kron(amps, s.amplitudes)
        return PureState(labeling, amps)
    mat = np.array([[1.0 + 0j]])
    for s in states:
        mat = np.kron(mat, as_density(s).matrix)
    return DensityMatrix(labeling, mat)


def _check_unitary(u: np.ndarray, dim: int, what: str) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (dim, dim):
        raise DimensionError(f"{what}: expected shape {(dim, dim)}, got {u.shape}")
    if np.max(np.abs(u.conj().T @ u - np.eye(dim))) > ISOMETRY_TOL:
        raise ValueError(f"{what} is not unitary")
    return u


def private_state(m: int, d: int, shield: DensityMatrix | None = None,
                  twisting: Mapping[tuple[int, ...], np.ndarray] | Callable | None = None
                  ) -> DensityMatrix:
    """Twisted GHZ key part plus shield.

    Key factors are labelled ``A1'..Am'``, shield factors ``A1''..Am''`` and
    the group ``Ai`` collects both halves held by party ``i``. ``twisting``
    maps key strings ``(i_1..i_m)`` to unitaries on the whole shield; missing
    strings mean identity. Only the constant strings ``(i..i)`` influence the
    state, but every supplied block is checked for unitarity.
    """
    if shield is None:
        shield = DensityMatrix(SystemLabeling(tuple((f"S{i}", 1) for i in range(m))),
                               np.ones((1, 1)))
    if len(shield.dims) != m:
        raise DimensionError(f"shield must have {m} factors, has {len(shield.dims)}")
    ds = shield.labeling.total_dim
    if d**m * ds > DEFAULT_DIM_CAP:
        raise DimensionError("private state exceeds dimension cap")

    if twisting is None:
        def block(key):
            return np.eye(ds)
    elif callable(twisting):
        def block(key):
            return _check_unitary(twisting(key), ds, f"twisting block {key}")
    else:
        checked = {tuple(k): _check_unitary(v, ds, f"twisting block {k}")
                   for k, v in twisting.items()}
        for key in checked:
            if len(key) != m or any(not 0 <= i < d for i in key):
                raise DimensionError(f"bad key string {key}")

        def block(key):
            return checked.get(key, np.eye(ds))

    stride = sum(d**k for k in range(m))
    key_dim = d**m
    sigma = shield.matrix
    twisted = [block((i,) * m) for i in range(d)]
    mat = np.zeros((key_dim * ds, key_dim * ds), dtype=complex)
    for i in range(d):
        for k in range(d):
            blk = twisted[i] @ sigma @ twisted[k].conj().T / d
            r, c = i * stride, k * stride
            mat[r * ds:(r + 1) * ds, c * ds:(c + 1) * ds] = blk
    subs = [(f"A{i + 1}'", d) for i in range(m)]
    subs += [(f"A{i + 1}''", dim) for i, dim in enumerate(shield.dims)]
    groups = {f"A{i + 1}": {f"A{i + 1}'", f"A{i + 1}''"} for i in range(m)}
    return DensityMatrix(SystemLabeling.of(*subs, groups=groups), mat)


# ---------------------------------------------------------------------------
# broadcast channels
# ---------------------------------------------------------------------------

CHANNEL_KINDS = ("ideal_broadcast", "dephasing_broadcast", "erasure_broadcast", "custom_isometry")


def _copy_isometry(d: int, r: int, out_dim: int | None = None) -> np.ndarray:
    out_dim = out_dim or d
    stride = sum(out_dim**k for k in range(r))
    v = np.zeros((out_dim**r, d), dtype=complex)
    v[np.arange(d) * stride, np.arange(d)] = 1.0
    return v


@dataclass(frozen=True, eq=False)
class ChannelSpec:
    """A broadcast channel ``x -> y_1..y_r`` on a ``dim``-level input.

    ``dephasing_broadcast`` copies the input in the computational basis and
    dephases every head independently with probability ``p``.
    ``erasure_broadcast`` replaces the whole output by the flag ``|d..d>``
    with probability ``p``; its heads are ``dim + 1`` dimensional.
    """

    kind: str
    dim: int
    num_heads: int
    p: float = 0.0
    isometry: np.ndarray | None = None
    out_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.dim < 1 or self.num_heads < 1:
            raise DimensionError("channel needs dim >= 1 and at least one head")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"noise parameter {self.p} outside [0, 1]")
        if self.kind == "custom_isometry":
            if self.isometry is None or self.out_dims is None:
                raise ValueError("custom_isometry needs isometry and out_dims")
            v = np.asarray(self.isometry, dtype=complex)
            out_dims = tuple(int(x) for x in self.out_dims)
            if len(out_dims) != self.num_heads:
                raise DimensionError("out_dims must list one dimension per head")
            if v.shape != (math.prod(out_dims), self.dim):
                raise DimensionError(f"isometry shape {v.shape} does not match dims")
            if np.max(np.abs(v.conj().T @ v - np.eye(self.dim))) > ISOMETRY_TOL:
                raise ValueError("custom isometry violates V^dagger V = 1")
            object.__setattr__(self, "isometry", v)
            object.__setattr__(self, "out_dims", out_dims)
        else:
            object.__setattr__(self, "out_dims", None)

    @classmethod
    def ideal(cls, num_heads: int, dim: int = 2) -> "ChannelSpec":
        return cls("ideal_broadcast", dim, num_heads)

    @property
    def head_dims(self) -> tuple[int, ...]:
        if self.kind == "custom_isometry":
            return self.out_dims
        if self.kind == "erasure_broadcast":
            return (self.dim + 1,) * self.num_heads
        return (self.dim,) * self.num_heads

    def kraus(self) -> list[np.ndarray]:
        d, r = self.dim, self.num_heads
        if self.kind == "ideal_broadcast":
            return [_copy_isometry(d, r)]
        if self.kind == "custom_isometry":
            return [self.isometry]
        if self.kind == "erasure_broadcast":
            ops = []
            if self.p < 1:
                ops.append(math.sqrt(1 - self.p) * _copy_isometry(d, r, d + 1))
            if self.p > 0:
                flag = sum(d * (d + 1)**k for k in range(r))
                for i in range(d):
                    op = np.zeros(((d + 1)**r, d), dtype=complex)
                    op[flag, i] = math.sqrt(self.p)
                    ops.append(op)
            return ops
        # dephasing: per-head Kraus {sqrt(1-p) 1, sqrt(p) |k><k|}
        local = []
        if self.p < 1:
            local.append(math.sqrt(1 - self.p) * np.eye(d))
        if self.p > 0:
            for k in range(d):
                proj = np.zeros((d, d))
                proj[k, k] = math.sqrt(self.p)
                local.append(proj)
        copy = _copy_isometry(d, r)
        ops = []
        for combo in itertools.product(local, repeat=r):
            big = np.array([[1.0]])
            for op in combo:
                big = np.kron(big, op)
            k = big @ copy
            if np.any(np.abs(k) > 0):
                ops.append(k)
        return ops

    @property
    def is_isometric(self) -> bool:
        return len(self.kraus()) == 1

    def stinespring(self) -> np.ndarray:
        """Isometry ``x -> y_1..y_r F`` with the environment ``F`` as last factor."""
        ops = self.kraus()
        return np.stack(ops, axis=-1).transpose(0, 2, 1).reshape(-1, self.dim)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind in ("dephasing_broadcast", "erasure_broadcast"):
            out["params"] = {"p": self.p}
        if self.kind == "custom_isometry":
            out["out_dims"] = list(self.out_dims)
            out["isometry"] = {"real": self.isometry.real.tolist(),
                               "imag": self.isometry.imag.tolist()}
        return out

    @classmethod
    def from_dict(cls, doc: Mapping, num_heads: int) -> "ChannelSpec":
        kind = doc.get("kind", "ideal_broadcast")
        params = dict(doc.get("params") or {})
        iso = doc.get("isometry")
        if iso is not None:
            iso = np.asarray(iso["real"], dtype=float) + 1j * np.asarray(iso.get("imag", 0.0))
        out_dims = doc.get("out_dims")
        return cls(kind, int(doc.get("dim", 2)), num_heads, float(params.get("p", 0.0)),
                   iso, tuple(out_dims) if out_dims is not None else None)


def _apply_to_axis(t: np.ndarray, op: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(op, t, axes=([1], [axis])), 0, axis)


def _output_labels(spec: ChannelSpec, input_label: str,
                   output_labels: Sequence[str] | None) -> list[str]:
    if output_labels is None:
        return [f"{input_label}_y{i + 1}" for i in range(spec.num_heads)]
    if len(output_labels) != spec.num_heads:
        raise LabelError("need one output label per head")
    return list(output_labels)


def apply_channel(spec: ChannelSpec, state: State, input_label: str,
                  output_labels: Sequence[str] | None = None) -> DensityMatrix:
    """Send subsystem ``input_label`` through the channel.

    The input factor is replaced, in place, by the head outputs.
    """
    lab = state.labeling
    idx = lab.index(input_label)
    if lab.dims[idx] != spec.dim:
        raise DimensionError(f"{input_label} has dim {lab.dims[idx]}, channel expects {spec.dim}")
    outs = _output_labels(spec, input_label, output_labels)
    new_lab = lab.replaced(input_label, list(zip(outs, spec.head_dims)))
    dims = list(lab.dims)
    n = len(dims)
    new_dim = new_lab.total_dim
    acc = np.zeros((new_dim, new_dim), dtype=complex)
    if isinstance(state, PureState):
        t = state.amplitudes.reshape(dims)
        for k in spec.kraus():
            v = _apply_to_axis(t, k, idx).reshape(-1)
            acc += np.outer(v, v.conj())
    else:
        t = state.matrix.reshape(dims + dims)
        for k in spec.kraus():
            out = _apply_to_axis(_apply_to_axis(t, k, idx), k.conj(), n + idx)
            acc += out.reshape(new_dim, new_dim)
    return DensityMatrix(new_lab, acc)


def apply_channel_purified(spec: ChannelSpec, state: PureState, input_label: str,
                           output_labels: Sequence[str] | None = None,
                           env_label: str | None = "E") -> PureState:
    """Stinespring dilation of :func:`apply_channel` on a pure state.

    The environment is appended as the last factor. ``env_label=None`` is
    allowed only for isometric channels and drops the trivial environment.
    """
    lab = state.labeling
    idx = lab.index(input_label)
    if lab.dims[idx] != spec.dim:
        raise DimensionError(f"{input_label} has dim {lab.dims[idx]}, channel expects {spec.dim}")
    outs = _output_labels(spec, input_label, output_labels)
    v = spec.stinespring()
    env_dim = v.shape[0] // math.prod(spec.head_dims)
    if env_label is None and env_dim != 1:
        raise ValueError("non-isometric channel needs an environment label")
    t = _apply_to_axis(state.amplitudes.reshape(lab.dims), v, idx)
    shape = list(lab.dims[:idx]) + list(spec.head_dims) + [env_dim] + list(lab.dims[idx + 1:])
    t = t.reshape(shape)
    t = np.moveaxis(t, idx + spec.num_heads, -1)
    new_lab = lab.replaced(input_label, list(zip(outs, spec.head_dims)))
    if env_label is not None:
        new_lab = SystemLabeling(new_lab.subsystems + ((env_label, env_dim),), new_lab.groups)
    return PureState(new_lab, t.reshape(-1))


# ---------------------------------------------------------------------------
# entropic quantities
# ---------------------------------------------------------------------------


def von_neumann_entropy(state: State, group: PartySpec) -> float:
    """``H(state_group)`` in bits; eigenvalues below 1e-12 count as zero."""
    return state.entropy(group)


def multipartite_cmi(state: State, parts: Sequence[PartySpec],
                     cond: PartySpec | None = None) -> float:
    """``sum_i H(A_i|E) - H(A_1..A_m|E)``; an empty condition gives the plain
    multipartite mutual information."""
    lab = state.labeling
    idx = [set(lab.resolve(p)) for p in parts]
    cidx = set(lab.resolve(cond)) if cond else set()
    for a, b in itertools.combinations(idx, 2):
        if a & b:
            raise LabelError("parts overlap")
    if any(a & cidx for a in idx):
        raise LabelError("conditioning system overlaps a part")

    def h(ix):
        return state.entropy(keep_labels(state, sorted(ix))) if ix else 0.0

    everything = set().union(*idx) | cidx
    h_cond = h(cidx)
    return (sum(h(a | cidx) for a in idx) - (len(idx) - 1) * h_cond - h(everything))


def _parts_block(state: State, parts: Sequence[PartySpec]):
    """Reduced state on the union of ``parts`` and the parts' index sets in it."""
    lab = state.labeling
    idx = [lab.resolve(p) for p in parts]
    for a, b in itertools.combinations(idx, 2):
        if set(a) & set(b):
            raise LabelError("parts overlap")
    union = sorted(set().union(*map(set, idx)))
    pos = {old: new for new, old in enumerate(union)}
    dims = [lab.dims[i] for i in union]
    local = [[pos[i] for i in a] for a in idx]
    rho = state.reduced(keep_labels(state, union))
    return rho, dims, local


def _purify(rho: np.ndarray) -> np.ndarray:
    """Columns ``sqrt(l_k) v_k`` in decreasing eigenvalue order (rank-trimmed)."""
    rho = (rho + rho.conj().T) / 2
    vals, vecs = np.linalg.eigh(rho)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > EIG_CUTOFF
    if not np.any(keep):
        keep[0] = True
    return vecs[:, keep] * np.sqrt(np.clip(vals[keep], 0, None))


def _cmi_after_squash(purif: np.ndarray, dims: Sequence[int], local: Sequence[Sequence[int]],
                      w: np.ndarray | None, ext_dim: int) -> float:
    """``I(parts|E')`` where ``E'`` is the first factor of ``w``'s output.

    ``w`` is an isometry ``E -> E' G``; ``None`` means the trivial extension.
    """
    dims = list(dims)
    nsys = len(dims)
    if w is None:
        tensor = purif
        full = dims + [purif.shape[1]]
        e_axes: list[int] = []
    else:
        garbage = w.shape[0] // ext_dim
        tensor = purif @ w.T
        full = dims + [ext_dim, garbage]
        e_axes = [nsys]
    everything = sorted(set().union(*map(set, local)))

    def h(axes):
        return _cut_entropy(tensor, full, sorted(axes)) if axes else 0.0

    h_e = h(e_axes)
    total = sum(h(list(a) + e_axes) for a in local)
    total -= (len(local) - 1) * h_e
    total -= h(everything + e_axes)
    return total


def _kraus_to_isometry(ops: Sequence[np.ndarray], in_dim: int) -> tuple[np.ndarray, int]:
    ops = [np.asarray(k, dtype=complex) for k in ops]
    if not ops:
        raise InvalidExtensionError("empty Kraus list")
    out_dim = ops[0].shape[0]
    for k in ops:
        if k.shape != (out_dim, in_dim):
            raise InvalidExtensionError(
                f"Kraus operator shape {k.shape}, expected ({out_dim}, {in_dim})")
    tp = sum(k.conj().T @ k for k in ops)
    if np.max(np.abs(tp - np.eye(in_dim))) > ISOMETRY_TOL:
        raise InvalidExtensionError("squashing channel is not trace preserving")
    w = np.stack(ops, axis=1).reshape(out_dim * len(ops), in_dim)
    return w, out_dim


def purification_rank(state: State, parts: Sequence[PartySpec]) -> int:
    """Dimension of the purifying system used by the squashed quantities."""
    rho, _, _ = _parts_block(state, parts)
    return _purify(rho).shape[1]


def squashed_ent_upper(state: State, parts: Sequence[PartySpec],
                       extension: Sequence[np.ndarray] | None = None) -> float:
    """Upper bound on the multipartite squashed entanglement from one extension.

    The state restricted to ``parts`` is purified as ``sum_k sqrt(l_k)|v_k>|k>``
    (eigenvalues in decreasing order). ``extension`` lists Kraus operators of a
    channel acting on that purifying system; ``None`` uses the trivial
    extension and returns the unconditioned multipartite mutual information.
    """
    rho, dims, local = _parts_block(state, parts)
    purif = _purify(rho)
    if extension is None:
        return _cmi_after_squash(purif, dims, local, None, 1)
    w, ext_dim = _kraus_to_isometry(extension, purif.shape[1])
    return _cmi_after_squash(purif, dims, local, w, ext_dim)


@dataclass(frozen=True)
class SearchConfig:
    """Budget for the squashing-channel search.

    ``ext_dim`` caps the dimension of the squashed system (default: the
    purification rank); ``iterations`` is the number of objective evaluations
    spent refining each restart.
    """

    restarts: int = 6
    iterations: int = 150
    ext_dim: int | None = None
    step: float = 0.5
    seed: int = 0
    max_total_dim: int = SEARCH_DIM_CAP


@dataclass(frozen=True)
class SquashResult:
    value: float
    default: float
    history: tuple[tuple[str, float], ...]

    def __float__(self) -> float:
        return self.value


def _polar_isometry(z: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(z, full_matrices=False)
    return u @ vh


def squashed_ent_estimate(state: State, parts: Sequence[PartySpec],
                          search: SearchConfig | None = None) -> SquashResult:
    """Search over squashing isometries ``E -> E' G`` for a small ``I(parts|E')``.

    Candidates are the trivial extension, the identity on ``E``, dephasing of
    ``E`` in the purification basis and random isometries refined by
    randomized coordinate descent. Every candidate is a
    genuine extension, so the result is an upper bound that never exceeds the
    trivial-extension value.
    """
    search = search or SearchConfig()
    rho, dims, local = _parts_block(state, parts)
    if rho.shape[0] > search.max_total_dim:
        raise DimensionError(f"dimension {rho.shape[0]} exceeds search cap {search.max_total_dim}")
    purif = _purify(rho)
    rank = purif.shape[1]
    default = _cmi_after_squash(purif, dims, local, None, 1)
    history = [("trivial", default)]
    best = default
    if rank == 1:
        return SquashResult(max(best, 0.0), default, tuple(history))

    ident = _cmi_after_squash(purif, dims, local, np.eye(rank), rank)
    history.append(("identity", ident))
    best = min(best, ident)

    # a garbage factor as large as E lets the search reach dephasing-type channels
    ext_dim = min(search.ext_dim or rank, rank)
    garbage = max(rank, -(-rank // ext_dim))
    shape = (ext_dim * garbage, rank)

    if ext_dim == rank:
        deph = np.zeros(shape, dtype=complex)
        deph[np.arange(rank) * garbage + np.arange(rank), np.arange(rank)] = 1.0
        dv = _cmi_after_squash(purif, dims, local, deph, ext_dim)
        history.append(("dephased", dv))
        best = min(best, dv)

    def objective(z):
        return _cmi_after_squash(purif, dims, local, _polar_isometry(z), ext_dim)

    seeds = np.random.SeedSequence(search.seed).spawn(search.restarts)
    for r, seq in enumerate(seeds):
        rng = np.random.default_rng(seq)
        if r == 0 and ext_dim == rank:
            z = np.zeros(shape, dtype=complex)
            z[np.arange(rank) * garbage, np.arange(rank)] = 1.0
        else:
            z = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        val = objective(z)
        step = search.step
        flat = z.reshape(-1)
        fails = 0
        for _ in range(search.iterations // 2):
            j = int(rng.integers(flat.size))
            delta = step * (1.0 if rng.random() < 0.5 else 1j)
            improved = False
            for sgn in (1, -1):
                trial = flat.copy()
                trial[j] += sgn * delta
                tv = objective(trial.reshape(shape))
                if tv < val - 1e-13:
                    flat, val, improved = trial, tv, True
                    break
            if improved:
                fails = 0
            else:
                fails += 1
                if fails >= 2 * flat.size:
                    step /= 2
                    fails = 0
        history.append((f"restart{r}", val))
        best = min(best, val)
    return SquashResult(max(best, 0.0), default, tuple(history))


# ---------------------------------------------------------------------------
# channel weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelEsq:
    value: float
    certified: bool
    method: str
    input_state: np.ndarray | None = field(default=None, compare=False)
    notes: tuple[str, ...] = ()
    trace: tuple[tuple[str, float], ...] = ()

    def __float__(self) -> float:
        return self.value


def _rgs(labels: Sequence) -> tuple[int, ...]:
    seen: dict = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


def _channel_output(spec: ChannelSpec, rho_x: np.ndarray) -> PureState:
    """Purified channel output on ``R y_1..y_r F`` for input ``rho_x`` (R ~ X)."""
    d = spec.dim
    vals, vecs = np.linalg.eigh((rho_x + rho_x.conj().T) / 2)
    vals = np.clip(vals, 0, None)
    vals = vals / vals.sum()
    # |psi> = sum_k sqrt(l_k) |k>_R |u_k>_X
    amps = (np.sqrt(vals)[:, None] * vecs.T).reshape(-1)
    psi = PureState(SystemLabeling.of(("R", d), ("X", d)), amps / np.linalg.norm(amps))
    outs = [f"y{i + 1}" for i in range(spec.num_heads)]
    return apply_channel_purified(spec, psi, "X", outs, env_label="F")


def _class_groups(spec: ChannelSpec, endpoint_classes: Sequence[int]) -> list[list[str]]:
    classes: dict[int, list[str]] = {}
    classes.setdefault(endpoint_classes[0], []).append("R")
    for i, c in enumerate(endpoint_classes[1:]):
        classes.setdefault(c, []).append(f"y{i + 1}")
    return [classes[c] for c in sorted(classes)]


def _trivial_value(spec: ChannelSpec, groups, rho_x) -> float:
    out = _channel_output(spec, rho_x)
    return multipartite_cmi(out, groups)


def _rho_from_params(x: np.ndarray, d: int) -> np.ndarray:
    a = (x[:d * d] + 1j * x[d * d:]).reshape(d, d)
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def channel_esq(spec: ChannelSpec, endpoint_classes: Sequence[int],
                search: SearchConfig | None = None) -> ChannelEsq:
    """Squashed entanglement of a broadcast channel relative to an endpoint partition.

    ``endpoint_classes[0]`` is the class of the tail, ``endpoint_classes[i]``
    that of head ``i``. The reference system ``R`` stays with the tail and is
    capped at the input dimension.

    The trivial-extension value is a concave function of the input state, so:

    * built-in kinds are covariant under shifts and phases, hence the
      maximally mixed input is the maximizer and the value is certified;
    * custom isometries are maximized numerically (concave, so local optima
      are global up to optimizer tolerance).

    When ``search`` is given and the output is mixed, the squashing search is
    run at the maximizing input and the smaller value is returned, labelled as
    a heuristic estimate.
    """
    classes = list(endpoint_classes)
    if len(classes) != spec.num_heads + 1:
        raise ValueError(f"need {spec.num_heads + 1} endpoint classes, got {len(classes)}")
    notes = ("reference system capped at dim(R) = dim(X)",)
    if len(set(classes)) < 2:
        return ChannelEsq(0.0, True, "single-class", None, notes)
    groups = _class_groups(spec, classes)
    d = spec.dim

    if spec.kind != "custom_isometry":
        rho_x = np.eye(d) / d
        value = _trivial_value(spec, groups, rho_x)
        method = "covariant-maximally-mixed"
    else:
        def neg(x):
            return -_trivial_value(spec, groups, _rho_from_params(x, d))

        rng = np.random.default_rng(0 if search is None else search.seed)
        starts = [np.concatenate([np.eye(d).reshape(-1), np.zeros(d * d)])]
        starts += [rng.normal(size=2 * d * d) for _ in range(3)]
        best_x, best_v = None, -np.inf
        for x0 in starts:
            res = minimize(neg, x0, method="Nelder-Mead" if d == 1 else "BFGS",
                           options={"gtol": 1e-10} if d > 1 else {})
            if -res.fun > best_v:
                best_x, best_v = res.x, -res.fun
        rho_x = _rho_from_params(best_x, d)
        value = best_v
        method = "concave-maximization"
    value = max(value, 0.0)
    if spec.is_isometric or search is None:
        return ChannelEsq(value, True, method, rho_x, notes)

    out = _channel_output(spec, rho_x)
    dens = DensityMatrix(SystemLabeling(out.labeling.subsystems[:-1]),
                         out.reduced(list(out.labeling.labels[:-1])))
    squashed = squashed_ent_estimate(dens, groups, search)
    notes = notes + ("squashing search is heuristic; value is not certified",)
    return ChannelEsq(min(value, squashed.value), False, "heuristic-squash", rho_x, notes,
                      squashed.history)


def measure_key(state: State, key_labels: Sequence[str]) -> dict[tuple[int, ...], float]:
    """Computational-basis outcome distribution of the key factors."""
    lab = state.labeling
    idx = [lab.index(k) for k in key_labels]
    if isinstance(state, PureState):
        rest = [i for i in range(len(lab.dims)) if i not in idx]
        probs_t = np.abs(state.amplitudes.reshape(lab.dims)) ** 2
        probs_t = probs_t.transpose(idx + rest).reshape([lab.dims[i] for i in idx] + [-1])
        probs = probs_t.sum(axis=-1).reshape(-1)
    else:
        # the order of ``key_labels`` matters; _ptrace keeps the requested order
        probs = np.real(np.diag(_ptrace_matrix(state.matrix, lab.dims, idx)))
    shape = [lab.dims[i] for i in idx]
    out = {}
    for flat, p in enumerate(probs):
        if p > 1e-14:
            out[tuple(int(x) for x in np.unravel_index(flat, shape))] = float(p)
    return out
