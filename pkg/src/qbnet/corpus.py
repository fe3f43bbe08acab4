"""Random instances for property checks and the verification suites."""
from __future__ import annotations

import numpy as np

from .entropy import DensityMatrix, PureState, SystemLabeling
from .lower import GhzHypergraph
from .netmodel import BroadcastNetwork, ClientFamily, Hyperedge


def _labeling(dims, labels=None) -> SystemLabeling:
    labels = list(labels) if labels is not None else [f"q{i}" for i in range(len(dims))]
    return SystemLabeling(tuple(zip(labels, dims)))


def random_pure_state(rng: np.random.Generator, dims, labels=None) -> PureState:
    lab = _labeling(dims, labels)
    v = rng.normal(size=lab.total_dim) + 1j * rng.normal(size=lab.total_dim)
    return PureState(lab, v / np.linalg.norm(v))


def random_density(rng: np.random.Generator, dims, labels=None, rank: int | None = None
                   ) -> DensityMatrix:
    """Induced-measure random state of the given rank (full rank by default)."""
    lab = _labeling(dims, labels)
    n = lab.total_dim
    g = rng.normal(size=(n, rank or n)) + 1j * rng.normal(size=(n, rank or n))
    rho = g @ g.conj().T
    return DensityMatrix(lab, rho / np.trace(rho).real)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hypergraph(rng: np.random.Generator, n_vertices: int, n_edges: int,
                      max_size: int = 3, graph: bool = False) -> GhzHypergraph:
    verts = [f"v{i}" for i in range(n_vertices)]
    edges = []
    for k in range(n_edges):
        size = 2 if graph else int(rng.integers(2, min(max_size, n_vertices) + 1))
        members = rng.choice(n_vertices, size=size, replace=False)
        edges.append((f"h{k}", frozenset(verts[i] for i in members)))
    return GhzHypergraph(frozenset(verts), tuple(edges))


def random_ideal_network(rng: np.random.Generator, n_vertices: int, n_edges: int,
                         max_heads: int = 2, family_size: int = 3,
                         max_uses: int = 2) -> BroadcastNetwork:
    """Ideal qubit broadcast network with integer average use counts and one family ``S``."""
    verts = [f"v{i}" for i in range(n_vertices)]
    edges = []
    for k in range(n_edges):
        nh = int(rng.integers(1, min(max_heads, n_vertices - 1) + 1))
        picks = rng.choice(n_vertices, size=nh + 1, replace=False)
        edges.append(Hyperedge(f"e{k}", verts[picks[0]], tuple(verts[i] for i in picks[1:]),
                               avg_uses=float(rng.integers(1, max_uses + 1))))
    fam = rng.choice(n_vertices, size=min(family_size, n_vertices), replace=False)
    return BroadcastNetwork(tuple(verts), tuple(edges),
                            (ClientFamily("S", frozenset(verts[i] for i in fam)),))
