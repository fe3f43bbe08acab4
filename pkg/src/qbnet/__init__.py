"""Rate bounds for distributing GHZ states and multipartite secret keys over
quantum broadcast networks."""

__version__ = "0.1.0"

from .entropy import (ChannelSpec, DensityMatrix, PureState, SystemLabeling, apply_channel,
                      channel_esq, ghz_state, measure_key, multipartite_cmi, private_state,
                      squashed_ent_estimate, squashed_ent_upper, von_neumann_entropy)
from .netmodel import (BroadcastNetwork, ClientFamily, Hyperedge, Partition, crossing_edges,
                       enumerate_partitions, load_network, n_parts)
from .bounds import (ChannelWeightTable, corollary_bound, optimize_partition, rate_region,
                     theorem1_rhs, theorem2_bound)
from .lower import (GhzHypergraph, aggregated_rate, build_ghz_network, min_steiner_cut,
                    pack_steiner_trees)
from .simverify import simulate_merge, simulate_reduce, simulate_tree_extraction

__all__ = [
    "ChannelSpec", "DensityMatrix", "PureState", "SystemLabeling", "apply_channel",
    "channel_esq", "ghz_state", "measure_key", "multipartite_cmi", "private_state",
    "squashed_ent_estimate", "squashed_ent_upper", "von_neumann_entropy",
    "BroadcastNetwork", "ClientFamily", "Hyperedge", "Partition", "crossing_edges",
    "enumerate_partitions", "load_network", "n_parts",
    "ChannelWeightTable", "corollary_bound", "optimize_partition", "rate_region",
    "theorem1_rhs", "theorem2_bound",
    "GhzHypergraph", "aggregated_rate", "build_ghz_network", "min_steiner_cut",
    "pack_steiner_trees",
    "simulate_merge", "simulate_reduce", "simulate_tree_extraction",
]
