"""Cluster-oriented graph contraction.

Core nodes are picked by fusing density and distance ranks; the subgraph is
expanded around them with personalized PageRank importance and induced on the
selected nodes. All selections break ties by lowest node id, so contraction
is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .graph import WeightedGraph, induce_subgraph

__all__ = [
    "ContractionConfig",
    "SubgraphSelection",
    "node_density",
    "distance_to_cores",
    "rank_score",
    "select_core_nodes",
    "personalized_pagerank",
    "contract",
]

PPR_TOL = 1e-10
PPR_MAX_ITER = 1000


@dataclass(frozen=True)
class ContractionConfig:
    """Knobs for core selection and subgraph expansion.

    core_count: number of core nodes (None = max(K, ceil(0.02 n)) at contract
    time). density_weight blends the density rank against the distance rank
    in [0, 1]. teleport is the PageRank restart probability in (0, 1].
    importance_threshold keeps a node when its best per-core PageRank score
    exceeds it. distance_mode is "reciprocal" (edge length 1/w, default) or
    "unit" (hop counts).
    """

    core_count: int | None = None
    density_weight: float = 0.5
    teleport: float = 0.5
    importance_threshold: float = 0.0
    distance_mode: str = "reciprocal"

    def __post_init__(self):
        if not (0.0 <= self.density_weight <= 1.0):
            raise ValueError("density_weight must lie in [0, 1]")
        if not (0.0 < self.teleport <= 1.0):
            raise ValueError("teleport must lie in (0, 1]")
        if self.importance_threshold < 0:
            raise ValueError("importance_threshold must be >= 0")
        if self.distance_mode not in ("reciprocal", "unit"):
            raise ValueError("distance_mode must be 'reciprocal' or 'unit'")
        if self.core_count is not None and self.core_count < 1:
            raise ValueError("core_count must be >= 1")

    def resolved_core_count(self, n: int, cluster_count: int | None = None) -> int:
        o = self.core_count
        if o is None:
            o = max(cluster_count or 1, math.ceil(0.02 * n))
        if o > n:
            raise ValueError(f"core_count {o} exceeds node count {n}")
        return o


@dataclass(frozen=True)
class SubgraphSelection:
    """Outcome of contraction: which nodes survived and the induced subgraph."""

    selected: np.ndarray
    core_nodes: np.ndarray
    old_to_new: np.ndarray
    subgraph: WeightedGraph


def node_density(g: WeightedGraph) -> np.ndarray:
    """Per-node density: the sum of incident edge weights."""
    return g.weighted_degree()


def _length_csr(g: WeightedGraph, mode: str) -> sp.csr_matrix:
    lengths = 1.0 / g.weights if mode == "reciprocal" else np.ones_like(g.weights)
    return sp.csr_matrix((lengths, g.indices, g.indptr), shape=(g.n, g.n))


def _unreachable_sentinel(g: WeightedGraph, mode: str) -> float:
    # Upper bound on any path length: n hops of the longest edge.
    if g.num_edges == 0:
        return float(g.n)
    max_len = float((1.0 / g.weights).max()) if mode == "reciprocal" else 1.0
    return g.n * max_len


def distance_to_cores(g: WeightedGraph, cores, mode: str = "reciprocal") -> np.ndarray:
    """Sum of shortest-path distances from every node to each core.

    Edge length is 1/w ("reciprocal", strong ties are short) or 1 ("unit").
    Unreachable pairs contribute the sentinel n * max_edge_length so
    disconnected nodes rank as maximally distant without infinities.
    """
    cores = np.asarray(cores, dtype=np.int64)
    if cores.size == 0:
        raise ValueError("core set is empty")
    mat = _length_csr(g, mode)
    dist = dijkstra(mat, directed=False, indices=cores)
    dist[~np.isfinite(dist)] = _unreachable_sentinel(g, mode)
    return dist.sum(axis=0)


def rank_score(values) -> np.ndarray:
    """Rank-based scores where larger values earn higher scores.

    The best value scores n, the worst scores 1; ties share the worse of
    their positions, i.e. score = (#strictly smaller values) + 1.
    """
    values = np.asarray(values, dtype=np.float64)
    srt = np.sort(values)
    return np.searchsorted(srt, values, side="left") + 1.0


def select_core_nodes(g: WeightedGraph, config: ContractionConfig, cluster_count=None) -> np.ndarray:
    """Pick core nodes one by one.

    The first core is the densest node; each later round scores the remaining
    candidates by blending their density rank with the rank of summed
    distance to the cores chosen so far, and takes the argmax (ties to the
    lowest id).
    """
    o = config.resolved_core_count(g.n, cluster_count)
    rho = node_density(g)
    cores = [int(np.argmax(rho))]
    if o == 1:
        return np.array(cores, dtype=np.int64)
    mat = _length_csr(g, config.distance_mode)
    sentinel = _unreachable_sentinel(g, config.distance_mode)
    dist_sum = np.zeros(g.n)
    eps = config.density_weight
    for _ in range(o - 1):
        d = dijkstra(mat, directed=False, indices=[cores[-1]])[0]
        d[~np.isfinite(d)] = sentinel
        dist_sum += d
        candidates = np.setdiff1d(np.arange(g.n), np.array(cores))
        score = eps * rank_score(rho[candidates]) + (1.0 - eps) * rank_score(dist_sum[candidates])
        cores.append(int(candidates[np.argmax(score)]))
    return np.array(cores, dtype=np.int64)


def personalized_pagerank(g: WeightedGraph, seed_node: int, teleport: float) -> np.ndarray:
    """Restart-walk importance of every node relative to ``seed_node``.

    Solves r = teleport * e_seed + (1 - teleport) * (W D^-1) r by power
    iteration to an L1 residual below 1e-10 (at most 1000 iterations). The
    result sums to 1.
    """
    if not (0.0 < teleport <= 1.0):
        raise ValueError("teleport must lie in (0, 1]")
    e = np.zeros(g.n)
    e[seed_node] = 1.0
    if teleport == 1.0:
        return e
    deg = g.weighted_degree()
    if deg[seed_node] == 0:
        return e  # the walk never leaves an isolated seed
    scale = np.zeros(g.n)
    nz = deg > 0
    scale[nz] = 1.0 / deg[nz]
    # column-stochastic transition: entry (i, j) = w_ij / deg_j
    trans = sp.csr_matrix((g.weights * scale[g.indices], g.indices, g.indptr), shape=(g.n, g.n))
    r = e.copy()
    for _ in range(PPR_MAX_ITER):
        nxt = teleport * e + (1.0 - teleport) * trans.dot(r)
        residual = np.abs(nxt - r).sum()
        r = nxt
        if residual < PPR_TOL:
            return r
    raise RuntimeError(f"personalized pagerank did not converge (residual {residual:.3e})")


def contract(g: WeightedGraph, config: ContractionConfig, cluster_count=None) -> SubgraphSelection:
    """Select core nodes plus every node some core deems important.

    A node survives iff it is a core or max over cores of that core's
    PageRank score for it exceeds ``importance_threshold``. The subgraph is
    induced on the survivors with weights unchanged.
    """
    cores = select_core_nodes(g, config, cluster_count)
    best = np.zeros(g.n)
    for c in cores:
        np.maximum(best, personalized_pagerank(g, int(c), config.teleport), out=best)
    keep = best > config.importance_threshold
    keep[cores] = True
    selected = np.flatnonzero(keep)
    subgraph, old_to_new = induce_subgraph(g, selected)
    return SubgraphSelection(
        selected=selected, core_nodes=np.sort(cores), old_to_new=old_to_new, subgraph=subgraph
    )
