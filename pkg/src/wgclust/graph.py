"""Undirected weighted graphs: CSR storage, file IO, synthetic benchmarks, noise injection.

Graphs are immutable after construction. Storage is symmetric CSR: every
undirected edge appears as two directed entries, rows sorted by node id and
neighbor ids sorted within each row. Absent edges are never stored; weights
are strictly positive 64-bit floats (fractional weights appear once training
starts refining them). Self-loops are rejected on input; the attention layer
synthesizes its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WeightedGraph",
    "LabeledGraph",
    "build_graph",
    "load_edge_list",
    "save_edge_list",
    "save_id_map",
    "load_labels",
    "save_labels",
    "induce_subgraph",
    "synth_weighted_sbm",
    "inject_noise_edges",
]


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric weighted adjacency in CSR form.

    Attributes
    ----------
    n : int
        Node count; ids are dense 0..n-1.
    indptr : (n+1,) int64
        Row pointers into ``indices``/``weights``.
    indices : (2E,) int64
        Neighbor ids, sorted within each row.
    weights : (2E,) float64
        Positive edge weights; entry (i -> j) and (j -> i) carry the same value.
    node_ids : tuple of str, optional
        Original external ids (position = dense id) when the graph was loaded
        from a file with arbitrary ids.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    node_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.weights):
            arr.flags.writeable = False

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.indices.size // 2

    @property
    def total_weight_2m(self) -> float:
        """Sum over all ordered pairs, i.e. each undirected edge counted twice."""
        return float(self.weights.sum())

    def weighted_degree(self) -> np.ndarray:
        """Per-node sum of incident edge weights."""
        src = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return np.bincount(src, weights=self.weights, minlength=self.n)

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        """Sorted (neighbor, weight) pairs of node i."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(int(j), float(w)) for j, w in zip(self.indices[lo:hi], self.weights[lo:hi])]

    def directed_src(self) -> np.ndarray:
        """Source node of every directed entry, aligned with ``indices``."""
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u, v, w) arrays of undirected edges with u < v, sorted by (u, v)."""
        src = self.directed_src()
        mask = src < self.indices
        return src[mask], self.indices[mask], self.weights[mask].copy()

    def has_edge(self, u: int, v: int) -> bool:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        k = np.searchsorted(self.indices[lo:hi], v)
        return k < hi - lo and self.indices[lo + k] == v

    def check_invariants(self) -> None:
        """Full-scan validation of symmetry, positivity, and the 2m cache."""
        if np.any(self.weights <= 0):
            raise AssertionError("non-positive stored weight")
        src = self.directed_src()
        if np.any(src == self.indices):
            raise AssertionError("stored self-loop")
        for i in range(self.n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            row = self.indices[lo:hi]
            if np.any(np.diff(row) <= 0):
                raise AssertionError(f"row {i} not strictly sorted")
        # symmetry with identical weights
        order = np.lexsort((src, self.indices))
        if not np.array_equal(self.indices[order], src):
            raise AssertionError("asymmetric structure")
        if not np.array_equal(self.weights[order], self.weights):
            raise AssertionError("asymmetric weights")
        total = float(self.weights.sum())
        if total > 0 and abs(total - self.total_weight_2m) > 1e-12 * total:
            raise AssertionError("total_weight_2m out of sync")


@dataclass(frozen=True)
class LabeledGraph:
    """A graph plus ground-truth cluster ids in 0..K-1."""

    graph: WeightedGraph
    labels: np.ndarray
    cluster_count: int

    def __post_init__(self):
        if self.labels.shape != (self.graph.n,):
            raise ValueError("label array length must equal node count")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.cluster_count):
            raise ValueError("labels must lie in 0..K-1")
        self.labels.flags.writeable = False


def build_graph(n, u, v, w, node_ids=None, sum_duplicates=True) -> WeightedGraph:
    """Assemble a WeightedGraph from undirected edge arrays.

    Duplicate (u, v) pairs -- in either orientation -- have their weights
    summed when ``sum_duplicates`` is set, otherwise they raise. Self-loops
    and non-positive weights raise.
    """
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    if u.size != v.size or u.size != w.size:
        raise ValueError("edge arrays must have equal length")
    if u.size:
        if u.min() < 0 or v.min() < 0 or max(u.max(), v.max()) >= n:
            raise ValueError("edge endpoint out of range")
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        if np.any(w <= 0):
            raise ValueError("edge weights must be strictly positive")
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    order = np.lexsort((hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    if lo.size:
        dup = np.zeros(lo.size, dtype=bool)
        dup[1:] = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
        if dup.any():
            if not sum_duplicates:
                raise ValueError("duplicate edge")
            first = np.flatnonzero(~dup)
            group = np.cumsum(~dup) - 1
            wsum = np.bincount(group, weights=w)
            lo, hi, w = lo[first], hi[first], wsum
    src = np.concatenate([lo, hi])
    dst = np.concatenate([hi, lo])
    ww = np.concatenate([w, w])
    order = np.lexsort((dst, src))
    src, dst, ww = src[order], dst[order], ww[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return WeightedGraph(n=n, indptr=indptr, indices=dst, weights=ww, node_ids=node_ids)


def load_edge_list(path) -> WeightedGraph:
    """Read a `u<TAB>v<TAB>w` edge list.

    Lines starting with ``#`` are ignored. External ids may be arbitrary
    tokens; they are remapped to dense 0..n-1 in order of first appearance and
    the original ids are kept on the returned graph (``node_ids``) so results
    can be joined back. Duplicate (u, v) lines have their weights summed and
    (u, v) equals (v, u).
    """
    id_map: dict[str, int] = {}
    us, vs, ws = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) == 1:
                parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}: line {lineno}: expected 'u<TAB>v<TAB>w', got {line!r}")
            a, b, wtok = parts
            try:
                w = float(wtok)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: weight {wtok!r} is not a number") from None
            if not np.isfinite(w) or w <= 0:
                raise ValueError(f"{path}: line {lineno}: rejected non-positive weight {wtok}")
            if a == b:
                raise ValueError(f"{path}: line {lineno}: self-loop {a!r} in input")
            for tok in (a, b):
                if tok not in id_map:
                    id_map[tok] = len(id_map)
            us.append(id_map[a])
            vs.append(id_map[b])
            ws.append(w)
    if not us:
        raise ValueError(f"{path}: no edges")
    node_ids = tuple(id_map.keys())
    return build_graph(len(id_map), us, vs, ws, node_ids=node_ids)


def save_edge_list(g: WeightedGraph, path) -> None:
    """Write one `u<TAB>v<TAB>w` line per undirected edge (decimal round-trip exact)."""
    u, v, w = g.edge_arrays()
    names = g.node_ids if g.node_ids is not None else None
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, x in zip(u, v, w):
            sa = names[a] if names else str(int(a))
            sb = names[b] if names else str(int(b))
            fh.write(f"{sa}\t{sb}\t{float(x)!r}\n")


def save_id_map(g: WeightedGraph, path) -> None:
    """Persist the external-id -> dense-id remap table (`old<TAB>new`)."""
    with open(path, "w", encoding="utf-8") as fh:
        names = g.node_ids if g.node_ids is not None else [str(i) for i in range(g.n)]
        for dense, old in enumerate(names):
            fh.write(f"{old}\t{dense}\n")


def load_labels(path, node_ids=None) -> np.ndarray:
    """Read a `node<TAB>label` file into a dense int array.

    ``node_ids`` (from a graph loaded out of the matching edge list) maps
    external node tokens to dense ids; without it node tokens must already be
    integers in 0..n-1.
    """
    pairs: dict[int, int] = {}
    lookup = {tok: i for i, tok in enumerate(node_ids)} if node_ids is not None else None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) == 1:
                parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 'node<TAB>label'")
            tok, lab = parts
            if lookup is not None:
                if tok not in lookup:
                    continue  # label for a node absent from the graph
                node = lookup[tok]
            else:
                node = int(tok)
            pairs[node] = int(lab)
    if not pairs:
        raise ValueError(f"{path}: no labels")
    n = (max(pairs) + 1) if lookup is None else len(lookup)
    out = np.full(n, -1, dtype=np.int64)
    for node, lab in pairs.items():
        out[node] = lab
    if np.any(out < 0):
        missing = int(np.flatnonzero(out < 0)[0])
        raise ValueError(f"{path}: node {missing} has no label")
    return out


def save_labels(labels: np.ndarray, path, node_ids=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, lab in enumerate(labels):
            tok = node_ids[i] if node_ids is not None else str(i)
            fh.write(f"{tok}\t{int(lab)}\n")


def induce_subgraph(g: WeightedGraph, nodes: np.ndarray) -> tuple[WeightedGraph, np.ndarray]:
    """Subgraph on ``nodes`` (sorted unique ids); returns (subgraph, old_to_new).

    Keeps exactly the edges with both endpoints selected, weights unchanged.
    ``old_to_new[i]`` is the new id or -1 for unselected nodes.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    old_to_new = np.full(g.n, -1, dtype=np.int64)
    old_to_new[nodes] = np.arange(nodes.size)
    u, v, w = g.edge_arrays()
    keep = (old_to_new[u] >= 0) & (old_to_new[v] >= 0)
    sub = build_graph(nodes.size, old_to_new[u[keep]], old_to_new[v[keep]], w[keep])
    return sub, old_to_new


def synth_weighted_sbm(n, K, p_in, p_out, w_in_mean, w_out_mean, seed) -> LabeledGraph:
    """Weighted stochastic block model with integer-valued weights.

    Nodes split into K near-equal contiguous blocks. An intra-block pair gets
    an edge with probability ``p_in`` and weight ``1 + Poisson(w_in_mean - 1)``;
    inter-block pairs analogously with ``p_out`` / ``w_out_mean``. Deterministic
    per seed.
    """
    if not (0 <= p_out < p_in <= 1):
        raise ValueError("need 0 <= p_out < p_in <= 1")
    if w_in_mean < 1 or w_out_mean < 1:
        raise ValueError("weight means must be >= 1")
    if not (1 <= K <= n):
        raise ValueError("need 1 <= K <= n")
    rng = np.random.default_rng(seed)
    sizes = np.full(K, n // K, dtype=np.int64)
    sizes[: n % K] += 1
    labels = np.repeat(np.arange(K), sizes)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    keep = rng.random(iu.size) < np.where(same, p_in, p_out)
    means = np.where(same[keep], w_in_mean, w_out_mean)
    w = 1.0 + rng.poisson(means - 1.0)
    g = build_graph(n, iu[keep], ju[keep], w)
    return LabeledGraph(graph=g, labels=labels, cluster_count=K)


def inject_noise_edges(g, fraction, seed, unit_weight=False):
    """Add ``floor(fraction * |E|)`` uniformly random non-edges.

    Noise weights are drawn uniformly from the multiset of existing edge
    weights so noise is indistinguishable by weight alone; ``unit_weight``
    forces constant weight 1 instead. Returns (new graph, added edges as an
    (m, 2) int array of (u, v) pairs with u < v).
    """
    if fraction < 0:
        raise ValueError("fraction must be non-negative")
    m = g.num_edges
    add = int(np.floor(fraction * m))
    u, v, w = g.edge_arrays()
    if add == 0:
        return g, np.empty((0, 2), dtype=np.int64)
    capacity = g.n * (g.n - 1) // 2 - m
    if add > capacity:
        raise ValueError(f"cannot add {add} noise edges: only {capacity} non-edges remain")
    rng = np.random.default_rng(seed)
    existing = set(zip(u.tolist(), v.tolist()))
    chosen: list[tuple[int, int]] = []
    seen = set()
    while len(chosen) < add:
        a, b = int(rng.integers(0, g.n)), int(rng.integers(0, g.n))
        if a == b:
            continue
        pair = (a, b) if a < b else (b, a)
        if pair in existing or pair in seen:
            continue
        seen.add(pair)
        chosen.append(pair)
    added = np.array(chosen, dtype=np.int64)
    if unit_weight:
        new_w = np.ones(add)
    else:
        new_w = rng.choice(w, size=add, replace=True)
    out = build_graph(
        g.n,
        np.concatenate([u, added[:, 0]]),
        np.concatenate([v, added[:, 1]]),
        np.concatenate([w, new_w]),
        node_ids=g.node_ids,
    )
    return out, added
