"""Graphs from precision matrices: partial correlations, modularity,
spectral community detection, and Gaussian integration / mutual information.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyGraph, EmptySubset, InvalidInput, OverlappingSubsets
from .linalg import as_symmetric, log_det
from .matrices import as_matrix

BINARY = "binary_support"
ABS_PARTIAL = "abs_partial_correlation"
WEIGHT_KINDS = (BINARY, ABS_PARTIAL)


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph stored as a symmetric weight matrix with zero diagonal."""

    weights: np.ndarray
    weight_kind: str = BINARY
    labels: tuple | None = None

    def __post_init__(self):
        w = as_symmetric(self.weights)
        if np.any(w < 0):
            raise InvalidInput("edge weights must be non-negative")
        np.fill_diagonal(w, 0.0)
        object.__setattr__(self, "weights", w)
        if self.labels is not None and len(self.labels) != w.shape[0]:
            raise InvalidInput("one label per node is required")

    @property
    def n_nodes(self):
        return self.weights.shape[0]

    @property
    def edges(self):
        """``(i, j, weight)`` for ``i < j`` and positive weight."""
        iu, ju = np.nonzero(np.triu(self.weights, 1))
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(iu, ju)]

    @property
    def n_edges(self):
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    def node_label(self, i):
        return str(i) if self.labels is None else str(self.labels[i])


@dataclass(frozen=True)
class CommunityPartition:
    labels: np.ndarray
    modularity: float

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1 or labels.size == 0:
            raise InvalidInput("labels must be a non-empty 1-D array")
        k = labels.max() + 1
        if labels.min() < 0 or np.any(np.bincount(labels, minlength=k) == 0):
            raise InvalidInput("community ids must be 0..k-1 with no empty community")
        object.__setattr__(self, "labels", labels)

    @property
    def k(self):
        return int(self.labels.max()) + 1

    def members(self, c):
        return np.flatnonzero(self.labels == c)


@dataclass
class IntegrationGraph:
    """Communities as nodes (integration, nats) and their pairwise mutual information."""

    node_values: dict
    edge_values: dict = field(default_factory=dict)


def canonical_labels(labels):
    """Relabel so communities are numbered by first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty_like(first)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse.ravel()]


def partial_correlations(precision):
    """``R_ij = -K_ij / sqrt(K_ii K_jj)`` with unit diagonal."""
    k = as_matrix(precision)
    d = np.sqrt(np.diag(k))
    r = -k / np.outer(d, d)
    np.fill_diagonal(r, 1.0)
    return as_symmetric(r, check=False)


def support_graph(precision, weight_kind=BINARY, labels=None):
    """Graph with an edge wherever the precision has a non-zero off-diagonal entry."""
    k = as_matrix(precision)
    threshold = getattr(precision, "zero_threshold", 0.0)
    mask = np.abs(k) > threshold
    np.fill_diagonal(mask, False)
    if weight_kind == BINARY:
        w = mask.astype(float)
    elif weight_kind == ABS_PARTIAL:
        w = np.where(mask, np.abs(partial_correlations(k)), 0.0)
    else:
        raise InvalidInput(f"weight_kind must be one of {WEIGHT_KINDS}")
    return WeightedGraph(w, weight_kind, None if labels is None else tuple(labels))


def _weights(g):
    return g.weights if isinstance(g, WeightedGraph) else WeightedGraph(g).weights


def modularity(graph, partition):
    """Newman-Girvan modularity ``sum_c (e_cc - a_c^2)``.

    ``e_cd`` is the fraction of total edge weight joining communities ``c``
    and ``d`` (each edge contributes to both ``e_cd`` and ``e_dc``), and
    ``a_c = sum_d e_cd``. Weighted edges count as their weight.
    """
    w = _weights(graph)
    labels = partition.labels if isinstance(partition, CommunityPartition) else np.asarray(partition)
    if labels.shape != (w.shape[0],):
        raise InvalidInput("partition does not cover the graph's nodes")
    total = w.sum()
    if total <= 0:
        raise EmptyGraph("modularity is undefined on a graph without edges")
    _, lab = np.unique(labels, return_inverse=True)
    onehot = np.zeros((w.shape[0], lab.max() + 1))
    onehot[np.arange(w.shape[0]), lab] = 1.0
    e = onehot.T @ w @ onehot / total
    a = e.sum(axis=1)
    return float(np.trace(e) - np.sum(a ** 2))


def _farthest_point_init(x, k, rng):
    centers = [x[rng.integers(x.shape[0])]]
    dist = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        idx = int(np.argmax(dist))
        centers.append(x[idx])
        dist = np.minimum(dist, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def kmeans(x, k, rng, max_iter=300):
    """Lloyd's algorithm from a greedy farthest-point start. Returns (labels, inertia)."""
    centers = _farthest_point_init(x, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1)
        for c in range(k):
            if not np.any(new == c):
                # reseed an empty cluster at the worst-fitted point
                far = int(np.argmax(d2[np.arange(x.shape[0]), new]))
                new[far] = c
                d2[far] = 0.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([x[labels == c].mean(axis=0) for c in range(k)])
    inertia = float(np.sum((x - centers[labels]) ** 2))
    return labels, inertia


def spectral_embedding(w, dim):
    """Top ``dim`` eigenvectors of ``D^-1/2 W D^-1/2``, rows scaled to unit length."""
    d = w.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    normalized = w * np.outer(inv_sqrt, inv_sqrt)
    _, vecs = np.linalg.eigh(normalized)
    emb = vecs[:, ::-1][:, :dim]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    return emb / np.where(norms > 0, norms, 1.0)


def detect_communities(graph, k_max=10, restarts=10, seed=0):
    """Spectral community detection with the number of communities chosen by modularity.

    For each ``k`` in ``2..k_max`` the non-isolated nodes are embedded with
    the top ``k`` eigenvectors of the normalized adjacency (rows scaled to
    unit length) and clustered by k-means from ``restarts`` farthest-point
    starts; the restart with the highest modularity is kept. Isolated nodes
    become singleton communities. Across ``k`` the highest modularity wins,
    ties going to the smaller ``k``.
    """
    if k_max < 2:
        raise InvalidInput("k_max must be at least 2")
    if restarts < 1:
        raise InvalidInput("restarts must be at least 1")
    w = _weights(graph)
    p = w.shape[0]
    degree = w.sum(axis=1)
    active = np.flatnonzero(degree > 0)
    isolated = np.flatnonzero(degree == 0)
    if active.size == 0:
        raise EmptyGraph("cannot detect communities in a graph without edges")
    sub = w[np.ix_(active, active)]
    rng = np.random.Generator(np.random.PCG64(seed))

    best = None
    for k in range(2, min(k_max, active.size) + 1):
        emb = spectral_embedding(sub, k)
        k_best = None
        for _ in range(restarts):
            sub_labels, _ = kmeans(emb, k, rng)
            labels = np.empty(p, dtype=int)
            labels[active] = sub_labels
            labels[isolated] = k + np.arange(isolated.size)
            labels = canonical_labels(labels)
            q = modularity(w, labels)
            if k_best is None or q > k_best[0]:
                k_best = (q, labels)
        if best is None or k_best[0] > best[0] + 1e-12:
            best = k_best
    if best is None:
        # a single connected pair and k_max >= 2 never reach here; keep one community
        labels = np.zeros(p, dtype=int)
        labels[isolated] = 1 + np.arange(isolated.size)
        labels = canonical_labels(labels)
        best = (modularity(w, labels), labels)
    return CommunityPartition(best[1], best[0])


def singleton_partition(p):
    return CommunityPartition(np.arange(p), float("nan"))


def _subset(nodes, p):
    idx = np.unique(np.asarray(list(nodes), dtype=int))
    if idx.size == 0:
        raise EmptySubset("node subset is empty")
    if idx.min() < 0 or idx.max() >= p:
        raise InvalidInput(f"node subset has indices outside 0..{p - 1}")
    return idx


def integration(precision, nodes):
    """``0.5 * log det`` of the precision restricted to ``nodes`` (nats)."""
    k = as_matrix(precision)
    idx = _subset(nodes, k.shape[0])
    return 0.5 * log_det(k[np.ix_(idx, idx)])


def mutual_information(precision, nodes_a, nodes_b):
    """``I(a u b) - I(a) - I(b)`` for disjoint node sets."""
    k = as_matrix(precision)
    a = _subset(nodes_a, k.shape[0])
    b = _subset(nodes_b, k.shape[0])
    if np.intersect1d(a, b).size:
        raise OverlappingSubsets("node subsets must be disjoint")
    union = np.concatenate([a, b])
    return integration(k, union) - integration(k, a) - integration(k, b)


def integration_graph(precision, partition, min_abs=1e-12):
    """Integration of every community and mutual information between every pair.

    Pairs with ``|M| < min_abs`` are left out.
    """
    k = as_matrix(precision)
    labels = partition.labels if isinstance(partition, CommunityPartition) else np.asarray(partition)
    if labels.shape != (k.shape[0],):
        raise InvalidInput("partition does not match the precision's order")
    communities = sorted(set(labels.tolist()))
    members = {c: np.flatnonzero(labels == c) for c in communities}
    nodes = {c: integration(k, members[c]) for c in communities}
    edges = {}
    for i, c1 in enumerate(communities):
        for c2 in communities[i + 1:]:
            m = mutual_information(k, members[c1], members[c2])
            if abs(m) >= min_abs:
                edges[(c1, c2)] = m
    return IntegrationGraph(nodes, edges)


def fiedler_order(graph):
    """Node order sorting the Fiedler vector of the graph Laplacian (a 1-D layout)."""
    w = _weights(graph)
    lap = np.diag(w.sum(axis=1)) - w
    _, vecs = np.linalg.eigh(lap)
    v = vecs[:, 1] if w.shape[0] > 1 else vecs[:, 0]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return np.argsort(v, kind="stable")


def pairing_weight_fraction(graph, pairing):
    """Share of total edge weight carried by edges joining each node to its mapped partner.

    ``pairing`` maps node index to partner index (e.g. homologous regions of
    the two hemispheres); each unordered pair is counted once.
    """
    w = _weights(graph)
    total = np.triu(w, 1).sum()
    if total <= 0:
        raise EmptyGraph("graph has no edge weight")
    pairs = {tuple(sorted((int(i), int(j)))) for i, j in dict(pairing).items() if i != j}
    return float(sum(w[i, j] for i, j in pairs) / total)
