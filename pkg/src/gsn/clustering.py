"""K-means over node features and extraction of per-cluster subgraphs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError
from .imagegraph import Graph, GraphOperators, operators_from_adjacency
from .numerics import SeededRng, as_matrix


@dataclass(frozen=True)
class ClusterPartition:
    assignment: np.ndarray
    centroids: np.ndarray
    canonical_order: np.ndarray | None = None
    history: tuple = field(default=(), compare=False)  # objective after init and every iteration

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def objective(self) -> float:
        return self.history[-1] if self.history else float("nan")

    def to_json(self) -> str:
        return json.dumps({
            "assignment": [int(a) for a in self.assignment],
            "centroids": self.centroids.tolist(),
            "canonical_order": None if self.canonical_order is None else [int(i) for i in self.canonical_order],
        })


@dataclass(frozen=True)
class Subgraph:
    node_ids: np.ndarray  # parent ids, ascending
    node_features: np.ndarray
    edges: tuple  # ((i, j, w), ...) in local ids, i < j
    operators: GraphOperators

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)


def _sq_dists(x, c):
    return np.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=-1)


def _objective(x, c, assign):
    return float(np.sum((x - c[assign]) ** 2))


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all points coincide with a chosen center; pick any unused index
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rest[rng.integers(len(rest))])
        else:
            nxt = int(rng.choice(n, p=closest / total))
        chosen.append(nxt)
        closest = np.minimum(closest, np.sum((x - x[nxt]) ** 2, axis=1))
    return x[chosen].copy()


def _repair_empty(x, c, assign):
    """Give each empty cluster the point farthest from its own centroid."""
    k = c.shape[0]
    for j in range(k):
        if np.any(assign == j):
            continue
        d = np.sum((x - c[assign]) ** 2, axis=1)
        sizes = np.bincount(assign, minlength=k)
        d[sizes[assign] <= 1] = -1.0  # never empty another cluster
        i = int(np.argmax(d))
        assign[i] = j
        c[j] = x[i]
    return assign


def _lloyd(x, k, rng, max_iters):
    c = _kmeanspp(x, k, rng)
    assign = np.argmin(_sq_dists(x, c), axis=1)
    assign = _repair_empty(x, c, assign)
    history = [_objective(x, c, assign)]
    for _ in range(max_iters):
        c = np.stack([x[assign == j].mean(axis=0) for j in range(k)])
        d = _sq_dists(x, c)
        new = np.argmin(d, axis=1)
        # keep the current cluster on ties so the objective cannot go up through ties
        keep = d[np.arange(len(x)), assign] <= d[np.arange(len(x)), new]
        new = np.where(keep, assign, new)
        new = _repair_empty(x, c, new)
        history.append(_objective(x, c, new))
        if np.array_equal(new, assign):
            break
        assign = new
    c = np.stack([x[assign == j].mean(axis=0) for j in range(k)])
    history.append(_objective(x, c, assign))
    return assign, c, history


def kmeans(features, k: int, seed: int = 0, max_iters: int = 100, restarts: int = 1) -> ClusterPartition:
    """Lloyd's algorithm with k-means++ seeding.

    With ``restarts > 1`` the run with the lowest final objective wins
    (earliest run on ties). ``history`` holds the objective of that run
    after seeding and after every iteration.
    """
    x = as_matrix(features)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"cluster count {k} outside [1, {n}]")
    rng = SeededRng(seed)
    best = None
    for _ in range(max(1, restarts)):
        assign, c, history = _lloyd(x, k, rng, max_iters)
        if best is None or history[-1] < best[2][-1]:
            best = (assign, c, history)
    assign, c, history = best
    return ClusterPartition(assign.astype(np.int64), c, None, tuple(history))


def canonicalize(partition: ClusterPartition, node_positions) -> ClusterPartition:
    """Order clusters by spatial centroid in scanline order, larger first on ties."""
    pos = np.asarray(node_positions, dtype=np.float64)
    k = partition.k
    keys = []
    for j in range(k):
        members = partition.assignment == j
        r, col = pos[members].mean(axis=0)
        keys.append((float(r), float(col), -int(members.sum()), j))
    order = np.array([key[-1] for key in sorted(keys)], dtype=np.int64)
    return replace(partition, canonical_order=order)


def induced_subgraph(g: Graph, node_ids) -> Subgraph:
    ids = np.sort(np.asarray(node_ids, dtype=np.int64))
    local = {int(p): i for i, p in enumerate(ids)}
    edges = tuple((local[i], local[j], w) for i, j, w in g.edges if i in local and j in local)
    a = np.zeros((len(ids), len(ids)))
    for i, j, w in edges:
        a[i, j] = a[j, i] = w
    return Subgraph(ids, g.node_features[ids].copy(), edges, operators_from_adjacency(a))


def extract_subgraphs(g: Graph, partition: ClusterPartition) -> list[Subgraph]:
    if len(partition.assignment) != g.num_nodes:
        raise ShapeError(f"partition covers {len(partition.assignment)} nodes, graph has {g.num_nodes}")
    order = partition.canonical_order
    if order is None:
        order = canonicalize(partition, g.node_positions).canonical_order
    return [induced_subgraph(g, np.flatnonzero(partition.assignment == j)) for j in order]
