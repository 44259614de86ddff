"""Communication graph for the local dual variables and its Laplacian objects.

The graph is undirected, weighted and must be connected: consensus of the
agents' dual copies is enforced through the Laplacian, which only vanishes on
agreement when there is a single connected component.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

Array = np.ndarray

_CONNECTIVITY_TOL = 1e-9


@dataclass(frozen=True)
class DualGraph:
    """Weighted undirected graph validated at construction.

    Exposes the adjacency ``weights``, the Laplacian ``L = diag(degrees) - W``,
    the weighted degrees, the maximum degree ``d_star`` and the algebraic
    connectivity (second-smallest Laplacian eigenvalue). Construction fails on
    asymmetry, self-loops, negative weights or a disconnected topology.
    """

    weights: Array

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("adjacency must be square")
        if W.shape[0] < 2:
            raise ValueError("need at least two nodes")
        if not np.array_equal(W, W.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(W) != 0.0):
            raise ValueError("self-loops are not allowed")
        if np.any(W < 0.0):
            raise ValueError("edge weights must be nonnegative")
        object.__setattr__(self, "weights", W)
        if self.algebraic_connectivity <= _CONNECTIVITY_TOL:
            raise ValueError("graph must be connected")

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    @cached_property
    def degrees(self) -> Array:
        return self.weights.sum(axis=1)

    @cached_property
    def d_star(self) -> float:
        return float(self.degrees.max())

    @cached_property
    def laplacian(self) -> Array:
        return np.diag(self.degrees) - self.weights

    @cached_property
    def algebraic_connectivity(self) -> float:
        return float(np.linalg.eigvalsh(self.laplacian)[1])

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.nonzero(self.weights[i])[0]]

    @classmethod
    def from_edges(cls, n_nodes: int, edges, weight: float = 1.0) -> "DualGraph":
        """Build from 1-based node pairs, optionally ``(i, j, w)`` triples."""
        W = np.zeros((n_nodes, n_nodes))
        for edge in edges:
            if len(edge) == 3:
                i, j, w = edge
            else:
                (i, j), w = edge, weight
            if not (1 <= i <= n_nodes and 1 <= j <= n_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if W[i - 1, j - 1] != 0.0:
                raise ValueError(f"duplicate edge ({i}, {j})")
            W[i - 1, j - 1] = W[j - 1, i - 1] = w
        return cls(W)

    def payload(self) -> dict:
        edges = []
        for i in range(self.n_nodes):
            for j in range(i + 1, self.n_nodes):
                if self.weights[i, j] != 0.0:
                    edges.append([i + 1, j + 1, self.weights[i, j]])
        return {"nodes": self.n_nodes, "edges": edges}

    @classmethod
    def from_payload(cls, payload: dict) -> "DualGraph":
        return cls.from_edges(payload["nodes"], payload["edges"])


def build_cycle_plus(n_nodes: int, extra_edges=(), weight: float = 1.0) -> DualGraph:
    """Unit-weight cycle ``1-2-...-n-1`` plus extra chords (1-based pairs)."""
    if n_nodes < 3:
        raise ValueError("a cycle needs at least three nodes")
    edges = [(i, i + 1) for i in range(1, n_nodes)] + [(n_nodes, 1)]
    seen = {frozenset(e) for e in edges}
    for i, j in extra_edges:
        key = frozenset((i, j))
        if i == j:
            raise ValueError(f"self-loop at node {i}")
        if key in seen:
            raise ValueError(f"duplicate edge ({i}, {j})")
        seen.add(key)
        edges.append((i, j))
    return DualGraph.from_edges(n_nodes, edges, weight=weight)


def laplacian_expand(laplacian: Array, m: int) -> Array:
    """Kronecker expansion ``L (x) I_m`` acting on stacked m-dimensional blocks."""
    if m < 1:
        raise ValueError("block dimension must be at least 1")
    return np.kron(np.asarray(laplacian, dtype=float), np.eye(m))


def consensus_residual(laplacian_expanded: Array, lam_stacked: Array) -> float:
    """Euclidean norm of the Laplacian image; zero exactly on consensus."""
    lam = np.asarray(lam_stacked, dtype=float)
    if laplacian_expanded.shape[1] != lam.size:
        raise ValueError("dimension mismatch between Laplacian and stacked duals")
    return float(np.linalg.norm(laplacian_expanded @ lam))
