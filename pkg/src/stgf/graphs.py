"""Construction of the two spatial views of a sensor network.

The geographic view is a fixed inverse-distance adjacency built from the
edge list. The semantic view is learned: a row-stochastic adjacency
inferred on the tape from a trainable node embedding, so it changes as the
embedding trains.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, Parameter, Tape, as_tensor
from .errors import ValidationError

Edge = tuple[int, int, float]


@dataclass(frozen=True)
class GraphSpec:
    """Node count plus weighted edge list with physical distances.

    Distances are strictly positive (arbitrary but uniform length units).
    Self-edges are rejected; self-connections enter only through the
    normalization step's added identity.
    """

    n_nodes: int
    edges: tuple[Edge, ...]
    directed: bool = False

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValidationError(f"graph needs at least one node, got {self.n_nodes}")
        normalized = []
        for k, (src, dst, dist) in enumerate(self.edges):
            src, dst, dist = int(src), int(dst), float(dist)
            if not (0 <= src < self.n_nodes and 0 <= dst < self.n_nodes):
                raise ValidationError(
                    f"edge {k} ({src}, {dst}) out of range for {self.n_nodes} nodes"
                )
            if src == dst:
                raise ValidationError(f"edge {k} is a self-edge at node {src}")
            if not dist > 0.0:
                raise ValidationError(f"edge {k} ({src}, {dst}) has nonpositive distance {dist}")
            normalized.append((src, dst, dist))
        object.__setattr__(self, "edges", tuple(normalized))


def build_local_adjacency(spec: GraphSpec) -> np.ndarray:
    """Inverse-distance adjacency: A[i, j] = 1/distance for listed edges.

    Undirected specs are mirrored. If an entry is written twice (duplicate
    or conflicting mirrored edges), the later edge wins and a warning is
    emitted.
    """
    n = spec.n_nodes
    a = np.zeros((n, n))
    seen = np.zeros((n, n), dtype=bool)

    def put(i: int, j: int, w: float) -> None:
        if seen[i, j]:
            warnings.warn(
                f"duplicate edge ({i}, {j}): keeping the later weight {w!r}", stacklevel=3
            )
        a[i, j] = w
        seen[i, j] = True

    for src, dst, dist in spec.edges:
        w = 1.0 / dist
        put(src, dst, w)
        if not spec.directed:
            put(dst, src, w)
    return a


def normalize_adjacency(a: np.ndarray, add_self_loops: bool = True) -> np.ndarray:
    """Symmetric degree normalization D^{-1/2} (A [+ I]) D^{-1/2}.

    Zero-degree rows map to zero rows (their D^{-1/2} entry is taken as 0),
    so isolated nodes stay isolated instead of producing NaN.
    """
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"adjacency must be square, got shape {a.shape}")
    if np.any(a < 0.0):
        raise ValidationError("adjacency entries must be nonnegative")
    tilde = a + np.eye(a.shape[0]) if add_self_loops else a
    degree = tilde.sum(axis=1)
    inv_sqrt = np.where(degree > 0.0, 1.0 / np.sqrt(np.where(degree > 0.0, degree, 1.0)), 0.0)
    return inv_sqrt[:, None] * tilde * inv_sqrt[None, :]


def adaptive_adjacency(tape: Tape, embedding: Node) -> Node:
    """Learned adjacency softmax_rows(relu(E E^T)) for a node embedding E.

    Differentiable with respect to the embedding. Every output row sums to
    1, so the matrix's degree matrix is exactly the identity and the
    symmetric degree normalization applied to the geographic view is a
    no-op here (see the model's propagation step).
    """
    scores = tape.relu(tape.matmul(embedding, tape.transpose(embedding)))
    return tape.softmax_rows(scores)


def adaptive_adjacency_values(embedding: np.ndarray) -> np.ndarray:
    """Convenience evaluation of the learned adjacency outside any training tape."""
    tape = Tape()
    return adaptive_adjacency(tape, tape.constant(embedding)).value


@dataclass
class AdjacencyPair:
    """The two spatial views used by the model.

    ``local`` is the raw inverse-distance matrix, ``local_norm`` its
    self-loop degree normalization (both constants); ``embedding`` is the
    trainable table the semantic view is recomputed from on every pass.
    """

    local: np.ndarray
    local_norm: np.ndarray
    embedding: Parameter = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.local.shape[0]


def init_node_embedding(n_nodes: int, embed_dim: int, rng: np.random.Generator) -> Parameter:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) init keeps E E^T entries O(1)."""
    if embed_dim < 1:
        raise ValidationError(f"embedding dimension must be >= 1, got {embed_dim}")
    bound = 1.0 / np.sqrt(embed_dim)
    return Parameter("node_embedding", rng.uniform(-bound, bound, size=(n_nodes, embed_dim)))


def build_graph_views(spec: GraphSpec, embed_dim: int, rng: np.random.Generator) -> AdjacencyPair:
    """Assemble both views for a graph: constants for the geographic side,
    a fresh trainable embedding for the semantic side."""
    local = build_local_adjacency(spec)
    return AdjacencyPair(
        local=local,
        local_norm=normalize_adjacency(local, add_self_loops=True),
        embedding=init_node_embedding(spec.n_nodes, embed_dim, rng),
    )
