"""Oriented simplicial 2-complexes and their discrete calculus.

A complex is a node set, an edge set and a set of triangular faces.  Every
simplex is stored in its canonical orientation (increasing node labels), and
the two signed incidence matrices ``b1`` (nodes x edges) and ``b2``
(edges x triangles) carry all of the calculus: ``grad = b1.T``, ``div = b1``
and ``curl = b2.T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import StructuralError, UsageError

NodeId = int | str

__all__ = [
    "SimplicialComplex2",
    "Cochain",
    "Laplacians",
    "build_complex",
    "laplacians",
    "grad",
    "div",
    "curl",
    "line_graph_laplacian",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SimplicialComplex2:
    """An oriented simplicial 2-complex with its incidence matrices.

    Instances are immutable; construct them through :func:`build_complex`,
    which canonicalizes orientations and validates the structure.

    Attributes
    ----------
    nodes : tuple
        Node identifiers in canonical (sorted) order.
    edges : tuple of (i, j) pairs
        Oriented edges with i before j in node order, sorted lexicographically.
    triangles : tuple of (i, j, k) triples
        Oriented faces with i < j < k in node order, sorted lexicographically.
    b1 : ndarray, shape (n_nodes, n_edges)
        Node-to-edge incidence: -1 at the tail, +1 at the head of each edge.
    b2 : ndarray, shape (n_edges, n_triangles)
        Edge-to-triangle incidence: +1 for edges [i,j] and [j,k], -1 for [i,k].
    """

    nodes: tuple
    edges: tuple
    triangles: tuple
    b1: np.ndarray
    b2: np.ndarray
    _edge_rank: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edge_index(self, i, j) -> tuple[int, int]:
        """Locate the edge {i, j}.

        Returns ``(index, sign)`` where ``sign`` is +1 if (i, j) matches the
        stored orientation and -1 if it is reversed.  An alternating edge
        value given against (i, j) is stored as ``sign * value``.
        """
        idx = self._edge_rank.get((i, j))
        if idx is not None:
            return idx, 1
        idx = self._edge_rank.get((j, i))
        if idx is not None:
            return idx, -1
        raise KeyError(f"no edge between {i!r} and {j!r}")


@dataclass(frozen=True, eq=False)
class Cochain:
    """A real-valued function on the oriented simplices of one degree.

    Degree 0 lives on nodes, 1 on edges, 2 on triangles.  Values follow the
    canonical orientations of the complex they belong to.
    """

    degree: int
    values: np.ndarray

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise UsageError(f"cochain degree must be 0, 1 or 2, got {self.degree}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise UsageError("cochain values must be a 1-d vector")
        if not np.all(np.isfinite(v)):
            raise UsageError("cochain values must be finite")
        object.__setattr__(self, "values", _freeze(v))

    def __len__(self) -> int:
        return len(self.values)


class Laplacians(NamedTuple):
    l0: np.ndarray  # graph Laplacian, nodes x nodes
    l1: np.ndarray  # Hodge Laplacian, edges x edges
    ld: np.ndarray  # down part b1.T @ b1
    lu: np.ndarray  # up part b2 @ b2.T
    l2: np.ndarray  # triangle Laplacian b2.T @ b2


def _node_order(nodes: Iterable) -> list:
    # normalize numpy scalars so node identity survives JSON round-trips
    nodes = [n.item() if isinstance(n, np.generic) else n for n in nodes]
    if not nodes:
        raise StructuralError("a complex needs at least one node")
    kinds = {isinstance(n, str) for n in nodes}
    if len(kinds) > 1:
        raise StructuralError("node identifiers must be all strings or all integers")
    try:
        ordered = sorted(nodes)
    except TypeError as exc:
        raise StructuralError(f"node identifiers are not orderable: {exc}") from exc
    if len(set(ordered)) != len(ordered):
        raise StructuralError("duplicate node identifiers")
    return ordered


def build_complex(
    nodes: Iterable[NodeId],
    edges: Iterable[Sequence[NodeId]],
    triangles: Iterable[Sequence[NodeId]] | None = None,
    infer_triangles: bool = False,
) -> SimplicialComplex2:
    """Build a validated simplicial 2-complex with canonical orientations.

    Edges and triangles may be given in any vertex order; they are stored with
    increasing node labels.  Triangular faces are an explicit modelling choice
    (a 3-clique in the edge set need not be a closed face), so they must be
    listed, unless ``infer_triangles`` is set, in which case every 3-clique of
    the edge set is closed.

    Raises
    ------
    StructuralError
        On dangling node references, self-loops, duplicate simplices, or a
        triangle whose boundary edge is missing.
    """
    node_list = _node_order(nodes)
    rank = {n: i for i, n in enumerate(node_list)}

    canon_edges = []
    seen = set()
    for e in edges:
        e = tuple(n.item() if isinstance(n, np.generic) else n for n in e)
        if len(e) != 2:
            raise StructuralError(f"edge {e!r} does not have two endpoints")
        if e[0] not in rank or e[1] not in rank:
            raise StructuralError(f"edge {e!r} references an undeclared node")
        if e[0] == e[1]:
            raise StructuralError(f"self-loop at node {e[0]!r}")
        ce = tuple(sorted(e, key=rank.__getitem__))
        if ce in seen:
            raise StructuralError(f"duplicate edge {e!r}")
        seen.add(ce)
        canon_edges.append(ce)
    canon_edges.sort(key=lambda e: (rank[e[0]], rank[e[1]]))
    edge_rank = {e: i for i, e in enumerate(canon_edges)}

    if infer_triangles:
        if triangles is not None and len(list(triangles)) > 0:
            raise UsageError("pass either an explicit triangle list or infer_triangles, not both")
        tri_input = _three_cliques(canon_edges, rank)
    else:
        tri_input = list(triangles) if triangles is not None else []

    canon_tris = []
    seen_t = set()
    for t in tri_input:
        t = tuple(n.item() if isinstance(n, np.generic) else n for n in t)
        if len(t) != 3 or len(set(t)) != 3:
            raise StructuralError(f"triangle {t!r} does not have three distinct nodes")
        for n in t:
            if n not in rank:
                raise StructuralError(f"triangle {t!r} references an undeclared node")
        ct = tuple(sorted(t, key=rank.__getitem__))
        if ct in seen_t:
            raise StructuralError(f"duplicate triangle {t!r}")
        seen_t.add(ct)
        i, j, k = ct
        for b in ((i, j), (j, k), (i, k)):
            if b not in edge_rank:
                raise StructuralError(f"triangle {t!r} has no boundary edge {b!r}")
        canon_tris.append(ct)
    canon_tris.sort(key=lambda t: tuple(rank[n] for n in t))

    n0, n1, n2 = len(node_list), len(canon_edges), len(canon_tris)
    b1 = np.zeros((n0, n1), dtype=np.int64)
    for col, (i, j) in enumerate(canon_edges):
        b1[rank[i], col] = -1
        b1[rank[j], col] = 1

    b2 = np.zeros((n1, n2), dtype=np.int64)
    for col, (i, j, k) in enumerate(canon_tris):
        b2[edge_rank[(i, j)], col] = 1
        b2[edge_rank[(j, k)], col] = 1
        b2[edge_rank[(i, k)], col] = -1

    return SimplicialComplex2(
        nodes=tuple(node_list),
        edges=tuple(canon_edges),
        triangles=tuple(canon_tris),
        b1=_freeze(b1),
        b2=_freeze(b2),
        _edge_rank=edge_rank,
    )


def _three_cliques(edges: list, rank: dict) -> list:
    adj: dict = {}
    for i, j in edges:
        adj.setdefault(i, set()).add(j)
        adj.setdefault(j, set()).add(i)
    cliques = []
    edge_set = set(edges)
    for i, j in edges:
        for k in adj[i] & adj[j]:
            if rank[k] > rank[j]:  # i < j < k: count each clique once
                if (j, k) in edge_set and (i, k) in edge_set:
                    cliques.append((i, j, k))
    return cliques


def laplacians(sc: SimplicialComplex2) -> Laplacians:
    """All Laplacians of the complex: ``l1 = ld + lu`` holds exactly."""
    b1, b2 = sc.b1, sc.b2
    l0 = b1 @ b1.T
    ld = b1.T @ b1
    lu = b2 @ b2.T
    return Laplacians(l0=l0, l1=ld + lu, ld=ld, lu=lu, l2=b2.T @ b2)


def _values(f, sc: SimplicialComplex2, degree: int) -> np.ndarray:
    sizes = {0: sc.n_nodes, 1: sc.n_edges, 2: sc.n_triangles}
    if isinstance(f, Cochain):
        if f.degree != degree:
            raise UsageError(f"expected a degree-{degree} cochain, got degree {f.degree}")
        v = f.values
    else:
        v = np.asarray(f, dtype=float)
    if v.shape != (sizes[degree],):
        raise UsageError(
            f"degree-{degree} cochain must have length {sizes[degree]}, got shape {v.shape}"
        )
    return v


def grad(sc: SimplicialComplex2, f0) -> Cochain:
    """Gradient of a node function: value f0(j) - f0(i) on each edge [i, j]."""
    return Cochain(1, sc.b1.T @ _values(f0, sc, 0))


def div(sc: SimplicialComplex2, f1) -> Cochain:
    """Divergence of an edge flow: net in-flow minus out-flow at each node."""
    return Cochain(0, sc.b1 @ _values(f1, sc, 1))


def curl(sc: SimplicialComplex2, f1) -> Cochain:
    """Curl of an edge flow: net circulation around each triangle."""
    return Cochain(2, sc.b2.T @ _values(f1, sc, 1))


def line_graph_laplacian(sc: SimplicialComplex2) -> np.ndarray:
    """Laplacian of the line graph (edges become nodes, adjacency = shared
    endpoint).  Triangles are ignored."""
    n1 = sc.n_edges
    adjacency = np.abs(sc.b1.T @ sc.b1 - 2 * np.eye(n1, dtype=np.int64))
    return np.diag(adjacency.sum(axis=1)) - adjacency
