"""Weighted combinatorial graphs and their discrete Laplacians.

A weighted graph carries positive vertex weights ``m`` (which define the
inner product ``(f, g)_m = sum_v m(v) f(v) g(v)``) and positive edge
weights ``mu``.  Its Laplacian acts as

    (L f)(v) = 1/m(v) * sum_{w ~ v} mu({v, w}) * (f(w) - f(v))

and is self-adjoint and negative semi-definite in ``(., .)_m``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np

from ._components import components

__all__ = [
    "GraphError",
    "LoopEdgeError",
    "DuplicateEdgeError",
    "NonPositiveWeightError",
    "VertexIndexError",
    "VertexCountMismatch",
    "WeightedGraph",
    "OperatorModel",
    "build_graph",
    "union_graphs",
    "intersection_graphs",
    "connected_components",
    "laplacian",
    "rayleigh_quotient",
    "graph_from_json",
    "graph_to_json",
    "load_graph",
]


class GraphError(ValueError):
    pass


class LoopEdgeError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class NonPositiveWeightError(GraphError):
    pass


class VertexIndexError(GraphError):
    pass


class VertexCountMismatch(GraphError):
    pass


@dataclass(frozen=True)
class WeightedGraph:
    """Simple undirected graph with positive vertex and edge weights.

    Edges are stored canonically as ``(min, max)`` pairs sorted
    lexicographically, so two graphs with the same data compare equal.
    Use :func:`build_graph` rather than the constructor.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    edge_weight: tuple[float, ...]
    vertex_weight: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    @property
    def m(self) -> np.ndarray:
        return np.asarray(self.vertex_weight, dtype=float)

    @property
    def mu(self) -> np.ndarray:
        return np.asarray(self.edge_weight, dtype=float)

    def edge_map(self) -> dict[tuple[int, int], float]:
        return dict(zip(self.edges, self.edge_weight))

    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        for v, w in self.edges:
            deg[v] += 1
            deg[w] += 1
        return deg


@dataclass(frozen=True, eq=False)
class OperatorModel:
    """A generator ``A`` together with the mass vector of its inner product.

    ``matrix`` is expected to satisfy ``m[v] A[v, w] == m[w] A[w, v]`` and to
    be negative semi-definite; :meth:`check` verifies both.
    """

    matrix: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        a = np.array(self.matrix, dtype=float)
        m = np.array(self.mass, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"operator matrix must be square, got shape {a.shape}")
        if m.shape[0] != a.shape[0]:
            raise ValueError("mass vector length does not match the matrix")
        if np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise ValueError("mass entries must be positive and finite")
        a.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "mass", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def symmetrized(self) -> np.ndarray:
        """``M^{1/2} A M^{-1/2}``, symmetric iff ``A`` is m-self-adjoint."""
        s = np.sqrt(self.mass)
        return (s[:, None] * self.matrix) / s[None, :]

    def self_adjoint_defect(self) -> float:
        """Largest ``|m_v A_vw - m_w A_wv|`` relative to ``max |m_v A_vw|``."""
        ma = self.mass[:, None] * self.matrix
        scale = max(np.abs(ma).max(initial=0.0), np.finfo(float).tiny)
        return float(np.abs(ma - ma.T).max(initial=0.0) / scale)

    def check(self, tol: float = 1e-12) -> None:
        if self.self_adjoint_defect() > tol:
            raise ValueError("operator is not self-adjoint in the m-inner product")
        sym = self.symmetrized()
        sym = 0.5 * (sym + sym.T)
        top = np.linalg.eigvalsh(sym)[-1] if self.dim else 0.0
        scale = max(1.0, np.abs(sym).max(initial=0.0))
        if top > 1e-9 * scale:
            raise ValueError(f"operator is not negative semi-definite (max eigenvalue {top:g})")

    def __eq__(self, other):
        if not isinstance(other, OperatorModel):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix) and np.array_equal(self.mass, other.mass)

    __hash__ = None


def build_graph(n, edges, m=None, mu=None, labels=None) -> WeightedGraph:
    """Validate and canonicalise a weighted graph.

    ``m`` and ``mu`` default to all ones.  Raises a distinct
    :class:`GraphError` subclass for loops, duplicate edges, bad indices and
    non-positive weights.
    """
    n = int(n)
    if n < 0:
        raise GraphError("vertex count must be non-negative")
    edges = [tuple(int(x) for x in e) for e in edges]
    m = np.ones(n) if m is None else np.asarray(m, dtype=float).reshape(-1)
    mu = np.ones(len(edges)) if mu is None else np.asarray(mu, dtype=float).reshape(-1)
    if m.shape[0] != n:
        raise GraphError(f"expected {n} vertex weights, got {m.shape[0]}")
    if mu.shape[0] != len(edges):
        raise GraphError(f"expected {len(edges)} edge weights, got {mu.shape[0]}")
    if np.any(~np.isfinite(m)) or np.any(m <= 0):
        raise NonPositiveWeightError("vertex weights must be positive and finite")
    if np.any(~np.isfinite(mu)) or np.any(mu <= 0):
        raise NonPositiveWeightError("edge weights must be positive and finite")

    canon = {}
    for (v, w), weight in zip(edges, mu):
        if not (0 <= v < n and 0 <= w < n):
            raise VertexIndexError(f"edge ({v}, {w}) references a vertex outside 0..{n - 1}")
        if v == w:
            raise LoopEdgeError(f"loop at vertex {v}")
        key = (min(v, w), max(v, w))
        if key in canon:
            raise DuplicateEdgeError(f"duplicate edge {key}")
        canon[key] = float(weight)

    keys = sorted(canon)
    if labels is not None:
        labels = tuple(str(s) for s in labels)
        if len(labels) != n:
            raise GraphError("labels must have one entry per vertex")
    return WeightedGraph(
        n_vertices=n,
        edges=tuple(keys),
        edge_weight=tuple(canon[k] for k in keys),
        vertex_weight=tuple(float(x) for x in m),
        labels=labels,
    )


def _common_size(graphs) -> int:
    graphs = list(graphs)
    if not graphs:
        raise GraphError("need at least one graph")
    sizes = {g.n_vertices for g in graphs}
    if len(sizes) != 1:
        raise VertexCountMismatch(f"graphs have different vertex counts: {sorted(sizes)}")
    return sizes.pop()


def union_graphs(graphs) -> WeightedGraph:
    """Union: edge sets joined, ``mu = max``, ``m = min``.

    An edge missing from a graph counts with weight 0 in the maximum.
    """
    graphs = list(graphs)
    n = _common_size(graphs)
    weights: dict[tuple[int, int], float] = {}
    for g in graphs:
        for e, w in zip(g.edges, g.edge_weight):
            weights[e] = max(weights.get(e, 0.0), w)
    m = reduce(np.minimum, (g.m for g in graphs))
    keys = sorted(weights)
    return build_graph(n, keys, m, [weights[k] for k in keys], labels=graphs[0].labels)


def intersection_graphs(graphs) -> WeightedGraph:
    """Intersection: common edges only, ``mu = min``, ``m = max``."""
    graphs = list(graphs)
    n = _common_size(graphs)
    maps = [g.edge_map() for g in graphs]
    common = set(maps[0]).intersection(*maps[1:])
    keys = sorted(common)
    mu = [min(em[k] for em in maps) for k in keys]
    m = reduce(np.maximum, (g.m for g in graphs))
    return build_graph(n, keys, m, mu, labels=graphs[0].labels)


def connected_components(g: WeightedGraph) -> list[list[int]]:
    """Vertex partition into components, each sorted, ordered by least vertex."""
    return components(g.n_vertices, g.edges)


def laplacian(g: WeightedGraph) -> OperatorModel:
    n = g.n_vertices
    a = np.zeros((n, n))
    m = g.m
    for (v, w), weight in zip(g.edges, g.edge_weight):
        a[v, w] += weight / m[v]
        a[w, v] += weight / m[w]
        a[v, v] -= weight / m[v]
        a[w, w] -= weight / m[w]
    return OperatorModel(a, m)


def rayleigh_quotient(g: WeightedGraph, f) -> float:
    """``sum_e mu(e) |f(v) - f(w)|^2 / ||f||_m^2`` (non-negative)."""
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.shape[0] != g.n_vertices:
        raise ValueError("vector length does not match the vertex count")
    denom = float(np.sum(g.m * f * f))
    if denom == 0.0:
        raise ValueError("Rayleigh quotient of the zero vector is undefined")
    if not g.edges:
        return 0.0
    e = np.asarray(g.edges)
    diff = f[e[:, 0]] - f[e[:, 1]]
    return float(np.sum(g.mu * diff * diff) / denom)


def graph_from_json(obj) -> WeightedGraph:
    """Parse ``{"n": int, "edges": [[v, w, mu?], ...], "m": [...]?}``."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        n = int(obj["n"])
    except (KeyError, TypeError) as exc:
        raise GraphError("graph JSON needs an integer field 'n'") from exc
    edges, mu = [], []
    for item in obj.get("edges", []):
        if len(item) not in (2, 3):
            raise GraphError(f"edge entry {item!r} must be [v, w] or [v, w, mu]")
        edges.append((item[0], item[1]))
        mu.append(float(item[2]) if len(item) == 3 else 1.0)
    return build_graph(n, edges, obj.get("m"), mu, labels=obj.get("labels"))


def graph_to_json(g: WeightedGraph) -> dict:
    out = {
        "n": g.n_vertices,
        "edges": [[v, w, mu] for (v, w), mu in zip(g.edges, g.edge_weight)],
        "m": list(g.vertex_weight),
    }
    if g.labels is not None:
        out["labels"] = list(g.labels)
    return out


def load_graph(path) -> WeightedGraph:
    return graph_from_json(json.loads(Path(path).read_text()))
