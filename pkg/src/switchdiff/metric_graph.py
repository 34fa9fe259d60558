"""Metric graphs and their discretised elliptic operators.

A metric graph is a list of edges ``[0, l_e]`` plus an equivalence relation
on the ``2|E|`` endpoints.  Endpoint ``(e, 0)`` is ``x = 0`` on edge ``e`` and
``(e, 1)`` is ``x = l_e``; internally endpoint ``(e, s)`` has index ``2e + s``.

Discretisation is cell-centred finite volumes on each edge.  The degrees of
freedom are cell averages, so the discrete space depends only on the edges and
their cell counts, never on the gluing: every gluing of the same edge family
acts on the same weighted space, which is what ensembles need.  At a vertex
the unknown vertex value is eliminated from the flux balance (continuity plus
Kirchhoff), which couples the end cells of the incident edges pairwise with
conductance ``c_i c_j / sum_k c_k``.  A degree-one vertex gets no coupling,
i.e. a Neumann end.  The result is ``A = -M^{-1} K`` with ``M`` the diagonal
of cell lengths and ``K`` a weighted graph Laplacian on the cells, so its
kernel is exactly spanned by the component indicators at any mesh.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._components import components
from .graph_core import OperatorModel
from .spectral import eigendecompose

__all__ = [
    "MetricGraphError",
    "MetricGraph",
    "EllipticCoefficient",
    "Discretization",
    "INTERVAL_KINDS",
    "build_metric_graph",
    "metric_components",
    "union_metric",
    "intersection_metric",
    "discretize",
    "lambda2_bounds",
    "is_lone_loop",
    "interval_operator",
    "metric_graph_from_json",
    "load_metric_graph",
    "model_a",
    "model_b",
]


class MetricGraphError(ValueError):
    pass


@dataclass(frozen=True)
class MetricGraph:
    lengths: tuple[float, ...]
    # vertex classes of endpoint indices, each sorted, ordered by least member
    classes: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...] | None = None

    @property
    def n_edges(self) -> int:
        return len(self.lengths)

    @property
    def total_length(self) -> float:
        return float(sum(self.lengths))

    @property
    def n_vertices(self) -> int:
        return len(self.classes)

    def vertex_of(self) -> np.ndarray:
        """Vertex index of every endpoint index."""
        out = np.empty(2 * self.n_edges, dtype=int)
        for v, cls in enumerate(self.classes):
            out[list(cls)] = v
        return out

    def gluing(self) -> list[list[tuple[int, int]]]:
        return [[(p // 2, p % 2) for p in cls] for cls in self.classes]


def _endpoint(item, n_edges, names=None) -> int:
    e, side = item
    if isinstance(e, str):
        if names is not None and e in names:
            e = names.index(e)
        elif e.startswith("e") and e[1:].isdigit():
            e = int(e[1:])
        else:
            raise MetricGraphError(f"unknown edge name {e!r}")
    e, side = int(e), int(side)
    if not 0 <= e < n_edges:
        raise MetricGraphError(f"edge {e} out of range")
    if side not in (0, 1):
        raise MetricGraphError("endpoint side must be 0 (x = 0) or 1 (x = length)")
    return 2 * e + side


def build_metric_graph(lengths, gluing=(), labels=None) -> MetricGraph:
    """Validate lengths and a gluing.

    ``gluing`` lists vertex classes as sequences of ``(edge, side)`` pairs;
    endpoints not mentioned become degree-one vertices of their own.  An
    endpoint listed in two classes is an error.
    """
    lengths = tuple(float(x) for x in lengths)
    if any(not math.isfinite(x) or x <= 0 for x in lengths):
        raise MetricGraphError("edge lengths must be positive and finite")
    n = len(lengths)
    names = list(labels) if labels is not None else None
    owner = {}
    classes = []
    for ci, cls in enumerate(gluing):
        members = []
        for item in cls:
            p = _endpoint(item, n, names)
            if p in owner:
                raise MetricGraphError(f"endpoint {(p // 2, p % 2)} appears in more than one class")
            owner[p] = ci
            members.append(p)
        if members:
            classes.append(tuple(sorted(members)))
    for p in range(2 * n):
        if p not in owner:
            classes.append((p,))
    classes.sort(key=lambda c: c[0])
    return MetricGraph(lengths, tuple(classes), tuple(labels) if labels is not None else None)


def _from_classes(lengths, groups, labels=None) -> MetricGraph:
    return MetricGraph(tuple(lengths), tuple(tuple(g) for g in groups), labels)


def metric_components(mg: MetricGraph) -> list[list[int]]:
    """Connected components as lists of edge indices, ordered by least edge."""
    links = [(cls[0] // 2, p // 2) for cls in mg.classes for p in cls[1:]]
    return components(mg.n_edges, links)


def _check_family(graphs) -> tuple:
    graphs = list(graphs)
    if not graphs:
        raise MetricGraphError("need at least one metric graph")
    lengths = graphs[0].lengths
    for g in graphs[1:]:
        if g.lengths != lengths:
            raise MetricGraphError("metric graphs must share the same edges and lengths")
    return graphs, lengths


def union_metric(graphs) -> MetricGraph:
    """Gluing generated by all the input relations (transitive closure)."""
    graphs, lengths = _check_family(graphs)
    links = [(cls[0], p) for g in graphs for cls in g.classes for p in cls[1:]]
    return _from_classes(lengths, components(2 * len(lengths), links), graphs[0].labels)


def intersection_metric(graphs) -> MetricGraph:
    """Endpoints are glued only when every input glues them."""
    graphs, lengths = _check_family(graphs)
    keys = np.stack([g.vertex_of() for g in graphs], axis=1)
    groups: dict[tuple, list[int]] = {}
    for p, key in enumerate(map(tuple, keys)):
        groups.setdefault(key, []).append(p)
    return _from_classes(lengths, sorted(groups.values(), key=lambda c: c[0]), graphs[0].labels)


@dataclass(frozen=True, eq=False)
class EllipticCoefficient:
    """Coefficient ``p`` sampled on each edge's grid nodes ``x_k = k l_e / n_e``."""

    samples: tuple[np.ndarray, ...]
    p0: float

    def __post_init__(self):
        samples = tuple(np.asarray(s, dtype=float) for s in self.samples)
        if not self.p0 > 0:
            raise MetricGraphError("lower bound p0 must be positive")
        for s in samples:
            if s.ndim != 1 or np.any(s < self.p0) or not np.all(np.isfinite(s)):
                raise MetricGraphError("coefficient samples must be finite and at least p0")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def constant(cls, counts, value=1.0):
        return cls(tuple(np.full(n + 1, float(value)) for n in counts), float(value))

    @classmethod
    def from_function(cls, mg: MetricGraph, counts, func, p0=None):
        """Sample ``func(edge, x)`` (vectorised in ``x``) on the grid nodes."""
        samples = []
        for e, (l, n) in enumerate(zip(mg.lengths, counts)):
            x = np.linspace(0.0, l, n + 1)
            samples.append(np.broadcast_to(np.asarray(func(e, x), dtype=float), x.shape).copy())
        lo = min(float(s.min()) for s in samples) if p0 is None else p0
        return cls(tuple(samples), lo)


@dataclass(frozen=True, eq=False)
class Discretization:
    graph: MetricGraph
    counts: tuple[int, ...]
    offsets: tuple[int, ...]
    operator: OperatorModel

    @property
    def h(self) -> float:
        return max(l / n for l, n in zip(self.graph.lengths, self.counts))

    @property
    def dim(self) -> int:
        return self.operator.dim

    def cell_centers(self) -> list[tuple[int, float]]:
        out = []
        for e, (l, n) in enumerate(zip(self.graph.lengths, self.counts)):
            h = l / n
            out.extend((e, (k + 0.5) * h) for k in range(n))
        return out

    def indicator(self, edges) -> np.ndarray:
        v = np.zeros(self.dim)
        for e in edges:
            v[self.offsets[e] : self.offsets[e] + self.counts[e]] = 1.0
        return v


def mesh_counts(mg: MetricGraph, h_target: float) -> tuple[int, ...]:
    if not h_target > 0:
        raise MetricGraphError("target mesh size must be positive")
    return tuple(max(2, math.ceil(l / h_target - 1e-12)) for l in mg.lengths)


def _assemble(lengths, counts, p_samples, classes, dirichlet=()):
    offsets = np.concatenate(([0], np.cumsum(counts)))
    dim = int(offsets[-1])
    stiff = np.zeros((dim, dim))
    mass = np.empty(dim)

    def couple(i, j, c):
        stiff[i, i] += c
        stiff[j, j] += c
        stiff[i, j] -= c
        stiff[j, i] -= c

    for e, (l, n) in enumerate(zip(lengths, counts)):
        h = l / n
        base = offsets[e]
        mass[base : base + n] = h
        p = p_samples[e]
        for k in range(1, n):
            couple(base + k - 1, base + k, p[k] / h)

    def end_cell(point):
        e, side = divmod(point, 2)
        cell = offsets[e] + (counts[e] - 1 if side else 0)
        c = 2.0 * p_samples[e][-1 if side else 0] / (lengths[e] / counts[e])
        return cell, c

    for cls in classes:
        ends = [end_cell(q) for q in cls]
        total = sum(c for _, c in ends)
        for a in range(len(ends)):
            for b in range(a + 1, len(ends)):
                (i, ci), (j, cj) = ends[a], ends[b]
                if i != j:
                    couple(i, j, ci * cj / total)
    for point in dirichlet:
        cell, c = end_cell(point)
        stiff[cell, cell] += c
    return -stiff / mass[:, None], mass, tuple(int(x) for x in offsets[:-1])


def discretize(mg: MetricGraph, p: EllipticCoefficient | None = None, counts=None, h_target=None) -> Discretization:
    """Finite-volume realisation of ``u -> (p u')'`` with natural vertex conditions.

    ``counts`` gives the number of cells per edge (an int applies to every
    edge); alternatively ``h_target`` picks ``ceil(l_e / h_target)`` cells.
    """
    if counts is None:
        if h_target is None:
            raise MetricGraphError("give per-edge cell counts or a target mesh size")
        counts = mesh_counts(mg, h_target)
    elif np.isscalar(counts):
        counts = (int(counts),) * mg.n_edges
    counts = tuple(int(n) for n in counts)
    if len(counts) != mg.n_edges:
        raise MetricGraphError("need one cell count per edge")
    if any(n < 2 for n in counts):
        raise MetricGraphError("every edge needs at least two cells")
    if p is None:
        p = EllipticCoefficient.constant(counts)
    if len(p.samples) != mg.n_edges or any(s.shape != (n + 1,) for s, n in zip(p.samples, counts)):
        raise MetricGraphError("coefficient samples must have n_e + 1 values on every edge")
    a, mass, offsets = _assemble(mg.lengths, counts, p.samples, mg.classes)
    return Discretization(mg, counts, offsets, OperatorModel(a, mass))


def is_lone_loop(mg: MetricGraph) -> bool:
    """True for a single edge whose two endpoints are glued together."""
    return mg.n_edges == 1 and mg.n_vertices == 1


def lambda2_bounds(mg: MetricGraph) -> tuple[float, float]:
    """``(-pi^2 |E|^2 / L^2, -pi^2 / L^2)`` for a connected metric graph.

    A single edge glued into a loop is rejected: its second eigenvalue is
    ``-4 pi^2 / L^2``, below the lower bound.
    """
    if len(metric_components(mg)) != 1:
        raise MetricGraphError("bounds need a connected metric graph")
    if is_lone_loop(mg):
        raise MetricGraphError("a single closed loop has lambda_2 = -4 pi^2 / L^2, outside the bound")
    e, l = mg.n_edges, mg.total_length
    return -math.pi**2 * e**2 / l**2, -math.pi**2 / l**2


INTERVAL_KINDS = ("neumann", "krein_surrogate", "dirichlet", "dirichlet_shifted", "variable_p")


def _default_p(x):
    return 1.0 + x


def interval_operator(kind: str, n: int, p=None) -> OperatorModel:
    """Discrete realisations on ``(0, 1)`` with ``n`` cells of width ``1/n``.

    All kinds live on the same weighted space (cell averages, mass ``1/n``)
    so any subset can be switched between.  ``krein_surrogate`` is
    ``-D^T D / h^4`` with ``D`` the ``(n-2) x n`` second-difference stencil:
    self-adjoint, negative semi-definite, kernel exactly the discrete affine
    functions.  ``variable_p`` takes ``p`` as ``n + 1`` node samples or a
    callable of ``x`` (default ``1 + x``).
    """
    n = int(n)
    if n < 4:
        raise ValueError("interval operators need at least four cells")
    h = 1.0 / n
    ones = np.ones(n + 1)
    if kind == "neumann":
        a, mass, _ = _assemble((1.0,), (n,), (ones,), ((0,), (1,)))
    elif kind in ("dirichlet", "dirichlet_shifted"):
        a, mass, _ = _assemble((1.0,), (n,), (ones,), ((0,), (1,)), dirichlet=(0, 1))
        if kind == "dirichlet_shifted":
            lam1 = eigendecompose(OperatorModel(a, mass)).eigenvalues[0]
            a = a - lam1 * np.eye(n)
    elif kind == "variable_p":
        if p is None:
            p = _default_p
        samples = p(np.linspace(0.0, 1.0, n + 1)) if callable(p) else p
        samples = np.broadcast_to(np.asarray(samples, dtype=float), (n + 1,)).copy()
        if np.any(samples <= 0):
            raise ValueError("coefficient must be positive")
        a, mass, _ = _assemble((1.0,), (n,), (samples,), ((0,), (1,)))
    elif kind == "krein_surrogate":
        d = np.zeros((n - 2, n))
        idx = np.arange(n - 2)
        d[idx, idx] = 1.0
        d[idx, idx + 1] = -2.0
        d[idx, idx + 2] = 1.0
        a = -(d.T @ d) / h**4
        mass = np.full(n, h)
    else:
        raise ValueError(f"unknown interval operator kind {kind!r}; choose from {INTERVAL_KINDS}")
    return OperatorModel(a, mass)


def model_a(length: float = 1.0) -> MetricGraph:
    """Two edges glued end to start: the interval ``[0, 2 * length]``."""
    return build_metric_graph([length, length], [[(0, 1), (1, 0)]])


def model_b(length: float = 1.0) -> MetricGraph:
    """The same two edges with no gluing: two disjoint intervals."""
    return build_metric_graph([length, length], [])


def metric_graph_from_json(obj) -> tuple[MetricGraph, list | None]:
    """Parse ``{"edges": [{"len": ...}], "glue": [[["e0", 1], ["e1", 0]]], "p": [...]?}``.

    Returns the graph and the raw per-edge coefficient arrays (or ``None``).
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        edges = obj["edges"]
        lengths = [float(e["len"]) for e in edges]
    except (KeyError, TypeError) as exc:
        raise MetricGraphError(f"malformed metric graph: {exc}") from exc
    labels = [e.get("name", f"e{i}") for i, e in enumerate(edges)]
    mg = build_metric_graph(lengths, obj.get("glue", []), labels)
    return mg, obj.get("p")


def load_metric_graph(path):
    return metric_graph_from_json(json.loads(Path(path).read_text()))
